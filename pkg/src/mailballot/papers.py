"""
Paper ballots and the simulated postal channel.

Paper 1 goes in the inner envelope, it carries the plaintext vote, the encrypted commitment openings and their
proofs of knowledge::

    POSTMARK1|election-hash|vote-index|plaintext-vote-string|hex(e_Params)|hex(PoKs)

Paper 2 goes loose in the outer envelope, with the voter id only::

    POSTMARK2|election-hash|voter-id

`plaintext-vote-string` is a comma separated list of `rank:candidate` pairs (ie `1:Eve,2:Alice,3:Bob`).
"""
import logging
import textwrap
from dataclasses import dataclass, field
import jinja2
from .zkp import PokCiphertext, pok_verify

logger = logging.getLogger('mailballot.papers')
logger.addHandler(logging.NullHandler())

PAPER1_TAG = 'POSTMARK1'
PAPER2_TAG = 'POSTMARK2'

# order of the encrypted scalars on Paper 1
PARAM_NAMES = ('a', 'b', 'r_a', 'r_b')

MAIL_STATES = ('in-transit', 'delivered', 'lost', 'substituted')


def paper1_context(election_hash, position):
    return b'%s|paper1|%d' % (election_hash.encode(), position)


def vote_ranks(vote_string):
    """`[(rank, candidate), ...]` from a plaintext vote string"""
    ranks = []
    for pair in vote_string.split(','):
        rank, sep, candidate = pair.partition(':')
        if not sep or not rank.isdigit() or not candidate:
            raise ValueError("Malformed plaintext vote '%s'" % vote_string)
        ranks.append((int(rank), candidate))
    return ranks


@dataclass(frozen=True)
class Paper1:
    election_hash: str
    vote_index: int
    vote_string: str
    e_params: tuple
    poks: tuple

    def to_payload(self, group):
        e_params = b''.join(group.encode_ciphertext(c) for c in self.e_params).hex()
        poks = b''.join(p.to_bytes(group) for p in self.poks).hex()
        return ('%s|%s|%d|%s|%s|%s' % (PAPER1_TAG, self.election_hash, self.vote_index, self.vote_string,
                                        e_params, poks)).encode('ascii')

    @classmethod
    def from_payload(cls, group, payload, param_count):
        """
        Parameters
        ----------
        group: mailballot.group.GroupProfile
        payload: bytes
        param_count: int
            expected number of parameter ciphertexts (4 times the limb count)

        Returns
        -------
        Paper1

        Raises
        ------
        ValueError
            on any grammar violation.
        """
        try:
            fields = payload.decode('ascii').split('|')
        except UnicodeDecodeError:
            raise ValueError("Paper 1 payload is not ascii") from None
        if len(fields) != 6 or fields[0] != PAPER1_TAG:
            raise ValueError("Not a Paper 1 payload")
        tag, election_hash, vote_index, vote_string, e_params, poks = fields
        if len(election_hash) != 64 or not vote_index.isdigit() or str(int(vote_index)) != vote_index:
            raise ValueError("Malformed Paper 1 header")
        vote_ranks(vote_string)
        e_params = bytes.fromhex(e_params)
        poks = bytes.fromhex(poks)
        ct_len = 2 * group.element_byte_length
        pok_len = 2 * group.element_byte_length + 2 * group.scalar_byte_length
        if len(e_params) != param_count * ct_len or len(poks) != param_count * pok_len:
            raise ValueError("Paper 1 carries a wrong number of parameter ciphertexts or proofs")
        return cls(election_hash, int(vote_index), vote_string,
                   tuple(group.decode_ciphertext(e_params[i * ct_len:(i + 1) * ct_len]) for i in range(param_count)),
                   tuple(PokCiphertext.from_bytes(group, poks[i * pok_len:(i + 1) * pok_len])
                         for i in range(param_count)))

    def verify_poks(self, group, pk):
        """True if every parameter ciphertext comes with a valid proof of knowledge"""
        if len(self.poks) != len(self.e_params):
            return False
        return all(pok_verify(group, pk, c, proof, paper1_context(self.election_hash, i))
                   for i, (c, proof) in enumerate(zip(self.e_params, self.poks)))

    def with_vote(self, vote_index, vote_string):
        """same paper, other printed vote (parameters and proofs unchanged)"""
        return Paper1(self.election_hash, vote_index, vote_string, self.e_params, self.poks)


@dataclass(frozen=True)
class Paper2:
    election_hash: str
    voter_id: str

    def to_payload(self):
        return ('%s|%s|%s' % (PAPER2_TAG, self.election_hash, self.voter_id)).encode('ascii')

    @classmethod
    def from_payload(cls, payload):
        try:
            fields = payload.decode('ascii').split('|')
        except UnicodeDecodeError:
            raise ValueError("Paper 2 payload is not ascii") from None
        if len(fields) != 3 or fields[0] != PAPER2_TAG or len(fields[1]) != 64 or not fields[2]:
            raise ValueError("Not a Paper 2 payload")
        return cls(fields[1], fields[2])


def replace_vote(payload, vote_index, vote_string):
    """Paper 1 payload with another printed vote; what a postal adversary can do without the key"""
    fields = payload.decode('ascii').split('|')
    if len(fields) != 6 or fields[0] != PAPER1_TAG:
        raise ValueError("Not a Paper 1 payload")
    fields[2] = '%d' % vote_index
    fields[3] = vote_string
    return '|'.join(fields).encode('ascii')


_PAPER1_TEMPLATE = jinja2.Template(
    """PAPER 1 - place in the inner envelope
election {{ election_hash[:16] }}

Your vote:
{% for rank, candidate in ranks %}  {{ rank }}. {{ candidate }}
{% endfor %}
Check the vote above. Do not write on this paper.

{% for line in payload_lines %}{{ line }}
{% endfor %}""")

_PAPER2_TEMPLATE = jinja2.Template(
    """PAPER 2 - place loose in the outer envelope
election {{ election_hash[:16] }}

Voter: {{ voter_id }}

{{ payload }}
""")


def render_paper1(group, paper):
    """human readable printout of Paper 1, followed by its machine readable payload"""
    payload = paper.to_payload(group).decode('ascii')
    return _PAPER1_TEMPLATE.render(election_hash=paper.election_hash, ranks=vote_ranks(paper.vote_string),
                                   payload_lines=textwrap.wrap(payload, 96, break_on_hyphens=False))


def render_paper2(paper):
    return _PAPER2_TEMPLATE.render(election_hash=paper.election_hash, voter_id=paper.voter_id,
                                   payload=paper.to_payload().decode('ascii'))


def read_payload(text, tag):
    """machine readable payload back from a printout"""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if line.startswith(tag + '|'):
            payload = line
            for cont in lines[i + 1:]:
                if not cont.strip():
                    break
                payload += cont.strip()
            return payload.encode('ascii')
    raise ValueError("No %s payload found" % tag)


@dataclass
class MailPiece:
    """
    Outer envelope: outer identity, inner envelope holding Paper 1, loose Paper 2.
    """
    identity: str
    paper1: bytes
    paper2: bytes
    state: str = 'in-transit'
    history: list = field(default_factory=list)

    @property
    def arrived(self):
        return self.state in ('delivered', 'substituted')

    def to_dict(self):
        return {'identity': self.identity, 'paper1': self.paper1.decode('ascii'),
                'paper2': self.paper2.decode('ascii') if self.paper2 is not None else None,
                'state': self.state, 'history': list(self.history)}

    @classmethod
    def from_dict(cls, d):
        return cls(d['identity'], d['paper1'].encode('ascii'),
                   d['paper2'].encode('ascii') if d.get('paper2') is not None else None,
                   d.get('state', 'in-transit'), list(d.get('history', [])))


class MailChannel:
    """
    Simulated postal service. Every transition is logged and recorded in `events`.

    Parameters
    ----------
    rng: random.Random, optional
        delivery order randomness
    """

    def __init__(self, rng=None):
        self.rng = rng
        self.events = []

    def _transition(self, piece, state, detail=''):
        if state not in MAIL_STATES:
            raise ValueError("Unknown mail state '%s'" % state)
        piece.history.append(state if not detail else '%s:%s' % (state, detail))
        piece.state = state
        self.events.append((piece.identity, state, detail))
        logger.info('mail for %s: %s %s' % (piece.identity, state, detail))

    def send(self, paper1_payload, paper2_payload, identity):
        piece = MailPiece(identity, paper1_payload, paper2_payload)
        self._transition(piece, 'in-transit')
        return piece

    def deliver(self, piece):
        if piece.state != 'in-transit':
            raise ValueError("Can't deliver mail in state '%s'" % piece.state)
        self._transition(piece, 'delivered')
        return piece

    def lose(self, piece):
        if piece.state != 'in-transit':
            raise ValueError("Can't lose mail in state '%s'" % piece.state)
        self._transition(piece, 'lost')
        return piece

    def substitute_paper1(self, piece, vote_index, vote_string):
        """
        Replace the printed vote of the inner Paper 1; the encrypted parameters can't be changed
        consistently without the decryption key, so they stay as they are. The piece is then delivered.
        """
        if piece.state != 'in-transit':
            raise ValueError("Can't substitute mail in state '%s'" % piece.state)
        piece.paper1 = replace_vote(piece.paper1, vote_index, vote_string)
        self._transition(piece, 'substituted', vote_string)
        return piece

    def arrivals(self, pieces):
        """arrived pieces, in a (seeded) random arrival order"""
        arrived = [piece for piece in pieces if piece.arrived]
        if self.rng is not None:
            self.rng.shuffle(arrived)
        return arrived


def mail_send(papers, identity, channel):
    """
    Post the envelopes.

    Parameters
    ----------
    papers: tuple
        (Paper1 payload bytes, Paper2 payload bytes)
    identity: str
        outer envelope identity
    channel: MailChannel

    Returns
    -------
    MailPiece
        in transit
    """
    paper1, paper2 = papers
    return channel.send(paper1, paper2, identity)
