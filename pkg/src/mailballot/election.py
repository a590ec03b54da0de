"""
Election protocol: setup, casting, receiving, tallying, verification and the result function.

Every public fact lives on the `mailballot.board.Board`; the functions here only take private state
(trustee shares, double envelopes, device secrets) where the protocol gives it to them.
"""
import logging
import random
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property, lru_cache, partial
from typing import NamedTuple
import yaml
import pandas as pd
from .group import (GroupProfile, PedersenParams, Ciphertext, NotInDomainError, commit, encrypt, rerandomize,
                    ct_mul, ct_exp, encode_vote, decode_vote, encode_voter, decode_voter, decode_limb,
                    effective_v_max, limb_count, scalar_to_limbs, limbs_to_scalar, mac_compute)
from .zkp import PokCiphertext, PepJudgement, pok_prove, pok_verify, pep_check
from .threshold import DkgTranscript, DecryptionBundle, dkg_run, threshold_decrypt, verify_decryption, pep_run
from .mixnet import (MixProof, PlainVote, encrypt_plaintext_rows, mix_chain, verify_chain, rows_to_hex,
                     rows_from_hex)
from .board import Board, DuplicateKeyError
from .papers import Paper1, Paper2, paper1_context
from .simulator import VoterView
from .utils import canonical_json, make_rng, sha256_hex, map_rows, timing
from .ipython_backends import repr_mimebundle

logger = logging.getLogger('mailballot.election')
logger.addHandler(logging.NullHandler())

_RESERVED = '|,:\n\r'

VERIFY_STEPS = ('chain', 'setup', 'final', 'registered-unique', 'commit-unique', 'received-grammar', 'first-mix',
                'rejected-mix', 'params-decryption', 'pep', 'accepted', 'accepted-complete', 'final-mix',
                'tally-decryption')


class CastAbortedError(RuntimeError):
    """the voting device gave up casting"""

    def __init__(self, voter_id, cause):
        self.voter_id = voter_id
        self.cause = cause
        super().__init__("cast aborted for '%s': %s" % (voter_id, cause))


def _check_name(value, what):
    if not isinstance(value, str) or not value or any(c in value for c in _RESERVED):
        raise ValueError("Invalid %s '%s': must be a non empty string without '|', ',' or ':'" % (what, value))


def make_selections(candidates, rule='ranking'):
    """
    Allowed selections, in VoteIndex order.

    Parameters
    ----------
    candidates: list of str
    rule: str
        'ranking' (every full ranking, ie '1:A,2:B,3:C') or 'single' (one candidate, ie '1:A')

    Returns
    -------
    list of str
    """
    if rule == 'ranking':
        return [','.join('%d:%s' % (rank, c) for rank, c in enumerate(perm, start=1))
                for perm in itertools.permutations(candidates)]
    if rule == 'single':
        return ['1:%s' % c for c in candidates]
    raise ValueError("Unknown selection_rule '%s'" % rule)


@dataclass
class ElectionConfig:
    """
    Election definition, as read from a yaml config file.

    Parameters
    ----------
    name: str
    candidates: list of str
    selections: list of str
        allowed selections; the position in this list is the VoteIndex.
    roll: list of str
        VoterIDs
    n: int
        trustee count
    k: int
        decryption threshold
    d: int
        error policy: the paper outcome is accepted if less than `d` errors are detected
    seed: int or str, optional
        reproducible runs if set
    group: dict, optional
        group profile override (see `mailballot.group.GroupProfile.from_config`)
    allow_toy: bool
        allow group profiles below `config['group']['min_q_bits']`
    """
    name: str
    candidates: list
    selections: list
    roll: list
    n: int = 1
    k: int = 1
    d: int = 0
    seed: object = None
    group: dict = field(default_factory=dict)
    allow_toy: bool = False

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ('name', 'candidates', 'roll'):
            if key not in d:
                raise ValueError("Election config: missing key '%s'" % key)
        candidates = [str(c) for c in d['candidates']]
        if 'selections' in d:
            selections = [str(s) for s in d['selections']]
        else:
            selections = make_selections(candidates, d.get('selection_rule', 'ranking'))
        trustees = d.get('trustees') or {}
        config = cls(str(d['name']), candidates, selections, [str(v) for v in d['roll']],
                     n=int(trustees.get('n', 1)), k=int(trustees.get('k', 1)), d=int(d.get('d', 0)),
                     seed=d.get('seed'), group=dict(d.get('group') or {}), allow_toy=bool(d.get('allow_toy', False)))
        config.validate()
        return config

    @classmethod
    def from_yaml(cls, path):
        with open(path) as f:
            return cls.from_dict(yaml.load(f, Loader=yaml.FullLoader))

    def to_dict(self):
        return {'name': self.name, 'candidates': list(self.candidates), 'selections': list(self.selections),
                'roll': list(self.roll), 'trustees': {'n': self.n, 'k': self.k}, 'd': self.d, 'seed': self.seed,
                'group': dict(self.group), 'allow_toy': self.allow_toy}

    def validate(self, group=None):
        """
        Raises
        ------
        ValueError
            naming the offending key
        """
        if not self.name or '|' in self.name:
            raise ValueError("Election config 'name': must be a non empty string without '|'")
        for c in self.candidates:
            _check_name(c, 'candidate')
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("Election config 'candidates': duplicated candidate")
        if not self.roll:
            raise ValueError("Election config 'roll': empty roll")
        for voter in self.roll:
            _check_name(voter, 'roll VoterID')
        if len(set(self.roll)) != len(self.roll):
            dup = [v for v, count in Counter(self.roll).items() if count > 1]
            raise ValueError("Election config 'roll': duplicated VoterIDs %s" % dup)
        if not self.selections or len(set(self.selections)) != len(self.selections):
            raise ValueError("Election config 'selections': empty or duplicated selections")
        if any(not s or '|' in s for s in self.selections):
            raise ValueError("Election config 'selections': selections can't contain '|'")
        if not 1 <= self.k <= self.n:
            raise ValueError("Election config 'trustees': need 1 <= k <= n, got n=%d k=%d" % (self.n, self.k))
        if self.d < 0:
            raise ValueError("Election config 'd': must be >= 0")
        if group is not None:
            v_max = effective_v_max(group)
            if len(self.selections) > v_max:
                raise ValueError("Election config 'selections': %d selections exceed the vote domain %d"
                                 % (len(self.selections), v_max))
            if len(self.roll) > group.q:
                raise ValueError("Election config 'roll': roll larger than the group order")

    @property
    def config_hash(self):
        return sha256_hex(canonical_json(self.to_dict()))


@dataclass(frozen=True)
class ElectionParams:
    """Public election parameters, as posted on the board setup list"""
    name: str
    group: GroupProfile
    pk: int
    pedersen: PedersenParams
    dkg: DkgTranscript
    roll: tuple
    selections: tuple
    candidates: tuple
    v_max: int
    limb_width: int
    config_hash: str
    election_hash: str

    @property
    def n(self):
        return self.dkg.n

    @property
    def k(self):
        return self.dkg.k

    @property
    def limbs(self):
        return limb_count(self.group, self.limb_width)

    @property
    def param_count(self):
        """number of parameter ciphertexts on Paper 1"""
        return 4 * self.limbs

    @cached_property
    def verification_keys(self):
        return self.dkg.verification_keys(self.group)

    def context(self, *labels):
        """proof context bytes, bound to this election"""
        return '|'.join([self.election_hash] + [str(label) for label in labels]).encode()

    def to_record(self):
        group = self.group
        return {
            'kind': 'params', 'name': self.name, 'group': group.to_dict(), 'pk': group.element_hex(self.pk),
            'pedersen': {'seed': self.pedersen.derivation_seed.decode(), 'h1': group.element_hex(self.pedersen.h1),
                         'h2': group.element_hex(self.pedersen.h2)},
            'dkg': self.dkg.to_dict(group), 'roll': list(self.roll), 'selections': list(self.selections),
            'candidates': list(self.candidates), 'v_max': self.v_max, 'limb_width': self.limb_width,
            'config_hash': self.config_hash,
        }

    @classmethod
    def from_record(cls, record, election_hash):
        """
        Raises
        ------
        ValueError
            if the record is malformed or inconsistent (group, Pedersen derivation, joint key, roll).
        """
        if record.get('kind') != 'params':
            raise ValueError("Not an election parameters record")
        group = GroupProfile.from_dict(record['group'])
        pedersen = PedersenParams(group.element_from_hex(record['pedersen']['h1']),
                                  group.element_from_hex(record['pedersen']['h2']),
                                  record['pedersen']['seed'].encode())
        params = cls(record['name'], group, group.element_from_hex(record['pk']), pedersen,
                     DkgTranscript.from_dict(group, record['dkg']), tuple(record['roll']),
                     tuple(record['selections']), tuple(record['candidates']), int(record['v_max']),
                     int(record['limb_width']), record['config_hash'], election_hash)
        params.validate()
        return params

    def validate(self):
        if not self.pedersen.matches(self.group):
            raise ValueError("Pedersen generators are not derived from the published seed")
        if self.dkg.public_key(self.group) != self.pk:
            raise ValueError("public key doesn't match the key generation commitments")
        if not 1 <= self.k <= self.n or len(self.dkg.commitments) != self.n:
            raise ValueError("inconsistent key generation transcript")
        if len(set(self.roll)) != len(self.roll) or not self.roll:
            raise ValueError("roll is empty or holds duplicated VoterIDs")
        if not self.selections or len(self.selections) > self.v_max or self.v_max > self.group.q:
            raise ValueError("selections don't fit the vote domain")
        if self.limb_width < 1:
            raise ValueError("invalid limb width")

    @classmethod
    def from_board(cls, board):
        """
        Parameters
        ----------
        board: mailballot.Board

        Returns
        -------
        ElectionParams

        Raises
        ------
        ValueError
            if the board doesn't hold exactly one valid setup record.
        """
        setup = board.read('setup')
        if len(setup) != 1:
            raise ValueError("Expected one setup record, found %d" % len(setup))
        return _params_from_payload(setup[0])


@lru_cache(maxsize=8)
def _params_from_payload(payload):
    return ElectionParams.from_record(json.loads(payload), sha256_hex(payload))


@dataclass(frozen=True)
class DoubleEnvelope:
    """outer envelope labelled with the VoterID, inner envelope holding its encryption"""
    voter_id: str
    e_voter: Ciphertext

    def to_dict(self, group):
        return {'voter': self.voter_id, 'e_voter': group.ciphertext_hex(self.e_voter)}

    @classmethod
    def from_dict(cls, group, d):
        return cls(d['voter'], group.ciphertext_from_hex(d['e_voter']))


@timing
def setup(config, rng=None):
    """
    Post the election parameters and prepare the double envelopes.

    Parameters
    ----------
    config: ElectionConfig
    rng: random.Random, optional
        derived from `config.seed` if None

    Returns
    -------
    tuple
        (Board, list of mailballot.threshold.TrusteeShare, dict VoterID -> DoubleEnvelope)

    Raises
    ------
    ValueError
        on invalid config, or a toy group without `allow_toy`.
    mailballot.threshold.DkgAbortError
    """
    from .mailballot import config as package_config

    rng = rng or make_rng(config.seed, 'setup')
    group = GroupProfile.from_config(config.group)
    if group.is_toy() and not config.allow_toy:
        raise ValueError("Group profile %r is a toy profile: set allow_toy to use it" % group)
    config.validate(group)
    pk, shares, transcript = dkg_run(group, config.n, config.k, rng=rng)
    config_hash = config.config_hash
    pedersen = PedersenParams.derive(group, sha256_hex(config_hash, 'pedersen'))
    params = ElectionParams(config.name, group, pk, pedersen, transcript, tuple(config.roll),
                            tuple(config.selections), tuple(config.candidates), effective_v_max(group),
                            package_config['encoding']['limb_width'], config_hash, '')
    board = Board()
    board.post('setup', params.to_record(), writer='ec')
    params = ElectionParams.from_board(board)
    envelopes = {}
    for index, voter in enumerate(params.roll):
        m = encode_voter(group, index, len(params.roll))
        envelopes[voter] = DoubleEnvelope(voter, encrypt(group, pk, m, group.random_scalar(rng)))
    logger.info("election '%s' set up: %d voters, %d-of-%d trustees, election hash %s"
                % (config.name, len(params.roll), config.k, config.n, params.election_hash))
    return board, shares, envelopes


@dataclass(frozen=True)
class VoterSecrets:
    """MAC key `(a, b)` and commitment randomness; never posted"""
    a: int
    b: int
    r_a: int
    r_b: int

    @classmethod
    def sample(cls, group, rng):
        return cls(*(group.random_scalar(rng) for _ in range(4)))

    def scalars(self):
        return self.a, self.b, self.r_a, self.r_b


@dataclass(frozen=True)
class Submission:
    """device to EC message"""
    voter_id: str
    e_mac: Ciphertext
    e_vote: Ciphertext
    pok_mac: PokCiphertext
    pok_vote: PokCiphertext


class CastResult(NamedTuple):
    secrets: VoterSecrets
    paper1: Paper1
    paper2: Paper2
    receipt: str
    view: VoterView


class Scheduler:
    """
    Seeded event scheduler: pending tasks run in a random order, one per step.

    Parameters
    ----------
    rng: random.Random, optional
    """

    def __init__(self, rng=None):
        self.rng = rng or make_rng()
        self.pending = []
        self.steps = 0

    def __len__(self):
        return len(self.pending)

    def schedule(self, task, label=''):
        self.pending.append((label, task))

    def step(self):
        """run one pending task; False if there was nothing to run"""
        self.steps += 1
        if not self.pending:
            return False
        label, task = self.pending.pop(self.rng.randrange(len(self.pending)))
        logger.debug('scheduler step %d: %s' % (self.steps, label))
        task()
        return True

    def run(self, max_steps=None):
        count = 0
        while self.pending and (max_steps is None or count < max_steps):
            self.step()
            count += 1
        return count


def cast_ec(submission, board, rng=None, writer='ec'):
    """
    EC handling of a device submission: check, re-randomize, post to the commit list.

    Parameters
    ----------
    submission: Submission
    board: mailballot.Board
    rng: random.Random, optional
    writer: str

    Returns
    -------
    int or None
        position of the commit post, None if the submission was dropped (unknown voter or bad proof).

    Raises
    ------
    mailballot.board.DuplicateKeyError
        if a commit entry already exists for the VoterID.
    """
    rng = rng or make_rng()
    params = ElectionParams.from_board(board)
    group, pk, voter = params.group, params.pk, submission.voter_id
    if voter not in params.roll:
        logger.warning("submission for unknown voter '%s' dropped" % voter)
        return None
    if not (pok_verify(group, pk, submission.e_mac, submission.pok_mac, params.context('cast', voter, 'mac')) and
            pok_verify(group, pk, submission.e_vote, submission.pok_vote, params.context('cast', voter, 'vote'))):
        logger.warning("submission for '%s' dropped: invalid proof of knowledge" % voter)
        return None
    if board.read('commit', voter):
        raise DuplicateKeyError("commit entry already posted for '%s'" % voter)
    entry = {'e_mac': group.ciphertext_hex(rerandomize(group, pk, submission.e_mac, group.random_scalar(rng))),
             'e_vote': group.ciphertext_hex(rerandomize(group, pk, submission.e_vote, group.random_scalar(rng)))}
    return board.post('commit', entry, key=voter, writer=writer)


class ElectionCommission:
    """
    EC casting inbox: submissions are handled as scheduler tasks.

    Parameters
    ----------
    board: mailballot.Board
    scheduler: Scheduler, optional
    rng: random.Random, optional
    writer: str
    """

    def __init__(self, board, scheduler=None, rng=None, writer='ec'):
        self.board = board
        self.scheduler = scheduler or Scheduler()
        self.rng = rng or make_rng()
        self.writer = writer

    def submit(self, submission):
        self.scheduler.schedule(partial(self.process_submission, submission), 'ec %s' % submission.voter_id)

    def process_submission(self, submission):
        try:
            return cast_ec(submission, self.board, rng=self.rng, writer=self.writer)
        except DuplicateKeyError as e:
            logger.warning('submission rejected: %s' % str(e))
            return None


def register(params, board, voter_id, secrets, writer=None):
    """post the commitments `(c_a, c_b)`, then check the board shows them under `voter_id`"""
    group = params.group
    c_a = commit(group, params.pedersen, secrets.a, secrets.r_a)
    c_b = commit(group, params.pedersen, secrets.b, secrets.r_b)
    entry = {'c_a': group.element_hex(c_a), 'c_b': group.element_hex(c_b)}
    try:
        board.post('registered', entry, key=voter_id, writer=writer or voter_id)
    except DuplicateKeyError:
        raise CastAbortedError(voter_id, 'duplicate registration') from None
    if board.read_records('registered', voter_id)[:1] != [entry]:
        raise CastAbortedError(voter_id, 'registered commitments not found on the board')
    return c_a, c_b


def build_submission(params, voter_id, vote, secrets, rng):
    """
    Returns
    -------
    tuple
        (Submission, mac, r_vote, r_mac)
    """
    group, pk = params.group, params.pk
    mac = mac_compute(group, secrets.a, secrets.b, vote)
    r_vote, r_mac = group.random_scalar(rng), group.random_scalar(rng)
    e_vote = encrypt(group, pk, encode_vote(group, vote, params.v_max), r_vote)
    e_mac = encrypt(group, pk, group.exp_g(mac), r_mac)
    submission = Submission(voter_id, e_mac, e_vote,
                            pok_prove(group, pk, e_mac, mac, r_mac, params.context('cast', voter_id, 'mac'), rng),
                            pok_prove(group, pk, e_vote, vote, r_vote, params.context('cast', voter_id, 'vote'), rng))
    return submission, mac, r_vote, r_mac


def await_commit(board, voter_id, scheduler, timeout_steps=None):
    """
    Advance the scheduler until the commit entry of `voter_id` shows on the board.

    Raises
    ------
    CastAbortedError
        after `timeout_steps` scheduler steps without the entry.
    """
    if timeout_steps is None:
        from .mailballot import config
        timeout_steps = config['protocol']['timeout_steps']
    for _ in range(timeout_steps + 1):
        if board.read('commit', voter_id):
            return board.read_records('commit', voter_id)[0]
        scheduler.step()
    raise CastAbortedError(voter_id, 'commit entry not posted after %d steps' % timeout_steps)


def encrypt_params(params, scalars, rng):
    """
    Limb encryptions of `(a, b, r_a, r_b)` with their proofs, in Paper 1 order.

    Returns
    -------
    tuple
        (ciphertexts, proofs, randomness)
    """
    group, pk = params.group, params.pk
    limbs = [limb for s in scalars for limb in scalar_to_limbs(group, s, params.limb_width)]
    randomness = tuple(group.random_scalar(rng) for _ in limbs)
    ciphertexts = tuple(encrypt(group, pk, group.exp_g(limb), r) for limb, r in zip(limbs, randomness))
    proofs = tuple(pok_prove(group, pk, c, limb, r, paper1_context(params.election_hash, i), rng)
                   for i, (c, limb, r) in enumerate(zip(ciphertexts, limbs, randomness)))
    return ciphertexts, proofs, randomness


@timing
def cast_device(voter_id, vote, board, ec, rng=None, timeout_steps=None):
    """
    Voting device: register commitments, send the encrypted vote and MAC to the EC, wait for the commit entry,
    then print the papers.

    Parameters
    ----------
    voter_id: str
    vote: int
        VoteIndex in the published selections
    board: mailballot.Board
    ec: ElectionCommission
        EC inbox; its scheduler is advanced while waiting
    rng: random.Random, optional
    timeout_steps: int, optional
        `config['protocol']['timeout_steps']` by default

    Returns
    -------
    CastResult
        (VoterSecrets, Paper1, Paper2, receipt, VoterView)

    Raises
    ------
    ValueError
        unknown voter or vote out of range
    CastAbortedError
        on duplicate registration, or if the commit entry never appears.
    """
    rng = rng or make_rng()
    params = ElectionParams.from_board(board)
    if voter_id not in params.roll:
        raise ValueError("Unknown voter '%s'" % voter_id)
    if not 0 <= vote < len(params.selections):
        raise ValueError("Vote index %s not in [0, %d)" % (vote, len(params.selections)))
    secrets = VoterSecrets.sample(params.group, rng)
    register(params, board, voter_id, secrets)
    submission, mac, r_vote, r_mac = build_submission(params, voter_id, vote, secrets, rng)
    ec.submit(submission)
    await_commit(board, voter_id, ec.scheduler, timeout_steps)
    e_params, poks, r_params = encrypt_params(params, secrets.scalars(), rng)
    paper1 = Paper1(params.election_hash, vote, params.selections[vote], e_params, poks)
    paper2 = Paper2(params.election_hash, voter_id)
    view = VoterView(voter_id, secrets.a, secrets.b, secrets.r_a, secrets.r_b, vote, mac, submission.e_vote,
                     r_vote, submission.e_mac, r_mac, e_params, r_params, paper1.to_payload(params.group))
    logger.info("'%s' cast, papers printed" % voter_id)
    return CastResult(secrets, paper1, paper2, voter_id, view)


class ReceivingOffice:
    """
    EC mail opening desk.

    `receive` checks Paper 2 against the roll and the outer envelope, joins the inner double envelope to the
    sealed Paper 1 and destroys Paper 2. `close_batch` shuffles the joined pairs, opens Paper 1 and posts
    to the received or rejected list.

    Parameters
    ----------
    board: mailballot.Board
    envelopes: dict
        VoterID -> DoubleEnvelope
    rng: random.Random, optional
    writer: str
    """

    def __init__(self, board, envelopes, rng=None, writer='ec'):
        self.board = board
        self.envelopes = envelopes
        self.rng = rng or make_rng()
        self.writer = writer
        self.params = ElectionParams.from_board(board)
        self._joined = []

    def _reject_voter(self, voter_id, reason):
        logger.info("ballot rejected at roll check (%s): '%s'" % (reason, voter_id))
        self.board.post('rejected', {'voter': voter_id}, writer=self.writer)

    def receive(self, piece):
        """
        Parameters
        ----------
        piece: mailballot.papers.MailPiece
            delivered mail

        Returns
        -------
        bool
            True if the ballot passed the roll check and waits in the batch.
        """
        try:
            paper2 = Paper2.from_payload(piece.paper2)
        except (ValueError, AttributeError):
            self._reject_voter(piece.identity, 'unreadable paper 2')
            return False
        voter = paper2.voter_id
        if paper2.election_hash != self.params.election_hash:
            self._reject_voter(voter, 'wrong election')
            return False
        if voter not in self.params.roll or voter not in self.envelopes:
            self._reject_voter(voter, 'not on roll')
            return False
        if voter != piece.identity:
            self._reject_voter(voter, 'outer identity mismatch')
            return False
        self._joined.append((piece.paper1, self.envelopes[voter].e_voter))
        piece.paper2 = None
        logger.info('paper 2 destroyed')
        return True

    def _open(self, paper1_payload):
        params = self.params
        paper = Paper1.from_payload(params.group, paper1_payload, params.param_count)
        if paper.election_hash != params.election_hash:
            raise ValueError("Paper 1 from another election")
        if not 0 <= paper.vote_index < len(params.selections) or \
                params.selections[paper.vote_index] != paper.vote_string:
            raise ValueError("Paper 1 plaintext vote is not an allowed selection")
        if not paper.verify_poks(params.group, params.pk):
            raise ValueError("Paper 1 proofs of knowledge don't verify")
        return paper

    @timing
    def close_batch(self):
        """
        Returns
        -------
        tuple
            (received count, rejected count)
        """
        group, pk = self.params.group, self.params.pk
        batch, self._joined = self._joined, []
        self.rng.shuffle(batch)
        received = rejected = 0
        for paper1_payload, e_voter in batch:
            try:
                paper = self._open(paper1_payload)
            except (ValueError, AttributeError) as e:
                logger.info('ballot rejected at opening: %s' % str(e))
                self.board.post('rejected', {'e_voter': group.ciphertext_hex(e_voter)}, writer=self.writer)
                rejected += 1
                continue
            e_params = [group.ciphertext_hex(rerandomize(group, pk, c, group.random_scalar(self.rng)))
                        for c in paper.e_params]
            self.board.post('received', {'vote': paper.vote_index, 'e_voter': group.ciphertext_hex(e_voter),
                                         'e_params': e_params}, writer=self.writer)
            received += 1
        logger.info('batch closed: %d received, %d rejected' % (received, rejected))
        return received, rejected

    def state(self):
        """EC working state: joined ballots only, no plaintext VoterID"""
        group = self.params.group
        return {'pending': [{'paper1': p.decode('ascii'), 'e_voter': group.ciphertext_hex(e)}
                            for p, e in self._joined]}


def process_vote(piece, envelopes, board, rng=None):
    """receive and open a single mail piece"""
    office = ReceivingOffice(board, envelopes, rng=rng)
    if office.receive(piece):
        office.close_batch()


@timing
def process_batch(pieces, envelopes, board, rng=None):
    """
    Receive every delivered mail piece, then open them as one shuffled batch.

    Returns
    -------
    tuple
        (received count, rejected count)
    """
    office = ReceivingOffice(board, envelopes, rng=rng)
    rejected_at_roll = sum(not office.receive(piece) for piece in pieces)
    received, rejected = office.close_batch()
    return received, rejected + rejected_at_roll


def received_rows(params, board):
    """
    Mix input rows `(e_Vote, e_VoterID, e_Params...)` rebuilt from the received list; plaintext votes are
    encrypted with zero randomness.
    """
    group = params.group
    rows = []
    for rec in board.read_records('received'):
        vote = rec['vote']
        if not isinstance(vote, int) or not 0 <= vote < len(params.selections):
            raise ValueError("received vote index out of range: %r" % vote)
        e_params = [group.ciphertext_from_hex(c) for c in rec['e_params']]
        if len(e_params) != params.param_count:
            raise ValueError("received entry holds %d parameter ciphertexts" % len(e_params))
        rows.append([PlainVote(vote), group.ciphertext_from_hex(rec['e_voter'])] + e_params)
    return encrypt_plaintext_rows(group, params.pk, rows, v_max=params.v_max)


def rejected_rows(params, board):
    return [(params.group.ciphertext_from_hex(rec['e_voter']),) for rec in board.read_records('rejected')
            if 'e_voter' in rec]


def mac_bar(group, pk, e_vote, a, b):
    """`e_Vote^a * {g^b}` with zero randomness: encrypts `g^(a*vote + b)`"""
    return ct_mul(group, ct_exp(group, e_vote, a), encrypt(group, pk, group.exp_g(b), 0))


def _mix_record(records, batch):
    found = [rec for rec in records if rec.get('kind') == 'mix' and rec.get('batch') == batch]
    if len(found) != 1:
        raise ValueError("expected one '%s' mix record, found %d" % (batch, len(found)))
    return found[0]


def _mix_outputs(group, record):
    return [(rows_from_hex(group, stage['rows']), MixProof.from_dict(group, stage['proof']))
            for stage in record['stages']]


def _mix_payload(group, batch, outputs):
    return {'kind': 'mix', 'batch': batch,
            'stages': [{'rows': rows_to_hex(group, rows), 'proof': proof.to_dict(group)} for rows, proof in outputs]}


def _decode_voter_id(params, element):
    try:
        return params.roll[decode_voter(params.group, element, len(params.roll))]
    except NotInDomainError:
        return None


def _decode_scalars(params, elements):
    """`(a, b, r_a, r_b)` from decrypted limb elements, None if they don't decode"""
    group, width, count = params.group, params.limb_width, params.limbs
    try:
        limbs = [decode_limb(group, el, width) for el in elements]
        return tuple(limbs_to_scalar(group, limbs[i * count:(i + 1) * count], width) for i in range(4))
    except ValueError:
        return None


def _opening_ok(params, registered, scalars):
    """True if `(a, r_a)`, `(b, r_b)` open the registered commitments"""
    group = params.group
    a, b, r_a, r_b = scalars
    c_a = group.element_from_hex(registered['c_a'])
    c_b = group.element_from_hex(registered['c_b'])
    return commit(group, params.pedersen, a, r_a) == c_a and commit(group, params.pedersen, b, r_b) == c_b


def _spawn(rng, count):
    """per item seeds, so that parallel work stays reproducible"""
    if isinstance(rng, random.SystemRandom):
        return [None] * count
    return [rng.getrandbits(128) for _ in range(count)]


def _item_rng(seed, label):
    return make_rng(seed, label) if seed is not None else make_rng()


def _decrypt_received_row(params, shares, item):
    i, row, seed = item
    rng = _item_rng(seed, 'row|%d' % i)
    group, vks, k = params.group, params.verification_keys, params.k
    voter_element, voter_bundle = threshold_decrypt(group, row[1], shares, vks, k,
                                                    params.context('decrypt', 'received', i, 1), rng)
    bundles = [threshold_decrypt(group, c, shares, vks, k, params.context('decrypt', 'received', i, w), rng)[1]
               for w, c in enumerate(row[2:], start=2)]
    return voter_bundle, _decode_voter_id(params, voter_element), bundles, \
        _decode_scalars(params, [b.plaintext for b in bundles])


def _decrypt_cell(params, shares, batch, item):
    i, c, seed = item
    _, bundle = threshold_decrypt(params.group, c, shares, params.verification_keys, params.k,
                                  params.context('decrypt', batch, i, 0), _item_rng(seed, '%s|%d' % (batch, i)))
    return bundle


def _pep_pair(params, shares, item):
    voter, e_vote_bar, e_vote, e_mac, a, b, seed = item
    rng = _item_rng(seed, 'pep|%s' % voter)
    group, vks, k = params.group, params.verification_keys, params.k
    vote_judgement = pep_run(group, e_vote_bar, e_vote, shares, vks, k, params.context('pep', 'vote', voter), rng)
    mac_judgement = pep_run(group, mac_bar(group, params.pk, e_vote, a, b), e_mac, shares, vks, k,
                            params.context('pep', 'mac', voter), rng)
    return vote_judgement, mac_judgement


def _scalars_hex(group, scalars):
    return None if scalars is None else [group.scalar_hex(s) for s in scalars]


def _skip(branch, what):
    logger.info('tally skip [%s]: %s' % (branch, what))


@timing
def tally(board, shares, rng=None, num_workers=None, mix_hook=None):
    """
    Trustees tally: mix the received ballots, decrypt parameters and RecVoterIDs, match commitment openings,
    run the vote and MAC plaintext equivalence tests, mix and decrypt the accepted votes, finalize the board.

    Per ballot failures never abort the tally: the ballot is skipped and the branch is logged.

    Parameters
    ----------
    board: mailballot.Board
    shares: list of mailballot.threshold.TrusteeShare
        at least k shares. Every share holder runs a mix stage and blinds every PEP.
    rng: random.Random, optional
    num_workers: int, optional
        passed to `mailballot.utils.map_rows`
    mix_hook: callable, optional
        `mix_hook(batch, stage, rows_out, proof) -> (rows_out, proof)`, lets a corrupted trustee alter its
        mix stage

    Returns
    -------
    mailballot.Board
        the finalized board

    Raises
    ------
    mailballot.mixnet.MixStageError
        if a mix stage doesn't verify (the tally is aborted, the board is left unfinalized).
    ValueError
        if shares are missing or invalid, or the board was already tallied.
    """
    rng = rng or make_rng()
    params = ElectionParams.from_board(board)
    group, pk = params.group, params.pk
    if board.finalized or board.read('mixed'):
        raise ValueError("Board already tallied")
    shares = sorted({s.trustee_index: s for s in shares}.values(), key=lambda s: s.trustee_index)
    if len(shares) < params.k:
        raise ValueError("Need %d trustee shares, got %d" % (params.k, len(shares)))
    for share in shares:
        if not share.check(group) or params.verification_keys.get(share.trustee_index) != group.exp_g(
                share.secret_share):
            raise ValueError("Share of trustee %d doesn't match the election key" % share.trustee_index)
    stages = len(shares)

    def hook(batch):
        return None if mix_hook is None else partial(mix_hook, batch)

    # mix received ballots
    rows, outputs = mix_chain(group, pk, received_rows(params, board), stages, params.context('mix', 'received'),
                              rng=rng, stage_hook=hook('received'), num_workers=num_workers)
    board.post('mixed', _mix_payload(group, 'received', outputs), writer='trustees')

    # mix and decrypt rejected e_VoterIDs
    rejected_ids = {rec['voter'] for rec in board.read_records('rejected') if rec.get('voter') in params.roll}
    rej_rows, rej_outputs = mix_chain(group, pk, rejected_rows(params, board), stages,
                                      params.context('mix', 'rejected'), rng=rng, stage_hook=hook('rejected'),
                                      num_workers=num_workers)
    board.post('mixed', _mix_payload(group, 'rejected', rej_outputs), writer='trustees')
    bundles = map_rows(partial(_decrypt_cell, params, shares, 'rejected'),
                       [(i, row[0], seed) for i, (row, seed) in enumerate(zip(rej_rows, _spawn(rng, len(rej_rows))))],
                       num_workers=num_workers)
    for i, bundle in enumerate(bundles):
        voter = _decode_voter_id(params, bundle.plaintext)
        if voter is not None:
            rejected_ids.add(voter)
        board.post('mixed', {'kind': 'rejected-id', 'row': i, 'decryption': bundle.to_dict(group), 'voter': voter},
                   writer='trustees')

    # decrypt parameters and RecVoterIDs
    decrypted = map_rows(partial(_decrypt_received_row, params, shares),
                         [(i, row, seed) for i, (row, seed) in enumerate(zip(rows, _spawn(rng, len(rows))))],
                         num_workers=num_workers)
    for i, (voter_bundle, voter, param_bundles, scalars) in enumerate(decrypted):
        board.post('mixed', {'kind': 'row', 'row': i, 'voter_decryption': voter_bundle.to_dict(group),
                             'voter': voter, 'params': [b.to_dict(group) for b in param_bundles],
                             'scalars': _scalars_hex(group, scalars)}, writer='trustees')

    # join RecVoterIDs to registered commitments
    counts = Counter(voter for _, voter, _, _ in decrypted if voter is not None)
    openings = {}
    for i, (_, voter, _, scalars) in enumerate(decrypted):
        if voter is None:
            _skip('unknown-voter', 'row %d' % i)
        elif counts[voter] > 1:
            _skip('recvoterid-not-unique', voter)
        elif voter in rejected_ids:
            _skip('recvoterid-rejected', voter)
        elif not board.read('registered', voter):
            _skip('not-registered', voter)
        elif scalars is None:
            _skip('undecodable-params', voter)
        elif not _opening_ok(params, board.read_records('registered', voter)[0], scalars):
            _skip('no-correct-opening', voter)
        else:
            openings.setdefault(voter, []).append(i)

    # MAC check by plaintext equivalence
    items = []
    for voter in params.roll:
        if voter not in openings:
            continue
        if len(openings[voter]) > 1:
            _skip('multiple-openings', voter)
            continue
        if not board.read('commit', voter):
            _skip('no-commit', voter)
            continue
        entry = board.read_records('commit', voter)[0]
        i = openings[voter][0]
        a, b = decrypted[i][3][:2]
        items.append((voter, i, rows[i][0], group.ciphertext_from_hex(entry['e_vote']),
                      group.ciphertext_from_hex(entry['e_mac']), a, b))
    seeds = _spawn(rng, len(items))
    judgements = map_rows(partial(_pep_pair, params, shares),
                          [(voter, e_bar, e_vote, e_mac, a, b, seed)
                           for (voter, _, e_bar, e_vote, e_mac, a, b), seed in zip(items, seeds)],
                          num_workers=num_workers)
    accepted = []
    for (voter, i, _, e_vote, _, _, _), (vote_judgement, mac_judgement) in zip(items, judgements):
        board.post('pep', {'kind': 'vote', 'voter': voter, 'row': i, 'judgement': vote_judgement.to_dict(group)},
                   writer='trustees')
        board.post('pep', {'kind': 'mac', 'voter': voter, 'row': i, 'judgement': mac_judgement.to_dict(group)},
                   writer='trustees')
        if not vote_judgement.equal:
            _skip('pep-vote-failed', voter)
        elif not mac_judgement.equal:
            _skip('pep-mac-failed', voter)
        else:
            board.post('accepted', {'voter': voter, 'e_vote': group.ciphertext_hex(e_vote)}, writer='trustees')
            accepted.append((e_vote,))

    # final mix and decryption
    final_rows, final_outputs = mix_chain(group, pk, accepted, stages, params.context('mix', 'accepted'), rng=rng,
                                          stage_hook=hook('accepted'), num_workers=num_workers)
    board.post('tally', _mix_payload(group, 'accepted', final_outputs), writer='trustees')
    bundles = map_rows(partial(_decrypt_cell, params, shares, 'accepted'),
                       [(i, row[0], seed) for i, (row, seed) in
                        enumerate(zip(final_rows, _spawn(rng, len(final_rows))))], num_workers=num_workers)
    tallied = 0
    for i, bundle in enumerate(bundles):
        vote = _decode_tally_vote(params, bundle.plaintext)
        if vote is None:
            _skip('undecodable-vote', 'tally row %d' % i)
        else:
            tallied += 1
        board.post('tally', {'kind': 'vote', 'row': i, 'decryption': bundle.to_dict(group), 'vote': vote},
                   writer='trustees')
    board.finalize({'received': len(rows), 'accepted': len(accepted), 'tallied': tallied})
    logger.info('tally done: %d received, %d accepted, %d tallied' % (len(rows), len(accepted), tallied))
    return board


def _decode_tally_vote(params, element):
    try:
        vote = decode_vote(params.group, element, params.v_max)
    except NotInDomainError:
        return None
    return vote if vote < len(params.selections) else None


@dataclass(frozen=True)
class Verdict:
    """verification outcome; `step` and `reason` locate the first failure"""
    passed: bool
    step: str = None
    reason: str = None

    def __bool__(self):
        return self.passed

    def __str__(self):
        return 'pass' if self.passed else 'fail at %s: %s' % (self.step, self.reason)


def voter_verify(receipt, papers, board, intended=None):
    """
    Voter check: papers as checked at cast time, and receipt VoterID in the accepted list.

    Parameters
    ----------
    receipt: str
        VoterID
    papers: tuple
        (mailballot.papers.Paper1, mailballot.papers.Paper2)
    board: mailballot.Board
        final board
    intended: int, optional
        VoteIndex the voter meant; checked against the printed vote if given.

    Returns
    -------
    Verdict
        reasons: 'paper-mismatch', 'not-finalized', 'not-accepted'
    """
    params = ElectionParams.from_board(board)
    paper1, paper2 = papers
    if paper2.voter_id != receipt or paper1.election_hash != params.election_hash or \
            paper2.election_hash != params.election_hash:
        return Verdict(False, 'papers', 'paper-mismatch')
    if not 0 <= paper1.vote_index < len(params.selections) or \
            params.selections[paper1.vote_index] != paper1.vote_string:
        return Verdict(False, 'papers', 'paper-mismatch')
    if intended is not None and paper1.vote_index != intended:
        return Verdict(False, 'papers', 'paper-mismatch')
    if not board.finalized:
        return Verdict(False, 'board', 'not-finalized')
    if receipt not in {rec['voter'] for rec in board.read_records('accepted')}:
        return Verdict(False, 'board', 'not-accepted')
    return Verdict(True)


class _Failed(Exception):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


def _require(condition, reason):
    if not condition:
        raise _Failed(reason)


@timing
def global_verify(board, num_workers=None):
    """
    Re-verify every fact asserted on the board, from the board alone.

    Parameters
    ----------
    board: mailballot.Board
    num_workers: int, optional

    Returns
    -------
    Verdict
        `step` is one of `VERIFY_STEPS`
    """
    step = VERIFY_STEPS[0]
    try:
        for step, check in _verify_steps(board, num_workers):
            check()
    except _Failed as e:
        logger.warning('global verification failed at %s: %s' % (step, e.reason))
        return Verdict(False, step, e.reason)
    except (ValueError, KeyError, TypeError, AttributeError, IndexError) as e:
        logger.warning('global verification failed at %s: malformed record (%s)' % (step, str(e)))
        return Verdict(False, step, 'malformed record: %s' % str(e))
    logger.info('global verification passed')
    return Verdict(True)


def _verify_steps(board, num_workers):
    """yields `(step name, check)`; checks share the state built by the previous ones"""
    state = {}

    def chain():
        _require(board.verify_chain() is None, 'hash chain broken at record %s' % board.verify_chain())

    def setup_check():
        state['params'] = ElectionParams.from_board(board)

    def final():
        _require(len(board.read('final')) == 1, 'board is not finalized exactly once')
        last = None
        for last in board.lines():
            pass
        _require(last is not None and last.startswith('final|'), 'records posted after finalization')

    def unique(list_id):
        def check():
            params = state['params']
            group = params.group
            for voter, count in board.key_counts(list_id).items():
                _require(count == 1, "'%s' appears %d times in %s" % (voter, count, list_id))
                rec = board.read_records(list_id, voter)[0]
                if list_id == 'registered':
                    group.element_from_hex(rec['c_a'])
                    group.element_from_hex(rec['c_b'])
                else:
                    group.ciphertext_from_hex(rec['e_mac'])
                    group.ciphertext_from_hex(rec['e_vote'])
        return check

    def received_grammar():
        state['received'] = received_rows(state['params'], board)

    def first_mix():
        params = state['params']
        mixed = board.read_records('mixed')
        outputs = _mix_outputs(params.group, _mix_record(mixed, 'received'))
        failed = verify_chain(params.group, params.pk, state['received'], outputs, params.context('mix', 'received'),
                              num_workers=num_workers)
        _require(failed is None, 'mix stage %s does not verify' % failed)
        state['mixed'] = mixed
        state['rows'] = outputs[-1][0]

    def rejected_mix():
        params = state['params']
        group = params.group
        outputs = _mix_outputs(group, _mix_record(state['mixed'], 'rejected'))
        failed = verify_chain(group, params.pk, rejected_rows(params, board), outputs,
                              params.context('mix', 'rejected'), num_workers=num_workers)
        _require(failed is None, 'rejected mix stage %s does not verify' % failed)
        rej_rows = outputs[-1][0]
        records = [rec for rec in state['mixed'] if rec.get('kind') == 'rejected-id']
        _require(sorted(rec['row'] for rec in records) == list(range(len(rej_rows))),
                 'rejected id decryptions do not cover the rejected mix')
        rejected = {rec['voter'] for rec in board.read_records('rejected') if rec.get('voter') in params.roll}
        for rec in records:
            bundle = DecryptionBundle.from_dict(group, rec['decryption'])
            _require(bundle.ciphertext == rej_rows[rec['row']][0] and verify_decryption(
                group, bundle, params.verification_keys, params.k, params.context('decrypt', 'rejected', rec['row'], 0)),
                'invalid decryption of rejected row %d' % rec['row'])
            voter = _decode_voter_id(params, bundle.plaintext)
            _require(voter == rec['voter'], 'rejected row %d: VoterID does not match its decryption' % rec['row'])
            if voter is not None:
                rejected.add(voter)
        state['rejected'] = rejected

    def params_decryption():
        params = state['params']
        group, rows = params.group, state['rows']
        records = [rec for rec in state['mixed'] if rec.get('kind') == 'row']
        _require(sorted(rec['row'] for rec in records) == list(range(len(rows))),
                 'row decryptions do not cover the received mix')
        decoded = {}
        for rec in records:
            i = rec['row']
            row = rows[i]
            voter_bundle = DecryptionBundle.from_dict(group, rec['voter_decryption'])
            _require(voter_bundle.ciphertext == row[1] and verify_decryption(
                group, voter_bundle, params.verification_keys, params.k, params.context('decrypt', 'received', i, 1)),
                'invalid RecVoterID decryption of row %d' % i)
            bundles = [DecryptionBundle.from_dict(group, b) for b in rec['params']]
            _require(len(bundles) == len(row) - 2, 'row %d: wrong number of parameter decryptions' % i)
            for w, bundle in enumerate(bundles, start=2):
                _require(bundle.ciphertext == row[w] and verify_decryption(
                    group, bundle, params.verification_keys, params.k, params.context('decrypt', 'received', i, w)),
                    'invalid parameter decryption of row %d cell %d' % (i, w))
            voter = _decode_voter_id(params, voter_bundle.plaintext)
            scalars = _decode_scalars(params, [b.plaintext for b in bundles])
            _require(voter == rec['voter'] and _scalars_hex(group, scalars) == rec['scalars'],
                     'row %d: posted values do not match the decryptions' % i)
            decoded[i] = (voter, scalars)
        state['decoded'] = decoded
        counts = Counter(voter for voter, _ in decoded.values() if voter is not None)
        openings = {}
        for i, (voter, scalars) in decoded.items():
            if voter is None or counts[voter] > 1 or voter in state['rejected'] or scalars is None:
                continue
            registered = board.read_records('registered', voter)
            if registered and _opening_ok(params, registered[0], scalars):
                openings.setdefault(voter, []).append(i)
        state['counts'] = counts
        state['openings'] = openings

    def pep():
        params = state['params']
        group = params.group
        judged = {}
        for rec in board.read_records('pep'):
            kind, voter, i = rec['kind'], rec['voter'], rec['row']
            _require((kind, voter) not in judged, "duplicated %s PEP for '%s'" % (kind, voter))
            _require(kind in ('vote', 'mac') and 0 <= i < len(state['rows']), 'malformed PEP record')
            judgement = PepJudgement.from_dict(group, rec['judgement'])
            entry = board.read_records('commit', voter)
            _require(len(entry) == 1, "PEP for '%s' without commit entry" % voter)
            e_vote = group.ciphertext_from_hex(entry[0]['e_vote'])
            if kind == 'vote':
                left, right = state['rows'][i][0], e_vote
            else:
                scalars = state['decoded'][i][1]
                _require(scalars is not None, "MAC PEP for '%s' on undecodable parameters" % voter)
                left, right = mac_bar(group, params.pk, e_vote, *scalars[:2]), \
                    group.ciphertext_from_hex(entry[0]['e_mac'])
            _require(judgement.left == left and judgement.right == right,
                     "%s PEP for '%s' compares the wrong ciphertexts" % (kind, voter))
            _require(pep_check(group, judgement, params.verification_keys, params.k,
                               params.context('pep', kind, voter)), "%s PEP for '%s' does not verify" % (kind, voter))
            judged[(kind, voter)] = (i, judgement.equal)
        state['judged'] = judged

    def accepted():
        params = state['params']
        group = params.group
        records = board.read_records('accepted')
        voters = [rec['voter'] for rec in records]
        _require(len(set(voters)) == len(voters), 'duplicated VoterID in accepted')
        for rec in records:
            voter = rec['voter']
            _require(state['counts'].get(voter) == 1, "'%s' is not unique in mixed" % voter)
            _require(voter not in state['rejected'], "'%s' is in rejected" % voter)
            _require(len(state['openings'].get(voter, [])) == 1, "'%s' has no unique correct opening" % voter)
            i = state['openings'][voter][0]
            for kind in ('vote', 'mac'):
                _require(state['judged'].get((kind, voter)) == (i, True), "'%s' %s PEP did not pass" % (voter, kind))
            entry = board.read_records('commit', voter)[0]
            _require(group.ciphertext_from_hex(rec['e_vote']) == group.ciphertext_from_hex(entry['e_vote']),
                     "'%s' accepted vote differs from its commit entry" % voter)
        state['accepted'] = [(group.ciphertext_from_hex(rec['e_vote']),) for rec in records]
        state['accepted_voters'] = set(voters)

    def accepted_complete():
        eligible = {voter for voter, rows in state['openings'].items()
                    if len(rows) == 1 and board.read('commit', voter)}
        judged_voters = {voter for _, voter in state['judged']}
        _require(judged_voters <= eligible, 'PEPs run for ineligible %s' % sorted(judged_voters - eligible))
        for voter in eligible:
            i = state['openings'][voter][0]
            for kind in ('vote', 'mac'):
                _require(state['judged'].get((kind, voter), (None,))[0] == i,
                         "%s PEP missing for '%s' or run on another row" % (kind, voter))
        passing = {voter for voter in eligible if state['judged'][('vote', voter)][1]
                   and state['judged'][('mac', voter)][1]}
        _require(passing == state['accepted_voters'],
                 'accepted list differs from passing ballots: missing %s' % sorted(passing - state['accepted_voters']))

    def final_mix():
        params = state['params']
        records = board.read_records('tally')
        outputs = _mix_outputs(params.group, _mix_record(records, 'accepted'))
        failed = verify_chain(params.group, params.pk, state['accepted'], outputs, params.context('mix', 'accepted'),
                              num_workers=num_workers)
        _require(failed is None, 'final mix stage %s does not verify' % failed)
        state['tally'] = records
        state['final_rows'] = outputs[-1][0]

    def tally_decryption():
        params = state['params']
        group, rows = params.group, state['final_rows']
        records = [rec for rec in state['tally'] if rec.get('kind') == 'vote']
        _require(sorted(rec['row'] for rec in records) == list(range(len(rows))),
                 'tally decryptions do not cover the final mix')
        for rec in records:
            i = rec['row']
            bundle = DecryptionBundle.from_dict(group, rec['decryption'])
            _require(bundle.ciphertext == rows[i][0] and verify_decryption(
                group, bundle, params.verification_keys, params.k, params.context('decrypt', 'accepted', i, 0)),
                'invalid decryption of tally row %d' % i)
            _require(_decode_tally_vote(params, bundle.plaintext) == rec['vote'],
                     'tally row %d: vote does not match its decryption' % i)

    checks = dict(zip(VERIFY_STEPS, (chain, setup_check, final, unique('registered'), unique('commit'),
                                     received_grammar, first_mix, rejected_mix, params_decryption, pep, accepted,
                                     accepted_complete, final_mix, tally_decryption)))
    yield from checks.items()


def margin(paper_outcome):
    """half the difference between the two largest counts of the paper outcome"""
    counts = sorted((int(c) for c in paper_outcome.values()), reverse=True) + [0, 0]
    return (counts[0] - counts[1]) / 2


def id_sets(board):
    """
    VoterID sets of the result function.

    Returns
    -------
    dict
        'registered', 'received' (decrypted RecVoterIDs), 'rejected' (both forms, as roll entries) and
        'tally' (accepted list) sets.
    """
    params = ElectionParams.from_board(board)
    roll = set(params.roll)
    mixed = board.read_records('mixed')
    rejected = {rec['voter'] for rec in board.read_records('rejected') if rec.get('voter') in roll}
    rejected |= {rec['voter'] for rec in mixed if rec.get('kind') == 'rejected-id' and rec.get('voter') in roll}
    return {
        'registered': set(board.keys('registered')) & roll,
        'received': {rec['voter'] for rec in mixed if rec.get('kind') == 'row' and rec.get('voter') in roll},
        'rejected': rejected,
        'tally': {rec['voter'] for rec in board.read_records('accepted')} & roll,
    }


@dataclass
class ElectionOutcome:
    """
    Result of an election: the paper outcome if less than `d` errors were detected and the board verifies,
    None (bottom) otherwise.
    """
    name: str
    tally: pd.Series
    paper_outcome: dict
    margin: float
    epsilon: int
    d: int
    theta: float
    verification: Verdict
    accepted: bool
    outcome: dict
    ids: dict

    def to_dict(self):
        return {'name': self.name, 'tally': {k: int(v) for k, v in self.tally.items()},
                'paper_outcome': self.paper_outcome, 'margin': self.margin, 'epsilon': self.epsilon, 'd': self.d,
                'theta': self.theta, 'verification': str(self.verification), 'accepted': self.accepted,
                'outcome': self.outcome, 'ids': {k: sorted(v) for k, v in self.ids.items()}}

    def __str__(self):
        verdict = 'outcome accepted' if self.accepted else 'bottom'
        return "ElectionOutcome('%s': %s, epsilon=%d, d=%d, margin=%s, theta=%s, verification %s)" % (
            self.name, verdict, self.epsilon, self.d, self.margin, self.theta, self.verification)

    def _repr_mimebundle_(self, include=None, exclude=None):
        return repr_mimebundle(self, include=include, exclude=exclude)


@timing
def result(board, paper_outcome, d, num_workers=None):
    """
    Result function.

    Parameters
    ----------
    board: mailballot.Board
        final board (transcript)
    paper_outcome: dict or None
        paper record outcome, selection -> count. If None, the board tally is used as paper outcome.
    d: int
        error policy
    num_workers: int, optional

    Returns
    -------
    ElectionOutcome
        `accepted` is True iff epsilon < d and global verification passes.
    """
    from .mailballot import tally_vector

    params = ElectionParams.from_board(board)
    tally_series = tally_vector(board)
    if paper_outcome is None:
        paper_outcome = {k: int(v) for k, v in tally_series.items()}
    ids = id_sets(board)
    epsilon = len(ids['registered'] | ids['received']) - len(ids['tally'])
    verification = global_verify(board, num_workers=num_workers)
    m = margin(paper_outcome)
    if d >= m:
        logger.warning('error policy d=%d is not below the margin M=%s' % (d, m))
    accepted = verification.passed and epsilon < d
    logger.info('result: epsilon=%d d=%d -> %s' % (epsilon, d, 'outcome' if accepted else 'bottom'))
    return ElectionOutcome(params.name, tally_series, dict(paper_outcome), m, epsilon, d,
                           len(params.roll) - (m - d), verification, accepted,
                           dict(paper_outcome) if accepted else None, ids)
