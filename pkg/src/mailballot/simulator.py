"""
Receipt-freeness simulator.

A voter who remembers everything their device did (the view) still can't prove their vote: for any other vote,
`fake_view` produces a view that passes every check the true one passes.
"""
import logging
from dataclasses import dataclass, replace
from .group import NotInDomainError, encrypt, commit, decode_limb, encode_vote, limbs_to_scalar, mac_compute
from .papers import Paper1, replace_vote
from .utils import make_rng

logger = logging.getLogger('mailballot.simulator')
logger.addHandler(logging.NullHandler())


@dataclass(frozen=True)
class VoterView:
    """everything a voting device knows after casting"""
    voter_id: str
    a: int
    b: int
    r_a: int
    r_b: int
    vote: int
    mac: int
    e_vote: object
    r_vote: int
    e_mac: object
    r_mac: int
    e_params: tuple
    r_params: tuple
    paper1: bytes

    def to_dict(self, group):
        """fixed width serialization, used for field by field comparison"""
        sc = group.scalar_hex
        return {
            'voter_id': self.voter_id, 'a': sc(self.a), 'b': sc(self.b), 'r_a': sc(self.r_a), 'r_b': sc(self.r_b),
            'vote': self.vote, 'mac': sc(self.mac), 'e_vote': group.ciphertext_hex(self.e_vote),
            'r_vote': sc(self.r_vote), 'e_mac': group.ciphertext_hex(self.e_mac), 'r_mac': sc(self.r_mac),
            'e_params': [group.ciphertext_hex(c) for c in self.e_params],
            'r_params': [sc(r) for r in self.r_params], 'paper1': self.paper1.decode('ascii'),
        }


def fake_view(view, coerced_vote, params, rng=None):
    """
    Simulated view for another vote.

    Parameters
    ----------
    view: VoterView
        true view
    coerced_vote: int
        VoteIndex the coercer asks for
    params: mailballot.election.ElectionParams
    rng: random.Random, optional

    Returns
    -------
    VoterView
        same secrets and parameter ciphertexts, `MAC' = a*vote' + b`, fresh encryptions of `g^vote'` and
        `g^MAC'`, and Paper 1 printing the coerced vote.
    """
    rng = rng or make_rng()
    group, pk = params.group, params.pk
    if not 0 <= coerced_vote < len(params.selections):
        raise ValueError("Vote index %s not in [0, %d)" % (coerced_vote, len(params.selections)))
    mac = mac_compute(group, view.a, view.b, coerced_vote)
    r_vote, r_mac = group.random_scalar(rng), group.random_scalar(rng)
    return replace(view, vote=coerced_vote, mac=mac,
                   e_vote=encrypt(group, pk, encode_vote(group, coerced_vote, params.v_max), r_vote), r_vote=r_vote,
                   e_mac=encrypt(group, pk, group.exp_g(mac), r_mac), r_mac=r_mac,
                   paper1=replace_vote(view.paper1, coerced_vote, params.selections[coerced_vote]))


def check_view(view, board):
    """
    Local consistency checks a voter (or a coercer) can run on a view.

    Parameters
    ----------
    view: VoterView
    board: mailballot.Board

    Returns
    -------
    list of str
        names of the failed checks, empty if the view is consistent.
    """
    from .election import ElectionParams

    params = ElectionParams.from_board(board)
    group, pk = params.group, params.pk
    failed = []
    registered = board.read_records('registered', view.voter_id)
    if not registered or registered[0] != {'c_a': group.element_hex(commit(group, params.pedersen, view.a, view.r_a)),
                                           'c_b': group.element_hex(commit(group, params.pedersen, view.b, view.r_b))}:
        failed.append('commitment-openings')
    if view.mac != mac_compute(group, view.a, view.b, view.vote):
        failed.append('mac-relation')
    if view.e_vote != encrypt(group, pk, encode_vote(group, view.vote, params.v_max), view.r_vote):
        failed.append('vote-encryption')
    if view.e_mac != encrypt(group, pk, group.exp_g(view.mac), view.r_mac):
        failed.append('mac-encryption')
    if not _params_consistent(params, view):
        failed.append('params-encryption')
    try:
        paper = Paper1.from_payload(group, view.paper1, params.param_count)
        if paper.vote_index != view.vote or params.selections[view.vote] != paper.vote_string \
                or paper.e_params != tuple(view.e_params) or not paper.verify_poks(group, pk):
            failed.append('paper1-content')
    except (ValueError, IndexError):
        failed.append('paper1-grammar')
    if failed:
        logger.debug("view of '%s' fails %s" % (view.voter_id, failed))
    return failed


def _params_consistent(params, view):
    group, pk = params.group, params.pk
    if len(view.e_params) != params.param_count or len(view.r_params) != params.param_count:
        return False
    limbs = []
    for c, r in zip(view.e_params, view.r_params):
        # limbs are small: recover them from the known randomness
        m = group.div(c.c2, group.fixed_exp(pk, r))
        if c.c1 != group.exp_g(r):
            return False
        try:
            limbs.append(decode_limb(group, m, params.limb_width))
        except NotInDomainError:
            return False
    count = params.limbs
    try:
        scalars = tuple(limbs_to_scalar(group, limbs[i * count:(i + 1) * count], params.limb_width) for i in range(4))
    except ValueError:
        return False
    return scalars == (view.a, view.b, view.r_a, view.r_b)
