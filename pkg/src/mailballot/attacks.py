"""
Adversary harness: small simulated elections where one role is corrupted, and MAC forgery experiments.

Every attack targets a single ballot (the victim). A run counts as detected when the victim is excluded from the
accepted list, the victim's check or global verification fails, and the other voters' votes are tallied unaltered.
"""
import logging
from collections import Counter
from dataclasses import dataclass, asdict
import numpy as np
import pandas as pd
from .group import GroupProfile, encrypt, encode_vote
from .zkp import pok_prove
from .threshold import dkg_run, pep_run
from .election import (ElectionConfig, ElectionParams, ElectionCommission, Scheduler, Submission, Verdict,
                       VoterSecrets, CastAbortedError, CastResult, make_selections, setup, cast_device, register,
                       build_submission, await_commit, encrypt_params, process_batch, tally, voter_verify,
                       global_verify, result, mac_bar)
from .papers import Paper1, Paper2, MailChannel, mail_send
from .utils import make_rng, timing

logger = logging.getLogger('mailballot.attacks')
logger.addHandler(logging.NullHandler())

ATTACKS = ('ec_substitute', 'mail_substitute', 'client_bogus_openings', 'duplicate_opening', 'fake_board_post')

HARNESS_GROUP = {'seed': 'mailballot-test', 'p_bits': 512, 'q_bits': 160}


def harness_config(voters=3, candidates=('Alice', 'Bob', 'Eve'), n=1, k=1, d=1, seed=0, group=None,
                   rule='ranking'):
    """small election config for simulations"""
    return ElectionConfig('harness-%s' % seed, list(candidates), make_selections(list(candidates), rule),
                          ['voter-%02d' % i for i in range(voters)], n=n, k=k, d=d, seed=seed,
                          group=dict(group or HARNESS_GROUP), allow_toy=True)


class ElectionHarness:
    """
    Whole election run in memory, each role reachable for corruption.

    Parameters
    ----------
    config: mailballot.election.ElectionConfig
    seed: int
    num_workers: int, optional
    """

    def __init__(self, config, seed=0, num_workers=None):
        self.config = config
        self.seed = seed
        self.num_workers = num_workers
        self.board, self.shares, self.envelopes = setup(config, rng=make_rng(seed, 'setup'))
        self.params = ElectionParams.from_board(self.board)
        self.scheduler = Scheduler(make_rng(seed, 'scheduler'))
        self.ec = ElectionCommission(self.board, self.scheduler, rng=make_rng(seed, 'ec'))
        self.channel = MailChannel(make_rng(seed, 'mail'))
        self.casts = {}
        self.intents = {}
        self.aborted = {}
        self.pieces = []

    def device_rng(self, voter_id, label='device'):
        return make_rng(self.seed, '%s|%s' % (label, voter_id))

    def cast(self, voter_id, vote):
        """honest device; None if the cast was aborted"""
        self.intents[voter_id] = vote
        try:
            cast = cast_device(voter_id, vote, self.board, self.ec, rng=self.device_rng(voter_id))
        except CastAbortedError as e:
            logger.info(str(e))
            self.aborted[voter_id] = e.cause
            return None
        self.casts[voter_id] = cast
        return cast

    def mail(self, voter_id, lose=False, substitute=None, paper1=None, identity=None):
        """
        Post the papers of `voter_id`.

        Parameters
        ----------
        voter_id: str
        lose: bool
            the piece never arrives
        substitute: int, optional
            VoteIndex printed on a substituted Paper 1
        paper1: mailballot.papers.Paper1, optional
            paper to send instead of the one printed at cast time
        identity: str, optional
            outer envelope identity (`voter_id` by default)
        """
        cast = self.casts[voter_id]
        paper1 = paper1 or cast.paper1
        piece = mail_send((paper1.to_payload(self.params.group), cast.paper2.to_payload()), identity or voter_id,
                          self.channel)
        if lose:
            self.channel.lose(piece)
        elif substitute is not None:
            self.channel.substitute_paper1(piece, substitute, self.params.selections[substitute])
        else:
            self.channel.deliver(piece)
        self.pieces.append(piece)
        return piece

    def receive(self):
        return process_batch(self.channel.arrivals(self.pieces), self.envelopes, self.board,
                             rng=make_rng(self.seed, 'receive'))

    def tally(self, mix_hook=None):
        return tally(self.board, self.shares, rng=make_rng(self.seed, 'tally'), num_workers=self.num_workers,
                     mix_hook=mix_hook)

    def verify(self, voter_id):
        if voter_id in self.aborted:
            return Verdict(False, 'cast', 'cast-aborted')
        cast = self.casts[voter_id]
        return voter_verify(voter_id, (cast.paper1, cast.paper2), self.board, intended=self.intents[voter_id])

    def audit(self):
        return global_verify(self.board, num_workers=self.num_workers)

    def result(self, paper_outcome=None, d=None):
        return result(self.board, paper_outcome, self.config.d if d is None else d, num_workers=self.num_workers)

    def run(self, votes, lose=(), substitute=None):
        """
        Honest election, apart from lost or substituted mail.

        Parameters
        ----------
        votes: dict
            VoterID -> VoteIndex
        lose: iterable of str
            voters whose mail gets lost
        substitute: dict, optional
            VoterID -> VoteIndex printed on a substituted Paper 1
        """
        substitute = substitute or {}
        for voter, vote in votes.items():
            self.cast(voter, vote)
        for voter in votes:
            if voter in self.casts:
                self.mail(voter, lose=voter in lose, substitute=substitute.get(voter))
        self.receive()
        self.tally()
        return self.board

    def tallied_votes(self):
        return Counter(rec['vote'] for rec in self.board.read_records('tally')
                       if rec['kind'] == 'vote' and rec['vote'] is not None)


class SubstitutingCommission(ElectionCommission):
    """
    Corrupted EC: for target voters, posts an encryption of another vote with a guessed MAC.

    Parameters
    ----------
    targets: dict
        VoterID -> VoteIndex to substitute
    """

    def __init__(self, board, scheduler, rng=None, targets=None):
        super().__init__(board, scheduler, rng=rng)
        self.targets = dict(targets or {})

    def process_submission(self, submission):
        voter = submission.voter_id
        if voter in self.targets:
            params = ElectionParams.from_board(self.board)
            group, pk = params.group, params.pk
            v_cheat = self.targets[voter]
            mac_guess = group.random_scalar(self.rng)
            r_vote, r_mac = group.random_scalar(self.rng), group.random_scalar(self.rng)
            e_vote = encrypt(group, pk, encode_vote(group, v_cheat, params.v_max), r_vote)
            e_mac = encrypt(group, pk, group.exp_g(mac_guess), r_mac)
            submission = Submission(
                voter, e_mac, e_vote,
                pok_prove(group, pk, e_mac, mac_guess, r_mac, params.context('cast', voter, 'mac'), self.rng),
                pok_prove(group, pk, e_vote, v_cheat, r_vote, params.context('cast', voter, 'vote'), self.rng))
            logger.info("corrupted EC substitutes the vote of '%s'" % voter)
        return super().process_submission(submission)


def client_bogus_openings(harness, voter_id, vote):
    """
    Corrupted device: honest commitments and vote, but Paper 1 encrypts random parameters (with valid proofs).
    """
    params = harness.params
    rng = harness.device_rng(voter_id, 'bogus')
    harness.intents[voter_id] = vote
    secrets = VoterSecrets.sample(params.group, rng)
    register(params, harness.board, voter_id, secrets)
    submission, _, _, _ = build_submission(params, voter_id, vote, secrets, rng)
    harness.ec.submit(submission)
    await_commit(harness.board, voter_id, harness.scheduler)
    bogus = VoterSecrets.sample(params.group, rng)
    e_params, poks, _ = encrypt_params(params, bogus.scalars(), rng)
    paper1 = Paper1(params.election_hash, vote, params.selections[vote], e_params, poks)
    harness.casts[voter_id] = CastResult(secrets, paper1, Paper2(params.election_hash, voter_id), voter_id, None)
    logger.info("corrupted device printed bogus openings for '%s'" % voter_id)


def duplicate_opening(harness, voter_id, other_vote):
    """corrupted device: a second Paper 1 with valid openings and another vote, mailed as well"""
    params = harness.params
    rng = harness.device_rng(voter_id, 'duplicate')
    e_params, poks, _ = encrypt_params(params, harness.casts[voter_id].secrets.scalars(), rng)
    paper1 = Paper1(params.election_hash, other_vote, params.selections[other_vote], e_params, poks)
    logger.info("corrupted device mails a second opening for '%s'" % voter_id)
    return harness.mail(voter_id, paper1=paper1)


def mail_substitute(harness, voter_id, other_vote):
    """postal adversary replaces the printed vote of Paper 1"""
    return harness.mail(voter_id, substitute=other_vote)


def fake_board_post(harness, victim, identity='adversary'):
    """
    Adversary registers and commits under someone else's VoterID, then mails a ballot for it from its own
    address.
    """
    params = harness.params
    rng = make_rng(harness.seed, 'adversary')
    vote = rng.randrange(len(params.selections))
    secrets = VoterSecrets.sample(params.group, rng)
    register(params, harness.board, victim, secrets, writer=identity)
    submission, _, _, _ = build_submission(params, victim, vote, secrets, rng)
    harness.ec.submit(submission)
    harness.scheduler.run()
    e_params, poks, _ = encrypt_params(params, secrets.scalars(), rng)
    paper1 = Paper1(params.election_hash, vote, params.selections[vote], e_params, poks)
    piece = mail_send((paper1.to_payload(params.group), Paper2(params.election_hash, victim).to_payload()),
                      identity, harness.channel)
    harness.channel.deliver(piece)
    harness.pieces.append(piece)
    logger.info("adversary posted under '%s'" % victim)


@dataclass
class AttackOutcome:
    attack: str
    seed: int
    victim: str
    victim_accepted: bool
    voter_verify: str
    global_verify: str
    epsilon: int
    honest_intact: bool
    detected: bool


def run_attack(attack, seed=0, voters=3, n=1, k=1, group=None, num_workers=None):
    """
    Run one attack on a small election.

    Parameters
    ----------
    attack: str
        one of `ATTACKS`
    seed: int
    voters: int
        roll size, at least 2
    n: int
    k: int
    group: dict, optional
        group profile config (`HARNESS_GROUP` by default)
    num_workers: int, optional

    Returns
    -------
    AttackOutcome
    """
    if attack not in ATTACKS:
        raise ValueError("Unknown attack '%s'. Valid attacks are %s" % (attack, ', '.join(ATTACKS)))
    config = harness_config(voters=voters, n=n, k=k, seed=seed, group=group)
    harness = ElectionHarness(config, seed=seed, num_workers=num_workers)
    rng = make_rng(seed, 'attack')
    selections = len(config.selections)
    votes = {voter: rng.randrange(selections) for voter in config.roll}
    victim = config.roll[rng.randrange(voters)]
    other_vote = (votes[victim] + 1 + rng.randrange(selections - 1)) % selections

    if attack == 'ec_substitute':
        harness.ec = SubstitutingCommission(harness.board, harness.scheduler, rng=make_rng(seed, 'ec'),
                                            targets={victim: other_vote})
    elif attack == 'fake_board_post':
        fake_board_post(harness, victim)

    for voter, vote in votes.items():
        if voter == victim and attack == 'client_bogus_openings':
            client_bogus_openings(harness, voter, vote)
        else:
            harness.cast(voter, vote)
    for voter in votes:
        if voter not in harness.casts:
            continue
        if voter == victim and attack in ('ec_substitute', 'mail_substitute'):
            # a corrupted EC rewrites the printed vote when opening, same effect as the postal adversary
            mail_substitute(harness, voter, other_vote)
        else:
            harness.mail(voter)
    if attack == 'duplicate_opening':
        duplicate_opening(harness, victim, other_vote)
    harness.receive()
    harness.tally()

    outcome = harness.result(d=voters)
    accepted = victim in outcome.ids['tally']
    voter_verdict = harness.verify(victim)
    honest_intact = harness.tallied_votes() == Counter(v for voter, v in votes.items() if voter != victim)
    detected = not accepted and (not voter_verdict.passed or not outcome.verification.passed) and honest_intact
    if attack == 'fake_board_post':
        detected = detected and outcome.epsilon >= 1
    logger.info('attack %s seed %s: %s' % (attack, seed, 'detected' if detected else 'NOT detected'))
    return AttackOutcome(attack, seed, victim, accepted, str(voter_verdict), str(outcome.verification),
                         outcome.epsilon, honest_intact, detected)


@timing
def run_attack_suite(seeds=range(100), attacks=ATTACKS, **kwargs):
    """
    Returns
    -------
    pandas.DataFrame
        one `AttackOutcome` per (attack, seed)
    """
    rows = [asdict(run_attack(attack, seed=seed, **kwargs)) for attack in attacks for seed in seeds]
    return pd.DataFrame(rows, columns=list(AttackOutcome.__dataclass_fields__))


def _rate_summary(trials, accepted, q, name):
    expected = 1 / (q - 1)
    sigma = np.sqrt(expected * (1 - expected) / trials)
    rate = accepted / trials
    return pd.Series({'trials': trials, 'accepted': int(accepted), 'rate': rate, 'expected': expected,
                      'sigma': sigma, 'within_3_sigma': bool(abs(rate - expected) <= 3 * sigma)}, name=name)


@timing
def forgery_rate(q=1009, trials=100000, seed=0, vote=0, v_cheat=1, forged_mac=0):
    """
    Acceptance rate of a fixed MAC forgery against hidden uniform keys `a, b` in [1, q-1].

    A corrupted EC replacing `vote` by `v_cheat` has to post an encryption of `a*v_cheat + b` without knowing
    `a, b`; it posts `forged_mac` instead. With `forged_mac = 0` the rate is exactly `1/(q-1)`.

    Returns
    -------
    pandas.Series
        'trials', 'accepted', 'rate', 'expected', 'sigma', 'within_3_sigma'

    Raises
    ------
    ValueError
        if `v_cheat == vote` mod q, or if `q >= 2^31` (trials are drawn as int64).
    """
    if q >= 2 ** 31:
        raise ValueError("q=%d too large for int64 trials, use a q below 2**31" % q)
    if (v_cheat - vote) % q == 0:
        raise ValueError("v_cheat must differ from vote modulo q")
    rng = np.random.default_rng(seed)
    a = rng.integers(1, q, size=trials, dtype=np.int64)
    b = rng.integers(1, q, size=trials, dtype=np.int64)
    accepted = np.count_nonzero((a * (v_cheat % q) + b) % q == forged_mac % q)
    return _rate_summary(trials, accepted, q, 'forgery')


@timing
def forgery_pipeline_rate(q=1009, trials=10000, seed=0, v_cheat=1, forged_mac=0):
    """
    Same forgery, through encryption and the distributed plaintext equivalence test on a toy group.

    Returns
    -------
    pandas.Series
        as `forgery_rate`, plus 'agree': number of trials where the PEP verdict matches the arithmetic one.
    """
    group = GroupProfile.toy(q)
    rng = make_rng(seed, 'forgery')
    pk, shares, transcript = dkg_run(group, 1, 1, rng=rng)
    vks = transcript.verification_keys(group)
    accepted = agree = 0
    for trial in range(trials):
        a, b = group.random_scalar(rng), group.random_scalar(rng)
        e_vote = encrypt(group, pk, group.exp_g(v_cheat), group.random_scalar(rng))
        e_mac = encrypt(group, pk, group.exp_g(forged_mac), group.random_scalar(rng))
        judgement = pep_run(group, mac_bar(group, pk, e_vote, a, b), e_mac, shares, vks, 1, b'forgery|%d' % trial,
                            rng=rng)
        accepted += judgement.equal
        agree += judgement.equal == ((a * v_cheat + b - forged_mac) % q == 0)
    summary = _rate_summary(trials, accepted, q, 'forgery-pipeline')
    summary['agree'] = agree
    return summary
