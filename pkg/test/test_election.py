import logging
import json
from collections import Counter
from dataclasses import replace
import pytest
import mailballot
from mailballot.board import Board, DuplicateKeyError
from mailballot.election import (ElectionConfig, ElectionParams, ElectionCommission, ReceivingOffice, Scheduler,
                                 VoterSecrets, CastAbortedError, VERIFY_STEPS, make_selections, setup, cast_device,
                                 cast_ec, build_submission, register, process_vote, tally, voter_verify,
                                 global_verify, result, margin, id_sets)
from mailballot.mixnet import MixStageError
from mailballot.papers import Paper2, mail_send
from mailballot.simulator import fake_view, check_view
from mailballot.attacks import harness_config, ElectionHarness
from mailballot.utils import make_rng, canonical_json

logging.basicConfig()
logging.getLogger('mailballot').setLevel(logging.DEBUG)
logging.captureWarnings(True)

logger = logging.getLogger('mailballot_test')
logger.setLevel(logging.DEBUG)


@pytest.fixture(scope='module')
def honest():
    """10 voters, 3 ranked candidates, 2-of-3 trustees"""
    config = harness_config(voters=10, n=3, k=2, d=1, seed=10)
    election = ElectionHarness(config, seed=10)
    rng = make_rng(10, 'votes')
    votes = {voter: rng.randrange(len(config.selections)) for voter in config.roll}
    election.run(votes)
    return election, votes


@pytest.fixture(scope='module')
def pilot():
    """7 votes cast, 2 lost in the mail"""
    config = harness_config(voters=7, n=3, k=2, d=3, seed=7)
    election = ElectionHarness(config, seed=7)
    votes = {voter: i % 3 for i, voter in enumerate(config.roll)}
    for voter, vote in votes.items():
        election.cast(voter, vote)
    for voter in votes:
        election.mail(voter, lose=voter in config.roll[-2:])
    election.receive()
    # not enough shares, then too late for voters to check
    with pytest.raises(ValueError):
        tally(election.board, election.shares[:1])
    assert voter_verify(config.roll[0], (election.casts[config.roll[0]].paper1, election.casts[config.roll[0]].paper2),
                        election.board).reason == 'not-finalized'
    election.tally()
    return election, votes


def _replay(board, edit):
    """copy of `board` with a re-computed hash chain; `edit(list_id, key, payload)` returns the records to write"""
    copy = Board(domain=board.domain)
    for list_id, key, payload, _ in board._records:
        for record in edit(list_id, key, payload):
            copy._append(*record, enforce=False)
    return copy


def test_selections():
    assert make_selections(['A', 'B', 'C']) == ['1:A,2:B,3:C', '1:A,2:C,3:B', '1:B,2:A,3:C', '1:B,2:C,3:A',
                                                '1:C,2:A,3:B', '1:C,2:B,3:A']
    assert make_selections(['A', 'B'], 'single') == ['1:A', '1:B']
    with pytest.raises(ValueError):
        make_selections(['A'], 'approval')


def test_config_validation():
    good = {'name': 'test', 'candidates': ['A', 'B'], 'roll': ['v1', 'v2'], 'trustees': {'n': 3, 'k': 2}, 'd': 1}
    config = ElectionConfig.from_dict(good)
    assert (config.n, config.k, config.d) == (3, 2, 1)
    assert config.selections == ['1:A,2:B', '1:B,2:A']
    assert ElectionConfig.from_dict(config.to_dict()).config_hash == config.config_hash
    for bad, key in (({'roll': ['v1', 'v1']}, 'roll'), ({'roll': []}, 'roll'), ({'trustees': {'n': 2, 'k': 3}}, 'trustees'),
                     ({'candidates': ['A', 'A']}, 'candidates'), ({'candidates': ['A|B']}, 'candidate'),
                     ({'d': -1}, 'd'), ({'roll': ['v,1']}, 'roll')):
        with pytest.raises(ValueError, match=key):
            ElectionConfig.from_dict(dict(good, **bad))
    with pytest.raises(ValueError, match='name'):
        ElectionConfig.from_dict({'candidates': ['A'], 'roll': ['v']})


def test_config_yaml(tmp_path):
    path = tmp_path / 'election.yml'
    path.write_text("name: yaml election\ncandidates: [A, B, C]\nselection_rule: single\nroll: [v1, v2]\n"
                    "trustees: {n: 2, k: 2}\nd: 0\nseed: 3\n")
    config = ElectionConfig.from_yaml(path)
    assert config.selections == ['1:A', '1:B', '1:C']
    assert (config.n, config.k, config.seed) == (2, 2, 3)


def test_setup_is_reproducible():
    config = harness_config(voters=3, seed=1)
    board1, shares1, envelopes1 = setup(config, rng=make_rng(1, 'setup'))
    board2, _, _ = setup(config, rng=make_rng(1, 'setup'))
    assert list(board1.lines()) == list(board2.lines())
    params = ElectionParams.from_board(board1)
    assert params.roll == tuple(config.roll)
    assert params.param_count == 4 * params.limbs == 40
    assert len(params.election_hash) == 64
    assert sorted(envelopes1) == sorted(config.roll)
    assert len(shares1) == 1


def test_setup_refuses_toy_group():
    config = harness_config(voters=2, group={'toy': 1009})
    config.allow_toy = False
    with pytest.raises(ValueError, match='toy'):
        setup(config)


def test_honest_election(honest):
    election, votes = honest
    board = election.board
    assert board.finalized
    verdict = election.audit()
    assert verdict.passed, str(verdict)
    assert election.tallied_votes() == Counter(votes.values())
    for voter in votes:
        assert election.verify(voter).passed
    outcome = election.result()
    assert outcome.accepted
    assert outcome.epsilon == 0
    assert outcome.outcome == outcome.paper_outcome
    assert outcome.ids['registered'] == outcome.ids['received'] == outcome.ids['tally'] == set(votes)


def test_honest_election_tables(honest):
    election, votes = honest
    info = mailballot.election_info(election.board)
    assert info['accepted'].all() and info['registered'].all() and info['commit'].all()
    assert info.attrs['received'] == len(votes)
    assert info.attrs['rejected'] == 0
    counts = mailballot.tally_vector(election.board)
    params = election.params
    assert list(counts.index) == list(params.selections)
    assert counts.sum() == len(votes)
    assert all(counts[params.selections[v]] == n for v, n in Counter(votes.values()).items())


def test_board_file_round_trip(honest, tmp_path):
    election, _ = honest
    path = tmp_path / 'board.txt'
    election.board.save(path)
    loaded = mailballot.open_board(tmp_path)
    assert loaded.head_hash == election.board.head_hash
    assert global_verify(loaded).passed


def test_voter_verify_checks_intent(honest):
    election, votes = honest
    voter = election.config.roll[0]
    cast = election.casts[voter]
    other = (votes[voter] + 1) % len(election.params.selections)
    assert voter_verify(voter, (cast.paper1, cast.paper2), election.board, intended=other).reason == 'paper-mismatch'
    assert voter_verify(election.config.roll[1], (cast.paper1, cast.paper2), election.board).reason == \
        'paper-mismatch'


@pytest.mark.parametrize('tamper, step', [
    ('drop-accepted', 'accepted-complete'),
    ('tally-vote', 'tally-decryption'),
    ('drop-final', 'final'),
    ('duplicate-registration', 'registered-unique'),
    ('received-vote', 'first-mix'),
    ('pep-verdict', 'pep'),
])
def test_global_verify_pinpoints_tampering(honest, tamper, step):
    election, _ = honest
    selections = len(election.params.selections)
    edited = []

    def edit(list_id, key, payload):
        record = json.loads(payload)
        first = not edited
        if tamper == 'drop-accepted' and list_id == 'accepted' and first:
            edited.append(record)
            return []
        if tamper == 'drop-final' and list_id == 'final':
            return []
        if tamper == 'duplicate-registration' and list_id == 'final':
            return [('registered', election.config.roll[0], canonical_json({'c_a': '00', 'c_b': '00'})),
                    (list_id, key, payload)]
        if tamper == 'tally-vote' and list_id == 'tally' and record.get('kind') == 'vote' and first:
            edited.append(record)
            record['vote'] = (record['vote'] + 1) % selections
        elif tamper == 'received-vote' and list_id == 'received' and first:
            edited.append(record)
            record['vote'] = (record['vote'] + 1) % selections
        elif tamper == 'pep-verdict' and list_id == 'pep' and first:
            edited.append(record)
            record['judgement']['equal'] = not record['judgement']['equal']
        return [(list_id, key, canonical_json(record))]

    verdict = global_verify(_replay(election.board, edit))
    assert not verdict.passed
    assert verdict.step == step, str(verdict)


def test_global_verify_chain_break(honest):
    election, _ = honest
    board = election.board.snapshot()
    list_id, key, payload, head = board._records[3]
    board._records[3] = (list_id, key, payload + b' ', head)
    verdict = global_verify(board)
    assert (verdict.passed, verdict.step) == (False, 'chain')
    assert VERIFY_STEPS[0] == 'chain'


def test_pilot(pilot):
    election, votes = pilot
    roll = election.config.roll
    assert len(election.board.read('received')) == 5
    assert len(election.board.read('accepted')) == 5
    assert election.tallied_votes() == Counter(votes[v] for v in roll[:5])
    assert all(election.verify(voter).passed for voter in roll[:5])
    assert [election.verify(voter).reason for voter in roll[5:]] == ['not-accepted', 'not-accepted']
    assert election.audit().passed


@pytest.mark.parametrize('d, accepted', [(3, True), (4, True), (2, False), (0, False)])
def test_pilot_result(pilot, d, accepted):
    election, _ = pilot
    outcome = election.result(d=d)
    assert outcome.epsilon == 2
    assert outcome.accepted == accepted
    assert (outcome.outcome is None) != accepted
    assert outcome.theta == len(election.config.roll) - (outcome.margin - d)


def test_result_with_paper_outcome(pilot, caplog):
    election, _ = pilot
    with caplog.at_level(logging.WARNING, logger='mailballot.election'):
        outcome = result(election.board, {'1:Alice,2:Bob,3:Eve': 4, '1:Alice,2:Eve,3:Bob': 1}, 1)
    assert outcome.margin == 1.5
    assert not outcome.accepted
    outcome = result(election.board, {'x': 9, 'y': 1}, 3)
    assert outcome.margin == 4
    assert outcome.accepted
    with caplog.at_level(logging.WARNING, logger='mailballot.election'):
        result(election.board, {'x': 2, 'y': 1}, 3)
    assert 'is not below the margin' in caplog.text
    assert margin({'x': 5}) == 2.5


def test_tally_refuses_second_run(pilot):
    election, _ = pilot
    with pytest.raises(ValueError):
        election.tally()


def test_cast_ec():
    config = harness_config(voters=2, seed=20)
    board, _, _ = setup(config, rng=make_rng(20, 'setup'))
    params = ElectionParams.from_board(board)
    rng = make_rng(20, 'device')
    secrets = VoterSecrets.sample(params.group, rng)
    register(params, board, 'voter-00', secrets)
    with pytest.raises(CastAbortedError, match='duplicate registration'):
        register(params, board, 'voter-00', secrets)
    submission, _, _, _ = build_submission(params, 'voter-00', 1, secrets, rng)
    assert cast_ec(replace(submission, pok_vote=submission.pok_mac), board, rng) is None
    assert cast_ec(replace(submission, voter_id='mallory'), board, rng) is None
    assert cast_ec(submission, board, rng) == 0
    entry = board.read_records('commit', 'voter-00')[0]
    # the posted ciphertexts are re-randomized
    assert entry['e_vote'] != params.group.ciphertext_hex(submission.e_vote)
    with pytest.raises(DuplicateKeyError):
        cast_ec(submission, board, rng)
    ec = ElectionCommission(board, Scheduler(rng), rng)
    ec.submit(submission)
    assert ec.scheduler.run() == 1
    assert len(board.read('commit')) == 1


def test_cast_aborts_without_commit():
    class SilentCommission(ElectionCommission):
        def submit(self, submission):
            pass

    config = harness_config(voters=2, seed=21)
    board, _, _ = setup(config, rng=make_rng(21, 'setup'))
    scheduler = Scheduler(make_rng(21, 'scheduler'))
    with pytest.raises(CastAbortedError, match='commit entry not posted'):
        cast_device('voter-00', 0, board, SilentCommission(board, scheduler), rng=make_rng(21), timeout_steps=3)
    assert scheduler.steps == 4
    assert board.read('registered', 'voter-00')
    with pytest.raises(ValueError):
        cast_device('mallory', 0, board, SilentCommission(board, scheduler))
    with pytest.raises(ValueError):
        cast_device('voter-01', 6, board, SilentCommission(board, scheduler))


def test_receiving_office(caplog):
    config = harness_config(voters=3, seed=22)
    election = ElectionHarness(config, seed=22)
    for voter in config.roll:
        election.cast(voter, 0)
    params = election.params
    channel = election.channel
    good = election.mail('voter-00')
    wrong_identity = election.mail('voter-01', identity='voter-02')
    unknown = channel.deliver(mail_send((b'POSTMARK1|junk', Paper2(params.election_hash, 'mallory').to_payload()),
                                        'mallory', channel))
    unreadable = channel.deliver(mail_send((b'POSTMARK1|junk', Paper2(params.election_hash, 'voter-02').to_payload()),
                                           'voter-02', channel))
    office = ReceivingOffice(election.board, election.envelopes, rng=make_rng(22, 'receive'))
    with caplog.at_level(logging.INFO, logger='mailballot.election'):
        assert [office.receive(piece) for piece in (good, wrong_identity, unknown, unreadable)] == \
            [True, False, False, True]
    assert 'paper 2 destroyed' in caplog.text
    assert good.paper2 is None and unreadable.paper2 is None and wrong_identity.paper2 is not None
    state = json.dumps(office.state())
    assert all(voter not in state for voter in config.roll)
    assert office.close_batch() == (1, 1)
    rejected = election.board.read_records('rejected')
    assert {'voter': 'voter-01'} in rejected and {'voter': 'mallory'} in rejected
    assert sum('e_voter' in rec for rec in rejected) == 1
    assert election.verify('voter-00').reason == 'not-finalized'

    election.tally()
    assert election.audit().passed
    ids = id_sets(election.board)
    # the unreadable ballot is traced back to its voter through the rejected mix
    assert ids['rejected'] == {'voter-01', 'voter-02'}
    assert ids['tally'] == {'voter-00'}
    assert election.result(d=3).epsilon == 2


def test_corrupted_mix_aborts_tally():
    config = harness_config(voters=2, seed=23)
    election = ElectionHarness(config, seed=23)
    for voter in config.roll:
        election.cast(voter, 1)
        election.mail(voter)
    election.receive()

    def corrupt(batch, stage, rows_out, proof):
        if batch == 'received':
            rows_out = list(reversed(rows_out))
        return rows_out, proof

    with pytest.raises(MixStageError):
        election.tally(mix_hook=corrupt)
    assert not election.board.finalized


def test_receipt_freeness(honest):
    election, votes = honest
    params = election.params
    group = params.group
    rng = make_rng(0, 'coercion')
    for _ in range(100):
        voter = rng.choice(election.config.roll)
        coerced = rng.randrange(len(params.selections))
        view = election.casts[voter].view
        assert check_view(view, election.board) == []
        fake = fake_view(view, coerced, params, rng)
        assert check_view(fake, election.board) == []
        true_fields, fake_fields = view.to_dict(group), fake.to_dict(group)
        assert true_fields.keys() == fake_fields.keys()
        for key in true_fields:
            assert len(str(true_fields[key])) == len(str(fake_fields[key])) or key == 'paper1'
        differing = {k for k in true_fields if true_fields[k] != fake_fields[k]}
        assert differing <= {'vote', 'mac', 'e_vote', 'r_vote', 'e_mac', 'r_mac', 'paper1'}
    view = election.casts[election.config.roll[0]].view
    assert 'mac-relation' in check_view(replace(view, mac=(view.mac + 1) % group.q), election.board)
    assert 'commitment-openings' in check_view(replace(view, voter_id=election.config.roll[4]), election.board)
    with pytest.raises(ValueError):
        fake_view(view, len(params.selections), params)


def test_notebook_repr(pilot):
    election, _ = pilot
    bundle = election.board._repr_mimebundle_()
    html = bundle[0]['text/html'] if isinstance(bundle, tuple) else bundle['text/html']
    assert 'accepted' in html
    outcome = election.result()
    assert 'epsilon' in str(outcome)
    assert outcome.to_dict()['epsilon'] == 2


def test_process_single_vote():
    config = harness_config(voters=2, seed=24)
    election = ElectionHarness(config, seed=24)
    election.cast('voter-01', 2)
    process_vote(election.mail('voter-01'), election.envelopes, election.board, rng=make_rng(24, 'receive'))
    received = election.board.read_records('received')
    assert [rec['vote'] for rec in received] == [2]
    assert len(received[0]['e_params']) == election.params.param_count
