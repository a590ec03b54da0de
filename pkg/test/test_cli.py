import logging
import pytest
import yaml
from mailballot.cli import main, EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INTEGRITY

logging.basicConfig()
logging.getLogger('mailballot').setLevel(logging.DEBUG)
logging.captureWarnings(True)

CONFIG = {
    'name': 'cli election',
    'candidates': ['Alice', 'Bob'],
    'roll': ['ann', 'ben', 'cat'],
    'trustees': {'n': 2, 'k': 2},
    'd': 2,
    'seed': 42,
    'group': {'seed': 'mailballot-test', 'p_bits': 512, 'q_bits': 160},
}


@pytest.fixture
def rundir(tmp_path):
    config = tmp_path / 'election.yml'
    config.write_text(yaml.dump(CONFIG))
    run = tmp_path / 'run'
    assert main(['setup', str(config), str(run)]) == EXIT_OK
    return run


def test_full_run(rundir, capsys):
    run = str(rundir)
    assert main(['vote', run, '--voter', 'ann', '--selection', '1:Alice,2:Bob', '--seed', '1']) == EXIT_OK
    assert main(['vote', run, '--voter', 'ben', '--selection', '1', '--seed', '2']) == EXIT_OK
    assert main(['vote', run, '--voter', 'cat', '--selection', '0', '--seed', '3']) == EXIT_OK
    assert (rundir / 'papers' / 'ann' / 'paper1.txt').exists()
    assert main(['mail', run, '--voter', 'ann']) == EXIT_OK
    assert main(['mail', run, '--voter', 'ben']) == EXIT_OK
    assert main(['mail', run, '--voter', 'cat', '--lose']) == EXIT_OK
    assert main(['mail', run, '--voter', 'ann']) == EXIT_USAGE
    capsys.readouterr()
    assert main(['receive', run, '--seed', '4']) == EXIT_OK
    assert '2 ballots received, 0 rejected, 1 never arrived' in capsys.readouterr().out
    assert not list((rundir / 'mailbox').glob('*.mail.yml'))
    assert main(['verify', run, '--voter', 'ann']) == EXIT_VERIFY
    assert main(['tally', run, '--seed', '5']) == EXIT_OK
    assert main(['tally', run]) == EXIT_USAGE
    assert main(['verify', run, '--voter', 'ann']) == EXIT_OK
    assert main(['verify', run, '--voter', 'cat']) == EXIT_VERIFY
    capsys.readouterr()
    assert main(['audit', run]) == EXIT_OK
    assert capsys.readouterr().out.strip() == 'pass'
    assert main(['status', run]) == EXIT_OK
    # epsilon = 1 (cat's mail was lost)
    assert main(['result', run]) == EXIT_OK
    outcome = yaml.safe_load((rundir / 'outcome.yml').read_text())
    assert outcome['epsilon'] == 1
    assert outcome['accepted']
    assert outcome['tally'] == {'1:Alice,2:Bob': 1, '1:Bob,2:Alice': 1}
    assert main(['result', run, '--d', '1']) == EXIT_VERIFY

    paper_outcome = rundir.parent / 'paper.yml'
    paper_outcome.write_text(yaml.dump({'tally': {'1:Alice,2:Bob': 10, '1:Bob,2:Alice': 2}}))
    assert main(['result', run, '--paper-outcome', str(paper_outcome), '--d', '2']) == EXIT_OK
    assert yaml.safe_load((rundir / 'outcome.yml').read_text())['margin'] == 4


def test_usage_errors(rundir, tmp_path):
    run = str(rundir)
    config = tmp_path / 'election.yml'
    assert main(['setup', str(config), run]) == EXIT_USAGE
    assert main(['vote', run, '--voter', 'mallory', '--selection', '0']) == EXIT_USAGE
    assert main(['vote', run, '--voter', 'ann', '--selection', '1:Eve']) == EXIT_USAGE
    assert main(['mail', run, '--voter', 'ben']) == EXIT_USAGE
    assert main(['audit', str(tmp_path / 'nowhere')]) == EXIT_USAGE
    with pytest.raises(SystemExit) as excinfo:
        main(['vote', run])
    assert excinfo.value.code == EXIT_USAGE


def test_bad_config(tmp_path):
    config = tmp_path / 'bad.yml'
    config.write_text(yaml.dump(dict(CONFIG, roll=['ann', 'ann'])))
    assert main(['setup', str(config), str(tmp_path / 'run')]) == EXIT_USAGE


def test_duplicate_vote_aborts(rundir):
    run = str(rundir)
    assert main(['vote', run, '--voter', 'ann', '--selection', '0']) == EXIT_OK
    assert main(['vote', run, '--voter', 'ann', '--selection', '1']) == EXIT_VERIFY


def test_tampered_board(rundir):
    board_file = rundir / 'board.txt'
    lines = board_file.read_text().splitlines()
    list_id, key, payload, head = lines[0].split('|')
    lines[0] = '|'.join([list_id, key, payload[:-2] + ('00' if payload[-2:] != '00' else '01'), head])
    board_file.write_text('\n'.join(lines) + '\n')
    assert main(['audit', str(rundir)]) == EXIT_INTEGRITY
    assert main(['status', str(rundir)]) == EXIT_INTEGRITY


def test_bench(capsys):
    assert main(['bench', 'shuffle', '--rows', '0']) == EXIT_OK
    assert 'nothing to shuffle' in capsys.readouterr().out
    assert main(['bench', 'shuffle', '--profile', 'test', '--sizes', '2', '4', '--width', '2']) == EXIT_OK
    assert 'linear fit' in capsys.readouterr().out
    assert main(['bench', 'forgery', '--q', '23', '--trials', '1000', '--pipeline-trials', '50']) == EXIT_OK
