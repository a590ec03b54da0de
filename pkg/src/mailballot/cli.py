"""
Command line surface: one `mailballot` command with a subcommand per role, working on a run directory::

    rundir/
        board.txt                       bulletin board file (hash chained)
        config.yml                      election config, as validated
        trustees/trustee-<i>.yml        trustee key shares
        ec/envelopes.yml                double envelopes (EC custody)
        mailbox/<voter>.mail.yml        mail in the postal channel or delivered
        mailbox/opened/                 mail the EC already processed
        papers/<voter>/paper1.txt       printed papers, as the voter keeps them
        papers/<voter>/paper2.txt
        outcome.yml                     result report

`audit` reads only `board.txt`; `verify` reads `board.txt` and the voter's own papers.
"""
import argparse
import fcntl
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path
import numpy as np
import pandas as pd
import yaml
from .board import ChainBreakError, BoardFinalizedError
from .election import (ElectionConfig, ElectionParams, ElectionCommission, Scheduler, CastAbortedError,
                       DoubleEnvelope, setup, cast_device, process_batch, tally, voter_verify, global_verify,
                       result)
from .group import GroupProfile, encrypt
from .mixnet import shuffle, mix_verify
from .papers import (PAPER1_TAG, PAPER2_TAG, Paper1, Paper2, MailChannel, MailPiece, mail_send, render_paper1,
                     render_paper2, read_payload)
from .threshold import TrusteeShare
from .utils import make_rng

logger = logging.getLogger('mailballot.cli')
logger.addHandler(logging.NullHandler())

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_USAGE = 3
EXIT_INTEGRITY = 4


class UsageError(Exception):
    """bad arguments or run directory state"""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, '%s: error: %s\n' % (self.prog, message))


class RunDirectory:
    """
    Files of an election run.

    Parameters
    ----------
    path: str or pathlib.Path
    """

    def __init__(self, path):
        self.path = Path(path).expanduser()

    @property
    def board_file(self):
        return self.path / 'board.txt'

    @property
    def config_file(self):
        return self.path / 'config.yml'

    @property
    def trustees_dir(self):
        return self.path / 'trustees'

    @property
    def envelopes_file(self):
        return self.path / 'ec' / 'envelopes.yml'

    @property
    def mailbox(self):
        return self.path / 'mailbox'

    @property
    def opened(self):
        return self.mailbox / 'opened'

    @property
    def outcome_file(self):
        return self.path / 'outcome.yml'

    def papers_dir(self, voter_id):
        return self.path / 'papers' / voter_id

    def mail_file(self, voter_id):
        return self.mailbox / ('%s.mail.yml' % voter_id)

    def check(self):
        if not self.board_file.exists():
            raise UsageError("%s is not a run directory (no board.txt)" % self.path)

    @contextmanager
    def lock(self):
        """advisory lock serializing invocations on the same run directory"""
        self.path.mkdir(parents=True, exist_ok=True)
        with open(self.path / '.lock', 'a') as f:
            fcntl.flock(f, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(f, fcntl.LOCK_UN)

    def load_board(self):
        from .mailballot import open_board
        self.check()
        return open_board(self.board_file)

    def save_board(self, board):
        board.save(self.board_file)

    def load_shares(self, group):
        shares = []
        for path in sorted(self.trustees_dir.glob('trustee-*.yml')):
            with open(path) as f:
                shares.append(TrusteeShare.from_dict(group, yaml.load(f, Loader=yaml.FullLoader)))
        return shares

    def load_envelopes(self, group):
        with open(self.envelopes_file) as f:
            entries = yaml.load(f, Loader=yaml.FullLoader) or []
        return {d['voter']: DoubleEnvelope.from_dict(group, d) for d in entries}

    def load_papers(self, group, params, voter_id):
        folder = self.papers_dir(voter_id)
        if not folder.exists():
            raise UsageError("No papers printed for '%s'" % voter_id)
        paper1 = Paper1.from_payload(group, read_payload((folder / 'paper1.txt').read_text(), PAPER1_TAG),
                                     params.param_count)
        paper2 = Paper2.from_payload(read_payload((folder / 'paper2.txt').read_text(), PAPER2_TAG))
        return paper1, paper2


def _write_yaml(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'w') as f:
        yaml.dump(obj, f, default_flow_style=False, sort_keys=False)
    os.replace(tmp, path)


def _read_yaml(path):
    with open(path) as f:
        return yaml.load(f, Loader=yaml.FullLoader)


def _seeded(seed, label):
    return make_rng(seed, label) if seed is not None else None


def _selection_index(params, selection):
    if selection in params.selections:
        return params.selections.index(selection)
    if selection.isdigit() and int(selection) < len(params.selections):
        return int(selection)
    raise UsageError("Unknown selection '%s'. Valid selections are %s" % (selection, ', '.join(params.selections)))


def cmd_setup(args):
    rundir = RunDirectory(args.rundir)
    if rundir.path.exists() and any(p.name != '.lock' for p in rundir.path.iterdir()):
        raise UsageError("%s is not empty: refusing to set up over it" % rundir.path)
    try:
        config = ElectionConfig.from_yaml(args.config)
    except (OSError, ValueError, TypeError) as e:
        raise UsageError(str(e)) from None
    with rundir.lock():
        board, shares, envelopes = setup(config)
        params = ElectionParams.from_board(board)
        group = params.group
        for share in shares:
            _write_yaml(rundir.trustees_dir / ('trustee-%d.yml' % share.trustee_index), share.to_dict(group))
        _write_yaml(rundir.envelopes_file, [envelopes[voter].to_dict(group) for voter in params.roll])
        _write_yaml(rundir.config_file, config.to_dict())
        rundir.opened.mkdir(parents=True, exist_ok=True)
        (rundir.path / 'papers').mkdir(exist_ok=True)
        rundir.save_board(board)
    print("election '%s': %d voters, election hash %s" % (params.name, len(params.roll), params.election_hash))
    return EXIT_OK


def cmd_vote(args):
    rundir = RunDirectory(args.rundir)
    with rundir.lock():
        board = rundir.load_board()
        params = ElectionParams.from_board(board)
        if args.voter not in params.roll:
            raise UsageError("Unknown voter '%s'" % args.voter)
        vote = _selection_index(params, args.selection)
        ec = ElectionCommission(board, Scheduler(_seeded(args.seed, 'scheduler|%s' % args.voter)),
                                rng=_seeded(args.seed, 'ec|%s' % args.voter))
        try:
            cast = cast_device(args.voter, vote, board, ec, rng=_seeded(args.seed, 'device|%s' % args.voter))
        finally:
            # registrations stay posted even if the cast aborts
            rundir.save_board(board)
        folder = rundir.papers_dir(args.voter)
        folder.mkdir(parents=True, exist_ok=True)
        (folder / 'paper1.txt').write_text(render_paper1(params.group, cast.paper1))
        (folder / 'paper2.txt').write_text(render_paper2(cast.paper2))
    print("'%s' voted %s, papers in %s" % (args.voter, params.selections[vote], folder))
    return EXIT_OK


def cmd_mail(args):
    rundir = RunDirectory(args.rundir)
    with rundir.lock():
        board = rundir.load_board()
        params = ElectionParams.from_board(board)
        if rundir.mail_file(args.voter).exists() or (rundir.opened / rundir.mail_file(args.voter).name).exists():
            raise UsageError("Mail already sent for '%s'" % args.voter)
        folder = rundir.papers_dir(args.voter)
        if not folder.exists():
            raise UsageError("No papers printed for '%s'" % args.voter)
        papers = (read_payload((folder / 'paper1.txt').read_text(), PAPER1_TAG),
                  read_payload((folder / 'paper2.txt').read_text(), PAPER2_TAG))
        channel = MailChannel()
        piece = mail_send(papers, args.voter, channel)
        if args.lose:
            channel.lose(piece)
        elif args.substitute is not None:
            vote = _selection_index(params, args.substitute)
            channel.substitute_paper1(piece, vote, params.selections[vote])
        else:
            channel.deliver(piece)
        _write_yaml(rundir.mail_file(args.voter), piece.to_dict())
    print("mail for '%s': %s" % (args.voter, piece.state))
    return EXIT_OK


def cmd_receive(args):
    rundir = RunDirectory(args.rundir)
    with rundir.lock():
        board = rundir.load_board()
        params = ElectionParams.from_board(board)
        files = sorted(rundir.mailbox.glob('*.mail.yml'))
        pieces = [MailPiece.from_dict(_read_yaml(path)) for path in files]
        channel = MailChannel(_seeded(args.seed, 'mail'))
        arrived = channel.arrivals(pieces)
        received, rejected = process_batch(arrived, rundir.load_envelopes(params.group), board,
                                           rng=_seeded(args.seed, 'receive'))
        rundir.save_board(board)
        rundir.opened.mkdir(parents=True, exist_ok=True)
        for path, piece in zip(files, pieces):
            _write_yaml(rundir.opened / path.name, piece.to_dict())
            path.unlink()
    print("%d ballots received, %d rejected, %d never arrived" % (received, rejected, len(pieces) - len(arrived)))
    return EXIT_OK


def cmd_tally(args):
    rundir = RunDirectory(args.rundir)
    with rundir.lock():
        board = rundir.load_board()
        params = ElectionParams.from_board(board)
        if board.finalized:
            raise UsageError("Board already finalized")
        tally(board, rundir.load_shares(params.group), rng=_seeded(args.seed, 'tally'), num_workers=args.workers)
        rundir.save_board(board)
    from .mailballot import tally_vector
    print(tally_vector(board).to_string())
    return EXIT_OK


def cmd_verify(args):
    rundir = RunDirectory(args.rundir)
    board = rundir.load_board()
    params = ElectionParams.from_board(board)
    try:
        papers = rundir.load_papers(params.group, params, args.voter)
    except ValueError as e:
        print("fail at papers: %s" % str(e))
        return EXIT_VERIFY
    verdict = voter_verify(args.voter, papers, board)
    print(verdict)
    return EXIT_OK if verdict.passed else EXIT_VERIFY


def cmd_audit(args):
    board = RunDirectory(args.rundir).load_board()
    verdict = global_verify(board, num_workers=args.workers)
    print(verdict)
    return EXIT_OK if verdict.passed else EXIT_VERIFY


def cmd_result(args):
    rundir = RunDirectory(args.rundir)
    board = rundir.load_board()
    paper_outcome = None
    if args.paper_outcome is not None:
        doc = _read_yaml(args.paper_outcome)
        if not isinstance(doc, dict) or not isinstance(doc.get('tally'), dict):
            raise UsageError("%s: expected a 'tally' mapping selection -> count" % args.paper_outcome)
        paper_outcome = {str(k): int(v) for k, v in doc['tally'].items()}
    d = args.d if args.d is not None else _read_yaml(rundir.config_file).get('d', 0)
    outcome = result(board, paper_outcome, d, num_workers=args.workers)
    with rundir.lock():
        _write_yaml(rundir.outcome_file, outcome.to_dict())
    print(outcome)
    return EXIT_OK if outcome.accepted else EXIT_VERIFY


def cmd_status(args):
    from .mailballot import election_info
    df = election_info(RunDirectory(args.rundir).load_board())
    print(df.to_string())
    print('received: %d, rejected: %d' % (df.attrs['received'], df.attrs['rejected']))
    return EXIT_OK


def _bench_group(profile):
    if profile == 'test':
        return GroupProfile.generate('mailballot-test', p_bits=512, q_bits=160)
    return GroupProfile.default()


def bench_shuffle(group, sizes, width, repeat=1, num_workers=None, seed=0):
    """
    Time shuffle proof and verification.

    Returns
    -------
    pandas.DataFrame
        one line per run, columns 'rows', 'width', 'prove', 'verify' (seconds).
        `DataFrame.attrs['slope']` holds the prove+verify seconds per row of a linear fit, if more than one size.
    """
    rng = make_rng(seed, 'bench')
    pk = group.exp_g(group.random_scalar(rng))
    runs = []
    for size in sizes:
        rows = [tuple(encrypt(group, pk, group.exp_g(group.random_scalar(rng)), group.random_scalar(rng))
                      for _ in range(width)) for _ in range(size)]
        for _ in range(repeat):
            start = time.time()
            rows_out, proof = shuffle(group, pk, rows, b'bench', rng=rng, num_workers=num_workers)
            proved = time.time()
            ok = mix_verify(group, pk, rows, rows_out, proof, b'bench', num_workers=num_workers)
            verified = time.time()
            if not ok:
                raise RuntimeError("shuffle proof of %d rows doesn't verify" % size)
            runs.append({'rows': size, 'width': width, 'prove': proved - start, 'verify': verified - proved})
            logger.info('shuffle %d x %d: prove %.2fs verify %.2fs' % (size, width, runs[-1]['prove'],
                                                                       runs[-1]['verify']))
    df = pd.DataFrame(runs, columns=['rows', 'width', 'prove', 'verify'])
    if df['rows'].nunique() > 1:
        df.attrs['slope'] = float(np.polyfit(df['rows'], df['prove'] + df['verify'], 1)[0])
    return df


def cmd_bench_shuffle(args):
    sizes = args.sizes or [args.rows]
    sizes = [s for s in sizes if s > 0]
    if not sizes:
        print('nothing to shuffle')
        return EXIT_OK
    df = bench_shuffle(_bench_group(args.profile), sizes, args.width, repeat=args.repeat, num_workers=args.threads)
    print(df.to_string(index=False))
    if 'slope' in df.attrs:
        print('linear fit: %.3gs per row' % df.attrs['slope'])
    return EXIT_OK


def cmd_bench_forgery(args):
    from .attacks import forgery_rate, forgery_pipeline_rate
    summary = pd.concat([forgery_rate(q=args.q, trials=args.trials, seed=args.seed),
                         forgery_pipeline_rate(q=args.q, trials=args.pipeline_trials, seed=args.seed)], axis=1)
    print(summary.to_string())
    return EXIT_OK


def cmd_bench_attacks(args):
    from .attacks import ATTACKS, run_attack_suite
    df = run_attack_suite(seeds=range(args.seeds), attacks=args.attack or ATTACKS, voters=args.voters)
    print(df.groupby('attack')['detected'].agg(['sum', 'count']).to_string())
    return EXIT_OK if df['detected'].all() else EXIT_VERIFY


def build_parser():
    parser = _ArgumentParser(prog='mailballot', description='verifiable remote voting with paper assurance')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True, parser_class=_ArgumentParser)

    p = sub.add_parser('setup', help='set up an election from a yaml config')
    p.add_argument('config')
    p.add_argument('rundir')
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser('vote', help='cast a vote with the voting device, and print the papers')
    p.add_argument('rundir')
    p.add_argument('--voter', required=True)
    p.add_argument('--selection', required=True, help='selection string or VoteIndex')
    p.add_argument('--seed', type=int, default=None)
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser('mail', help='send the papers through the postal channel')
    p.add_argument('rundir')
    p.add_argument('--voter', required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument('--lose', action='store_true', help='the mail never arrives')
    mode.add_argument('--substitute', default=None, help='replace the printed vote of Paper 1')
    p.set_defaults(func=cmd_mail)

    for name, func, help_msg in (('receive', cmd_receive, 'open the delivered mail'),
                                 ('tally', cmd_tally, 'mix, match and tally')):
        p = sub.add_parser(name, help=help_msg)
        p.add_argument('rundir')
        p.add_argument('--seed', type=int, default=None)
        if name == 'tally':
            p.add_argument('--workers', type=int, default=None)
        p.set_defaults(func=func)

    p = sub.add_parser('verify', help='voter check')
    p.add_argument('rundir')
    p.add_argument('--voter', required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser('audit', help='global verification of the board file')
    p.add_argument('rundir')
    p.add_argument('--workers', type=int, default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser('result', help='result function')
    p.add_argument('rundir')
    p.add_argument('--paper-outcome', default=None, help="yaml file with a 'tally' mapping selection -> count")
    p.add_argument('--d', type=int, default=None, help='error policy (config value by default)')
    p.add_argument('--workers', type=int, default=None)
    p.set_defaults(func=cmd_result)

    p = sub.add_parser('status', help='status of every roll entry')
    p.add_argument('rundir')
    p.set_defaults(func=cmd_status)

    bench = sub.add_parser('bench', help='benchmarks and statistical experiments')
    bench_sub = bench.add_subparsers(dest='bench', required=True, parser_class=_ArgumentParser)
    p = bench_sub.add_parser('shuffle')
    p.add_argument('--rows', type=int, default=1000)
    p.add_argument('--width', type=int, default=6)
    p.add_argument('--sizes', type=int, nargs='*', default=None, help='several row counts, for the linear fit')
    p.add_argument('--repeat', type=int, default=1)
    p.add_argument('--threads', type=int, default=None)
    p.add_argument('--profile', choices=['default', 'test'], default='default')
    p.set_defaults(func=cmd_bench_shuffle)
    p = bench_sub.add_parser('forgery')
    p.add_argument('--q', type=int, default=1009)
    p.add_argument('--trials', type=int, default=100000)
    p.add_argument('--pipeline-trials', type=int, default=10000)
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(func=cmd_bench_forgery)
    p = bench_sub.add_parser('attacks')
    p.add_argument('--seeds', type=int, default=100)
    p.add_argument('--voters', type=int, default=3)
    p.add_argument('--attack', action='append', default=None)
    p.set_defaults(func=cmd_bench_attacks)
    return parser


def main(argv=None):
    """
    Returns
    -------
    int
        exit code: 0 success, 2 verification failure or aborted protocol step, 3 usage, 4 board integrity
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig()
    if args.verbose:
        logging.getLogger('mailballot').setLevel(logging.DEBUG)
    try:
        return args.func(args)
    except UsageError as e:
        print('error: %s' % str(e), file=sys.stderr)
        return EXIT_USAGE
    except ChainBreakError as e:
        print('board integrity failure: %s' % str(e), file=sys.stderr)
        return EXIT_INTEGRITY
    except (CastAbortedError, BoardFinalizedError) as e:
        print('aborted: %s' % str(e), file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, FileNotFoundError) as e:
        print('error: %s' % str(e), file=sys.stderr)
        return EXIT_USAGE
