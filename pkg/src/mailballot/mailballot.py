"""
mailballot: verifiable remote voting with paper assurance.

Voters register commitments and an encrypted vote/MAC pair on a public bulletin board, then mail a
paper ballot carrying the plaintext vote and encrypted commitment openings. Trustees mix, match and
tally; anybody can re-verify the whole transcript from the board file alone.
"""
from importlib.metadata import version

__version__ = version('mailballot')

import logging
from .utils import timing
import yaml
from importlib_resources import files
from pathlib import Path
import pandas as pd


def _load_config():
    """
    load config from default mailballot/config.yml file or user ~/.mailballot/config.yml
    Returns
    -------
    dict
    """
    user_config_file = Path('~/.mailballot/config.yml').expanduser()
    default_config_file = files('mailballot').joinpath('config.yml')

    if user_config_file.exists():
        config_file = user_config_file
    else:
        config_file = default_config_file

    config = yaml.load(
        config_file.open(),
        Loader=yaml.FullLoader)
    return config


config = _load_config()

from .group import GroupProfile
from .board import Board
from .election import (ElectionConfig, ElectionParams, setup, cast_device, cast_ec, process_vote, tally,
                       voter_verify, global_verify, result)

logger = logging.getLogger('mailballot')
logger.addHandler(logging.NullHandler())


@timing
def open_board(path):
    """
    Parameters
    ----------
    path: str or pathlib.Path
        board file, or a run directory holding `board.txt`.

    Returns
    -------
    mailballot.Board
        loaded board, with its hash chain checked.

    See Also
    --------
    mailballot.Board.load
    """
    path = Path(path)
    if path.is_dir():
        path = path / 'board.txt'
    return Board.load(path)


def election_info(board):
    """
    Status of every roll entry, as seen on the board.

    Parameters
    ----------
    board: mailballot.Board

    Returns
    -------
    pandas.DataFrame
        One voter per line, with columns 'registered', 'commit' and 'accepted' (bool).
        Received ballots are anonymous, so they are only counted in `DataFrame.attrs['received']`.
    """
    params = ElectionParams.from_board(board)
    accepted = {entry['voter'] for entry in board.read_records('accepted')}
    df = pd.DataFrame({
        'voter': params.roll,
        'registered': [bool(board.read('registered', voter)) for voter in params.roll],
        'commit': [bool(board.read('commit', voter)) for voter in params.roll],
        'accepted': [voter in accepted for voter in params.roll],
    }).set_index('voter')
    df.attrs['received'] = len(board.read('received'))
    df.attrs['rejected'] = len(board.read('rejected'))
    return df


def tally_vector(board):
    """
    Per-selection counts of the decrypted tally.

    Parameters
    ----------
    board: mailballot.Board

    Returns
    -------
    pandas.Series
        indexed by the published selection strings, in publication order (zero counts included).
    """
    params = ElectionParams.from_board(board)
    votes = [rec['vote'] for rec in board.read_records('tally') if rec['kind'] == 'vote' and rec['vote'] is not None]
    counts = pd.Series([params.selections[v] for v in votes], dtype=object).value_counts()
    return counts.reindex(params.selections, fill_value=0).astype(int)
