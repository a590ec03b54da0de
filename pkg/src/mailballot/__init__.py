__all__ = ['open_board', 'election_info', 'tally_vector', 'GroupProfile', 'Board', 'ElectionConfig', 'ElectionParams',
           'setup', 'cast_device', 'cast_ec', 'process_vote', 'tally', 'voter_verify', 'global_verify', 'result']
from .mailballot import *
from .mailballot import __version__
