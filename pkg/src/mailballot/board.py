"""
Append-only, hash chained bulletin board.

Board file grammar, one record per line::

    list-id|key|hex-payload|chain-hash

`key` is empty for unkeyed lists. `chain-hash` is the hex sha256 of the previous head (raw 32 bytes) followed by
the bytes of `list-id|key|hex-payload`; the head before the first record is the sha256 of the board domain tag.
Payloads are canonical json (sorted keys, no whitespace).
"""
import logging
import os
import json
import hashlib
import copy
from pathlib import Path
from .utils import canonical_json, timing
from .ipython_backends import repr_mimebundle

logger = logging.getLogger('mailballot.board')
logger.addHandler(logging.NullHandler())

LISTS = ('setup', 'registered', 'commit', 'received', 'rejected', 'mixed', 'pep', 'accepted', 'tally', 'final')
KEYED_LISTS = ('registered', 'commit')


class DuplicateKeyError(KeyError):
    pass


class BoardFinalizedError(RuntimeError):
    pass


class ChainBreakError(ValueError):
    """a board file record doesn't chain to the previous one"""

    def __init__(self, position, reason='chain hash mismatch'):
        self.position = position
        super().__init__("board record %d: %s" % (position, reason))


def _genesis(domain):
    if domain is None:
        from .mailballot import config
        domain = config['protocol']['board_domain']
    return hashlib.sha256(domain.encode()).hexdigest()


def _chain(head, line):
    return hashlib.sha256(bytes.fromhex(head) + line.encode()).hexdigest()


def _check_field(value, what):
    if not value or any(c in value for c in '|\n\r'):
        raise ValueError("Invalid %s '%s': '|' and newlines are reserved" % (what, value))


class Board:
    """
    Bulletin board holding the election lists.

    Parameters
    ----------
    domain: str, optional
        chain domain tag (`config['protocol']['board_domain']` by default)
    writer_check: callable, optional
        `writer_check(list_id, key, writer) -> bool` authentication hook. All writers are accepted if None.

    Notes
    -----
    Reads return copies, so that callers can't alter posted entries.
    """

    def __init__(self, domain=None, writer_check=None):
        self.domain = domain
        self.writer_check = writer_check
        self._genesis = _genesis(domain)
        self.head_hash = self._genesis
        self._records = []
        self._lists = {name: [] for name in LISTS}
        self._keys = {name: {} for name in KEYED_LISTS}
        self._frozen = False

    @property
    def finalized(self):
        return self._frozen or bool(self._lists['final'])

    def __len__(self):
        return len(self._records)

    def _append(self, list_id, key, payload, enforce=True):
        if list_id not in self._lists:
            raise ValueError("Unknown board list '%s'" % list_id)
        if enforce:
            if self.finalized:
                raise BoardFinalizedError("board is finalized: can't post to '%s'" % list_id)
            if list_id in KEYED_LISTS:
                if key is None:
                    raise ValueError("list '%s' needs a key" % list_id)
                if key in self._keys[list_id]:
                    raise DuplicateKeyError("'%s' already present in '%s'" % (key, list_id))
        line = '%s|%s|%s' % (list_id, key or '', payload.hex())
        self.head_hash = _chain(self.head_hash, line)
        self._records.append((list_id, key, bytes(payload), self.head_hash))
        position = len(self._lists[list_id])
        self._lists[list_id].append(len(self._records) - 1)
        if list_id in KEYED_LISTS:
            self._keys[list_id].setdefault(key, []).append(len(self._records) - 1)
        return position

    def post(self, list_id, entry, key=None, writer=None):
        """
        Append an entry.

        Parameters
        ----------
        list_id: str
            one of `LISTS`
        entry: bytes or dict
            dicts are serialized as canonical json
        key: str, optional
            VoterID, mandatory for keyed lists
        writer: str, optional
            writer identity, passed to the authentication hook

        Returns
        -------
        int
            position of the entry in its list

        Raises
        ------
        DuplicateKeyError
            if `key` is already present in a keyed list
        BoardFinalizedError
        PermissionError
            if the authentication hook refuses the writer
        """
        if isinstance(entry, dict):
            entry = canonical_json(entry)
        if key is not None:
            _check_field(key, 'key')
        if self.writer_check is not None and not self.writer_check(list_id, key, writer):
            raise PermissionError("writer '%s' may not post to '%s'" % (writer, list_id))
        position = self._append(list_id, key, entry)
        logger.debug('post %s[%d]%s by %s' % (list_id, position, '' if key is None else ' key=%s' % key, writer))
        return position

    def read(self, list_id, key=None, start=None, stop=None):
        """
        Parameters
        ----------
        list_id: str
        key: str, optional
            for keyed lists, only entries posted under `key` (an empty list if absent)
        start: int, optional
        stop: int, optional
            position range

        Returns
        -------
        list of bytes
        """
        if list_id not in self._lists:
            raise ValueError("Unknown board list '%s'" % list_id)
        if key is not None:
            indices = self._keys.get(list_id, {}).get(key, [])
        else:
            indices = self._lists[list_id][start:stop]
        return [bytes(self._records[i][2]) for i in indices]

    def read_records(self, list_id, key=None, start=None, stop=None):
        """same as `read`, with json decoded payloads"""
        return [json.loads(entry) for entry in self.read(list_id, key=key, start=start, stop=stop)]

    def keys(self, list_id):
        """keys present in a keyed list, in first post order"""
        return list(self._keys[list_id])

    def key_counts(self, list_id):
        return {key: len(indices) for key, indices in self._keys[list_id].items()}

    def finalize(self, summary=None):
        """post the finalization marker; any later post is refused"""
        if self.finalized:
            raise BoardFinalizedError("board is already finalized")
        self._append('final', None, canonical_json(dict(summary or {}, kind='final')))
        logger.info('board finalized at head %s' % self.head_hash)

    def snapshot(self):
        """frozen copy of the board"""
        return Transcript(self)

    def lines(self):
        for list_id, key, payload, head in self._records:
            yield '%s|%s|%s|%s' % (list_id, key or '', payload.hex(), head)

    @timing
    def save(self, path):
        """write the board file atomically (temporary file then rename)"""
        path = Path(path)
        tmp = path.with_name(path.name + '.tmp')
        with open(tmp, 'w') as f:
            for line in self.lines():
                f.write(line + '\n')
        os.replace(tmp, path)

    @classmethod
    @timing
    def load(cls, path, domain=None, writer_check=None):
        """
        Load a board file, replaying the hash chain from genesis.

        Keyed list uniqueness is not enforced here (the file is taken as it is); global verification
        checks it.

        Raises
        ------
        ChainBreakError
            with the 1-based position of the first bad record (hash mismatch, malformed or non lowercase hex).
        """
        board = cls(domain=domain, writer_check=writer_check)
        with open(path) as f:
            for position, line in enumerate(f, start=1):
                line = line.rstrip('\n')
                fields = line.split('|')
                if len(fields) != 4:
                    raise ChainBreakError(position, 'malformed record')
                list_id, key, payload, head = fields
                if list_id not in board._lists:
                    raise ChainBreakError(position, "unknown list '%s'" % list_id)
                if payload != payload.lower() or head != head.lower():
                    raise ChainBreakError(position, 'hex fields must be lowercase')
                if _chain(board.head_hash, '%s|%s|%s' % (list_id, key, payload)) != head:
                    raise ChainBreakError(position)
                try:
                    payload = bytes.fromhex(payload)
                except ValueError:
                    raise ChainBreakError(position, 'bad hex payload') from None
                board._append(list_id, key or None, payload, enforce=False)
        return board

    def verify_chain(self):
        """position (1-based) of the first record that doesn't replay from genesis, or None"""
        head = self._genesis
        for position, (list_id, key, payload, record_head) in enumerate(self._records, start=1):
            head = _chain(head, '%s|%s|%s' % (list_id, key or '', payload.hex()))
            if head != record_head:
                return position
        return None

    def __str__(self):
        counts = ', '.join('%s: %d' % (name, len(self._lists[name])) for name in LISTS if self._lists[name])
        return "Board(%s%s) head %s" % (counts or 'empty', ', finalized' if self.finalized else '', self.head_hash)

    def _repr_mimebundle_(self, include=None, exclude=None):
        return repr_mimebundle(self, include=include, exclude=exclude)


class Transcript(Board):
    """
    Frozen board: the self-contained input of global verification and of the result function.
    """

    def __init__(self, board):
        super().__init__(domain=board.domain)
        self.__dict__.update(copy.deepcopy({k: v for k, v in board.__dict__.items() if k != 'writer_check'}))
        self.writer_check = None
        self._frozen = True

    @property
    def config_hash(self):
        setup = self.read_records('setup')
        return setup[0].get('config_hash') if setup else None
