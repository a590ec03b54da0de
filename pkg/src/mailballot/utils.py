"""miscellaneous functions"""

from functools import wraps
import time
import os
import json
import hashlib
import random
import secrets
import logging
import dask
from more_itertools import chunked

logger = logging.getLogger('mailballot.utils')
logger.addHandler(logging.NullHandler())

mem_monitor = True

try:
    from psutil import Process
except ImportError:
    logger.warning("psutil module not found. Disabling memory monitor")
    mem_monitor = False


def timing(f):
    """provide a @timing decorator for functions, that log time spent in it"""

    @wraps(f)
    def wrapper(*args, **kwargs):
        mem_str = ''
        process = None
        if mem_monitor:
            process = Process(os.getpid())
            startrss = process.memory_info().rss
        starttime = time.time()
        result = f(*args, **kwargs)
        endtime = time.time()
        if mem_monitor:
            endrss = process.memory_info().rss
            mem_str = 'mem: %+.1fMb' % ((endrss - startrss) / (1024 ** 2))
        logger.debug(
            'timing %s : %.2fs. %s' % (f.__name__, endtime - starttime, mem_str))
        return result

    return wrapper


def make_rng(seed=None, label=''):
    """
    Get a random generator.

    Parameters
    ----------
    seed: int or str or None
        if None, OS entropy is used (`secrets.SystemRandom`).
        Otherwise a reproducible generator is derived from `seed` and `label`.
    label: str
        sub stream name, so that each role draws from an independent stream.

    Returns
    -------
    random.Random
        anything providing `randrange`, `shuffle` and `getrandbits`.
    """
    if seed is None:
        return secrets.SystemRandom()
    derived = hashlib.sha256(('%s|%s' % (seed, label)).encode()).digest()
    return random.Random(int.from_bytes(derived, 'big'))


def canonical_json(obj):
    """canonical json bytes (sorted keys, no whitespace) used for every board payload"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=True).encode()


def sha256_hex(*chunks):
    """hex sha256 of length prefixed chunks (bytes or str)"""
    h = hashlib.sha256()
    for chunk in chunks:
        if isinstance(chunk, str):
            chunk = chunk.encode()
        h.update(len(chunk).to_bytes(8, 'big'))
        h.update(chunk)
    return h.hexdigest()


def _apply_chunk(func, chunk):
    return [func(item) for item in chunk]


def map_rows(func, items, num_workers=None):
    """
    Apply `func` to every item, in parallel with dask when the batch is large enough.

    Results keep the input order, so that anything assembled from them is byte identical
    whatever the scheduler.

    Parameters
    ----------
    func: callable
        must be picklable (module level function or `functools.partial`) for the 'processes' scheduler.
    items: iterable
    num_workers: int or None
        overrides `config['parallel']['num_workers']`. 1 forces serial processing.

    Returns
    -------
    list
    """
    from .mailballot import config

    items = list(items)
    parallel = config['parallel']
    if num_workers is None:
        num_workers = parallel['num_workers']
    if num_workers == 1 or len(items) < parallel['min_batch'] or parallel['scheduler'] == 'sync':
        return [func(item) for item in items]

    workers = num_workers or os.cpu_count() or 1
    chunk_size = max(1, -(-len(items) // (workers * 4)))
    tasks = [dask.delayed(_apply_chunk)(func, chunk) for chunk in chunked(items, chunk_size)]
    results = dask.compute(*tasks, scheduler=parallel['scheduler'], num_workers=workers)
    return [r for chunk in results for r in chunk]
