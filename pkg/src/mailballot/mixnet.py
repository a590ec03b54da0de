"""
Verifiable re-encryption shuffle of rows of ciphertexts.

The proof is a commitment-consistent shuffle argument (permutation commitment, chained commitments of the
permuted challenges, one sigma protocol for all relations) extended to rows of `width` ciphertexts: the
same permutation and the same challenge vector apply to every column, and each column gets its own
re-encryption response.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache, partial
from .group import Ciphertext, NotInDomainError, encode_vote, encode_voter, encrypt, rerandomize
from .zkp import FsTranscript
from .utils import make_rng, map_rows, timing

logger = logging.getLogger('mailballot.mixnet')
logger.addHandler(logging.NullHandler())


class MixStageError(ValueError):
    """a stage of a mix chain doesn't verify"""

    def __init__(self, stage):
        self.stage = stage
        super().__init__("mix stage %d failed verification" % stage)


@dataclass(frozen=True)
class PlainVote:
    """plaintext vote cell, encrypted before mixing"""
    index: int


@dataclass(frozen=True)
class PlainVoter:
    """plaintext voter id cell, encrypted before mixing"""
    voter_id: str


def encrypt_plaintext_rows(group, pk, rows, roll=None, rng=None, v_max=None):
    """
    Replace plaintext cells by encryptions; ciphertext cells pass through.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    pk: int
    rows: list of list
        cells are `Ciphertext`, `PlainVote` or `PlainVoter`
    roll: list of str, optional
        published roll, needed for `PlainVoter` cells
    rng: random.Random, optional
        if None, plaintext cells are encrypted with zero randomness, so anybody can rebuild the
        batch from the plaintexts; the first mix stage then brings the randomness.
    v_max: int, optional

    Returns
    -------
    list of tuple of Ciphertext

    Raises
    ------
    mailballot.group.NotInDomainError
        for an out of domain vote or a voter id not on the roll.
    """
    out = []
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, Ciphertext):
                cells.append(cell)
                continue
            if isinstance(cell, PlainVote):
                m = encode_vote(group, cell.index, v_max)
            elif isinstance(cell, PlainVoter):
                if roll is None or cell.voter_id not in roll:
                    raise NotInDomainError("voter '%s' is not on the roll" % cell.voter_id)
                m = encode_voter(group, roll.index(cell.voter_id), len(roll))
            else:
                raise TypeError("Unknown cell type %s" % type(cell).__name__)
            r = group.random_scalar(rng) if rng is not None else 0
            cells.append(encrypt(group, pk, m, r))
        out.append(tuple(cells))
    return out


@dataclass(frozen=True)
class MixProof:
    """
    Shuffle proof. `width` and `size` form the header checked by verifiers.
    """
    width: int
    size: int
    permutation_commitment: tuple
    chain: tuple
    t1: int
    t2: int
    t3: int
    t4_1: tuple
    t4_2: tuple
    t_hat: tuple
    s1: int
    s2: int
    s3: int
    s4: tuple
    s_hat: tuple
    s_prime: tuple

    def to_dict(self, group):
        el = group.element_hex
        sc = group.scalar_hex
        return {
            'width': self.width, 'size': self.size,
            'permutation_commitment': [el(x) for x in self.permutation_commitment],
            'chain': [el(x) for x in self.chain],
            't1': el(self.t1), 't2': el(self.t2), 't3': el(self.t3),
            't4_1': [el(x) for x in self.t4_1], 't4_2': [el(x) for x in self.t4_2],
            't_hat': [el(x) for x in self.t_hat],
            's1': sc(self.s1), 's2': sc(self.s2), 's3': sc(self.s3),
            's4': [sc(x) for x in self.s4], 's_hat': [sc(x) for x in self.s_hat],
            's_prime': [sc(x) for x in self.s_prime],
        }

    @classmethod
    def from_dict(cls, group, d):
        el = group.element_from_hex
        sc = group.scalar_from_hex
        return cls(int(d['width']), int(d['size']),
                   tuple(el(x) for x in d['permutation_commitment']), tuple(el(x) for x in d['chain']),
                   el(d['t1']), el(d['t2']), el(d['t3']),
                   tuple(el(x) for x in d['t4_1']), tuple(el(x) for x in d['t4_2']),
                   tuple(el(x) for x in d['t_hat']),
                   sc(d['s1']), sc(d['s2']), sc(d['s3']),
                   tuple(sc(x) for x in d['s4']), tuple(sc(x) for x in d['s_hat']),
                   tuple(sc(x) for x in d['s_prime']))


def rows_to_hex(group, rows):
    return [[group.ciphertext_hex(c) for c in row] for row in rows]


def rows_from_hex(group, rows):
    return [tuple(group.ciphertext_from_hex(c) for c in row) for row in rows]


def _row_width(rows):
    widths = {len(row) for row in rows}
    if len(widths) > 1:
        raise ValueError("Rows of a mix batch must share the same width, got %s" % sorted(widths))
    return widths.pop() if widths else 0


def _generator(group, i):
    return group.hash_to_group('shuffle-generator', i)


@lru_cache(maxsize=4)
def shuffle_generators(group, size):
    """`(h, h_0 ... h_size-1)`: independent generators for the permutation commitment"""
    return tuple(map_rows(partial(_generator, group), range(size + 1)))


def _statement(group, pk, rows_in, rows_out, width, context):
    t = FsTranscript(group, 'shuffle', context)
    t.absorb_bytes(b'%d|%d' % (width, len(rows_in)))
    t.absorb_elements(pk)
    for row in rows_in:
        t.absorb_ciphertexts(*row)
    for row in rows_out:
        t.absorb_ciphertexts(*row)
    return t


def _challenges(group, statement, permutation_commitment):
    """per input row challenges `u_j`"""
    statement.absorb_elements(*permutation_commitment)
    seed = FsTranscript(group, 'shuffle-u', statement.challenge().to_bytes(group.scalar_byte_length, 'big'))
    return [seed.absorb_bytes(b'%d' % j).challenge() for j in range(len(permutation_commitment))]


def _main_challenge(group, statement, proof_values):
    chain, t1, t2, t3, t4_1, t4_2, t_hat = proof_values
    statement.absorb_elements(*chain, t1, t2, t3, *t4_1, *t4_2, *t_hat)
    return statement.challenge()


def _rerandomize_row(group, pk, item):
    row, rs = item
    return tuple(rerandomize(group, pk, c, r) for c, r in zip(row, rs))


def _prover_row_terms(group, item):
    out_row, h_i, omega = item
    return (group.exp(h_i, omega), [group.exp(c.c1, omega) for c in out_row],
            [group.exp(c.c2, omega) for c in out_row])


def _verifier_in_terms(group, item):
    in_row, c_j, u_j = item
    return group.exp(c_j, u_j), [group.exp(c.c1, u_j) for c in in_row], [group.exp(c.c2, u_j) for c in in_row]


def _verifier_out_terms(group, e, item):
    out_row, h_i, s_prime, chain_i, chain_prev, s_hat = item
    t_hat = group.exp(chain_i, -e) * group.exp_g(s_hat) * group.exp(chain_prev, s_prime) % group.p
    return (group.exp(h_i, s_prime), [group.exp(c.c1, s_prime) for c in out_row],
            [group.exp(c.c2, s_prime) for c in out_row], t_hat)


def _columns_product(group, terms, width):
    prod = [1] * width
    for column_terms in terms:
        for w, x in enumerate(column_terms):
            prod[w] = prod[w] * x % group.p
    return prod


@timing
def mix_prove(group, pk, rows_in, perm, rerand, context=b'', rng=None, num_workers=None):
    """
    Shuffle and re-encrypt rows, and prove it.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    pk: int
    rows_in: list of tuple of Ciphertext
    perm: list of int
        `perm[j]` is the output position of input row `j`
    rerand: list of list of int
        re-encryption randomness, `rerand[i][w]` for output row `i` column `w`, each in [1, q-1]
    context: bytes
    rng: random.Random, optional
        proof randomness (OS entropy if None)
    num_workers: int, optional
        passed to `mailballot.utils.map_rows`

    Returns
    -------
    tuple
        (rows_out, MixProof) with `rows_out[i] = rerandomize(rows_in[perm^-1(i)])`
    """
    rng = rng or make_rng()
    size = len(rows_in)
    width = _row_width(rows_in)
    if sorted(perm) != list(range(size)):
        raise ValueError("perm is not a permutation of range(%d)" % size)
    if len(rerand) != size or any(len(rs) != width for rs in rerand):
        raise ValueError("rerand shape doesn't match %d rows of width %d" % (size, width))
    if any(not 1 <= r < group.q for rs in rerand for r in rs):
        raise ValueError("fresh re-encryption randomness in [1, q-1] is required")
    if size == 0:
        return [], MixProof(width, 0, (), (), 1, 1, 1, (), (), (), 0, 0, 0, (), (), ())

    q = group.q
    psi = [0] * size
    for j, i in enumerate(perm):
        psi[i] = j
    rows_out = map_rows(partial(_rerandomize_row, group, pk),
                        [(rows_in[psi[i]], rerand[i]) for i in range(size)], num_workers=num_workers)

    generators = shuffle_generators(group, size)
    h, hs = generators[0], generators[1:]

    # permutation commitment, indexed by input row
    r_perm = [0] * size
    permutation_commitment = [0] * size
    for i in range(size):
        j = psi[i]
        r_perm[j] = group.random_scalar(rng)
        permutation_commitment[j] = group.exp_g(r_perm[j]) * hs[i] % group.p

    statement = _statement(group, pk, rows_in, rows_out, width, context)
    u = _challenges(group, statement, permutation_commitment)
    u_perm = [u[psi[i]] for i in range(size)]

    # commitment chain of the permuted challenges
    r_chain = [group.random_scalar(rng) for _ in range(size)]
    chain = []
    prev = h
    for i in range(size):
        prev = group.exp_g(r_chain[i]) * group.exp(prev, u_perm[i]) % group.p
        chain.append(prev)

    v = [1] * size
    for i in range(size - 1, 0, -1):
        v[i - 1] = u_perm[i] * v[i] % q
    r_bar = sum(r_perm) % q
    r_hat = sum(a * b for a, b in zip(r_chain, v)) % q
    r_tilde = sum(a * b for a, b in zip(r_perm, u)) % q
    r_prime = [sum(rerand[i][w] * u_perm[i] for i in range(size)) % q for w in range(width)]

    omega1, omega2, omega3 = (group.random_scalar(rng) for _ in range(3))
    omega4 = [group.random_scalar(rng) for _ in range(width)]
    omega_hat = [group.random_scalar(rng) for _ in range(size)]
    omega_prime = [group.random_scalar(rng) for _ in range(size)]

    terms = map_rows(partial(_prover_row_terms, group),
                     [(rows_out[i], hs[i], omega_prime[i]) for i in range(size)], num_workers=num_workers)
    t1 = group.exp_g(omega1)
    t2 = group.exp_g(omega2)
    t3 = group.exp_g(omega3) * group.mul(*[t[0] for t in terms]) % group.p
    prod1 = _columns_product(group, [t[1] for t in terms], width)
    prod2 = _columns_product(group, [t[2] for t in terms], width)
    t4_1 = tuple(group.exp_g(-omega4[w]) * prod1[w] % group.p for w in range(width))
    t4_2 = tuple(group.fixed_exp(pk, -omega4[w]) * prod2[w] % group.p for w in range(width))
    chain_prev = [h] + chain[:-1]
    t_hat = tuple(group.exp_g(omega_hat[i]) * group.exp(chain_prev[i], omega_prime[i]) % group.p
                  for i in range(size))

    e = _main_challenge(group, statement, (chain, t1, t2, t3, t4_1, t4_2, t_hat))
    proof = MixProof(
        width, size, tuple(permutation_commitment), tuple(chain), t1, t2, t3, t4_1, t4_2, t_hat,
        (omega1 + e * r_bar) % q, (omega2 + e * r_hat) % q, (omega3 + e * r_tilde) % q,
        tuple((omega4[w] + e * r_prime[w]) % q for w in range(width)),
        tuple((omega_hat[i] + e * r_chain[i]) % q for i in range(size)),
        tuple((omega_prime[i] + e * u_perm[i]) % q for i in range(size)))
    return rows_out, proof


@timing
def mix_verify(group, pk, rows_in, rows_out, proof, context=b'', num_workers=None):
    """
    Returns
    -------
    bool
        True if `rows_out` is a re-encrypted permutation of `rows_in`, the same for every column.
    """
    try:
        return _mix_verify(group, pk, rows_in, rows_out, proof, context, num_workers)
    except (AttributeError, TypeError, ValueError, IndexError, OverflowError) as e:
        logger.debug('malformed shuffle proof: %s' % str(e))
        return False


def _mix_verify(group, pk, rows_in, rows_out, proof, context, num_workers):
    size = len(rows_in)
    width = _row_width(rows_in)
    if len(rows_out) != size or (size and _row_width(rows_out) != width):
        return False
    if proof.size != size or proof.width != width:
        return False
    if size == 0:
        return True
    sized = (proof.permutation_commitment, proof.chain, proof.t_hat, proof.s_hat, proof.s_prime)
    if any(len(x) != size for x in sized) or any(len(x) != width for x in (proof.t4_1, proof.t4_2, proof.s4)):
        return False
    scalars = (proof.s1, proof.s2, proof.s3, *proof.s4, *proof.s_hat, *proof.s_prime)
    if any(not 0 <= s < group.q for s in scalars):
        return False
    if not all(group.is_element(x) for x in (*proof.permutation_commitment, *proof.chain)):
        return False

    q = group.q
    generators = shuffle_generators(group, size)
    h, hs = generators[0], generators[1:]
    statement = _statement(group, pk, rows_in, rows_out, width, context)
    u = _challenges(group, statement, proof.permutation_commitment)
    e = _main_challenge(group, statement, (proof.chain, proof.t1, proof.t2, proof.t3, proof.t4_1, proof.t4_2,
                                           proof.t_hat))

    in_terms = map_rows(partial(_verifier_in_terms, group),
                        [(rows_in[j], proof.permutation_commitment[j], u[j]) for j in range(size)],
                        num_workers=num_workers)
    chain_prev = (h,) + proof.chain[:-1]
    out_terms = map_rows(partial(_verifier_out_terms, group, e),
                         [(rows_out[i], hs[i], proof.s_prime[i], proof.chain[i], chain_prev[i], proof.s_hat[i])
                          for i in range(size)], num_workers=num_workers)

    u_prod = 1
    for x in u:
        u_prod = u_prod * x % q
    c_bar = group.div(group.mul(*proof.permutation_commitment), group.mul(*hs))
    c_hat = group.div(proof.chain[-1], group.exp(h, u_prod))
    c_tilde = group.mul(*[t[0] for t in in_terms])
    e_bar_1 = _columns_product(group, [t[1] for t in in_terms], width)
    e_bar_2 = _columns_product(group, [t[2] for t in in_terms], width)

    if proof.t1 != group.exp(c_bar, -e) * group.exp_g(proof.s1) % group.p:
        return False
    if proof.t2 != group.exp(c_hat, -e) * group.exp_g(proof.s2) % group.p:
        return False
    t3 = group.exp(c_tilde, -e) * group.exp_g(proof.s3) * group.mul(*[t[0] for t in out_terms]) % group.p
    if proof.t3 != t3:
        return False
    out_1 = _columns_product(group, [t[1] for t in out_terms], width)
    out_2 = _columns_product(group, [t[2] for t in out_terms], width)
    for w in range(width):
        t4_1 = group.exp(e_bar_1[w], -e) * group.exp_g(-proof.s4[w]) * out_1[w] % group.p
        t4_2 = group.exp(e_bar_2[w], -e) * group.fixed_exp(pk, -proof.s4[w]) * out_2[w] % group.p
        if proof.t4_1[w] != t4_1 or proof.t4_2[w] != t4_2:
            return False
    return all(proof.t_hat[i] == out_terms[i][3] for i in range(size))


def shuffle(group, pk, rows, context=b'', rng=None, num_workers=None):
    """random permutation and re-encryption of `rows`, with its proof"""
    rng = rng or make_rng()
    size = len(rows)
    width = _row_width(rows)
    perm = list(range(size))
    rng.shuffle(perm)
    rerand = [[group.random_scalar(rng) for _ in range(width)] for _ in range(size)]
    return mix_prove(group, pk, rows, perm, rerand, context=context, rng=rng, num_workers=num_workers)


def _stage_context(context, stage):
    return context + b'|stage|%d' % stage


@timing
def mix_chain(group, pk, rows, stages, context=b'', rng=None, stage_hook=None, num_workers=None):
    """
    Chain of shuffles, one per mixing trustee, each verified before feeding the next.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    pk: int
    rows: list of tuple of Ciphertext
    stages: int
        number of mixing trustees, at least 1
    context: bytes
    rng: random.Random, optional
    stage_hook: callable, optional
        `stage_hook(stage, rows_out, proof) -> (rows_out, proof)`, lets a corrupted trustee replace
        its stage output
    num_workers: int, optional

    Returns
    -------
    tuple
        (final rows, list of (stage rows, MixProof))

    Raises
    ------
    MixStageError
        identifying the first stage whose proof doesn't verify.
    """
    if stages < 1:
        raise ValueError("A mix chain needs at least one stage")
    rng = rng or make_rng()
    current = list(rows)
    outputs = []
    for stage in range(stages):
        rows_out, proof = shuffle(group, pk, current, _stage_context(context, stage), rng=rng,
                                  num_workers=num_workers)
        if stage_hook is not None:
            rows_out, proof = stage_hook(stage, rows_out, proof)
        if not mix_verify(group, pk, current, rows_out, proof, _stage_context(context, stage),
                          num_workers=num_workers):
            raise MixStageError(stage)
        logger.debug('mix stage %d: %d rows of width %d' % (stage, len(rows_out), proof.width))
        outputs.append((rows_out, proof))
        current = rows_out
    return current, outputs


def verify_chain(group, pk, rows, outputs, context=b'', num_workers=None):
    """
    Re-verify a posted mix chain.

    Returns
    -------
    int or None
        index of the first failing stage, None if every stage verifies.
    """
    current = list(rows)
    for stage, (rows_out, proof) in enumerate(outputs):
        if not mix_verify(group, pk, current, rows_out, proof, _stage_context(context, stage),
                          num_workers=num_workers):
            return stage
        current = rows_out
    if not outputs:
        return 0
    return None
