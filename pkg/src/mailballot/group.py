"""
Prime order group arithmetic, exponential ElGamal, Pedersen commitments and the plaintext encodings
(vote index, scalar limbs, voter index) carried by ciphertexts.

Group elements are plain python ints modulo `GroupProfile.p`, scalars are ints modulo `GroupProfile.q`.
"""
import logging
import hashlib
import math
from dataclasses import dataclass
from functools import lru_cache
import sympy
from .utils import timing

logger = logging.getLogger('mailballot.group')
logger.addHandler(logging.NullHandler())

try:
    import gmpy2

    def _powmod(base, exponent, modulus):
        return int(gmpy2.powmod(base, exponent, modulus))
except ImportError:
    logger.warning("gmpy2 module not found. Falling back to builtin pow")
    _powmod = pow

# product of the first 300 primes, to sieve prime candidates before the real test
_SMALL_PRIMORIAL = int(sympy.primorial(300))

# bits per window in fixed base tables
_WINDOW = 6


class NotInDomainError(ValueError):
    """decoded element is outside the expected plaintext domain"""
    pass


def _hash_int(bits, *chunks):
    """`bits` wide integer from shake_256 of length prefixed chunks"""
    h = hashlib.shake_256()
    for chunk in chunks:
        if isinstance(chunk, str):
            chunk = chunk.encode()
        elif isinstance(chunk, int):
            chunk = chunk.to_bytes(max(1, (chunk.bit_length() + 7) // 8), 'big')
        h.update(len(chunk).to_bytes(8, 'big'))
        h.update(chunk)
    value = int.from_bytes(h.digest((bits + 7) // 8), 'big')
    return value & ((1 << bits) - 1)


@lru_cache(maxsize=None)
def _generate_parameters(seed, p_bits, q_bits):
    if q_bits < 2 or p_bits <= q_bits:
        raise ValueError("Invalid profile sizes p_bits=%d q_bits=%d" % (p_bits, q_bits))
    q = int(sympy.nextprime(_hash_int(q_bits, seed, 'q') | (1 << (q_bits - 1))))
    if q.bit_length() != q_bits:
        raise ValueError("Unable to find a %d bits prime from seed '%s'" % (q_bits, seed))
    counter = 0
    while True:
        x = _hash_int(p_bits, seed, 'p', counter) | (1 << (p_bits - 1))
        cofactor = (x // q) & ~1
        p = cofactor * q + 1
        counter += 1
        if p.bit_length() != p_bits or math.gcd(p, _SMALL_PRIMORIAL) != 1:
            continue
        if sympy.isprime(p):
            break
    logger.debug('profile %s: p found after %d candidates' % (seed, counter))
    counter = 0
    while True:
        h = _hash_int(p_bits + 64, seed, 'g', counter) % p
        g = pow(h, cofactor, p)
        if g not in (0, 1):
            return p, q, g
        counter += 1


class GroupProfile:
    """
    Schnorr group: the order `q` subgroup of the integers modulo a prime `p`, generated by `g`.

    Parameters
    ----------
    p: int
        modulus, prime with `q` dividing `p - 1`
    q: int
        prime group order
    g: int
        generator of the order `q` subgroup
    name: str, optional
        profile name (informative only)
    check: bool, optional
        if True (default), primality and generator order are verified.

    Raises
    ------
    ValueError
        if the parameters don't define a prime order group.

    See Also
    --------
    GroupProfile.generate
    GroupProfile.toy
    """

    def __init__(self, p, q, g, name=None, check=True):
        self.p = int(p)
        self.q = int(q)
        self.g = int(g) % self.p
        self.name = name
        if check:
            self.validate()
        self.cofactor = (self.p - 1) // self.q
        self.element_byte_length = (self.p.bit_length() + 7) // 8
        self.scalar_byte_length = (self.q.bit_length() + 7) // 8
        self.identity = 1
        self._tables = {}

    def validate(self):
        """raise ValueError if (p, q, g) is not a prime order group"""
        if not sympy.isprime(self.q):
            raise ValueError("group order q is not prime")
        if not sympy.isprime(self.p):
            raise ValueError("modulus p is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError("q does not divide p - 1")
        if self.g in (0, 1) or pow(self.g, self.q, self.p) != 1:
            raise ValueError("g is not a generator of the order q subgroup")

    @classmethod
    @timing
    def generate(cls, seed, p_bits=2048, q_bits=256):
        """
        Deterministic profile from a seed string.

        Anybody can re-derive the profile from `(seed, p_bits, q_bits)`:
        q is the first prime above a hash of the seed, p = k*q+1 is the first prime found
        along a hash driven search, and g is a hashed element raised to the cofactor.

        Parameters
        ----------
        seed: str
        p_bits: int
        q_bits: int

        Returns
        -------
        GroupProfile
        """
        p, q, g = _generate_parameters(str(seed), int(p_bits), int(q_bits))
        return cls(p, q, g, name='%s/%d/%d' % (seed, p_bits, q_bits), check=False)

    @classmethod
    def toy(cls, q, g=None):
        """
        Small profile for brute force oracles.

        Parameters
        ----------
        q: int
            small prime group order (ie 11 or 1009)
        g: int, optional
            generator. If None, 2 raised to the smallest even cofactor is used.

        Returns
        -------
        GroupProfile
        """
        if not sympy.isprime(q):
            raise ValueError("toy group order %s is not prime" % q)
        cofactor = 2
        while not sympy.isprime(cofactor * q + 1):
            cofactor += 2
        p = cofactor * q + 1
        if g is None:
            h = 2
            g = pow(h, cofactor, p)
            while g == 1:
                h += 1
                g = pow(h, cofactor, p)
        return cls(p, q, g, name='toy/%d' % q)

    @classmethod
    def default(cls):
        """profile configured in `config['group']`"""
        from .mailballot import config
        conf = config['group']
        return cls.generate(conf['seed'], p_bits=conf['p_bits'], q_bits=conf['q_bits'])

    @classmethod
    def from_config(cls, conf=None):
        """
        Profile from an election config `group` mapping.

        Parameters
        ----------
        conf: dict or None
            keys `toy` (small prime q), or `seed`, `p_bits`, `q_bits`. Missing keys default to
            `config['group']`.

        Returns
        -------
        GroupProfile
        """
        from .mailballot import config
        conf = conf or {}
        if 'toy' in conf:
            return cls.toy(conf['toy'])
        defaults = config['group']
        return cls.generate(conf.get('seed', defaults['seed']), p_bits=conf.get('p_bits', defaults['p_bits']),
                            q_bits=conf.get('q_bits', defaults['q_bits']))

    def is_toy(self, min_q_bits=None):
        """True if q is too small for real elections"""
        if min_q_bits is None:
            from .mailballot import config
            min_q_bits = config['group']['min_q_bits']
        return self.q.bit_length() < min_q_bits

    def to_dict(self):
        return {'p': '%x' % self.p, 'q': '%x' % self.q, 'g': '%x' % self.g, 'name': self.name}

    @classmethod
    def from_dict(cls, d, check=True):
        return cls(int(d['p'], 16), int(d['q'], 16), int(d['g'], 16), name=d.get('name'), check=check)

    def __eq__(self, other):
        return isinstance(other, GroupProfile) and (self.p, self.q, self.g) == (other.p, other.q, other.g)

    def __hash__(self):
        return hash((self.p, self.q, self.g))

    def __getstate__(self):
        # tables are rebuilt on demand in worker processes
        state = self.__dict__.copy()
        state['_tables'] = {}
        return state

    def __repr__(self):
        return "<GroupProfile %s: %d bits p, %d bits q>" % (self.name, self.p.bit_length(), self.q.bit_length())

    # arithmetic

    def exp(self, base, e):
        return _powmod(base, e % self.q, self.p)

    def mul(self, *elements):
        result = 1
        for el in elements:
            result = result * el % self.p
        return result

    def inv(self, el):
        return pow(el, -1, self.p)

    def div(self, a, b):
        return a * self.inv(b) % self.p

    def _table(self, base):
        table = self._tables.get(base)
        if table is None:
            table = []
            cur = base
            for _ in range(0, self.q.bit_length(), _WINDOW):
                row = [1]
                for _ in range((1 << _WINDOW) - 1):
                    row.append(row[-1] * cur % self.p)
                table.append(row)
                cur = row[-1] * cur % self.p
            self._tables[base] = table
        return table

    def fixed_exp(self, base, e):
        """`base^e` using a cached window table for `base` (worth it for g, pk, h1 and h2)"""
        e %= self.q
        result = 1
        mask = (1 << _WINDOW) - 1
        for row in self._table(base):
            if not e:
                break
            digit = e & mask
            if digit:
                result = result * row[digit] % self.p
            e >>= _WINDOW
        return result

    def exp_g(self, e):
        return self.fixed_exp(self.g, e)

    def random_scalar(self, rng, nonzero=True):
        """uniform scalar in [1, q-1] (or [0, q-1] if `nonzero` is False)"""
        return rng.randrange(1 if nonzero else 0, self.q)

    def is_element(self, x):
        return isinstance(x, int) and 0 < x < self.p and _powmod(x, self.q, self.p) == 1

    def hash_to_group(self, *chunks):
        """element with unknown discrete log, derived from `chunks`"""
        counter = 0
        while True:
            x = _hash_int(self.p.bit_length() + 64, 'hash-to-group', *chunks, counter) % self.p
            h = pow(x, self.cofactor, self.p)
            if h not in (0, 1):
                return h
            counter += 1

    # canonical encodings

    def encode_element(self, el):
        return int(el).to_bytes(self.element_byte_length, 'big')

    def decode_element(self, data):
        """
        Parameters
        ----------
        data: bytes

        Returns
        -------
        int
            group element

        Raises
        ------
        ValueError
            on wrong length, out of range value, or non member of the order q subgroup.
        """
        if len(data) != self.element_byte_length:
            raise ValueError("Bad element length %d (expected %d)" % (len(data), self.element_byte_length))
        el = int.from_bytes(data, 'big')
        if not self.is_element(el):
            raise ValueError("Not a group element: '%s'" % data.hex())
        return el

    def encode_scalar(self, s):
        return int(s).to_bytes(self.scalar_byte_length, 'big')

    def decode_scalar(self, data):
        if len(data) != self.scalar_byte_length:
            raise ValueError("Bad scalar length %d (expected %d)" % (len(data), self.scalar_byte_length))
        s = int.from_bytes(data, 'big')
        if s >= self.q:
            raise ValueError("Scalar out of range: '%s'" % data.hex())
        return s

    def element_hex(self, el):
        return self.encode_element(el).hex()

    def element_from_hex(self, s):
        return self.decode_element(bytes.fromhex(s))

    def scalar_hex(self, s):
        return self.encode_scalar(s).hex()

    def scalar_from_hex(self, s):
        return self.decode_scalar(bytes.fromhex(s))

    def encode_ciphertext(self, c):
        return self.encode_element(c.c1) + self.encode_element(c.c2)

    def decode_ciphertext(self, data):
        n = self.element_byte_length
        if len(data) != 2 * n:
            raise ValueError("Bad ciphertext length %d" % len(data))
        return Ciphertext(self.decode_element(data[:n]), self.decode_element(data[n:]))

    def ciphertext_hex(self, c):
        return self.encode_ciphertext(c).hex()

    def ciphertext_from_hex(self, s):
        return self.decode_ciphertext(bytes.fromhex(s))


@dataclass(frozen=True)
class Ciphertext:
    """ElGamal pair `(g^r, m * pk^r)`"""
    c1: int
    c2: int


def encrypt(group, pk, m, r):
    """
    Parameters
    ----------
    group: GroupProfile
    pk: int
        public key element
    m: int
        message element
    r: int
        randomness in [0, q-1]

    Returns
    -------
    Ciphertext
        `(g^r, m * pk^r)`
    """
    return Ciphertext(group.exp_g(r), m * group.fixed_exp(pk, r) % group.p)


def decrypt(group, sk, c):
    """single key decryption `c2 / c1^sk`"""
    return group.div(c.c2, group.exp(c.c1, sk))


def rerandomize(group, pk, c, r):
    """`(c1 * g^r, c2 * pk^r)`: same plaintext, fresh looking ciphertext when r != 0"""
    return Ciphertext(c.c1 * group.exp_g(r) % group.p, c.c2 * group.fixed_exp(pk, r) % group.p)


def ct_mul(group, a, b):
    """componentwise product: plaintexts multiply, exponents add"""
    return Ciphertext(a.c1 * b.c1 % group.p, a.c2 * b.c2 % group.p)


def ct_div(group, a, b):
    """componentwise quotient, encrypting the ratio of plaintexts"""
    return Ciphertext(group.div(a.c1, b.c1), group.div(a.c2, b.c2))


def ct_exp(group, c, a):
    """componentwise exponentiation: plaintext exponent is multiplied by `a`"""
    return Ciphertext(group.exp(c.c1, a), group.exp(c.c2, a))


@dataclass(frozen=True)
class PedersenParams:
    """
    Commitment generators `h1`, `h2` derived from a published seed, so that nobody knows `log_h1(h2)`.
    """
    h1: int
    h2: int
    derivation_seed: bytes

    @classmethod
    def derive(cls, group, seed):
        if isinstance(seed, str):
            seed = seed.encode()
        return cls(group.hash_to_group('pedersen', seed, 'h1'), group.hash_to_group('pedersen', seed, 'h2'), seed)

    def matches(self, group):
        """True if (h1, h2) are exactly the ones derived from the seed"""
        return self == PedersenParams.derive(group, self.derivation_seed)


def commit(group, params, a, r):
    """Pedersen commitment point `h1^a * h2^r`"""
    return group.fixed_exp(params.h1, a) * group.fixed_exp(params.h2, r) % group.p


def verify_opening(group, params, point, a, r):
    return commit(group, params, a, r) == point


def effective_v_max(group, v_max=None):
    """vote domain size: configured `v_max`, capped to `q` for toy groups"""
    if v_max is None:
        from .mailballot import config
        v_max = config['encoding']['v_max']
    return min(int(v_max), group.q)


@lru_cache(maxsize=16)
def _baby_steps(group, m):
    table = {}
    el = 1
    for j in range(m):
        table.setdefault(el, j)
        el = el * group.g % group.p
    return table


def encode_vote(group, v, v_max=None):
    """`g^v` for a vote index in [0, v_max)"""
    v_max = effective_v_max(group, v_max)
    if not 0 <= v < v_max:
        raise NotInDomainError("vote index %s not in [0, %d)" % (v, v_max))
    return group.exp_g(v)


def decode_vote(group, el, v_max=None):
    """
    Recover a vote index from `g^v` with baby-step giant-step.

    Parameters
    ----------
    group: GroupProfile
    el: int
    v_max: int, optional
        domain bound (`config['encoding']['v_max']` by default)

    Returns
    -------
    int

    Raises
    ------
    NotInDomainError
        if `el` is not in `{g^0 ... g^(v_max-1)}`
    """
    v_max = effective_v_max(group, v_max)
    m = math.isqrt(v_max - 1) + 1
    baby = _baby_steps(group, m)
    giant = group.inv(group.exp_g(m))
    gamma = el % group.p
    for i in range(m):
        j = baby.get(gamma)
        if j is not None and i * m + j < v_max:
            return i * m + j
        gamma = gamma * giant % group.p
    raise NotInDomainError("element is not in vote domain")


def limb_count(group, width=None):
    width = width or _limb_width()
    return -(-group.q.bit_length() // width)


def _limb_width():
    from .mailballot import config
    return config['encoding']['limb_width']


def scalar_to_limbs(group, s, width=None):
    """
    Split a scalar in little endian limbs of `width` bits.

    Returns
    -------
    list of int
        `limb_count(group, width)` limbs, each in [0, 2^width)
    """
    width = width or _limb_width()
    mask = (1 << width) - 1
    s = int(s)
    return [(s >> (i * width)) & mask for i in range(limb_count(group, width))]


def limbs_to_scalar(group, limbs, width=None):
    """
    Reassemble `scalar_to_limbs` output.

    Raises
    ------
    ValueError
        on a limb >= 2^width, a wrong limb count, or a result >= q.
    """
    width = width or _limb_width()
    if len(limbs) != limb_count(group, width):
        raise ValueError("Expected %d limbs, got %d" % (limb_count(group, width), len(limbs)))
    s = 0
    for i, limb in enumerate(limbs):
        if not 0 <= limb < (1 << width):
            raise ValueError("limb %d out of range: %s" % (i, limb))
        s |= limb << (i * width)
    if s >= group.q:
        raise ValueError("reassembled scalar exceeds group order")
    return s


def _limb_table(group, width):
    size = min(1 << width, group.q)
    return _baby_steps(group, size)


def decode_limb(group, el, width=None):
    """recover a limb from `g^limb` with the cached 2^width entries table"""
    width = width or _limb_width()
    limb = _limb_table(group, width).get(el)
    if limb is None:
        raise NotInDomainError("element is not a limb encoding")
    return limb


def encode_voter(group, index, roll_size):
    """`g^index` for a roll index"""
    if not 0 <= index < roll_size:
        raise NotInDomainError("roll index %s not in [0, %d)" % (index, roll_size))
    return group.exp_g(index)


def decode_voter(group, el, roll_size):
    """roll index from `g^index`, NotInDomainError outside the roll"""
    try:
        return decode_vote(group, el, v_max=roll_size)
    except NotInDomainError:
        raise NotInDomainError("element is not a roll index") from None


def mac_compute(group, a, b, v):
    """one time MAC `a*v + b mod q`"""
    return (a * v + b) % group.q
