"""
Non interactive proofs (strong Fiat-Shamir): knowledge of an ElGamal plaintext, equality of discrete logs
(Chaum-Pedersen), and distributed plaintext equivalence (PEP).

Every proof takes a `context` byte string (election hash, list name, position...) that is absorbed with the
full statement before the challenge is derived, so a proof never verifies for another statement or context.
Verifiers never raise: they return False on anything malformed.
"""
import logging
import hashlib
from dataclasses import dataclass
from .group import Ciphertext, ct_div, ct_mul
from .utils import make_rng

logger = logging.getLogger('mailballot.zkp')
logger.addHandler(logging.NullHandler())


class CorruptContributionError(ValueError):
    """a trustee PEP contribution does not verify"""

    def __init__(self, trustee_index, message=None):
        self.trustee_index = trustee_index
        super().__init__(message or "corrupt PEP contribution from trustee %s" % trustee_index)


class FsTranscript:
    """
    Fiat-Shamir transcript: sha256 over length prefixed statement components, reduced mod q.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    domain_tag: str or bytes
        proof type
    context: bytes
        caller supplied domain separation (election, list, position)
    """

    def __init__(self, group, domain_tag, context=b''):
        self.group = group
        self._hash = hashlib.sha256()
        self.absorb_bytes(b'mailballot-fs-v1')
        self.absorb_bytes(domain_tag)
        self.absorb_bytes('%x|%x|%x' % (group.p, group.q, group.g))
        self.absorb_bytes(context)

    def absorb_bytes(self, data):
        if isinstance(data, str):
            data = data.encode()
        self._hash.update(len(data).to_bytes(8, 'big'))
        self._hash.update(data)
        return self

    def absorb_elements(self, *elements):
        for el in elements:
            self.absorb_bytes(self.group.encode_element(el))
        return self

    def absorb_ciphertexts(self, *ciphertexts):
        for c in ciphertexts:
            self.absorb_elements(c.c1, c.c2)
        return self

    def challenge(self):
        """challenge scalar; the transcript may keep absorbing afterwards"""
        return int.from_bytes(self._hash.copy().digest(), 'big') % self.group.q


def _elements_ok(group, *elements):
    return all(group.is_element(el) for el in elements)


def _scalars_ok(group, *scalars):
    return all(isinstance(s, int) and 0 <= s < group.q for s in scalars)


@dataclass(frozen=True)
class PokCiphertext:
    """proof of knowledge of `(m_exp, r)` with `c = (g^r, g^m_exp * pk^r)`"""
    a1: int
    a2: int
    z_m: int
    z_r: int

    def to_bytes(self, group):
        return (group.encode_element(self.a1) + group.encode_element(self.a2) +
                group.encode_scalar(self.z_m) + group.encode_scalar(self.z_r))

    @classmethod
    def from_bytes(cls, group, data):
        n, s = group.element_byte_length, group.scalar_byte_length
        if len(data) != 2 * n + 2 * s:
            raise ValueError("Bad PoK length %d" % len(data))
        return cls(group.decode_element(data[:n]), group.decode_element(data[n:2 * n]),
                   group.decode_scalar(data[2 * n:2 * n + s]), group.decode_scalar(data[2 * n + s:]))

    def to_dict(self, group):
        return {'pok': self.to_bytes(group).hex()}

    @classmethod
    def from_dict(cls, group, d):
        return cls.from_bytes(group, bytes.fromhex(d['pok']))


def _pok_challenge(group, pk, c, a1, a2, context):
    return FsTranscript(group, 'pok', context).absorb_elements(group.g, pk).absorb_ciphertexts(c) \
        .absorb_elements(a1, a2).challenge()


def pok_prove(group, pk, c, m_exp, r, context, rng=None):
    """
    Prove knowledge of the plaintext exponent and randomness of `c`.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    pk: int
    c: mailballot.group.Ciphertext
        `encrypt(pk, g^m_exp, r)`
    m_exp: int
    r: int
    context: bytes
    rng: random.Random, optional
        OS entropy if None

    Returns
    -------
    PokCiphertext
    """
    rng = rng or make_rng()
    s_m = group.random_scalar(rng)
    s_r = group.random_scalar(rng)
    a1 = group.exp_g(s_r)
    a2 = group.exp_g(s_m) * group.fixed_exp(pk, s_r) % group.p
    e = _pok_challenge(group, pk, c, a1, a2, context)
    return PokCiphertext(a1, a2, (s_m + e * m_exp) % group.q, (s_r + e * r) % group.q)


def pok_verify(group, pk, c, proof, context):
    """True if `proof` is a valid `pok_prove` output for `c` under `context`"""
    try:
        if not (_elements_ok(group, proof.a1, proof.a2, c.c1, c.c2) and _scalars_ok(group, proof.z_m, proof.z_r)):
            return False
        e = _pok_challenge(group, pk, c, proof.a1, proof.a2, context)
        if group.exp_g(proof.z_r) != proof.a1 * group.exp(c.c1, e) % group.p:
            return False
        lhs = group.exp_g(proof.z_m) * group.fixed_exp(pk, proof.z_r) % group.p
        return lhs == proof.a2 * group.exp(c.c2, e) % group.p
    except (AttributeError, TypeError, ValueError, OverflowError):
        return False


@dataclass(frozen=True)
class ChaumPedersenProof:
    """
    Proof that the same exponent `x` maps every base to its image (`y_i = g_i^x`).

    The usual Chaum-Pedersen proof has two bases; PEP contributions use three.
    """
    announcements: tuple
    response: int

    def to_bytes(self, group):
        return b''.join(group.encode_element(a) for a in self.announcements) + group.encode_scalar(self.response)

    @classmethod
    def from_bytes(cls, group, data):
        n, s = group.element_byte_length, group.scalar_byte_length
        if len(data) < s or (len(data) - s) % n:
            raise ValueError("Bad proof length %d" % len(data))
        count = (len(data) - s) // n
        return cls(tuple(group.decode_element(data[i * n:(i + 1) * n]) for i in range(count)),
                   group.decode_scalar(data[count * n:]))

    def to_dict(self, group):
        return {'dleq': self.to_bytes(group).hex()}

    @classmethod
    def from_dict(cls, group, d):
        return cls.from_bytes(group, bytes.fromhex(d['dleq']))


def _dleq_challenge(group, bases, images, announcements, context):
    return FsTranscript(group, 'dleq-%d' % len(bases), context).absorb_elements(*bases).absorb_elements(*images) \
        .absorb_elements(*announcements).challenge()


def dleq_prove(group, bases, images, x, context, rng=None):
    """
    Parameters
    ----------
    group: mailballot.group.GroupProfile
    bases: list of int
    images: list of int
        `images[i] = bases[i]^x`
    x: int
    context: bytes
    rng: random.Random, optional

    Returns
    -------
    ChaumPedersenProof
    """
    rng = rng or make_rng()
    w = group.random_scalar(rng)
    announcements = tuple(group.exp(base, w) for base in bases)
    e = _dleq_challenge(group, bases, images, announcements, context)
    return ChaumPedersenProof(announcements, (w + e * x) % group.q)


def dleq_verify(group, bases, images, proof, context):
    try:
        if len(bases) != len(images) or len(proof.announcements) != len(bases):
            return False
        if not (_elements_ok(group, *bases, *images, *proof.announcements) and _scalars_ok(group, proof.response)):
            return False
        e = _dleq_challenge(group, bases, images, proof.announcements, context)
        for base, image, announcement in zip(bases, images, proof.announcements):
            if group.exp(base, proof.response) != announcement * group.exp(image, e) % group.p:
                return False
        return True
    except (AttributeError, TypeError, ValueError, OverflowError):
        return False


def cp_prove(group, g1, y1, g2, y2, x, context, rng=None):
    """Chaum-Pedersen proof of `log_g1(y1) == log_g2(y2) == x`"""
    return dleq_prove(group, (g1, g2), (y1, y2), x, context, rng=rng)


def cp_verify(group, g1, y1, g2, y2, proof, context):
    return dleq_verify(group, (g1, g2), (y1, y2), proof, context)


def enc_prove(group, pk, c, m, r, context, rng=None):
    """
    Proof that `c` encrypts the public element `m`: `log_g(c1) == log_pk(c2 / m)`.

    Specialization of `pok_prove` where the plaintext is known to the verifier.
    """
    return cp_prove(group, group.g, c.c1, pk, group.div(c.c2, m), r, context + b'|enc', rng=rng)


def enc_verify(group, pk, c, m, proof, context):
    try:
        return cp_verify(group, group.g, c.c1, pk, group.div(c.c2, m), proof, context + b'|enc')
    except (TypeError, ValueError, ZeroDivisionError):
        return False


@dataclass(frozen=True)
class PepContribution:
    """
    One trustee's blinding of the quotient ciphertext.

    `commitment = g^z` is published with `blinded = c_diff^z`, and a 3 bases proof ties the three together
    so that `z = 0` (which would force an 'equal' verdict) is detectable.
    """
    trustee_index: int
    commitment: int
    blinded: Ciphertext
    proof: ChaumPedersenProof

    def to_dict(self, group):
        return {'trustee': self.trustee_index, 'commitment': group.element_hex(self.commitment),
                'blinded': group.ciphertext_hex(self.blinded), 'proof': self.proof.to_dict(group)}

    @classmethod
    def from_dict(cls, group, d):
        return cls(int(d['trustee']), group.element_from_hex(d['commitment']),
                   group.ciphertext_from_hex(d['blinded']), ChaumPedersenProof.from_dict(group, d['proof']))


def _pep_context(context, trustee_index):
    return context + b'|pep|%d' % trustee_index


def pep_blind(group, c_diff, z, context, trustee_index=1, rng=None):
    """
    Parameters
    ----------
    group: mailballot.group.GroupProfile
    c_diff: mailballot.group.Ciphertext
        componentwise quotient of the compared ciphertexts
    z: int
        trustee secret blinding exponent in [1, q-1]
    context: bytes
    trustee_index: int
    rng: random.Random, optional

    Returns
    -------
    PepContribution
        with `blinded = ct_exp(c_diff, z)`
    """
    blinded = Ciphertext(group.exp(c_diff.c1, z), group.exp(c_diff.c2, z))
    commitment = group.exp_g(z)
    proof = dleq_prove(group, (group.g, c_diff.c1, c_diff.c2), (commitment, blinded.c1, blinded.c2), z,
                       _pep_context(context, trustee_index), rng=rng)
    return PepContribution(trustee_index, commitment, blinded, proof)


def pep_verify_contribution(group, c_diff, contribution, context):
    try:
        if contribution.commitment == group.identity:
            return False
        blinded = contribution.blinded
        return dleq_verify(group, (group.g, c_diff.c1, c_diff.c2),
                           (contribution.commitment, blinded.c1, blinded.c2), contribution.proof,
                           _pep_context(context, contribution.trustee_index))
    except (AttributeError, TypeError):
        return False


@dataclass(frozen=True)
class PepJudgement:
    """Publicly re-verifiable outcome of a plaintext equivalence test"""
    left: Ciphertext
    right: Ciphertext
    contributions: tuple
    combined: Ciphertext
    decryption: object
    equal: bool

    def to_dict(self, group):
        return {'left': group.ciphertext_hex(self.left), 'right': group.ciphertext_hex(self.right),
                'contributions': [c.to_dict(group) for c in self.contributions],
                'combined': group.ciphertext_hex(self.combined),
                'decryption': self.decryption.to_dict(group), 'equal': self.equal}

    @classmethod
    def from_dict(cls, group, d):
        from .threshold import DecryptionBundle
        return cls(group.ciphertext_from_hex(d['left']), group.ciphertext_from_hex(d['right']),
                   tuple(PepContribution.from_dict(group, c) for c in d['contributions']),
                   group.ciphertext_from_hex(d['combined']), DecryptionBundle.from_dict(group, d['decryption']),
                   bool(d['equal']))


def pep_judge(group, left, right, contributions, decryption, verification_keys, k, context):
    """
    Judge plaintext equivalence of `left` and `right`.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    left: mailballot.group.Ciphertext
    right: mailballot.group.Ciphertext
    contributions: list of PepContribution
        one per blinding trustee
    decryption: mailballot.threshold.DecryptionBundle
        threshold decryption of the combined blinded quotient
    verification_keys: dict
        trustee index -> public verification key
    k: int
        decryption threshold
    context: bytes

    Returns
    -------
    PepJudgement
        `equal` is True iff the blinded quotient decrypts to the identity.

    Raises
    ------
    CorruptContributionError
        if a contribution doesn't verify, or a trustee contributed twice.
    ValueError
        if the decryption bundle is not a valid decryption of the combined quotient.
    """
    from .threshold import verify_decryption

    if not contributions:
        raise ValueError("PEP needs at least one contribution")
    c_diff = ct_div(group, left, right)
    seen = set()
    combined = Ciphertext(1, 1)
    for contribution in contributions:
        if contribution.trustee_index in seen or not pep_verify_contribution(group, c_diff, contribution, context):
            raise CorruptContributionError(contribution.trustee_index)
        seen.add(contribution.trustee_index)
        combined = ct_mul(group, combined, contribution.blinded)
    if decryption.ciphertext != combined or not verify_decryption(group, decryption, verification_keys, k,
                                                                  context + b'|pep-decrypt'):
        raise ValueError("PEP decryption bundle does not verify")
    equal = decryption.plaintext == group.identity
    logger.debug('PEP verdict: %s' % ('equal' if equal else 'not equal'))
    return PepJudgement(left, right, tuple(contributions), combined, decryption, equal)


def pep_check(group, judgement, verification_keys, k, context):
    """re-verify a posted judgement; True if every proof verifies and the verdict is consistent"""
    try:
        rejudged = pep_judge(group, judgement.left, judgement.right, judgement.contributions,
                             judgement.decryption, verification_keys, k, context)
    except (ValueError, AttributeError, TypeError):
        return False
    return rejudged.equal == judgement.equal and rejudged.combined == judgement.combined
