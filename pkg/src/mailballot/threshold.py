"""
k-of-n Pedersen distributed key generation and verifiable threshold decryption.

Each trustee deals a random degree k-1 polynomial, publishing commitments `g^coeff`; shares are checked
against the commitments and the joint key is the product of the constant term commitments.
The complaint round is collapsed: any bad share aborts the key generation.
"""
import logging
from dataclasses import dataclass
from .group import Ciphertext, ct_div, ct_mul
from .zkp import cp_prove, cp_verify, ChaumPedersenProof, pep_blind, pep_judge
from .utils import make_rng, timing

logger = logging.getLogger('mailballot.threshold')
logger.addHandler(logging.NullHandler())


class DkgAbortError(RuntimeError):
    """a dealer distributed a share inconsistent with its commitments"""

    def __init__(self, dealer, recipient=None, reason=None):
        self.dealer = dealer
        self.recipient = recipient
        if reason is None:
            reason = "share to trustee %d fails its commitment check" % recipient
        super().__init__("DKG aborted: dealer %d: %s" % (dealer, reason))


class InsufficientPartialsError(ValueError):
    pass


class InvalidPartialError(ValueError):
    """a partial decryption proof does not verify"""

    def __init__(self, trustee_index):
        self.trustee_index = trustee_index
        super().__init__("invalid partial decryption from trustee %s" % trustee_index)


@dataclass(frozen=True)
class Dealing:
    """one dealer's contribution: coefficient commitments (public) and shares for each trustee (private)"""
    dealer: int
    commitments: tuple
    shares: dict


def deal(group, dealer, n, k, rng=None):
    """
    Parameters
    ----------
    group: mailballot.group.GroupProfile
    dealer: int
        dealer trustee index in [1, n]
    n: int
    k: int
    rng: random.Random, optional

    Returns
    -------
    Dealing
    """
    rng = rng or make_rng()
    coefficients = [group.random_scalar(rng) for _ in range(k)]
    commitments = tuple(group.exp_g(a) for a in coefficients)
    shares = {}
    for j in range(1, n + 1):
        shares[j] = sum(a * pow(j, l, group.q) for l, a in enumerate(coefficients)) % group.q
    return Dealing(dealer, commitments, shares)


def _eval_commitments(group, commitments, j):
    """`g^f(j)` from the commitments `g^a_l` of the coefficients of f"""
    result = 1
    for l, c in enumerate(commitments):
        result = result * group.exp(c, pow(j, l, group.q)) % group.p
    return result


@dataclass(frozen=True)
class DkgTranscript:
    """public part of the key generation, posted on the board"""
    n: int
    k: int
    commitments: tuple

    def combined_commitments(self, group):
        return tuple(group.mul(*[dealer[l] for dealer in self.commitments]) for l in range(self.k))

    def public_key(self, group):
        return self.combined_commitments(group)[0]

    def verification_keys(self, group):
        """trustee index -> `g^secret_share`"""
        combined = self.combined_commitments(group)
        return {j: _eval_commitments(group, combined, j) for j in range(1, self.n + 1)}

    def to_dict(self, group):
        return {'n': self.n, 'k': self.k,
                'commitments': [[group.element_hex(c) for c in dealer] for dealer in self.commitments]}

    @classmethod
    def from_dict(cls, group, d):
        return cls(int(d['n']), int(d['k']),
                   tuple(tuple(group.element_from_hex(c) for c in dealer) for dealer in d['commitments']))


@dataclass(frozen=True)
class TrusteeShare:
    """
    A trustee's secret key share; lives in a local key file, never posted.
    """
    trustee_index: int
    secret_share: int
    public_verification_elements: tuple

    def verification_key(self, group):
        return _eval_commitments(group, self.public_verification_elements, self.trustee_index)

    def check(self, group):
        """True if `g^secret_share` matches the commitment polynomial at `trustee_index`"""
        return group.exp_g(self.secret_share) == self.verification_key(group)

    def to_dict(self, group):
        return {'trustee': self.trustee_index, 'secret_share': group.scalar_hex(self.secret_share),
                'verification_elements': [group.element_hex(c) for c in self.public_verification_elements]}

    @classmethod
    def from_dict(cls, group, d):
        return cls(int(d['trustee']), group.scalar_from_hex(d['secret_share']),
                   tuple(group.element_from_hex(c) for c in d['verification_elements']))


def dkg_finish(group, n, k, dealings):
    """
    Check every dealt share against its dealer commitments and assemble the joint key.

    Returns
    -------
    tuple
        (pk, list of TrusteeShare, DkgTranscript)

    Raises
    ------
    DkgAbortError
        on the first inconsistent share.
    """
    dealings = sorted(dealings, key=lambda d: d.dealer)
    if [d.dealer for d in dealings] != list(range(1, n + 1)):
        raise ValueError("Expected one dealing per trustee 1..%d" % n)
    for dealing in dealings:
        if len(dealing.commitments) != k:
            raise DkgAbortError(dealing.dealer,
                                reason="%d commitments, expected %d" % (len(dealing.commitments), k))
        for j in range(1, n + 1):
            if group.exp_g(dealing.shares[j]) != _eval_commitments(group, dealing.commitments, j):
                raise DkgAbortError(dealing.dealer, j)
    transcript = DkgTranscript(n, k, tuple(d.commitments for d in dealings))
    combined = transcript.combined_commitments(group)
    shares = [TrusteeShare(j, sum(d.shares[j] for d in dealings) % group.q, combined) for j in range(1, n + 1)]
    return transcript.public_key(group), shares, transcript


@timing
def dkg_run(group, n, k, rng=None):
    """
    Run the whole key generation with local trustees.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    n: int
        trustee count
    k: int
        decryption threshold, 1 <= k <= n
    rng: random.Random, optional

    Returns
    -------
    tuple
        (pk, list of n TrusteeShare, DkgTranscript)
    """
    if not 1 <= k <= n:
        raise ValueError("Invalid threshold: need 1 <= k <= n, got k=%s n=%s" % (k, n))
    rng = rng or make_rng()
    dealings = [deal(group, i, n, k, rng) for i in range(1, n + 1)]
    return dkg_finish(group, n, k, dealings)


@dataclass(frozen=True)
class PartialDecryption:
    trustee_index: int
    share_element: int
    proof: ChaumPedersenProof

    def to_dict(self, group):
        return {'trustee': self.trustee_index, 'share': group.element_hex(self.share_element),
                'proof': self.proof.to_dict(group)}

    @classmethod
    def from_dict(cls, group, d):
        return cls(int(d['trustee']), group.element_from_hex(d['share']),
                   ChaumPedersenProof.from_dict(group, d['proof']))


def _partial_context(group, c, context, trustee_index):
    return context + b'|partial|%d|' % trustee_index + group.encode_ciphertext(c)


def partial_decrypt(group, share, c, context=b'', rng=None):
    """
    Parameters
    ----------
    group: mailballot.group.GroupProfile
    share: TrusteeShare
    c: mailballot.group.Ciphertext
    context: bytes
    rng: random.Random, optional

    Returns
    -------
    PartialDecryption
        `c1^secret_share` with a proof bound to `c`
    """
    element = group.exp(c.c1, share.secret_share)
    proof = cp_prove(group, group.g, group.exp_g(share.secret_share), c.c1, element, share.secret_share,
                     _partial_context(group, c, context, share.trustee_index), rng=rng)
    return PartialDecryption(share.trustee_index, element, proof)


def verify_partial(group, partial, c, verification_key, context=b''):
    try:
        return cp_verify(group, group.g, verification_key, c.c1, partial.share_element, partial.proof,
                         _partial_context(group, c, context, partial.trustee_index))
    except (AttributeError, TypeError, ValueError, OverflowError):
        return False


def lagrange_coefficients(indices, q):
    """Lagrange coefficients at 0, mod q, for the given trustee indices"""
    coefficients = {}
    for j in indices:
        num, den = 1, 1
        for m in indices:
            if m != j:
                num = num * m % q
                den = den * (m - j) % q
        coefficients[j] = num * pow(den, -1, q) % q
    return coefficients


@dataclass(frozen=True)
class DecryptionBundle:
    """verifiable decryption: the ciphertext, the partials used, and the plaintext element"""
    ciphertext: Ciphertext
    partials: tuple
    plaintext: int

    def to_dict(self, group):
        return {'ciphertext': group.ciphertext_hex(self.ciphertext),
                'partials': [p.to_dict(group) for p in self.partials],
                'plaintext': group.element_hex(self.plaintext)}

    @classmethod
    def from_dict(cls, group, d):
        return cls(group.ciphertext_from_hex(d['ciphertext']),
                   tuple(PartialDecryption.from_dict(group, p) for p in d['partials']),
                   group.element_from_hex(d['plaintext']))


def _interpolate(group, c, partials):
    coefficients = lagrange_coefficients([p.trustee_index for p in partials], group.q)
    c1_sk = group.mul(*[group.exp(p.share_element, coefficients[p.trustee_index]) for p in partials])
    return group.div(c.c2, c1_sk)


def combine(group, c, partials, verification_keys, k, context=b''):
    """
    Combine partial decryptions by Lagrange interpolation in the exponent.

    Parameters
    ----------
    group: mailballot.group.GroupProfile
    c: mailballot.group.Ciphertext
    partials: list of PartialDecryption
    verification_keys: dict
        trustee index -> `g^secret_share`
    k: int
        threshold
    context: bytes

    Returns
    -------
    tuple
        (plaintext element, DecryptionBundle)

    Raises
    ------
    InvalidPartialError
        naming the first trustee whose partial doesn't verify
    InsufficientPartialsError
        if less than k distinct partials are given
    """
    distinct = {}
    for partial in partials:
        if partial.trustee_index not in verification_keys:
            raise InvalidPartialError(partial.trustee_index)
        if not verify_partial(group, partial, c, verification_keys[partial.trustee_index], context):
            raise InvalidPartialError(partial.trustee_index)
        distinct.setdefault(partial.trustee_index, partial)
    if len(distinct) < k:
        raise InsufficientPartialsError("Need %d distinct partials, got %d" % (k, len(distinct)))
    used = tuple(distinct[j] for j in sorted(distinct))
    plaintext = _interpolate(group, c, used)
    return plaintext, DecryptionBundle(c, used, plaintext)


def verify_decryption(group, bundle, verification_keys, k, context=b''):
    """True if `bundle` re-verifies standalone"""
    try:
        plaintext, _ = combine(group, bundle.ciphertext, bundle.partials, verification_keys, k, context)
    except (ValueError, AttributeError, TypeError):
        return False
    return plaintext == bundle.plaintext and len(bundle.partials) == len({p.trustee_index for p in bundle.partials})


def threshold_decrypt(group, c, shares, verification_keys, k, context=b'', rng=None):
    """
    Decrypt with local trustee shares (the first k of them).

    Returns
    -------
    tuple
        (plaintext element, DecryptionBundle)
    """
    shares = sorted(shares, key=lambda s: s.trustee_index)[:k]
    partials = [partial_decrypt(group, share, c, context, rng=rng) for share in shares]
    return combine(group, c, partials, verification_keys, k, context)


def pep_run(group, left, right, shares, verification_keys, k, context, rng=None):
    """
    Full plaintext equivalence test run by the local trustees holding `shares`.

    Every share holder blinds the quotient with a fresh secret exponent, then the combined blinded
    quotient is threshold decrypted.

    Returns
    -------
    mailballot.zkp.PepJudgement
    """
    rng = rng or make_rng()
    c_diff = ct_div(group, left, right)
    contributions = [pep_blind(group, c_diff, group.random_scalar(rng), context, trustee_index=share.trustee_index,
                               rng=rng) for share in sorted(shares, key=lambda s: s.trustee_index)]
    combined = Ciphertext(1, 1)
    for contribution in contributions:
        combined = ct_mul(group, combined, contribution.blinded)
    _, bundle = threshold_decrypt(group, combined, shares, verification_keys, k, context + b'|pep-decrypt', rng=rng)
    return pep_judge(group, left, right, contributions, bundle, verification_keys, k, context)
