import logging
from dataclasses import replace
import pytest
from mailballot.group import GroupProfile, Ciphertext, encrypt, decrypt, ct_div
from mailballot.zkp import CorruptContributionError, pep_blind, pep_judge
from mailballot.threshold import (Dealing, DkgAbortError, InsufficientPartialsError, InvalidPartialError,
                                  DecryptionBundle, DkgTranscript, TrusteeShare, deal, dkg_finish, dkg_run,
                                  partial_decrypt, combine, threshold_decrypt, verify_decryption,
                                  lagrange_coefficients, pep_run)
from mailballot.utils import make_rng

logging.basicConfig()
logging.getLogger('mailballot').setLevel(logging.DEBUG)
logging.captureWarnings(True)

group = GroupProfile.generate('mailballot-test', p_bits=512, q_bits=160)
rng = make_rng(0, 'test_threshold')
pk, shares, transcript = dkg_run(group, 3, 2, rng=rng)
vks = transcript.verification_keys(group)
ctx = b'test|threshold'

toy = GroupProfile.toy(1009)
toy_rng = make_rng(2, 'test_threshold-toy')
toy_pk, toy_shares, toy_transcript = dkg_run(toy, 1, 1, rng=toy_rng)
toy_vks = toy_transcript.verification_keys(toy)


def test_dkg():
    assert pk == transcript.public_key(group)
    assert len(shares) == 3
    assert all(share.check(group) for share in shares)
    assert all(vks[share.trustee_index] == group.exp_g(share.secret_share) for share in shares)
    assert DkgTranscript.from_dict(group, transcript.to_dict(group)) == transcript
    assert TrusteeShare.from_dict(group, shares[0].to_dict(group)) == shares[0]


def test_dkg_invalid_threshold():
    with pytest.raises(ValueError):
        dkg_run(group, 2, 3, rng=rng)
    with pytest.raises(ValueError):
        dkg_run(group, 2, 0, rng=rng)


def test_dkg_aborts_on_bad_share():
    dealings = [deal(group, i, 3, 2, rng) for i in (1, 2, 3)]
    bad = dict(dealings[1].shares)
    bad[3] = (bad[3] + 1) % group.q
    dealings[1] = Dealing(2, dealings[1].commitments, bad)
    with pytest.raises(DkgAbortError) as excinfo:
        dkg_finish(group, 3, 2, dealings)
    assert excinfo.value.dealer == 2
    assert excinfo.value.recipient == 3


def test_lagrange():
    coefficients = lagrange_coefficients([1, 2], group.q)
    # f(0) = 2 f(1) - f(2) for a line
    assert coefficients == {1: 2, 2: group.q - 1}


@pytest.mark.parametrize('subset', [(0, 1), (0, 2), (1, 2), (0, 1, 2)])
def test_any_k_subset_decrypts(subset):
    m = group.exp_g(99)
    c = encrypt(group, pk, m, group.random_scalar(rng))
    partials = [partial_decrypt(group, shares[i], c, ctx, rng) for i in subset]
    plaintext, bundle = combine(group, c, partials, vks, 2, ctx)
    assert plaintext == m
    assert verify_decryption(group, bundle, vks, 2, ctx)
    assert DecryptionBundle.from_dict(group, bundle.to_dict(group)) == bundle


def test_insufficient_partials():
    c = encrypt(group, pk, group.exp_g(1), group.random_scalar(rng))
    partial = partial_decrypt(group, shares[0], c, ctx, rng)
    with pytest.raises(InsufficientPartialsError):
        combine(group, c, [partial], vks, 2, ctx)
    with pytest.raises(InsufficientPartialsError):
        combine(group, c, [partial, partial], vks, 2, ctx)


def test_invalid_partial():
    c = encrypt(group, pk, group.exp_g(1), group.random_scalar(rng))
    good = partial_decrypt(group, shares[0], c, ctx, rng)
    bad = replace(partial_decrypt(group, shares[1], c, ctx, rng),
                  share_element=group.exp_g(5))
    with pytest.raises(InvalidPartialError) as excinfo:
        combine(group, c, [good, bad], vks, 2, ctx)
    assert excinfo.value.trustee_index == 2
    # a partial for another ciphertext
    other = encrypt(group, pk, group.exp_g(1), group.random_scalar(rng))
    with pytest.raises(InvalidPartialError):
        combine(group, c, [good, partial_decrypt(group, shares[1], other, ctx, rng)], vks, 2, ctx)


def test_bundle_mutations_rejected():
    c = encrypt(group, pk, group.exp_g(4), group.random_scalar(rng))
    _, bundle = threshold_decrypt(group, c, shares, vks, 2, ctx, rng)
    assert verify_decryption(group, bundle, vks, 2, ctx)
    assert not verify_decryption(group, bundle, vks, 2, ctx + b'x')
    assert not verify_decryption(group, replace(bundle, plaintext=group.exp_g(5)), vks, 2, ctx)
    assert not verify_decryption(group, replace(bundle, partials=bundle.partials[:1]), vks, 2, ctx)
    assert not verify_decryption(group, replace(bundle, partials=bundle.partials[:1] * 2), vks, 2, ctx)
    other = encrypt(group, pk, group.exp_g(4), group.random_scalar(rng))
    assert not verify_decryption(group, replace(bundle, ciphertext=other), vks, 2, ctx)


def test_pep_run():
    m = group.exp_g(17)
    left = encrypt(group, pk, m, group.random_scalar(rng))
    right = encrypt(group, pk, m, group.random_scalar(rng))
    judgement = pep_run(group, left, right, shares, vks, 2, ctx, rng)
    assert judgement.equal
    assert len(judgement.contributions) == 3
    different = encrypt(group, pk, group.exp_g(18), group.random_scalar(rng))
    assert not pep_run(group, left, different, shares, vks, 2, ctx, rng).equal


def test_dkg_aborts_on_wrong_commitment_count():
    dealings = [deal(group, i, 3, 2, rng) for i in (1, 2, 3)]
    dealings[2] = Dealing(3, dealings[2].commitments[:1], dealings[2].shares)
    with pytest.raises(DkgAbortError) as excinfo:
        dkg_finish(group, 3, 2, dealings)
    assert excinfo.value.dealer == 3
    assert excinfo.value.recipient is None
    assert 'commitments' in str(excinfo.value)


def test_lagrange_toy_oracle():
    # f(x) = 4 + 7x mod 11: f(1) = 0, f(3) = 3
    coefficients = lagrange_coefficients([1, 3], 11)
    assert coefficients == {1: 7, 3: 5}
    assert (coefficients[1] * 0 + coefficients[3] * 3) % 11 == 4


def test_single_trustee_matches_single_key():
    single_pk, single_shares, single_transcript = dkg_run(group, 1, 1, rng=rng)
    single_vks = single_transcript.verification_keys(group)
    for v in (0, 1, 99):
        c = encrypt(group, single_pk, group.exp_g(v), group.random_scalar(rng))
        plaintext, bundle = threshold_decrypt(group, c, single_shares, single_vks, 1, ctx, rng)
        assert plaintext == decrypt(group, single_shares[0].secret_share, c) == group.exp_g(v)
        assert verify_decryption(group, bundle, single_vks, 1, ctx)


def _mutate_bundle(bundle, fuzz):
    d = group.random_scalar(fuzz)
    shift = group.exp_g(d)
    target = fuzz.choice(('plaintext', 'c1', 'c2', 'share', 'announcement', 'response', 'trustee'))
    if target == 'plaintext':
        return replace(bundle, plaintext=bundle.plaintext * shift % group.p)
    if target in ('c1', 'c2'):
        c = bundle.ciphertext
        c = Ciphertext(c.c1 * shift % group.p, c.c2) if target == 'c1' else Ciphertext(c.c1, c.c2 * shift % group.p)
        return replace(bundle, ciphertext=c)
    partials = list(bundle.partials)
    slot = fuzz.randrange(len(partials))
    partial = partials[slot]
    if target == 'share':
        partial = replace(partial, share_element=partial.share_element * shift % group.p)
    elif target == 'announcement':
        announcements = list(partial.proof.announcements)
        a = fuzz.randrange(len(announcements))
        announcements[a] = announcements[a] * shift % group.p
        partial = replace(partial, proof=replace(partial.proof, announcements=tuple(announcements)))
    elif target == 'response':
        partial = replace(partial, proof=replace(partial.proof, response=(partial.proof.response + d) % group.q))
    else:
        # trustee 3 never takes part in threshold_decrypt with k=2
        partial = replace(partial, trustee_index=3)
    partials[slot] = partial
    return replace(bundle, partials=tuple(partials))


def test_bundle_fuzz():
    fuzz = make_rng(1, 'test_threshold-bundle-fuzz')
    bundles = []
    for _ in range(100):
        c = encrypt(group, pk, group.exp_g(fuzz.randrange(1000)), group.random_scalar(fuzz))
        bundles.append(threshold_decrypt(group, c, shares, vks, 2, ctx, fuzz)[1])
    assert all(verify_decryption(group, bundle, vks, 2, ctx) for bundle in bundles)
    for i in range(1000):
        assert not verify_decryption(group, _mutate_bundle(bundles[i % len(bundles)], fuzz), vks, 2, ctx)


@pytest.mark.parametrize('m1', range(16))
def test_pep_exhaustive_toy(m1):
    # a single nonzero blinding exponent keeps the verdict exact in a group of prime order
    left = encrypt(toy, toy_pk, toy.exp_g(m1), toy.random_scalar(toy_rng))
    for m2 in range(16):
        right = encrypt(toy, toy_pk, toy.exp_g(m2), toy.random_scalar(toy_rng))
        judgement = pep_run(toy, left, right, toy_shares, toy_vks, 1, ctx, toy_rng)
        assert judgement.equal == (m1 == m2)


def test_pep_judge_names_corrupt_trustee():
    left = encrypt(group, pk, group.exp_g(5), group.random_scalar(rng))
    right = encrypt(group, pk, group.exp_g(5), group.random_scalar(rng))
    judgement = pep_run(group, left, right, shares, vks, 2, ctx, rng)
    contributions = list(judgement.contributions)
    bogus = contributions[1]
    contributions[1] = replace(bogus, proof=replace(bogus.proof, response=(bogus.proof.response + 1) % group.q))
    with pytest.raises(CorruptContributionError) as excinfo:
        pep_judge(group, left, right, contributions, judgement.decryption, vks, 2, ctx)
    assert excinfo.value.trustee_index == bogus.trustee_index == 2
    # a contribution blinded with another exponent than its commitment
    c_diff = ct_div(group, left, right)
    honest = pep_blind(group, c_diff, 7, ctx, trustee_index=3, rng=rng)
    liar = replace(honest, commitment=group.exp_g(8))
    with pytest.raises(CorruptContributionError) as excinfo:
        pep_judge(group, left, right, [contributions[0], liar], judgement.decryption, vks, 2, ctx)
    assert excinfo.value.trustee_index == 3
