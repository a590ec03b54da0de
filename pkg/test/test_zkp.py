import logging
from dataclasses import replace
import pytest
from mailballot.group import GroupProfile, Ciphertext, encrypt, ct_div
from mailballot.zkp import (FsTranscript, PokCiphertext, ChaumPedersenProof, CorruptContributionError, pok_prove,
                            pok_verify, cp_prove, cp_verify, enc_prove, enc_verify, pep_blind,
                            pep_verify_contribution)
from mailballot.utils import make_rng

logging.basicConfig()
logging.getLogger('mailballot').setLevel(logging.DEBUG)
logging.captureWarnings(True)

group = GroupProfile.generate('mailballot-test', p_bits=512, q_bits=160)
rng = make_rng(0, 'test_zkp')
sk = group.random_scalar(rng)
pk = group.exp_g(sk)
ctx = b'test|context'


def _pok_instance():
    m, r = rng.randrange(2 ** 16), group.random_scalar(rng)
    c = encrypt(group, pk, group.exp_g(m), r)
    return c, pok_prove(group, pk, c, m, r, ctx, rng)


def test_transcript_binds_context():
    a = FsTranscript(group, 'pok', b'one').absorb_elements(group.g).challenge()
    b = FsTranscript(group, 'pok', b'two').absorb_elements(group.g).challenge()
    c = FsTranscript(group, 'dleq-2', b'one').absorb_elements(group.g).challenge()
    assert len({a, b, c}) == 3
    assert a == FsTranscript(group, 'pok', b'one').absorb_elements(group.g).challenge()


def test_pok_honest():
    for _ in range(20):
        c, proof = _pok_instance()
        assert pok_verify(group, pk, c, proof, ctx)
        assert PokCiphertext.from_bytes(group, proof.to_bytes(group)) == proof


def test_pok_rejects_mutations():
    c, proof = _pok_instance()
    assert not pok_verify(group, pk, c, proof, ctx + b'x')
    assert not pok_verify(group, pk, Ciphertext(c.c1, c.c2 * group.g % group.p), proof, ctx)
    for field in ('z_m', 'z_r'):
        for delta in (1, 2, group.q - 1):
            bad = replace(proof, **{field: (getattr(proof, field) + delta) % group.q})
            assert not pok_verify(group, pk, c, bad, ctx)
    for field in ('a1', 'a2'):
        assert not pok_verify(group, pk, c, replace(proof, **{field: getattr(proof, field) * group.g % group.p}), ctx)
        assert not pok_verify(group, pk, c, replace(proof, **{field: group.p - 1}), ctx)
    assert not pok_verify(group, pk, c, replace(proof, z_m=group.q), ctx)
    assert not pok_verify(group, pk, c, None, ctx)


def test_pok_byte_flips_rejected():
    c, proof = _pok_instance()
    data = proof.to_bytes(group)
    for i in range(0, len(data), 7):
        flipped = data[:i] + bytes([data[i] ^ 0x01]) + data[i + 1:]
        try:
            bad = PokCiphertext.from_bytes(group, flipped)
        except ValueError:
            continue
        assert not pok_verify(group, pk, c, bad, ctx)


def test_chaum_pedersen():
    x = group.random_scalar(rng)
    h = group.hash_to_group('cp-test')
    proof = cp_prove(group, group.g, group.exp_g(x), h, group.exp(h, x), x, ctx, rng)
    assert cp_verify(group, group.g, group.exp_g(x), h, group.exp(h, x), proof, ctx)
    assert ChaumPedersenProof.from_dict(group, proof.to_dict(group)) == proof
    assert not cp_verify(group, group.g, group.exp_g(x), h, group.exp(h, x + 1), proof, ctx)
    assert not cp_verify(group, group.g, group.exp_g(x), h, group.exp(h, x), proof, ctx + b'x')
    bad = replace(proof, response=(proof.response + 1) % group.q)
    assert not cp_verify(group, group.g, group.exp_g(x), h, group.exp(h, x), bad, ctx)


def test_enc_proof():
    m, r = group.exp_g(7), group.random_scalar(rng)
    c = encrypt(group, pk, m, r)
    proof = enc_prove(group, pk, c, m, r, ctx, rng)
    assert enc_verify(group, pk, c, m, proof, ctx)
    assert not enc_verify(group, pk, c, group.exp_g(8), proof, ctx)


def test_pep_contribution():
    left = encrypt(group, pk, group.exp_g(3), group.random_scalar(rng))
    right = encrypt(group, pk, group.exp_g(3), group.random_scalar(rng))
    c_diff = ct_div(group, left, right)
    contribution = pep_blind(group, c_diff, group.random_scalar(rng), ctx, trustee_index=2, rng=rng)
    assert pep_verify_contribution(group, c_diff, contribution, ctx)
    assert not pep_verify_contribution(group, c_diff, contribution, ctx + b'x')
    assert not pep_verify_contribution(group, c_diff, replace(contribution, trustee_index=1), ctx)
    forged = Ciphertext(contribution.blinded.c1, contribution.blinded.c2 * group.g % group.p)
    assert not pep_verify_contribution(group, c_diff, replace(contribution, blinded=forged), ctx)


def test_pep_zero_blinding_rejected():
    left = encrypt(group, pk, group.exp_g(3), group.random_scalar(rng))
    right = encrypt(group, pk, group.exp_g(4), group.random_scalar(rng))
    c_diff = ct_div(group, left, right)
    contribution = pep_blind(group, c_diff, 0, ctx, rng=rng)
    assert contribution.blinded == Ciphertext(1, 1)
    assert not pep_verify_contribution(group, c_diff, contribution, ctx)


def test_corrupt_contribution_error():
    e = CorruptContributionError(3)
    assert e.trustee_index == 3
    assert isinstance(e, ValueError)


def _shift_element(x, d):
    return x * group.exp_g(d) % group.p


def _mutate_pok(c, proof, fuzz):
    """one random edit of the proof or of its statement"""
    d = group.random_scalar(fuzz)
    target = fuzz.choice(('a1', 'a2', 'z_m', 'z_r', 'c1', 'c2'))
    if target in ('a1', 'a2'):
        return c, replace(proof, **{target: _shift_element(getattr(proof, target), d)})
    if target in ('z_m', 'z_r'):
        return c, replace(proof, **{target: (getattr(proof, target) + d) % group.q})
    if target == 'c1':
        return Ciphertext(_shift_element(c.c1, d), c.c2), proof
    return Ciphertext(c.c1, _shift_element(c.c2, d)), proof


def test_pok_fuzz():
    fuzz = make_rng(1, 'test_zkp-pok-fuzz')
    instances = [_pok_instance() for _ in range(100)]
    assert all(pok_verify(group, pk, c, proof, ctx) for c, proof in instances)
    for i in range(1000):
        c, proof = _mutate_pok(*instances[i % len(instances)], fuzz)
        assert not pok_verify(group, pk, c, proof, ctx)


def _cp_instance(fuzz):
    x = group.random_scalar(fuzz)
    h = group.exp_g(group.random_scalar(fuzz))
    statement = (group.g, group.exp_g(x), h, group.exp(h, x))
    return statement, cp_prove(group, *statement, x, ctx, fuzz)


def _mutate_cp(statement, proof, fuzz):
    d = group.random_scalar(fuzz)
    target = fuzz.randrange(7)
    if target < 4:
        statement = list(statement)
        statement[target] = _shift_element(statement[target], d)
        return tuple(statement), proof
    if target < 6:
        announcements = list(proof.announcements)
        announcements[target - 4] = _shift_element(announcements[target - 4], d)
        return statement, replace(proof, announcements=tuple(announcements))
    return statement, replace(proof, response=(proof.response + d) % group.q)


def test_chaum_pedersen_fuzz():
    fuzz = make_rng(2, 'test_zkp-cp-fuzz')
    instances = [_cp_instance(fuzz) for _ in range(100)]
    assert all(cp_verify(group, *statement, proof, ctx) for statement, proof in instances)
    for i in range(1000):
        statement, proof = _mutate_cp(*instances[i % len(instances)], fuzz)
        assert not cp_verify(group, *statement, proof, ctx)


def _pep_instance(fuzz):
    left = encrypt(group, pk, group.exp_g(fuzz.randrange(16)), group.random_scalar(fuzz))
    right = encrypt(group, pk, group.exp_g(fuzz.randrange(16)), group.random_scalar(fuzz))
    c_diff = ct_div(group, left, right)
    index = fuzz.randrange(1, 4)
    return c_diff, pep_blind(group, c_diff, group.random_scalar(fuzz), ctx, trustee_index=index, rng=fuzz)


def _mutate_pep(c_diff, contribution, fuzz):
    d = group.random_scalar(fuzz)
    target = fuzz.choice(('c_diff', 'commitment', 'blinded', 'announcement', 'response', 'trustee_index'))
    if target == 'c_diff':
        return Ciphertext(c_diff.c1, _shift_element(c_diff.c2, d)), contribution
    if target == 'commitment':
        return c_diff, replace(contribution, commitment=_shift_element(contribution.commitment, d))
    if target == 'blinded':
        blinded = contribution.blinded
        return c_diff, replace(contribution, blinded=Ciphertext(_shift_element(blinded.c1, d), blinded.c2))
    proof = contribution.proof
    if target == 'announcement':
        announcements = list(proof.announcements)
        slot = fuzz.randrange(len(announcements))
        announcements[slot] = _shift_element(announcements[slot], d)
        return c_diff, replace(contribution, proof=replace(proof, announcements=tuple(announcements)))
    if target == 'response':
        return c_diff, replace(contribution, proof=replace(proof, response=(proof.response + d) % group.q))
    return c_diff, replace(contribution, trustee_index=contribution.trustee_index % 3 + 1)


def test_pep_contribution_fuzz():
    fuzz = make_rng(3, 'test_zkp-pep-fuzz')
    instances = [_pep_instance(fuzz) for _ in range(100)]
    assert all(pep_verify_contribution(group, c_diff, contribution, ctx) for c_diff, contribution in instances)
    for i in range(1000):
        c_diff, contribution = _mutate_pep(*instances[i % len(instances)], fuzz)
        assert not pep_verify_contribution(group, c_diff, contribution, ctx)
