"""Scheme core: setup/keygen/encrypt/token/decrypt round trips and randomness."""

import random

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from tpe import core, plans
from tpe.core import (
    Ciphertext,
    Decision,
    InvalidParameter,
    Params,
    ParamsMismatch,
    SecretKey,
    Token,
    ciphertext_from_bytes,
    ciphertext_to_bytes,
    decrypt,
    decrypt_with_sign,
    decryption_value,
    encrypt,
    encrypt_explicit,
    key_from_bytes,
    key_to_bytes,
    keygen,
    plan_from_params,
    setup,
    token_finish,
    token_from_bytes,
    token_gen,
    token_gen_explicit,
    token_precompute,
    token_to_bytes,
)
from tpe.exact import (
    DimensionMismatch,
    Matrix,
    identity,
    mat_mul,
    matrix_to_bytes,
    rand_nonsingular,
    rand_unit_lower_triangular,
)
from tpe.plans import (
    MetricKind,
    SignRule,
    oracle_euclid2,
    oracle_hamming,
    oracle_inner,
    plan_euclidean,
    plan_hamming,
    plan_inner_product,
)


def small_params(n=3, theta=5, kind=plans.INNER_PRODUCT, rb=16):
    return setup(n, theta, kind, key_bitwidth=8, rand_bitwidth=rb)


def round_trip(metric, n, x, y, theta, rng, key_bitwidth=8):
    params = setup(n, theta, int(metric), key_bitwidth=key_bitwidth, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    ct = encrypt(sk, x, plan, rng)
    tok = token_gen(sk, y, plan, rng)
    return decrypt(ct, tok, plan.accept_when).accept


# -- setup -----------------------------------------------------------------------


def test_setup_pads():
    assert setup(4, 5, plans.INNER_PRODUCT).pad == 7
    assert setup(640, 10, plans.EUCLIDEAN_SQUARED).pad == 645
    assert setup(1, 0, plans.INNER_PRODUCT).pad == 4
    assert setup(8, 3, plans.HAMMING).pad == 11


def test_setup_rejects_bad_parameters():
    with pytest.raises(InvalidParameter):
        setup(0, 1, plans.INNER_PRODUCT)
    with pytest.raises(InvalidParameter):
        setup(4, 1, 99)
    with pytest.raises(InvalidParameter):
        setup(4, 1, plans.INNER_PRODUCT, key_bitwidth=4)
    with pytest.raises(InvalidParameter):
        setup(4, -1, plans.EUCLIDEAN_SQUARED)


def test_params_digest_separates_setups():
    a = setup(4, 5, plans.INNER_PRODUCT)
    assert a.digest() == setup(4, 5, plans.INNER_PRODUCT).digest()
    assert a.digest() != setup(4, 6, plans.INNER_PRODUCT).digest()
    assert a.digest() != setup(5, 5, plans.INNER_PRODUCT).digest()
    assert a.digest() != setup(4, 5, plans.HAMMING).digest()
    assert len(a.digest()) == 32


# -- keygen -----------------------------------------------------------------------


def test_keygen_inverse_law():
    params = small_params()
    sk = keygen(params, random.Random(1))
    d = params.pad
    assert mat_mul(sk.m1, sk.m1_inv) == identity(d)
    assert mat_mul(sk.m2, sk.m2_inv) == identity(d)


def test_keygen_seed_sensitivity():
    params = small_params()
    a = keygen(params, random.Random(1))
    b = keygen(params, random.Random(2))
    assert a.m1 != b.m1
    assert a.m2 != b.m2


def test_keygen_perm_is_bijection():
    params = small_params(n=4)  # pad 7
    sk = keygen(params, random.Random(3))
    assert sorted(sk.perm.mapping) == list(range(7))


# -- encrypt ------------------------------------------------------------------------


def test_encrypt_zero_vector_accepts_under_positive_threshold():
    rng = random.Random(5)
    params = setup(3, 1, plans.INNER_PRODUCT, key_bitwidth=8, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    ct = encrypt(sk, [0, 0, 0], plan, rng)
    for _ in range(5):
        y = [rng.randint(-50, 50) for _ in range(3)]
        tok = token_gen(sk, y, plan, rng)
        assert decrypt(ct, tok, plan.accept_when).accept  # 0 <= 1 regardless of y


def test_encrypt_same_template_different_seeds_differs():
    params = small_params()
    sk = keygen(params, random.Random(7))
    plan = plan_from_params(params)
    a = encrypt(sk, [1, 2, 3], plan, random.Random(100))
    b = encrypt(sk, [1, 2, 3], plan, random.Random(200))
    assert a.c != b.c


def test_encrypt_rejects_wrong_length():
    params = small_params()
    sk = keygen(params, random.Random(7))
    with pytest.raises(DimensionMismatch):
        encrypt(sk, [1, 2], plan_from_params(params), random.Random(0))


def test_encrypt_rejects_mismatched_plan():
    params = small_params()
    sk = keygen(params, random.Random(7))
    with pytest.raises(ParamsMismatch):
        encrypt(sk, [1, 1, 1], plan_hamming(1, 3), random.Random(0))


def test_encrypt_rejects_nonpositive_scale():
    params = small_params()
    sk = keygen(params, random.Random(7))
    mask = rand_unit_lower_triangular(params.pad, 8, random.Random(1))
    with pytest.raises(InvalidParameter):
        encrypt_explicit(sk, [1, 2, 3], plan_from_params(params), 0, 0, mask)


def test_encrypt_at_fingercode_working_size():
    # inverses are not touched by encryption, so the fixture skips computing
    # them; full keygen at pad 645 costs minutes in exact arithmetic
    rng = random.Random(11)
    params = setup(640, 10, plans.EUCLIDEAN_SQUARED, key_bitwidth=8, rand_bitwidth=8)
    d = params.pad
    sk = SecretKey(
        m1=rand_nonsingular(d, 8, rng),
        m2=rand_nonsingular(d, 8, rng),
        m1_inv=identity(d),
        m2_inv=identity(d),
        perm=core.rand_permutation(d, rng),
        params=params,
    )
    x = [rng.randint(0, 255) for _ in range(640)]
    ct = encrypt(sk, x, plan_from_params(params), rng)
    assert ct.c.shape == (645, 645)


# -- token generation -----------------------------------------------------------------


def test_token_two_draws_differ():
    params = small_params()
    sk = keygen(params, random.Random(13))
    plan = plan_from_params(params)
    a = token_gen(sk, [1, 1, 1], plan, random.Random(1))
    b = token_gen(sk, [1, 1, 1], plan, random.Random(2))
    assert a.t != b.t


def test_token_online_offline_equals_direct():
    params = small_params()
    sk = keygen(params, random.Random(17))
    plan = plan_from_params(params)
    mask = rand_unit_lower_triangular(params.pad, 16, random.Random(3))
    direct = token_gen_explicit(sk, [4, 5, 6], plan, 9, -7, mask)
    pre = core.TokenPrecomp(p=mat_mul(mask, sk.m1_inv), params_digest=params.digest())
    split = core._token_finish_explicit(sk, [4, 5, 6], plan, pre, 9, -7)
    assert direct.t == split.t


def test_token_precompute_wrong_key_digest_rejected():
    sk_a = keygen(small_params(), random.Random(19))
    params_b = small_params(theta=6)
    sk_b = keygen(params_b, random.Random(23))
    pre = token_precompute(sk_a, random.Random(1))
    with pytest.raises(ParamsMismatch):
        token_finish(sk_b, [1, 2, 3], plan_from_params(params_b), pre, random.Random(2))


# -- decrypt -----------------------------------------------------------------------------


def test_decrypt_reject_then_boundary_accept():
    rng = random.Random(29)
    assert round_trip(MetricKind.INNER_PRODUCT, 3, [1, 2, 3], [1, 1, 1], 5, rng) is False
    assert round_trip(MetricKind.INNER_PRODUCT, 3, [1, 2, 3], [1, 1, 1], 6, rng) is True


def test_decrypt_zero_template_zero_threshold():
    rng = random.Random(31)
    y = [rng.randint(-9, 9) for _ in range(4)]
    assert round_trip(MetricKind.INNER_PRODUCT, 4, [0, 0, 0, 0], y, 0, rng) is True


def test_decrypt_boundary_value_is_exactly_zero():
    rng = random.Random(37)
    params = setup(3, 6, plans.INNER_PRODUCT, key_bitwidth=8, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    ct = encrypt(sk, [1, 2, 3], plan, rng)
    tok = token_gen(sk, [1, 1, 1], plan, rng)
    assert decryption_value(ct, tok) == 0
    d = decrypt_with_sign(ct, tok, plan.accept_when)
    assert d.accept and d.raw_sign == 0


def test_decrypt_params_mismatch():
    rng = random.Random(41)
    pa = small_params(theta=5)
    pb = small_params(theta=6)
    ska, skb = keygen(pa, rng), keygen(pb, rng)
    ct = encrypt(ska, [1, 2, 3], plan_from_params(pa), rng)
    tok = token_gen(skb, [1, 1, 1], plan_from_params(pb), rng)
    with pytest.raises(ParamsMismatch):
        decrypt(ct, tok, SignRule.NONPOSITIVE)


def test_production_decision_carries_no_sign():
    rng = random.Random(43)
    params = small_params()
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    d = decrypt(encrypt(sk, [1, 2, 3], plan, rng), token_gen(sk, [9, 9, 9], plan, rng), plan.accept_when)
    assert d.raw_sign is None


# -- intermediate structure and randomness taxonomy ------------------------------------


def pinned_instance(rng, scale_x, scale_y, pad_x=3, pad_y=-4):
    params = setup(4, 7, plans.INNER_PRODUCT, key_bitwidth=8, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    x = [rng.randint(-20, 20) for _ in range(4)]
    y = [rng.randint(-20, 20) for _ in range(4)]
    mask_x = rand_unit_lower_triangular(params.pad, 16, rng)
    mask_y = rand_unit_lower_triangular(params.pad, 16, rng)
    ct = encrypt_explicit(sk, x, plan, scale_x, pad_x, mask_x)
    tok = token_gen_explicit(sk, y, plan, scale_y, pad_y, mask_y)
    return sk, plan, x, y, ct, tok


def test_intermediate_is_scaled_comparison():
    rng = random.Random(47)
    for _ in range(10):
        a, b = rng.randint(1, 1 << 16), rng.randint(1, 1 << 16)
        sk, plan, x, y, ct, tok = pinned_instance(rng, b, a)
        value = decryption_value(ct, tok)
        assert value == a * b * (oracle_inner(x, y) - 7)
        assert value / (a * b) == oracle_inner(x, y) - 7


def test_pad_and_mask_randomness_cancels():
    # hold both scale factors fixed; vary pads and masks; the value is identical
    rng = random.Random(53)
    params = setup(4, 7, plans.INNER_PRODUCT, key_bitwidth=8, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    x = [3, -1, 4, 1]
    y = [2, 7, 1, -8]
    values = set()
    for _ in range(8):
        ct = encrypt_explicit(
            sk, x, plan, 6, rng.randint(-(1 << 16), 1 << 16),
            rand_unit_lower_triangular(params.pad, 16, rng),
        )
        tok = token_gen_explicit(
            sk, y, plan, 11, rng.randint(-(1 << 16), 1 << 16),
            rand_unit_lower_triangular(params.pad, 16, rng),
        )
        values.add(decryption_value(ct, tok))
    assert values == {6 * 11 * (oracle_inner(x, y) - 7)}


def test_scale_randomness_persists_in_magnitude():
    rng = random.Random(59)
    params = setup(4, 7, plans.INNER_PRODUCT, key_bitwidth=8, rand_bitwidth=16)
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    x, y = [5, 0, 2, 1], [3, 3, 3, 3]
    assert oracle_inner(x, y) != 7
    magnitudes, signs = set(), set()
    for _ in range(10):
        ct = encrypt(sk, x, plan, rng)
        tok = token_gen(sk, y, plan, rng)
        v = decryption_value(ct, tok)
        magnitudes.add(abs(v))
        signs.add(v > 0)
    assert len(signs) == 1
    assert len(magnitudes) >= 2


def test_repeated_encryptions_pairwise_distinct():
    rng = random.Random(61)
    params = small_params()
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    seen = [encrypt(sk, [1, 2, 3], plan, rng) for _ in range(20)]
    blobs = {ciphertext_to_bytes(ct) for ct in seen}
    assert len(blobs) == 20


# -- correctness against oracles ---------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 8))
def test_theorem_round_trip_inner_property(seed, n):
    rng = random.Random(seed)
    x = [rng.randint(-256, 256) for _ in range(n)]
    y = [rng.randint(-256, 256) for _ in range(n)]
    theta = rng.randint(-600, 600)
    want = oracle_inner(x, y) <= theta
    assert round_trip(MetricKind.INNER_PRODUCT, n, x, y, theta, rng) == want


def test_theorem_round_trip_selected_dims():
    rng = random.Random(67)
    for n, reps in ((2, 25), (4, 25), (16, 10), (64, 2)):
        for _ in range(reps):
            x = [rng.randint(-256, 256) for _ in range(n)]
            y = [rng.randint(-256, 256) for _ in range(n)]
            theta = rng.randint(-300, 300)
            want = oracle_inner(x, y) <= theta
            assert round_trip(MetricKind.INNER_PRODUCT, n, x, y, theta, rng) == want


def test_theorem_round_trip_euclidean_and_hamming():
    rng = random.Random(71)
    for _ in range(10):
        n = rng.randint(2, 6)
        x = [rng.randint(-64, 64) for _ in range(n)]
        y = [rng.randint(-64, 64) for _ in range(n)]
        theta = rng.randint(0, 200)
        want = oracle_euclid2(x, y) <= theta * theta
        assert round_trip(MetricKind.EUCLIDEAN_SQUARED, n, x, y, theta, rng) == want
    for _ in range(10):
        n = rng.randint(2, 10)
        x = [rng.randint(0, 1) for _ in range(n)]
        y = [rng.randint(0, 1) for _ in range(n)]
        theta = rng.randint(0, n)
        want = oracle_hamming(x, y) <= theta
        assert round_trip(MetricKind.HAMMING, n, x, y, theta, rng) == want


# -- serialization -------------------------------------------------------------------------


def test_key_round_trip():
    params = small_params()
    sk = keygen(params, random.Random(73))
    again = key_from_bytes(key_to_bytes(sk))
    assert again.params == sk.params
    assert again.m1 == sk.m1 and again.m2 == sk.m2
    assert again.m1_inv == sk.m1_inv and again.m2_inv == sk.m2_inv
    assert again.perm == sk.perm
    assert mat_mul(again.m1, again.m1_inv) == identity(params.pad)


def test_key_rejects_corruption():
    data = key_to_bytes(keygen(small_params(), random.Random(79)))
    with pytest.raises(ValueError):
        key_from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        key_from_bytes(data[:-4])
    with pytest.raises(ValueError):
        key_from_bytes(data + b"\x01")


def test_ciphertext_and_token_round_trip():
    rng = random.Random(83)
    params = small_params()
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    ct = encrypt(sk, [1, 2, 3], plan, rng)
    tok = token_gen(sk, [4, 5, 6], plan, rng)
    ct2 = ciphertext_from_bytes(ciphertext_to_bytes(ct))
    tok2 = token_from_bytes(token_to_bytes(tok))
    assert ct2.c == ct.c and ct2.params_digest == ct.params_digest
    assert tok2.t == tok.t and tok2.params_digest == tok.params_digest
    assert decryption_value(ct2, tok2) == decryption_value(ct, tok)


def test_blob_headers():
    rng = random.Random(89)
    params = small_params()
    sk = keygen(params, rng)
    plan = plan_from_params(params)
    ct_data = ciphertext_to_bytes(encrypt(sk, [1, 2, 3], plan, rng))
    tok_data = token_to_bytes(token_gen(sk, [1, 2, 3], plan, rng))
    assert ct_data[:4] == b"TPEC" and tok_data[:4] == b"TPET"
    assert ct_data[5:37] == params.digest() == tok_data[5:37]
    with pytest.raises(ValueError):
        token_from_bytes(ct_data)
