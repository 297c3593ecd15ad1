"""Extension plans: embedding identities, slot alignment, oracles, templates."""

import random

import pytest
from gmpy2 import mpz
from hypothesis import given, settings
from hypothesis import strategies as st

from tpe.exact import DimensionMismatch
from tpe.plans import (
    MetricKind,
    NotBinary,
    SignRule,
    oracle_euclid2,
    oracle_hamming,
    oracle_inner,
    plan_euclidean,
    plan_for_metric,
    plan_hamming,
    plan_inner_product,
    read_templates,
    write_templates,
)


def dot(u, v):
    assert len(u) == len(v)
    return sum(a * b for a, b in zip(u, v))


# -- oracles ------------------------------------------------------------------


def test_oracle_inner_zero_template():
    assert oracle_inner([0, 0, 0], [4, -5, 6]) == 0


def test_oracle_euclid2_three_four_five():
    assert oracle_euclid2((0, 0), (3, 4)) == 25


def test_oracle_hamming_example():
    assert oracle_hamming([0, 1, 0, 1], [0, 1, 1, 0]) == 2


def test_oracle_errors():
    with pytest.raises(DimensionMismatch):
        oracle_inner([1], [1, 2])
    with pytest.raises(DimensionMismatch):
        oracle_euclid2([1], [1, 2])
    with pytest.raises(NotBinary):
        oracle_hamming([0, 2], [0, 1])


# -- inner product plan ----------------------------------------------------------


def test_inner_plan_zero_template_collapses_to_threshold_slot():
    plan = plan_inner_product(7)
    rng = random.Random(0)
    for _ in range(20):
        a, b = rng.randint(1, 50), rng.randint(1, 50)
        xp = plan.registered_extend([0, 0, 0], b, rng.randint(-9, 9))
        yp = plan.query_extend([rng.randint(-9, 9) for _ in range(3)], a, rng.randint(-9, 9))
        assert dot(xp, yp) == -a * b * 7


def test_inner_plan_hand_expansion():
    # x=(2,3), y=(1,1), theta=4, scales 1, pads 0: (2+3) - 4 = 1
    plan = plan_inner_product(4)
    xp = plan.registered_extend([2, 3], 1, 0)
    yp = plan.query_extend([1, 1], 1, 0)
    assert xp == [2, 3, -4, 0, 0]
    assert yp == [1, 1, 1, 0, 0]
    assert dot(xp, yp) == 1


def test_inner_plan_permutation_invariance():
    plan = plan_inner_product(3)
    rng = random.Random(1)
    xp = plan.registered_extend([5, -2, 7], 3, 11)
    yp = plan.query_extend([1, 4, -6], 2, -8)
    idx = list(range(len(xp)))
    rng.shuffle(idx)
    assert dot([xp[i] for i in idx], [yp[i] for i in idx]) == dot(xp, yp)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(-256, 256), min_size=1, max_size=12),
    st.data(),
)
def test_inner_plan_identity_property(x, data):
    y = [data.draw(st.integers(-256, 256)) for _ in x]
    theta = data.draw(st.integers(-500, 500))
    a = data.draw(st.integers(1, 1 << 16))
    b = data.draw(st.integers(1, 1 << 16))
    rx = data.draw(st.integers(-(1 << 16), 1 << 16))
    ry = data.draw(st.integers(-(1 << 16), 1 << 16))
    plan = plan_inner_product(theta)
    got = dot(plan.registered_extend(x, b, rx), plan.query_extend(y, a, ry))
    assert got == a * b * (oracle_inner(x, y) - theta)


# -- euclidean plan ------------------------------------------------------------------


def test_euclidean_plan_self_match_value():
    plan = plan_euclidean(9)
    x = [4, -7, 2]
    got = dot(plan.registered_extend(x, 5, 13), plan.query_extend(x, 3, -2))
    assert got == 3 * 5 * 81  # d^2 = 0 so the product is scale * theta^2


def test_euclidean_plan_boundary_and_reject_values():
    x, y = (0, 0), (3, 4)
    for theta, want in ((5, 0), (4, 16 - 25)):
        plan = plan_euclidean(theta)
        got = dot(plan.registered_extend(x, 1, 0), plan.query_extend(y, 1, 0))
        assert got == want
        assert oracle_euclid2(x, y) == 25


def test_euclidean_plan_rejects_negative_threshold():
    with pytest.raises(ValueError):
        plan_euclidean(-1)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(-256, 256), min_size=1, max_size=12),
    st.data(),
)
def test_euclidean_plan_identity_property(x, data):
    y = [data.draw(st.integers(-256, 256)) for _ in x]
    theta = data.draw(st.integers(0, 700))
    a = data.draw(st.integers(1, 1 << 16))
    b = data.draw(st.integers(1, 1 << 16))
    rx = data.draw(st.integers(-(1 << 16), 1 << 16))
    ry = data.draw(st.integers(-(1 << 16), 1 << 16))
    plan = plan_euclidean(theta)
    got = dot(plan.registered_extend(x, b, rx), plan.query_extend(y, a, ry))
    assert got == a * b * (theta * theta - oracle_euclid2(x, y))


# -- hamming plan ----------------------------------------------------------------------


def test_hamming_plan_self_match_any_theta():
    x = [1, 0, 1, 1, 0]
    for theta in (0, 2, 5):
        plan = plan_hamming(theta, 5)
        got = dot(plan.registered_extend(x, 2, 3), plan.query_extend(x, 3, -1))
        assert got == 2 * 2 * 3 * theta
        assert SignRule.NONNEGATIVE.accepts(got)


def test_hamming_plan_complement_rejects():
    x = [0, 1, 0, 1, 0, 1, 0, 1]
    y = [1 - e for e in x]
    plan = plan_hamming(3, 8)
    got = dot(plan.registered_extend(x, 1, 0), plan.query_extend(y, 1, 0))
    assert got == 2 * (3 - 8)
    assert not plan.accept_when.accepts(got)
    assert oracle_hamming(x, y) == 8


def test_hamming_plan_boundary():
    x = [0] * 8
    y = [1, 1, 1, 0, 0, 0, 0, 0]
    plan = plan_hamming(3, 8)
    got = dot(plan.registered_extend(x, 4, 9), plan.query_extend(y, 6, -5))
    assert got == 0
    assert plan.accept_when.accepts(got)


def test_hamming_plan_rejects_non_binary():
    plan = plan_hamming(1, 3)
    with pytest.raises(NotBinary):
        plan.registered_extend([0, 1, 2], 1, 0)
    with pytest.raises(NotBinary):
        plan.query_extend([0, -1, 1], 1, 0)


def test_hamming_plan_length_check():
    plan = plan_hamming(1, 3)
    with pytest.raises(DimensionMismatch):
        plan.registered_extend([0, 1], 1, 0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 1), min_size=1, max_size=16),
    st.data(),
)
def test_hamming_plan_identity_property(x, data):
    y = [data.draw(st.integers(0, 1)) for _ in x]
    theta = data.draw(st.integers(0, len(x)))
    a = data.draw(st.integers(1, 1 << 16))
    b = data.draw(st.integers(1, 1 << 16))
    rx = data.draw(st.integers(-(1 << 16), 1 << 16))
    ry = data.draw(st.integers(-(1 << 16), 1 << 16))
    plan = plan_hamming(theta, len(x))
    got = dot(plan.registered_extend(x, b, rx), plan.query_extend(y, a, ry))
    assert got == 2 * a * b * (theta - oracle_hamming(x, y))


# -- structural properties ----------------------------------------------------------


@pytest.mark.parametrize(
    "metric,n",
    [(MetricKind.INNER_PRODUCT, 6), (MetricKind.EUCLIDEAN_SQUARED, 6), (MetricKind.HAMMING, 6)],
)
def test_slot_alignment_pad_slots_cancel(metric, n):
    # wherever one side carries its one-time pad, the other side is zero
    rng = random.Random(9)
    plan = plan_for_metric(metric, 2, n)
    binary = metric is MetricKind.HAMMING
    x = [rng.randint(0, 1) if binary else rng.randint(-50, 50) for _ in range(n)]
    y = [rng.randint(0, 1) if binary else rng.randint(-50, 50) for _ in range(n)]
    marker = mpz(10**30)  # sentinel value no other slot can produce
    xp = plan.registered_extend(x, 1, marker)
    yp = plan.query_extend(y, 1, marker)
    assert len(xp) == len(yp) == n + plan.pad_extra
    (xi,) = [i for i, v in enumerate(xp) if v == marker]
    (yi,) = [i for i, v in enumerate(yp) if v == marker]
    assert yp[xi] == 0
    assert xp[yi] == 0
    assert xi != yi


def test_plan_pad_and_accept_metadata():
    assert plan_inner_product(0).pad_extra == 3
    assert plan_euclidean(0).pad_extra == 5
    assert plan_hamming(0, 4).pad_extra == 3
    assert plan_inner_product(0).accept_when is SignRule.NONPOSITIVE
    assert plan_euclidean(0).accept_when is SignRule.NONNEGATIVE
    assert plan_hamming(0, 4).accept_when is SignRule.NONNEGATIVE


def test_metric_kind_names_round_trip():
    for kind in MetricKind:
        assert MetricKind.from_name(kind.cli_name) is kind
    with pytest.raises(ValueError):
        MetricKind.from_name("cosine")


def test_query_side_ignores_plan_threshold():
    y = [3, 1, 4]
    a, ry = 7, -2
    assert plan_inner_product(5).query_extend(y, a, ry) == plan_inner_product(
        900
    ).query_extend(y, a, ry)


def test_token_expansion_for_all_ones_query():
    plan = plan_inner_product(5)
    yp = plan.query_extend([1, 1, 1, 1], 9, 42)
    assert yp == [9, 9, 9, 9, 9, 0, 42]


# -- template files ---------------------------------------------------------------------


def test_template_file_round_trip(tmp_path):
    path = tmp_path / "t.txt"
    vecs = [[1, -2, 3], [0, 0, 0], [256, -256, 7]]
    write_templates(path, vecs)
    assert read_templates(path) == vecs


def test_template_file_skips_blank_lines(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("1 2 3\n\n4 5 6\n")
    assert read_templates(path) == [[1, 2, 3], [4, 5, 6]]


def test_template_file_rejects_garbage(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("1 two 3\n")
    with pytest.raises(ValueError):
        read_templates(path)
