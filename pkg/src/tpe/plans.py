"""Extension plans: how a comparison against a threshold becomes a signed
inner product of two padded vectors.

Each plan pairs a registered-side rule (applied at encryption) with a
query-side rule (applied at token generation).  The rules append a threshold
slot, a one-time pad slot, and a zero slot so that the padded inner product
x' . y' collapses to scale_x * scale_y * (comparison value), with the pad
slots cancelling against zeros on the opposite side.

Shipped plans:
  * inner product at most theta      accept when the product is <= 0
  * squared euclidean within theta   accept when the product is >= 0
  * hamming distance within theta    accept when the product is >= 0
                                     ({0,1} inputs remapped to +-1 internally)

The brute-force distance oracles used by every correctness test live here
too, next to the plans they check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable

from gmpy2 import mpz

from .exact import DimensionMismatch


class NotBinary(ValueError):
    pass


class SignRule(Enum):
    """Which sign of the decryption value counts as an accept."""

    NONPOSITIVE = "nonpositive"
    NONNEGATIVE = "nonnegative"

    def accepts(self, value) -> bool:
        if self is SignRule.NONPOSITIVE:
            return value <= 0
        return value >= 0


# plan kind codes; they feed the params digest and the wire metric byte
INNER_PRODUCT = 1
EUCLIDEAN_SQUARED = 2
HAMMING = 3
SET_INTERSECT = 4
WEIGHTED_SUM = 5

KIND_PAD_EXTRA = {
    INNER_PRODUCT: 3,
    EUCLIDEAN_SQUARED: 5,
    HAMMING: 3,
    SET_INTERSECT: 3,
    WEIGHTED_SUM: 3,
}

KIND_ACCEPT = {
    INNER_PRODUCT: SignRule.NONPOSITIVE,
    EUCLIDEAN_SQUARED: SignRule.NONNEGATIVE,
    HAMMING: SignRule.NONNEGATIVE,
    SET_INTERSECT: SignRule.NONNEGATIVE,
    WEIGHTED_SUM: SignRule.NONNEGATIVE,
}


class MetricKind(IntEnum):
    """The three distance comparisons the authentication service speaks."""

    INNER_PRODUCT = INNER_PRODUCT
    EUCLIDEAN_SQUARED = EUCLIDEAN_SQUARED
    HAMMING = HAMMING

    @property
    def pad_extra(self) -> int:
        return KIND_PAD_EXTRA[self]

    @property
    def accept_when(self) -> SignRule:
        return KIND_ACCEPT[self]

    @property
    def cli_name(self) -> str:
        return _METRIC_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "MetricKind":
        for kind, nm in _METRIC_NAMES.items():
            if nm == name:
                return kind
        raise ValueError(f"unknown metric {name!r}; expected one of {sorted(_METRIC_NAMES.values())}")

    def plan(self, theta: int, n: int) -> "ExtensionPlan":
        if self is MetricKind.INNER_PRODUCT:
            return plan_inner_product(theta)
        if self is MetricKind.EUCLIDEAN_SQUARED:
            return plan_euclidean(theta)
        return plan_hamming(theta, n)


_METRIC_NAMES = {
    MetricKind.INNER_PRODUCT: "inner",
    MetricKind.EUCLIDEAN_SQUARED: "euclidean",
    MetricKind.HAMMING: "hamming",
}


@dataclass(frozen=True)
class ExtensionPlan:
    """A padded-vector embedding plus the sign rule that reads its result."""

    kind: int
    theta: int
    pad_extra: int
    accept_when: SignRule
    _registered: Callable = field(repr=False)
    _query: Callable = field(repr=False)

    def registered_extend(self, x, scale, pad_rand):
        """Padded plaintext-side vector; scale is the one-time positive factor."""
        return self._registered(x, mpz(scale), mpz(pad_rand))

    def query_extend(self, y, scale, pad_rand):
        """Padded query-side vector; scale is the one-time positive factor."""
        return self._query(y, mpz(scale), mpz(pad_rand))


def _ints(v, what: str):
    try:
        return [mpz(e) for e in v]
    except TypeError:
        raise TypeError(f"{what} entries must be integers") from None


def plan_inner_product(theta: int) -> ExtensionPlan:
    """Accepts when x . y <= theta."""
    th = mpz(theta)

    def registered(x, b, r):
        out = [b * e for e in _ints(x, "template")]
        out += [-b * th, r, mpz(0)]
        return out

    def query(y, a, r):
        out = [a * e for e in _ints(y, "query")]
        out += [a, mpz(0), r]
        return out

    return ExtensionPlan(INNER_PRODUCT, int(theta), 3, SignRule.NONPOSITIVE, registered, query)


def plan_euclidean(theta: int) -> ExtensionPlan:
    """Accepts when the squared euclidean distance is <= theta^2."""
    if theta < 0:
        raise ValueError("euclidean threshold must be >= 0 (its square is embedded)")
    th = mpz(theta)

    def registered(x, b, r):
        xs = _ints(x, "template")
        out = [2 * b * e for e in xs]
        out += [-b * sum(e * e for e in xs), b, b * th * th, r, mpz(0)]
        return out

    def query(y, a, r):
        ys = _ints(y, "query")
        out = [a * e for e in ys]
        out += [a, -a * sum(e * e for e in ys), a, mpz(0), r]
        return out

    return ExtensionPlan(EUCLIDEAN_SQUARED, int(theta), 5, SignRule.NONNEGATIVE, registered, query)


def _pm_one(v, what: str):
    out = []
    for e in v:
        if e == 0:
            out.append(mpz(-1))
        elif e == 1:
            out.append(mpz(1))
        else:
            raise NotBinary(f"{what} entries must be 0 or 1, got {e!r}")
    return out


def plan_hamming(theta: int, n: int) -> ExtensionPlan:
    """Accepts when the hamming distance between {0,1}-vectors is <= theta.

    Zeros are remapped to -1 on both sides, which turns the +-1 inner product
    into n - 2*d_H and lets one threshold slot carry 2*theta - n.
    """
    th = mpz(theta)
    nn = mpz(n)

    def registered(x, b, r):
        if len(x) != n:
            raise DimensionMismatch(f"expected {n} entries, got {len(x)}")
        out = [b * e for e in _pm_one(x, "template")]
        out += [b * (2 * th - nn), r, mpz(0)]
        return out

    def query(y, a, r):
        if len(y) != n:
            raise DimensionMismatch(f"expected {n} entries, got {len(y)}")
        out = [a * e for e in _pm_one(y, "query")]
        out += [a, mpz(0), r]
        return out

    return ExtensionPlan(HAMMING, int(theta), 3, SignRule.NONNEGATIVE, registered, query)


def plan_for_metric(metric: MetricKind, theta: int, n: int) -> ExtensionPlan:
    return MetricKind(metric).plan(theta, n)


def plan_min_overlap(theta: int) -> ExtensionPlan:
    """Accepts when x . y > theta (strict); the threshold rides the stored side.

    Built for keyword indices: each encrypted index entry carries its own
    threshold, and one query token can be run against entries with different
    thresholds.  The query extension ignores the plan's theta.
    """
    th = mpz(theta) + 1  # x.y > theta on integers is x.y >= theta+1

    def registered(x, b, r):
        out = [b * e for e in _ints(x, "index vector")]
        out += [-b * th, r, mpz(0)]
        return out

    def query(y, a, r):
        out = [a * e for e in _ints(y, "query vector")]
        out += [a, mpz(0), r]
        return out

    return ExtensionPlan(SET_INTERSECT, int(theta), 3, SignRule.NONNEGATIVE, registered, query)


def plan_min_weighted_sum(theta: int) -> ExtensionPlan:
    """Accepts when x . y > theta (strict); the threshold rides the query side.

    Built for record filtering: records are encrypted once with a
    threshold-free extension, and every filter token brings its own cutoff.
    The registered extension ignores the plan's theta.
    """
    th = mpz(theta) + 1

    def registered(x, b, r):
        out = [b * e for e in _ints(x, "record")]
        out += [b, r, mpz(0)]
        return out

    def query(y, a, r):
        out = [a * e for e in _ints(y, "weights")]
        out += [-a * th, mpz(0), r]
        return out

    return ExtensionPlan(WEIGHTED_SUM, int(theta), 3, SignRule.NONNEGATIVE, registered, query)


# -- plaintext oracles ---------------------------------------------------------


def oracle_inner(x, y):
    """Plain inner product; the reference every encrypted comparison is held to."""
    if len(x) != len(y):
        raise DimensionMismatch(f"{len(x)} vs {len(y)} entries")
    return sum(mpz(a) * mpz(b) for a, b in zip(x, y))


def oracle_euclid2(x, y):
    """Squared euclidean distance."""
    if len(x) != len(y):
        raise DimensionMismatch(f"{len(x)} vs {len(y)} entries")
    return sum((mpz(a) - mpz(b)) ** 2 for a, b in zip(x, y))


def oracle_hamming(x, y):
    """Hamming distance between {0,1}-vectors."""
    if len(x) != len(y):
        raise DimensionMismatch(f"{len(x)} vs {len(y)} entries")
    d = 0
    for a, b in zip(x, y):
        if a not in (0, 1) or b not in (0, 1):
            raise NotBinary("hamming oracle needs 0/1 entries")
        if a != b:
            d += 1
    return mpz(d)


# -- template files --------------------------------------------------------------


def read_templates(path) -> list:
    """One vector per line, whitespace-separated decimal integers."""
    vectors = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vectors.append([int(tok) for tok in line.split()])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a whitespace-separated integer vector") from None
    return vectors


def write_templates(path, vectors):
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            fh.write(" ".join(str(int(e)) for e in v) + "\n")
