"""Exact rational linear algebra used by the encryption core.

Everything here is arbitrary precision; nothing ever rounds.  A matrix is kept
as an integer numerator array over one shared positive denominator, so matrix
products stay in pure integer arithmetic and an inverse comes out of
fraction-free elimination as adjugate-over-determinant with no per-entry gcd
work on the hot paths.

Behavior:
  * scalars handed to callers are gmpy2.mpq, normalized with den > 0
  * matrices are immutable; every operation returns a new object
  * mat_mul switches to native int64 matmul when an exact worst-case bound
    proves no overflow is possible, otherwise it stays on object arrays
  * trace_of_product runs the literal d^2 multiply loop and never forms the
    full product
  * random draws take a random.Random-compatible source (SystemRandom when
    None is passed)
"""

from __future__ import annotations

import random
import struct

import gmpy2
import numpy as np
from gmpy2 import mpq, mpz

Scalar = mpq

_MPZ_TYPE = type(mpz(0))
_ZERO = mpz(0)
_ONE = mpz(1)

# int64 matmul is safe while k * max|a| * max|b| stays below this
_INT64_BOUND = 1 << 62
_LIMB = 1 << 31
_MAX_LIMBS = 4

# 25-bit primes for the modular nonsingularity certificate; row reduction
# mod p keeps every intermediate below 2^50, well inside int64
_CERT_PRIMES = (33554467, 33554473, 33554501, 33554503, 33554509, 33554519)

_MATRIX_MAGIC = b"TPEM"
_MATRIX_VERSION = 1


class DimensionMismatch(ValueError):
    pass


class SingularMatrix(ValueError):
    pass


def _rng_or_system(rng):
    return random.SystemRandom() if rng is None else rng


def _as_integer(v):
    if isinstance(v, (int, _MPZ_TYPE)):
        return mpz(v)
    raise TypeError(f"expected an integer entry, got {type(v).__name__}")


class Matrix:
    """Immutable exact-rational matrix: integer entries over one positive den."""

    __slots__ = ("_num", "_den", "_maxabs")

    def __init__(self, num, den=_ONE):
        # trusted constructor: num is a 2-D object ndarray of integer-likes
        if den == 0:
            raise ZeroDivisionError("matrix denominator is zero")
        if den < 0:
            num = -num
            den = -den
        self._num = num
        self._den = mpz(den)
        self._maxabs = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_rows(cls, rows) -> "Matrix":
        """Build from nested sequences of ints / rationals (exact)."""
        qrows = [[mpq(v) for v in row] for row in rows]
        if not qrows or not qrows[0]:
            raise ValueError("matrix needs at least one row and one column")
        cols = len(qrows[0])
        if any(len(r) != cols for r in qrows):
            raise ValueError("ragged rows")
        den = _ONE
        for r in qrows:
            for q in r:
                den = gmpy2.lcm(den, q.denominator)
        num = np.empty((len(qrows), cols), dtype=object)
        for i, r in enumerate(qrows):
            for j, q in enumerate(r):
                num[i, j] = q.numerator * (den // q.denominator)
        return cls(num, den)

    @classmethod
    def from_integer_rows(cls, rows, den=1) -> "Matrix":
        """Build from nested sequences of integer-likes, stored as given.

        Entries are trusted to behave like ints; they are not coerced, which
        keeps this path cheap for hot callers.
        """
        data = [list(r) for r in rows]
        if not data or not data[0]:
            raise ValueError("matrix needs at least one row and one column")
        cols = len(data[0])
        if any(len(r) != cols for r in data):
            raise ValueError("ragged rows")
        num = np.empty((len(data), cols), dtype=object)
        for i, r in enumerate(data):
            num[i, :] = r
        return cls(num, den)

    # -- shape and access --------------------------------------------------

    @property
    def rows(self) -> int:
        return self._num.shape[0]

    @property
    def cols(self) -> int:
        return self._num.shape[1]

    @property
    def shape(self):
        return self._num.shape

    def __getitem__(self, key) -> Scalar:
        i, j = key
        return mpq(self._num[i, j], self._den)

    def to_rows(self):
        return [
            [mpq(self._num[i, j], self._den) for j in range(self.cols)]
            for i in range(self.rows)
        ]

    def max_abs(self) -> mpz:
        if self._maxabs is None:
            m = _ZERO
            for v in self._num.flat:
                a = -v if v < 0 else v
                if a > m:
                    m = a
            self._maxabs = mpz(m)
        return self._maxabs

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        if self.shape != other.shape:
            return False
        if self._den == other._den:
            return bool(np.all(self._num == other._num))
        # cross-multiply; values are equal iff b.den*a.num == a.den*b.num
        return bool(np.all(other._den * self._num == self._den * other._num))

    __hash__ = None

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


def identity(dim: int) -> Matrix:
    if dim < 1:
        raise ValueError("dim must be positive")
    num = np.full((dim, dim), _ZERO, dtype=object)
    for i in range(dim):
        num[i, i] = _ONE
    return Matrix(num)


def diag_matrix(entries) -> Matrix:
    """Square matrix with the given rationals on the diagonal."""
    qs = [mpq(v) for v in entries]
    if not qs:
        raise ValueError("need at least one diagonal entry")
    den = _ONE
    for q in qs:
        den = gmpy2.lcm(den, q.denominator)
    num = np.full((len(qs), len(qs)), _ZERO, dtype=object)
    for i, q in enumerate(qs):
        num[i, i] = q.numerator * (den // q.denominator)
    return Matrix(num, den)


# -- products ---------------------------------------------------------------


def _limbs_needed(maxabs) -> int:
    return max(1, -(-int(maxabs).bit_length() // 31))


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise DimensionMismatch(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    k = a.cols
    ma, mb = a.max_abs(), b.max_abs()
    # exact overflow guard: every dot product is bounded by k*max|a|*max|b|
    if k * ma * mb < _INT64_BOUND:
        num = np.dot(a._num.astype(np.int64), b._num.astype(np.int64)).astype(object)
    elif _limbs_needed(ma) <= _MAX_LIMBS and k * _LIMB * mb < _INT64_BOUND:
        num = _matmul_limbs_left(a._num, b._num.astype(np.int64), _limbs_needed(ma))
    elif _limbs_needed(mb) <= _MAX_LIMBS and k * _LIMB * ma < _INT64_BOUND:
        num = _matmul_limbs_left(
            b._num.T, a._num.astype(np.int64).T, _limbs_needed(mb)
        ).T
    else:
        num = np.dot(a._num, b._num)
    return Matrix(num, a._den * b._den)


def _matmul_limbs_left(big, small_i64, limbs: int):
    """big @ small where only big exceeds int64: split big into base-2^31
    digits (floor semantics keep the reconstruction exact for negatives),
    run one int64 matmul per digit, recombine."""
    digits = []
    cur = big
    for _ in range(limbs - 1):
        digits.append(cur % _LIMB)
        cur = cur // _LIMB
    digits.append(cur)
    acc = None
    shift = 0
    for d in digits:
        term = np.dot(d.astype(np.int64), small_i64).astype(object)
        if shift:
            term = term * (1 << shift)
        acc = term if acc is None else acc + term
        shift += 31
    return acc


def scale_rows(entries, m: Matrix) -> Matrix:
    """diag(entries) * m for integer entries, in O(d^2)."""
    v = [_as_integer(x) for x in entries]
    if len(v) != m.rows:
        raise DimensionMismatch(f"{len(v)} scale entries for {m.rows} rows")
    col = np.empty((len(v), 1), dtype=object)
    col[:, 0] = v
    return Matrix(m._num * col, m._den)


def scale_cols(m: Matrix, entries) -> Matrix:
    """m * diag(entries) for integer entries, in O(d^2)."""
    v = [_as_integer(x) for x in entries]
    if len(v) != m.cols:
        raise DimensionMismatch(f"{len(v)} scale entries for {m.cols} columns")
    row = np.empty((1, len(v)), dtype=object)
    row[0, :] = v
    return Matrix(m._num * row, m._den)


def trace(m: Matrix) -> Scalar:
    if m.rows != m.cols:
        raise DimensionMismatch("trace needs a square matrix")
    total = _ZERO
    for i in range(m.rows):
        total += m._num[i, i]
    return mpq(total, m._den)


def trace_of_product(a: Matrix, b: Matrix) -> Scalar:
    """tr(a*b) using exactly d^2 scalar multiplications, no full product."""
    if a.rows != a.cols or b.rows != b.cols or a.rows != b.rows:
        raise DimensionMismatch(
            f"trace_of_product needs square matrices of equal size, "
            f"got {a.rows}x{a.cols} and {b.rows}x{b.cols}"
        )
    an, bn = a._num, b._num
    total = 0
    for i in range(a.rows):
        arow = an[i, :]
        bcol = bn[:, i]
        total += sum(x * y for x, y in zip(arow, bcol))
    return mpq(total, a._den * b._den)


# -- determinants and inverses ----------------------------------------------


def _bareiss_det(num) -> mpz:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    d = num.shape[0]
    a = [[mpz(num[i, j]) for j in range(d)] for i in range(d)]
    sign = 1
    prev = _ONE
    for k in range(d - 1):
        if a[k][k] == 0:
            for r in range(k + 1, d):
                if a[r][k]:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return _ZERO
        pk = a[k][k]
        for i in range(k + 1, d):
            aik = a[i][k]
            ai = a[i]
            ak = a[k]
            if aik:
                for j in range(k + 1, d):
                    ai[j] = (pk * ai[j] - aik * ak[j]) // prev
            elif prev != pk:
                for j in range(k + 1, d):
                    ai[j] = pk * ai[j] // prev
            ai[k] = _ZERO
        prev = pk
    return sign * a[d - 1][d - 1]


def _det_mod_p(num, p: int) -> int:
    """Determinant mod a 25-bit prime via int64 row reduction."""
    d = num.shape[0]
    a = (num % p).astype(np.int64)
    det = 1
    for k in range(d):
        piv = -1
        for r in range(k, d):
            if a[r, k]:
                piv = r
                break
        if piv < 0:
            return 0
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            det = -det
        akk = int(a[k, k])
        det = det * akk % p
        if k + 1 < d:
            inv = pow(akk, -1, p)
            f = a[k + 1 :, k] * inv % p
            a[k + 1 :, k:] = (a[k + 1 :, k:] - f[:, None] * a[k, k:]) % p
    return det % p


def _integer_nonsingular(num) -> bool:
    # det mod p != 0 proves nonsingularity; only the (rare) zero residue
    # falls back to the exact determinant
    for p in _CERT_PRIMES[:3]:
        if _det_mod_p(num, p):
            return True
    return _bareiss_det(num) != 0


def det(m: Matrix) -> Scalar:
    if m.rows != m.cols:
        raise DimensionMismatch("determinant needs a square matrix")
    return mpq(_bareiss_det(m._num), m._den ** m.rows)


def invert(m: Matrix) -> Matrix:
    """Exact inverse; raises SingularMatrix when none exists.

    Fraction-free Gauss-Jordan on [N | I]: every row operation applied to N is
    applied to the identity block, so when the left block lands on det*I the
    right block is det*N^-1, all in integers.
    """
    if m.rows != m.cols:
        raise DimensionMismatch("only square matrices invert")
    d = m.rows
    num = m._num
    w = 2 * d
    rows = []
    for i in range(d):
        row = [mpz(num[i, j]) for j in range(d)]
        row.extend(_ONE if j == i else _ZERO for j in range(d))
        rows.append(row)
    prev = _ONE
    for k in range(d):
        if rows[k][k] == 0:
            for r in range(k + 1, d):
                if rows[r][k]:
                    rows[k], rows[r] = rows[r], rows[k]
                    # negate the promoted row so the determinant keeps its sign
                    rows[k] = [-v for v in rows[k]]
                    break
            else:
                raise SingularMatrix(f"{d}x{d} matrix has no inverse")
        pk = rows[k][k]
        for i in range(d):
            if i == k:
                continue
            fik = rows[i][k]
            ri = rows[i]
            rk = rows[k]
            if fik:
                rows[i] = [(pk * ri[j] - fik * rk[j]) // prev for j in range(w)]
            elif prev != pk:
                rows[i] = [pk * v // prev for v in ri]
        prev = pk
    dt = rows[d - 1][d - 1]
    inv = np.empty((d, d), dtype=object)
    for i in range(d):
        inv[i, :] = rows[i][d:]
    if m._den != 1:
        inv = inv * m._den
    return Matrix(inv, dt)


# -- random draws -------------------------------------------------------------


def rand_nonsingular(dim: int, bitwidth: int, rng=None) -> Matrix:
    """Uniform integer matrix with entries in [-2^bitwidth, 2^bitwidth],
    redrawn until nonsingular."""
    if dim < 1:
        raise ValueError("dim must be positive")
    if bitwidth < 1:
        raise ValueError("bitwidth must be positive")
    rng = _rng_or_system(rng)
    lo, hi = -(1 << bitwidth), 1 << bitwidth
    while True:
        num = np.empty((dim, dim), dtype=object)
        for i in range(dim):
            num[i, :] = [mpz(rng.randint(lo, hi)) for _ in range(dim)]
        if _integer_nonsingular(num):
            return Matrix(num)


def rand_unit_lower_triangular(dim: int, bitwidth: int, rng=None) -> Matrix:
    """Ones on the diagonal, uniform entries in [-2^bitwidth, 2^bitwidth] below."""
    if dim < 1:
        raise ValueError("dim must be positive")
    if bitwidth < 1:
        raise ValueError("bitwidth must be positive")
    rng = _rng_or_system(rng)
    lo, hi = -(1 << bitwidth), 1 << bitwidth
    num = np.full((dim, dim), _ZERO, dtype=object)
    for i in range(dim):
        num[i, i] = _ONE
        for j in range(i):
            num[i, j] = mpz(rng.randint(lo, hi))
    return Matrix(num)


# -- permutations -------------------------------------------------------------


class Permutation:
    """Permutation of range(size); apply_permutation sends v to v[mapping[i]]."""

    __slots__ = ("mapping",)

    def __init__(self, mapping):
        mapping = tuple(int(v) for v in mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValueError("not a permutation of range(len(mapping))")
        self.mapping = mapping

    @property
    def size(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, v in enumerate(self.mapping):
            inv[v] = i
        return Permutation(inv)

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return self.mapping == other.mapping

    def __hash__(self):
        return hash(self.mapping)

    def __repr__(self):
        return f"Permutation({list(self.mapping)})"


def rand_permutation(size: int, rng=None) -> Permutation:
    if size < 1:
        raise ValueError("size must be positive")
    rng = _rng_or_system(rng)
    idx = list(range(size))
    rng.shuffle(idx)
    return Permutation(idx)


def apply_permutation(p: Permutation, v):
    if len(v) != p.size:
        raise DimensionMismatch(f"permutation of size {p.size} on {len(v)} entries")
    return [v[j] for j in p.mapping]


# -- serialization ------------------------------------------------------------


def _pack_int(x) -> bytes:
    x = int(x)
    nbytes = (x.bit_length() + 8) // 8  # always room for the sign bit
    return struct.pack("!I", nbytes) + x.to_bytes(nbytes, "big", signed=True)


class ByteReader:
    """Cursor over bytes; raises ValueError on truncation."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated data")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def take_u32(self) -> int:
        return struct.unpack("!I", self.take(4))[0]

    def take_int(self) -> int:
        n = self.take_u32()
        return int.from_bytes(self.take(n), "big", signed=True)

    def expect(self, magic: bytes, what: str):
        got = self.take(len(magic))
        if got != magic:
            raise ValueError(f"bad {what} header: {got!r}")

    def done(self) -> bool:
        return self.pos == len(self.data)


def write_matrix(m: Matrix) -> bytes:
    """TPEM header, dims, then each entry as length-prefixed (num, den)
    big-endian two's-complement integers, row-major, in lowest terms."""
    out = [_MATRIX_MAGIC, bytes([_MATRIX_VERSION]), struct.pack("!II", m.rows, m.cols)]
    den = m._den
    for v in m._num.flat:
        q = mpq(v, den)
        out.append(_pack_int(q.numerator))
        out.append(_pack_int(q.denominator))
    return b"".join(out)


def read_matrix(r: ByteReader) -> Matrix:
    r.expect(_MATRIX_MAGIC, "matrix")
    ver = r.take(1)[0]
    if ver != _MATRIX_VERSION:
        raise ValueError(f"unsupported matrix version {ver}")
    rows, cols = struct.unpack("!II", r.take(8))
    if rows < 1 or cols < 1 or rows * cols > 1 << 24:
        raise ValueError(f"implausible matrix shape {rows}x{cols}")
    qs = []
    for _ in range(rows * cols):
        num = r.take_int()
        dn = r.take_int()
        if dn <= 0:
            raise ValueError("entry denominator must be positive")
        qs.append(mpq(num, dn))
    den = _ONE
    for q in qs:
        den = gmpy2.lcm(den, q.denominator)
    arr = np.empty((rows, cols), dtype=object)
    it = iter(qs)
    for i in range(rows):
        for j in range(cols):
            q = next(it)
            arr[i, j] = q.numerator * (den // q.denominator)
    return Matrix(arr, den)


def matrix_to_bytes(m: Matrix) -> bytes:
    return write_matrix(m)


def matrix_from_bytes(data: bytes) -> Matrix:
    r = ByteReader(data)
    m = read_matrix(r)
    if not r.done():
        raise ValueError("trailing bytes after matrix")
    return m
