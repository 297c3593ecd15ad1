"""The threshold predicate encryption scheme.

A secret key is two random nonsingular matrices with their exact inverses and
a secret slot permutation.  Encryption hides the padded, permuted template on
the diagonal of M1 * S_x * X * M2; token generation hides the padded query in
T_y = M2^-1 * Y * S_y * M1^-1.  Decryption computes the trace of C_x * T_y:
the M factors cancel by similarity, the unit-triangular masks drop out of the
diagonal, and what is left is

    scale_x * scale_y * (comparison value)

whose sign alone decides accept or deny.  All arithmetic is exact, so the
sign test never suffers rounding.

Randomness per operation: a positive scale factor (survives into the result's
magnitude), a signed pad value (cancels against a zero slot on the other
side), and a fresh unit lower-triangular mask (cancels under the trace).
encrypt/token_gen draw these from an explicit rng; the *_explicit variants
pin them and exist for instrumented tests only.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from gmpy2 import mpq

from . import plans as _plans
from .exact import (
    ByteReader,
    DimensionMismatch,
    Matrix,
    Permutation,
    Scalar,
    _pack_int,
    _rng_or_system,
    apply_permutation,
    invert,
    mat_mul,
    rand_nonsingular,
    rand_permutation,
    rand_unit_lower_triangular,
    read_matrix,
    scale_cols,
    scale_rows,
    trace_of_product,
    write_matrix,
)
from .plans import ExtensionPlan, SignRule

_KEY_MAGIC = b"TPEK"
_CT_MAGIC = b"TPEC"
_TOKEN_MAGIC = b"TPET"
_VERSION = 1

DEFAULT_KEY_BITWIDTH = 32
DEFAULT_RAND_BITWIDTH = 32


class InvalidParameter(ValueError):
    pass


class ParamsMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """Public system parameters; the digest binds artifacts to one setup."""

    n: int
    theta: int
    plan_kind: int
    pad: int
    key_bitwidth: int = DEFAULT_KEY_BITWIDTH
    rand_bitwidth: int = DEFAULT_RAND_BITWIDTH

    def digest(self) -> bytes:
        h = hashlib.sha256(b"TPEP")
        for v in (self.n, self.theta, self.pad, self.plan_kind):
            h.update(_pack_int(v))
        return h.digest()


def setup(
    n: int,
    theta: int,
    plan_kind: int,
    key_bitwidth: int = DEFAULT_KEY_BITWIDTH,
    rand_bitwidth: int = DEFAULT_RAND_BITWIDTH,
) -> Params:
    if n < 1:
        raise InvalidParameter("vector dimension must be >= 1")
    kind = int(plan_kind)
    if kind not in _plans.KIND_PAD_EXTRA:
        raise InvalidParameter(f"unknown plan kind {plan_kind!r}")
    if key_bitwidth < 8 or rand_bitwidth < 8:
        raise InvalidParameter("bitwidths below 8 give no meaningful disguise")
    if kind == _plans.EUCLIDEAN_SQUARED and theta < 0:
        raise InvalidParameter("euclidean threshold must be >= 0")
    return Params(
        n=n,
        theta=int(theta),
        plan_kind=kind,
        pad=n + _plans.KIND_PAD_EXTRA[kind],
        key_bitwidth=key_bitwidth,
        rand_bitwidth=rand_bitwidth,
    )


def plan_from_params(params: Params) -> ExtensionPlan:
    """The metric plan a setup declares; app plans carry their own thresholds."""
    kind = params.plan_kind
    if kind == _plans.INNER_PRODUCT:
        return _plans.plan_inner_product(params.theta)
    if kind == _plans.EUCLIDEAN_SQUARED:
        return _plans.plan_euclidean(params.theta)
    if kind == _plans.HAMMING:
        return _plans.plan_hamming(params.theta, params.n)
    raise InvalidParameter(f"plan kind {kind} has no single canonical plan")


@dataclass(frozen=True)
class SecretKey:
    m1: Matrix
    m2: Matrix
    m1_inv: Matrix
    m2_inv: Matrix
    perm: Permutation
    params: Params


@dataclass(frozen=True)
class Ciphertext:
    c: Matrix
    params_digest: bytes


@dataclass(frozen=True)
class Token:
    t: Matrix
    params_digest: bytes


@dataclass(frozen=True)
class TokenPrecomp:
    """Template-independent half of token generation (mask times M1^-1)."""

    p: Matrix
    params_digest: bytes


@dataclass(frozen=True)
class Decision:
    accept: bool
    raw_sign: int | None = None  # populated only by the diagnostic decrypt


def keygen(params: Params, rng=None) -> SecretKey:
    rng = _rng_or_system(rng)
    d = params.pad
    m1 = rand_nonsingular(d, params.key_bitwidth, rng)
    m2 = rand_nonsingular(d, params.key_bitwidth, rng)
    return SecretKey(
        m1=m1,
        m2=m2,
        m1_inv=invert(m1),
        m2_inv=invert(m2),
        perm=rand_permutation(d, rng),
        params=params,
    )


def _check_plan(params: Params, plan: ExtensionPlan):
    if plan.kind != params.plan_kind:
        raise ParamsMismatch(
            f"plan kind {plan.kind} does not match setup kind {params.plan_kind}"
        )
    if params.n + plan.pad_extra != params.pad:
        raise ParamsMismatch("plan padding disagrees with setup padding")


def _extended(params: Params, vec, plan: ExtensionPlan, side: str, scale, pad_rand):
    if len(vec) != params.n:
        raise DimensionMismatch(f"expected {params.n} entries, got {len(vec)}")
    if scale < 1:
        raise InvalidParameter("scale factor must be a positive integer")
    ext = (
        plan.registered_extend(vec, scale, pad_rand)
        if side == "registered"
        else plan.query_extend(vec, scale, pad_rand)
    )
    if len(ext) != params.pad:
        raise ParamsMismatch("plan produced a vector of the wrong padded length")
    return ext


def encrypt_explicit(sk: SecretKey, x, plan: ExtensionPlan, scale, pad_rand, mask: Matrix) -> Ciphertext:
    """Encryption with pinned randomness; instrumented tests only."""
    params = sk.params
    _check_plan(params, plan)
    xp = _extended(params, x, plan, "registered", scale, pad_rand)
    xpp = apply_permutation(sk.perm, xp)
    c = mat_mul(mat_mul(sk.m1, scale_cols(mask, xpp)), sk.m2)
    return Ciphertext(c=c, params_digest=params.digest())


def encrypt(sk: SecretKey, x, plan: ExtensionPlan, rng=None) -> Ciphertext:
    rng = _rng_or_system(rng)
    rb = sk.params.rand_bitwidth
    scale = rng.randint(1, 1 << rb)
    pad_rand = rng.randint(-(1 << rb), 1 << rb)
    mask = rand_unit_lower_triangular(sk.params.pad, rb, rng)
    return encrypt_explicit(sk, x, plan, scale, pad_rand, mask)


def token_precompute(sk: SecretKey, rng=None) -> TokenPrecomp:
    """Offline half: draw the mask and fold it into M1^-1 before the query arrives."""
    rng = _rng_or_system(rng)
    mask = rand_unit_lower_triangular(sk.params.pad, sk.params.rand_bitwidth, rng)
    return TokenPrecomp(p=mat_mul(mask, sk.m1_inv), params_digest=sk.params.digest())


def token_finish(sk: SecretKey, y, plan: ExtensionPlan, pre: TokenPrecomp, rng=None) -> Token:
    """Online half: everything that has to wait for the query vector."""
    rng = _rng_or_system(rng)
    rb = sk.params.rand_bitwidth
    scale = rng.randint(1, 1 << rb)
    pad_rand = rng.randint(-(1 << rb), 1 << rb)
    return _token_finish_explicit(sk, y, plan, pre, scale, pad_rand)


def _token_finish_explicit(sk, y, plan, pre: TokenPrecomp, scale, pad_rand) -> Token:
    params = sk.params
    _check_plan(params, plan)
    if pre.params_digest != params.digest():
        raise ParamsMismatch("precomputed token half belongs to a different setup")
    yp = _extended(params, y, plan, "query", scale, pad_rand)
    ypp = apply_permutation(sk.perm, yp)
    t = mat_mul(sk.m2_inv, scale_rows(ypp, pre.p))
    return Token(t=t, params_digest=pre.params_digest)


def token_gen_explicit(sk: SecretKey, y, plan: ExtensionPlan, scale, pad_rand, mask: Matrix) -> Token:
    """Token generation with pinned randomness; instrumented tests only."""
    pre = TokenPrecomp(p=mat_mul(mask, sk.m1_inv), params_digest=sk.params.digest())
    return _token_finish_explicit(sk, y, plan, pre, scale, pad_rand)


def token_gen(sk: SecretKey, y, plan: ExtensionPlan, rng=None) -> Token:
    rng = _rng_or_system(rng)
    return token_finish(sk, y, plan, token_precompute(sk, rng), rng)


def decryption_value(c: Ciphertext, t: Token) -> Scalar:
    """The exact decryption intermediate (scale_x * scale_y * comparison).

    Diagnostic builds only: production code must never log or branch on the
    magnitude, which is why decrypt() below discards everything but a sign.
    """
    if c.params_digest != t.params_digest:
        raise ParamsMismatch("ciphertext and token come from different setups")
    return trace_of_product(c.c, t.t)


def decrypt(c: Ciphertext, t: Token, accept_when: SignRule) -> Decision:
    value = decryption_value(c, t)
    return Decision(accept=accept_when.accepts(value))


def decrypt_with_sign(c: Ciphertext, t: Token, accept_when: SignRule) -> Decision:
    """decrypt() plus the raw sign; diagnostic builds only."""
    value = decryption_value(c, t)
    sign = (value > 0) - (value < 0)
    return Decision(accept=accept_when.accepts(value), raw_sign=sign)


# -- file formats ----------------------------------------------------------------


def _write_params(p: Params) -> bytes:
    return b"".join(
        _pack_int(v)
        for v in (p.n, p.theta, p.plan_kind, p.pad, p.key_bitwidth, p.rand_bitwidth)
    )


def _read_params(r: ByteReader) -> Params:
    n = r.take_int()
    theta = r.take_int()
    kind = r.take_int()
    pad = r.take_int()
    kb = r.take_int()
    rb = r.take_int()
    p = Params(n=n, theta=theta, plan_kind=kind, pad=pad, key_bitwidth=kb, rand_bitwidth=rb)
    if kind not in _plans.KIND_PAD_EXTRA or pad != n + _plans.KIND_PAD_EXTRA[kind] or n < 1:
        raise ValueError("inconsistent parameter block")
    return p


def _write_perm(p: Permutation) -> bytes:
    out = [struct.pack("!I", p.size)]
    out += [struct.pack("!I", v) for v in p.mapping]
    return b"".join(out)


def _read_perm(r: ByteReader) -> Permutation:
    size = r.take_u32()
    if size < 1 or size > 1 << 20:
        raise ValueError(f"implausible permutation size {size}")
    return Permutation(r.take_u32() for _ in range(size))


def key_to_bytes(sk: SecretKey) -> bytes:
    out = [_KEY_MAGIC, bytes([_VERSION]), _write_params(sk.params)]
    out += [write_matrix(m) for m in (sk.m1, sk.m2, sk.m1_inv, sk.m2_inv)]
    out.append(_write_perm(sk.perm))
    return b"".join(out)


def key_from_bytes(data: bytes) -> SecretKey:
    r = ByteReader(data)
    r.expect(_KEY_MAGIC, "key")
    ver = r.take(1)[0]
    if ver != _VERSION:
        raise ValueError(f"unsupported key version {ver}")
    params = _read_params(r)
    mats = [read_matrix(r) for _ in range(4)]
    perm = _read_perm(r)
    if not r.done():
        raise ValueError("trailing bytes after key")
    d = params.pad
    if any(m.shape != (d, d) for m in mats) or perm.size != d:
        raise ValueError("key components disagree with parameter block")
    return SecretKey(mats[0], mats[1], mats[2], mats[3], perm, params)


def _blob_to_bytes(magic: bytes, digest: bytes, m: Matrix) -> bytes:
    return magic + bytes([_VERSION]) + digest + write_matrix(m)


def _blob_from_bytes(magic: bytes, what: str, data: bytes):
    r = ByteReader(data)
    r.expect(magic, what)
    ver = r.take(1)[0]
    if ver != _VERSION:
        raise ValueError(f"unsupported {what} version {ver}")
    digest = r.take(32)
    m = read_matrix(r)
    if not r.done():
        raise ValueError(f"trailing bytes after {what}")
    if m.rows != m.cols:
        raise ValueError(f"{what} matrix must be square")
    return m, digest


def ciphertext_to_bytes(ct: Ciphertext) -> bytes:
    return _blob_to_bytes(_CT_MAGIC, ct.params_digest, ct.c)


def ciphertext_from_bytes(data: bytes) -> Ciphertext:
    m, digest = _blob_from_bytes(_CT_MAGIC, "ciphertext", data)
    return Ciphertext(c=m, params_digest=digest)


def token_to_bytes(tok: Token) -> bytes:
    return _blob_to_bytes(_TOKEN_MAGIC, tok.params_digest, tok.t)


def token_from_bytes(data: bytes) -> Token:
    m, digest = _blob_from_bytes(_TOKEN_MAGIC, "token", data)
    return Token(t=m, params_digest=digest)
