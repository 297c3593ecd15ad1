"""Threshold keyword search and weighted-sum filtering over encrypted vectors.

Two applications of the same primitive:

  * A file is indexed by the set of keywords it contains, encoded as a binary
    incidence vector over a fixed keyword universe and encrypted.  A query
    token built from another keyword set matches exactly the files sharing
    strictly more than the entry's threshold number of keywords, because the
    incidence inner product counts the intersection.

  * A numeric record (say, per-subject grades) is encrypted once; filter
    tokens carry a weight vector and a cutoff, and match the records whose
    weighted sum strictly exceeds the cutoff.

Matching is exact, not approximate: the decryption value has the same sign as
the plaintext comparison, so the encrypted result set always equals the
plaintext filter's.  Payload encryption for the files themselves is out of
scope; callers store opaque blobs next to the index entries.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from functools import cached_property

from .core import (
    Ciphertext,
    ParamsMismatch,
    SecretKey,
    Token,
    ciphertext_from_bytes,
    ciphertext_to_bytes,
    decrypt,
    encrypt,
    token_gen,
)
from .exact import ByteReader, DimensionMismatch
from .plans import (
    SET_INTERSECT,
    WEIGHTED_SUM,
    oracle_inner,
    plan_min_overlap,
    plan_min_weighted_sum,
)

log = logging.getLogger("tpe.search")

_INDEX_MAGIC = b"TPEI"
_INDEX_VERSION = 1
_MAX_KEYWORDS = 1 << 20
_MAX_ENTRIES = 1 << 24


class UnknownKeyword(ValueError):
    pass


@dataclass(frozen=True)
class KeywordUniverse:
    """The fixed, ordered keyword list every index and query is built against."""

    keywords: tuple

    def __post_init__(self):
        object.__setattr__(self, "keywords", tuple(self.keywords))
        if len(set(self.keywords)) != len(self.keywords):
            raise ValueError("keyword universe contains duplicates")
        for kw in self.keywords:
            if not isinstance(kw, str):
                raise TypeError(f"keywords must be strings, got {kw!r}")

    @property
    def size(self) -> int:
        return len(self.keywords)

    @cached_property
    def _positions(self) -> dict:
        return {kw: i for i, kw in enumerate(self.keywords)}

    def digest(self) -> bytes:
        h = hashlib.sha256(b"TPEU")
        for kw in self.keywords:
            raw = kw.encode("utf-8")
            h.update(struct.pack("!I", len(raw)) + raw)
        return h.digest()


@dataclass(frozen=True)
class EncryptedIndexEntry:
    file_id: str
    index_ct: Ciphertext


def build_incidence_vector(universe: KeywordUniverse, keywords) -> list:
    """Characteristic {0,1} vector of the keyword set in universe order."""
    pos = universe._positions
    vec = [0] * universe.size
    for kw in keywords:
        at = pos.get(kw)
        if at is None:
            raise UnknownKeyword(f"keyword {kw!r} is not in the universe")
        vec[at] = 1
    return vec


def index_encrypt(
    sk: SecretKey, universe: KeywordUniverse, file_id: str, keywords, theta: int, rng=None
) -> EncryptedIndexEntry:
    """Encrypt a file's incidence vector; matches queries overlapping in > theta keywords.

    The threshold is baked into the entry, so one corpus can mix entries with
    different match thresholds.
    """
    vec = build_incidence_vector(universe, keywords)
    ct = encrypt(sk, vec, plan_min_overlap(theta), rng)
    return EncryptedIndexEntry(str(file_id), ct)


def search_token(sk: SecretKey, universe: KeywordUniverse, keywords, rng=None) -> Token:
    """Query token for a keyword set; thresholds live in the entries, not here."""
    vec = build_incidence_vector(universe, keywords)
    return token_gen(sk, vec, plan_min_overlap(0), rng)


def search(entries, query_token: Token) -> list:
    """File ids whose entries match the token, in index order.

    Entries from a different setup are skipped with a warning rather than
    failing the whole scan.
    """
    matches = []
    for entry in entries:
        try:
            decision = decrypt(entry.index_ct, query_token, plan_min_overlap(0).accept_when)
        except ParamsMismatch:
            log.warning("index entry %s belongs to a different setup; skipped", entry.file_id)
            continue
        if decision.accept:
            matches.append(entry.file_id)
    return matches


def oracle_search(corpus, query_keywords, theta: int) -> list:
    """Plaintext reference: ids of (file_id, keyword set) pairs with |overlap| > theta."""
    query = set(query_keywords)
    return [fid for fid, kws in corpus if len(set(kws) & query) > theta]


# -- weighted-sum filtering ---------------------------------------------------------


def record_encrypt(sk: SecretKey, values, rng=None) -> Ciphertext:
    """Encrypt a numeric record once; any number of filter tokens can scan it."""
    return encrypt(sk, values, plan_min_weighted_sum(0), rng)


def weighted_sum_token(sk: SecretKey, weights, theta: int, rng=None) -> Token:
    """Token matching records whose weighted sum strictly exceeds theta."""
    return token_gen(sk, weights, plan_min_weighted_sum(theta), rng)


def weighted_filter(records, token: Token) -> list:
    """Record ids from (record_id, ciphertext) pairs that the token matches, in order."""
    matches = []
    for rec_id, ct in records:
        try:
            decision = decrypt(ct, token, plan_min_weighted_sum(0).accept_when)
        except ParamsMismatch:
            log.warning("record %s belongs to a different setup; skipped", rec_id)
            continue
        if decision.accept:
            matches.append(rec_id)
    return matches


def oracle_weighted(plain_records, weights, theta: int) -> list:
    """Plaintext reference: ids of (record_id, values) pairs with values . weights > theta."""
    out = []
    for rec_id, values in plain_records:
        if len(values) != len(weights):
            raise DimensionMismatch(f"{len(values)} vs {len(weights)} entries")
        if oracle_inner(values, weights) > theta:
            out.append(rec_id)
    return out


# -- index files ------------------------------------------------------------------


def _lp(raw: bytes) -> bytes:
    return struct.pack("!I", len(raw)) + raw


def write_index(path, universe: KeywordUniverse, entries) -> None:
    """Universe header plus one length-prefixed record per entry."""
    entries = list(entries)
    chunks = [_INDEX_MAGIC, bytes([_INDEX_VERSION]), struct.pack("!I", universe.size)]
    for kw in universe.keywords:
        chunks.append(_lp(kw.encode("utf-8")))
    chunks.append(universe.digest())
    chunks.append(struct.pack("!I", len(entries)))
    for entry in entries:
        chunks.append(_lp(entry.file_id.encode("utf-8")))
        chunks.append(_lp(ciphertext_to_bytes(entry.index_ct)))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_index(path):
    """Returns (universe, entries); fails on tampered or truncated files."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = ByteReader(data)
    r.expect(_INDEX_MAGIC, "index magic")
    if r.take(1)[0] != _INDEX_VERSION:
        raise ValueError("unsupported index version")
    n_kw = r.take_u32()
    if n_kw > _MAX_KEYWORDS:
        raise ValueError("implausible keyword count")
    keywords = []
    for _ in range(n_kw):
        keywords.append(r.take(r.take_u32()).decode("utf-8"))
    universe = KeywordUniverse(tuple(keywords))
    if r.take(32) != universe.digest():
        raise ValueError("keyword list does not match its digest")
    n_entries = r.take_u32()
    if n_entries > _MAX_ENTRIES:
        raise ValueError("implausible entry count")
    entries = []
    for _ in range(n_entries):
        fid = r.take(r.take_u32()).decode("utf-8")
        ct = ciphertext_from_bytes(r.take(r.take_u32()))
        entries.append(EncryptedIndexEntry(fid, ct))
    if not r.done():
        raise ValueError("trailing bytes after index records")
    return universe, entries
