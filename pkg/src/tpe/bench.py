"""Timing curves for the five interesting phases.

Absolute numbers are hardware-bound and not comparable across machines; the
point of this module is trends: evaluation cost should grow roughly
quadratically with dimension (times bignum growth), and the online half of
token generation should sit near half of the total once the
template-independent factor is precomputed.

Methodology: monotonic clock, one warmup call, median of at least five warm
samples, single thread.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .core import (
    decryption_value,
    encrypt,
    keygen,
    setup,
    token_finish,
    token_gen,
    token_precompute,
)
from .plans import INNER_PRODUCT, plan_inner_product

PHASES = ("keygen", "encrypt", "token_total", "token_online", "decrypt")

CSV_HEADER = "n,phase,median_ns,samples"


@dataclass(frozen=True)
class BenchRow:
    n: int
    phase: str
    median_ns: int
    samples: int


def _median_ns(fn, samples: int) -> int:
    fn()  # warmup; first call pays allocator and cache setup
    times = []
    for _ in range(samples):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    times.sort()
    return times[len(times) // 2]


def bench(
    n_list,
    phases=PHASES,
    samples: int = 5,
    *,
    key_bitwidth: int = 8,
    rand_bitwidth: int = 32,
    rng=None,
) -> list:
    """Measure the requested phases at each dimension; rows in input order.

    The default key bitwidth is the smallest legal one: exact-arithmetic key
    material grows with both dimension and bitwidth, and small keys keep the
    trend measurements about the algorithms rather than about bignum sizes.
    The randomness width stays at the scheme default so the one-time factors
    and masks are the ones real keys would use.
    """
    n_list = list(n_list)
    if n_list != sorted(n_list) or len(set(n_list)) != len(n_list):
        raise ValueError("n_list must be strictly ascending")
    if samples < 5:
        raise ValueError("fewer than 5 samples gives a meaningless median")
    unknown = set(phases) - set(PHASES)
    if unknown:
        raise ValueError(f"unknown phases: {sorted(unknown)}")
    rng = rng if rng is not None else random.Random()

    rows = []
    for n in n_list:
        params = setup(n, 0, INNER_PRODUCT, key_bitwidth=key_bitwidth, rand_bitwidth=rand_bitwidth)
        plan = plan_inner_product(0)
        sk = keygen(params, rng)
        x = [rng.randint(-256, 256) for _ in range(n)]
        y = [rng.randint(-256, 256) for _ in range(n)]
        # token material at large n costs far more than the timed decrypts;
        # only build what the requested phases will touch
        ct = encrypt(sk, x, plan, rng) if "decrypt" in phases else None
        tok = token_gen(sk, y, plan, rng) if "decrypt" in phases else None
        pre = token_precompute(sk, rng) if "token_online" in phases else None

        fns = {
            "keygen": lambda: keygen(params, rng),
            "encrypt": lambda: encrypt(sk, x, plan, rng),
            "token_total": lambda: token_gen(sk, y, plan, rng),
            "token_online": lambda: token_finish(sk, y, plan, pre, rng),
            "decrypt": lambda: decryption_value(ct, tok),
        }
        for phase in PHASES:
            if phase in phases:
                rows.append(BenchRow(n, phase, _median_ns(fns[phase], samples), samples))
    return rows


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(f"{row.n},{row.phase},{row.median_ns},{row.samples}")
    return "\n".join(lines) + "\n"


def write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
