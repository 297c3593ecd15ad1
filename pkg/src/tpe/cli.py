"""Command-line front end.

The client-side commands (keygen, enroll, auth) keep all secrets local: the
key file never leaves disk, templates are encrypted or tokenized in process,
and only ciphertexts and tokens go over the wire.  The remaining subcommands
expose the search application and the security/benchmark harnesses.
"""

from __future__ import annotations

import argparse
import random
import sys

from . import bench as bench_mod
from . import search as search_mod
from .core import (
    Params,
    ciphertext_to_bytes,
    encrypt,
    key_from_bytes,
    key_to_bytes,
    keygen,
    setup,
    token_gen,
    token_to_bytes,
)
from .experiments import (
    BUILTIN_ACTIVE,
    BUILTIN_PASSIVE,
    decryption_oracle_demo,
    registration_attack_check,
    run_active_experiment,
    run_passive_experiment,
)
from .plans import MetricKind, plan_for_metric, read_templates
from .service import (
    Outcome,
    RecordStore,
    ServiceError,
    auth_remote,
    enroll_remote,
    serve,
)


def _rng_from(seed_hex):
    if seed_hex is None:
        return random.Random()
    return random.Random(int(seed_hex, 16))


def _parse_hostport(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def _load_key(path):
    with open(path, "rb") as fh:
        return key_from_bytes(fh.read())


def _first_template(path):
    vectors = read_templates(path)
    if not vectors:
        raise ValueError(f"{path}: no vectors found")
    return vectors[0]


def _metric_of(params: Params) -> MetricKind:
    return MetricKind(params.plan_kind)


# -- client / service commands --------------------------------------------------


_SEARCH_PLANS = {"set": search_mod.SET_INTERSECT, "wsum": search_mod.WEIGHTED_SUM}


def cmd_keygen(args) -> int:
    if args.plan is not None:
        kind = _SEARCH_PLANS[args.plan]
        label = args.plan
    elif args.metric is not None:
        kind = MetricKind.from_name(args.metric).value
        label = args.metric
    else:
        raise ValueError("one of --metric or --plan is required")
    params = setup(
        args.dim, args.theta, kind,
        key_bitwidth=args.key_bits, rand_bitwidth=args.rand_bits,
    )
    sk = keygen(params, _rng_from(args.seed))
    with open(args.key, "wb") as fh:
        fh.write(key_to_bytes(sk))
    print(f"wrote key for n={args.dim} theta={args.theta} plan={label} to {args.key}")
    return 0


def cmd_enroll(args) -> int:
    sk = _load_key(args.key)
    template = _first_template(args.template)
    metric = _metric_of(sk.params)
    plan = plan_for_metric(metric, sk.params.theta, sk.params.n)
    ct = ciphertext_to_bytes(encrypt(sk, template, plan, _rng_from(args.seed)))
    mode = "overwrite" if args.overwrite else ("add" if args.add else "new")
    enroll_remote(_parse_hostport(args.server), args.id, metric, ct, mode=mode)
    print(f"enrolled {args.id}")
    return 0


def cmd_auth(args) -> int:
    sk = _load_key(args.key)
    template = _first_template(args.template)
    metric = _metric_of(sk.params)
    plan = plan_for_metric(metric, sk.params.theta, sk.params.n)
    token = token_gen(sk, template, plan, _rng_from(args.seed))
    outcome = auth_remote(_parse_hostport(args.server), args.id, token_to_bytes(token))
    print("Authenticated" if outcome is Outcome.AUTHENTICATED else "Denied")
    return 0


def cmd_serve(args) -> int:
    host, port = _parse_hostport(args.server)
    server = serve((host, port), args.db, log_path=args.log)
    bound = server.server_address
    print(f"listening on {bound[0]}:{bound[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        server.store.close()
    return 0


# -- search commands ---------------------------------------------------------------


def _read_universe(path) -> search_mod.KeywordUniverse:
    with open(path, "r", encoding="utf-8") as fh:
        words = [line.strip() for line in fh if line.strip()]
    return search_mod.KeywordUniverse(tuple(words))


def _read_corpus(path):
    """Lines of: file_id keyword keyword ..."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                out.append((parts[0], set(parts[1:])))
    return out


def cmd_index_build(args) -> int:
    sk = _load_key(args.key)
    universe = _read_universe(args.universe)
    rng = _rng_from(args.seed)
    entries = [
        search_mod.index_encrypt(sk, universe, fid, kws, args.theta, rng)
        for fid, kws in _read_corpus(args.corpus)
    ]
    search_mod.write_index(args.index, universe, entries)
    print(f"indexed {len(entries)} files over {universe.size} keywords")
    return 0


def cmd_index_search(args) -> int:
    sk = _load_key(args.key)
    universe, entries = search_mod.read_index(args.index)
    token = search_mod.search_token(sk, universe, set(args.keywords), _rng_from(args.seed))
    for fid in search_mod.search(entries, token):
        print(fid)
    return 0


def cmd_wsum_enc(args) -> int:
    sk = _load_key(args.key)
    rng = _rng_from(args.seed)
    records = []
    with open(args.records, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if parts:
                records.append((parts[0], [int(v) for v in parts[1:]]))
    entries = [
        search_mod.EncryptedIndexEntry(rid, search_mod.record_encrypt(sk, vals, rng))
        for rid, vals in records
    ]
    universe = search_mod.KeywordUniverse(tuple(f"slot{i}" for i in range(sk.params.n)))
    search_mod.write_index(args.out, universe, entries)
    print(f"encrypted {len(entries)} records")
    return 0


def cmd_wsum_filter(args) -> int:
    sk = _load_key(args.key)
    _, entries = search_mod.read_index(args.records)
    token = search_mod.weighted_sum_token(
        sk, [int(w) for w in args.weights], args.theta, _rng_from(args.seed)
    )
    for rid in search_mod.weighted_filter(
        [(e.file_id, e.index_ct) for e in entries], token
    ):
        print(rid)
    return 0


# -- security / bench commands -----------------------------------------------------


def _print_report(name: str, report) -> None:
    lo, hi = report.advantage_interval()
    print(
        f"{name}: trials={report.trials} successes={report.successes} "
        f"rate={report.success_rate:.4f} advantage={report.advantage:.4f} "
        f"advantage_ci=[{lo:.4f}, {hi:.4f}]"
    )


def cmd_attack_passive(args) -> int:
    rng = _rng_from(args.seed)
    names = [args.adversary] if args.adversary else sorted(BUILTIN_PASSIVE)
    for name in names:
        report = run_passive_experiment(BUILTIN_PASSIVE[name](), args.trials, args.n, rng=rng)
        _print_report(name, report)
    return 0


def cmd_attack_active(args) -> int:
    rng = _rng_from(args.seed)
    for name in sorted(BUILTIN_ACTIVE):
        report = run_active_experiment(BUILTIN_ACTIVE[name](), args.trials, args.n, rng=rng)
        _print_report(name, report)
    return 0


def cmd_attack_registration(args) -> int:
    stats = registration_attack_check(
        args.n, args.trials,
        type_one_enabled=not args.disable_disguise,
        rng=_rng_from(args.seed),
    )
    frac = stats.rel_err_over_10pct / stats.trials
    print(
        f"trials={stats.trials} exact={stats.exact_recoveries} "
        f"rel_err_over_10pct={stats.rel_err_over_10pct} ({frac:.1%}) "
        f"ratios_constant={stats.ratios_constant}"
    )
    return 0


def cmd_oracle_demo(args) -> int:
    template = _first_template(args.template)
    probes = read_templates(args.probes)
    signs = decryption_oracle_demo(template, args.theta, probes, rng=_rng_from(args.seed))
    for probe, sign in zip(probes, signs):
        label = {1: "above", 0: "equal", -1: "below"}[sign]
        print(f"{' '.join(map(str, probe))} -> {sign:+d} ({label} threshold)")
    return 0


def cmd_bench(args) -> int:
    rows = bench_mod.bench(
        args.n, phases=tuple(args.phases), samples=args.samples, rng=_rng_from(args.seed)
    )
    text = bench_mod.rows_to_csv(rows)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {len(rows)} rows to {args.csv}")
    else:
        print(text, end="")
    return 0


# -- wiring --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common_key(p):
        p.add_argument("--key", required=True, help="secret key file (stays local)")

    def common_seed(p):
        p.add_argument("--seed", help="hex seed for deterministic randomness (testing only)")

    p = sub.add_parser("keygen", help="generate a secret key file")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--theta", type=int, default=0)
    p.add_argument("--metric", choices=["inner", "euclidean", "hamming"])
    p.add_argument(
        "--plan", choices=sorted(_SEARCH_PLANS),
        help="make a search key instead of a biometric one",
    )
    p.add_argument("--key-bits", type=int, default=32)
    p.add_argument("--rand-bits", type=int, default=32)
    common_key(p)
    common_seed(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("enroll", help="encrypt a template locally and register it")
    common_key(p)
    p.add_argument("--template", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--server", required=True, metavar="HOST:PORT")
    p.add_argument("--add", action="store_true", help="append another record for this id")
    p.add_argument("--overwrite", action="store_true", help="replace the id's records")
    common_seed(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("auth", help="build a token locally and authenticate")
    common_key(p)
    p.add_argument("--template", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--server", required=True, metavar="HOST:PORT")
    common_seed(p)
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("serve", help="run the authentication server")
    p.add_argument("--db", required=True, help="append-only record store path")
    p.add_argument("--server", required=True, metavar="HOST:PORT", help="bind address")
    p.add_argument("--log", help="audit log file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("index-build", help="encrypt keyword indices for a corpus")
    common_key(p)
    p.add_argument("--universe", required=True, help="keyword list, one per line")
    p.add_argument("--corpus", required=True, help="lines of: file_id kw kw ...")
    p.add_argument("--theta", type=int, required=True, help="match needs overlap > theta")
    p.add_argument("--index", required=True, help="output index file")
    common_seed(p)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("index-search", help="search an encrypted index")
    common_key(p)
    p.add_argument("--index", required=True)
    p.add_argument("--keywords", nargs="+", required=True)
    common_seed(p)
    p.set_defaults(func=cmd_index_search)

    p = sub.add_parser("wsum-enc", help="encrypt numeric records for weighted-sum filtering")
    common_key(p)
    p.add_argument("--records", required=True, help="lines of: record_id v1 v2 ...")
    p.add_argument("--out", required=True)
    common_seed(p)
    p.set_defaults(func=cmd_wsum_enc)

    p = sub.add_parser("wsum-filter", help="filter encrypted records by weighted sum > theta")
    common_key(p)
    p.add_argument("--records", required=True, help="file written by wsum-enc")
    p.add_argument("--weights", nargs="+", required=True)
    p.add_argument("--theta", type=int, required=True)
    common_seed(p)
    p.set_defaults(func=cmd_wsum_filter)

    p = sub.add_parser("attack-passive", help="run passive distinguisher experiments")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--adversary", choices=sorted(BUILTIN_PASSIVE))
    common_seed(p)
    p.set_defaults(func=cmd_attack_passive)

    p = sub.add_parser("attack-active", help="run the active distinguisher experiment")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, default=8)
    common_seed(p)
    p.set_defaults(func=cmd_attack_active)

    p = sub.add_parser("attack-registration", help="run the known-template recovery attack")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, default=8)
    p.add_argument(
        "--disable-disguise", action="store_true",
        help="force the result-disguising factors to 1 (reproduces the prior scheme)",
    )
    common_seed(p)
    p.set_defaults(func=cmd_attack_registration)

    p = sub.add_parser("oracle-demo", help="show the sign-only leak of evaluation")
    p.add_argument("--template", required=True, help="file with the hidden vector")
    p.add_argument("--probes", required=True, help="file with probe vectors, one per line")
    p.add_argument("--theta", type=int, default=0)
    common_seed(p)
    p.set_defaults(func=cmd_oracle_demo)

    p = sub.add_parser("bench", help="time the main phases and emit CSV")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--phases", nargs="+", default=list(bench_mod.PHASES))
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--csv", help="write CSV here instead of stdout")
    common_seed(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, ServiceError, ConnectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
