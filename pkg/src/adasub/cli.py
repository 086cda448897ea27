"""Command-line harness: generate instances, run policies, verify bounds, sweep.

Exit codes: 0 success, 1 verification failed, 2 state-space too large,
3 malformed input (including usage errors), 4 infeasible or inconsistent.
Enumeration caps can be overridden with ADASUB_MAX_SUPPORT, ADASUB_MAX_STATES,
ADASUB_BRANCH_CAP, and ADASUB_MC_FALLBACK.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any

from .engine import (
    EVAL_COLUMNS,
    EvalReport,
    Policy,
    evaluate_exact,
    evaluate_mc,
)
from .errors import (
    AdasubError,
    InconsistentObservationError,
    InfeasibleError,
    MalformedInputError,
    TooLargeError,
)
from .instances import (
    build_bags,
    build_random_tabular,
    build_stochastic_cover,
    build_truncation_pair,
    load_instance,
    save_instance,
)
from .model import Instance
from .policies import (
    calibrate_tau,
    fixed_batch_greedy,
    fixed_sequence_policy,
    greedy_coverage,
    greedy_max,
    optimal_coverage_dp,
    optimal_policy_dp,
    semi_adaptive_greedy_coverage,
    semi_adaptive_greedy_max,
    threshold_policy,
)
from .verifiers import (
    VERIFY_COLUMNS,
    BoundCheckResult,
    check_adaptive_monotone,
    check_adaptive_submodular,
    measure_superround_decay,
    rows_to_csv,
    verify_batch_lemma8,
    verify_corollary_delta,
    verify_coverage_bound,
    verify_eq_main,
    verify_eta,
    verify_hardness,
    verify_lemma1,
    verify_round_complexity,
    verify_semi_max_bound,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_TOO_LARGE = 2
EXIT_MALFORMED = 3
EXIT_INFEASIBLE = 4

EXPERIMENT_COLUMNS = ("sweep", "kind") + EVAL_COLUMNS + (
    "verifier",
    "lhs",
    "rhs",
    "slack",
    "satisfied",
    "witness",
)

_GNUPLOT_HINTS = """\
# rounds versus size (from: experiment rounds sweep, or verify rounds --sizes ...)
#   plot "rounds.csv" using (log($1)*log($2)):3 with linespoints title "rounds"
set datafile separator ","
# hardness trend (from: verify hardness --k K --r R over several K)
#   plot "hardness.csv" using 1:2 with linespoints title "batch value / k"
# value sweeps (from: run ... --format csv appended across parameters)
#   plot "runs.csv" using 1:4 with linespoints title "f_avg"
"""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors, which collides with the documented
    too-large code; route usage errors to the malformed-input code instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with_code(message))

    def exit_with_code(self, message):
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        return EXIT_MALFORMED


# --- policy specs -------------------------------------------------------------


def _parse_opts(rest: str, spec: str) -> dict[str, str]:
    opts: dict[str, str] = {}
    for part in rest.split(","):
        if not part:
            continue
        if "=" not in part:
            raise MalformedInputError(f"policy spec {spec!r}: expected key=value, got {part!r}")
        key, val = part.split("=", 1)
        opts[key] = val
    return opts


def _opt_float(opts: dict[str, str], key: str, spec: str) -> float:
    if key not in opts:
        raise MalformedInputError(f"policy spec {spec!r} needs {key}=")
    try:
        return float(opts[key])
    except ValueError as exc:
        raise MalformedInputError(f"policy spec {spec!r}: {key} is not a number") from exc


def _need_k(k: int | None, spec: str) -> int:
    if k is None:
        raise MalformedInputError(f"policy {spec!r} needs --k")
    return k


def policy_from_spec(spec: str, inst: Instance, k: int | None = None) -> Policy:
    """Build a policy from its command-line spec string.

    Specs: greedy | greedy-cov | threshold:tau=T,p=P[,mode=sav] |
    tau-cal:i=I[,mode=sav] | semi:eps=E[,gap=ig|rig] | semi-cov:eps=E[,gap=..] |
    batch:r=R | seq:E0-E1-... | opt-dp | opt-cov-dp.  Budgeted specs take k
    from --k.
    """
    head, _, rest = spec.partition(":")
    if head == "seq":
        try:
            elems = [int(x) for x in rest.split("-")] if rest else []
        except ValueError as exc:
            raise MalformedInputError(f"policy spec {spec!r}: bad element list") from exc
        return fixed_sequence_policy(elems)
    opts = _parse_opts(rest, spec)
    if head == "greedy":
        return greedy_max(_need_k(k, spec))
    if head == "greedy-cov":
        return greedy_coverage()
    if head == "threshold":
        return threshold_policy(
            _opt_float(opts, "tau", spec),
            _opt_float(opts, "p", spec) if "p" in opts else 0.0,
            opts.get("mode", "marginal"),
        )
    if head == "tau-cal":
        mode = opts.get("mode", "marginal")
        cal = calibrate_tau(inst, int(_opt_float(opts, "i", spec)), mode)
        return threshold_policy(cal.tau_i, cal.coin_p, mode)
    if head == "semi":
        return semi_adaptive_greedy_max(
            _need_k(k, spec), _opt_float(opts, "eps", spec), opts.get("gap", "ig")
        )
    if head == "semi-cov":
        return semi_adaptive_greedy_coverage(
            eps=_opt_float(opts, "eps", spec), gap=opts.get("gap", "rig")
        )
    if head == "batch":
        return fixed_batch_greedy(int(_opt_float(opts, "r", spec)), _need_k(k, spec))
    if head == "opt-dp":
        return optimal_policy_dp(_need_k(k, spec))
    if head == "opt-cov-dp":
        return optimal_coverage_dp()
    raise MalformedInputError(f"unknown policy spec {spec!r}")


# --- shared emission -----------------------------------------------------------


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _reports_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EVAL_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rep in reports:
        w.writerow(rep.to_row())
    return buf.getvalue()


def _reports_json(reports: list[EvalReport]) -> str:
    docs = []
    for rep in reports:
        doc = dataclasses.asdict(rep)
        doc["flags"] = list(rep.flags)
        docs.append(doc)
    return json.dumps(docs, sort_keys=True, indent=2) + "\n"


def _results_json(results: list[BoundCheckResult]) -> str:
    docs = []
    for r in results:
        doc = dataclasses.asdict(r)
        doc["witness"] = None if r.witness is None else str(r.witness)
        docs.append(doc)
    return json.dumps(docs, sort_keys=True, indent=2) + "\n"


# --- gen ------------------------------------------------------------------------


def _build_family(family: str, p: dict[str, Any]):
    if family == "bags":
        if p.get("k") is None:
            raise MalformedInputError("gen bags needs --k")
        return build_bags(int(p["k"]), p.get("seed"))
    if family == "cover":
        if p.get("n") is None or p.get("universe") is None:
            raise MalformedInputError("gen cover needs --n and --universe")
        return build_stochastic_cover(
            int(p["n"]), int(p["universe"]), int(p.get("outcomes") or 2), int(p.get("seed") or 0)
        )
    if family == "tabular":
        if p.get("n") is None or p.get("m") is None:
            raise MalformedInputError("gen tabular needs --n and --m")
        return build_random_tabular(
            int(p["n"]),
            int(p["m"]),
            int(p.get("seed") or 0),
            universe_size=int(p["universe"]) if p.get("universe") is not None else None,
        )
    raise MalformedInputError(f"unknown instance family {family!r}")


def cmd_gen(args) -> int:
    p = vars(args)
    if args.family == "trunc-pair":
        f_inst, g_inst = build_truncation_pair()
        prefix = args.out or "trunc"
        if prefix.endswith(".json"):
            prefix = prefix[: -len(".json")]
        paths = (f"{prefix}-f.json", f"{prefix}-g.json")
        save_instance(f_inst, paths[0])
        save_instance(g_inst, paths[1])
        print(paths[0])
        print(paths[1])
        return EXIT_OK
    inst = _build_family(args.family, p)
    path = args.out or f"{inst.name}.json"
    save_instance(inst, path)
    print(path)
    return EXIT_OK


# --- run --------------------------------------------------------------------------


def _evaluate(inst: Instance, policy: Policy, mode: str, samples: int, seed: int | None,
              timing: bool) -> EvalReport:
    t0 = time.perf_counter()
    if mode == "exact":
        rep = evaluate_exact(policy, inst)
    elif mode == "mc":
        if seed is None:
            raise MalformedInputError("mc mode needs an explicit --seed")
        rep = evaluate_mc(policy, inst, samples, seed)
    else:
        raise MalformedInputError(f"unknown mode {mode!r}")
    if timing:
        rep = dataclasses.replace(rep, wall_ms=(time.perf_counter() - t0) * 1000.0)
    return rep


def cmd_run(args) -> int:
    inst = load_instance(args.instance)
    policy = policy_from_spec(args.policy, inst, args.k)
    rep = _evaluate(inst, policy, args.mode, args.samples, args.seed, args.timing)
    text = _reports_json([rep]) if args.format == "json" else _reports_csv([rep])
    _emit(text, args.out)
    return EXIT_OK


# --- verify -----------------------------------------------------------------------

_NO_INSTANCE_SUITES = ("hardness", "rounds")


def _suite_rows(suite: str, inst: Instance | None, p: dict[str, Any]) -> list[BoundCheckResult]:
    def want(key, default=None):
        v = p.get(key)
        return default if v is None else v

    seed = int(want("seed", 0))
    if suite == "hardness":
        if p.get("k") is None or p.get("r") is None:
            raise MalformedInputError("hardness needs --k and --r")
        return verify_hardness(int(p["k"]), int(p["r"]), int(want("trials", 10000)), seed)
    if suite == "rounds":
        sizes = [int(s) for s in str(want("sizes", "8,16,32")).split(",") if s]
        insts = [
            build_stochastic_cover(n, 2 * n, 2, seed=seed + idx) for idx, n in enumerate(sizes)
        ]
        return verify_round_complexity(
            insts, float(want("eps", 0.1)), trials=int(want("trials", 40)), seed=seed
        )
    if inst is None:
        raise MalformedInputError(f"suite {suite!r} needs an instance or --corpus")
    if suite == "submodular":
        return [check_adaptive_submodular(inst)]
    if suite == "monotone":
        return [check_adaptive_monotone(inst)]
    if suite == "eta":
        return [verify_eta(inst)]
    if suite == "lemma1":
        ell = int(want("l", 1))
        k = int(want("k", ell))
        return [verify_lemma1(inst, optimal_policy_dp(k), ell)]
    if suite == "eq-main":
        i = int(want("i", 1))
        k = int(want("k", i))
        return [verify_eq_main(inst, optimal_policy_dp(k), i)]
    if suite == "coverage-bound":
        return [verify_coverage_bound(inst, None, optimal_coverage_dp())]
    if suite == "corollary-delta":
        return [verify_corollary_delta(inst, None, optimal_coverage_dp())]
    if suite == "semi-max":
        ell = int(want("l", 1))
        k = int(want("k", ell))
        return [verify_semi_max_bound(inst, optimal_policy_dp(k), ell, float(want("eps", 0.1)), k)]
    if suite == "lemma8":
        ell = int(want("l", 1))
        k = int(want("k", ell))
        return [verify_batch_lemma8(inst, optimal_policy_dp(k), ell, float(want("eps", 0.1)))]
    if suite == "decay":
        return [
            measure_superround_decay(
                inst,
                float(want("eps", 0.2)),
                float(want("delta", 0.1)),
                int(want("trials", 1000)),
                seed,
            )
        ]
    raise MalformedInputError(f"unknown verifier suite {suite!r}")


def _corpus_instance(corpus: str, seed: int, p: dict[str, Any]) -> Instance:
    if corpus == "random":
        return build_random_tabular(int(p.get("n") or 4), int(p.get("m") or 6), seed)
    if corpus == "cover":
        return build_stochastic_cover(
            int(p.get("n") or 5), int(p.get("universe") or 8), int(p.get("outcomes") or 2), seed
        )
    raise MalformedInputError(f"unknown corpus {corpus!r}")


def cmd_verify(args) -> int:
    p = vars(args)
    names = list(args.target)
    if len(names) == 1:
        inst_path, suite = None, names[0]
    elif len(names) == 2:
        inst_path, suite = names
    else:
        raise MalformedInputError("verify takes [instance] suite")

    results: list[BoundCheckResult] = []
    if args.corpus is not None:
        if inst_path is not None:
            raise MalformedInputError("give either an instance file or --corpus, not both")
        for s in range(args.seeds):
            results.extend(_suite_rows(suite, _corpus_instance(args.corpus, s, p), p))
    elif suite in _NO_INSTANCE_SUITES and inst_path is None:
        results.extend(_suite_rows(suite, None, p))
    else:
        if inst_path is None:
            raise MalformedInputError(f"suite {suite!r} needs an instance or --corpus")
        results.extend(_suite_rows(suite, load_instance(inst_path), p))

    text = _results_json(results) if args.format == "json" else rows_to_csv(results)
    _emit(text, args.out)
    if args.expect_violation:
        ok = bool(results) and all(not r.satisfied for r in results)
    else:
        ok = all(r.satisfied for r in results)
    return EXIT_OK if ok else EXIT_FAILED


# --- experiment --------------------------------------------------------------------


def _sweep_rows(sweep: dict[str, Any]) -> list[dict[str, str]]:
    """One sweep point -> unified report rows.  Module-level so worker
    processes can pickle the call."""
    if not isinstance(sweep, dict):
        raise MalformedInputError("experiment sweep entries must be objects")
    sid = str(sweep.get("id", ""))
    command = sweep.get("command")
    rows: list[dict[str, str]] = []
    if command == "run":
        src = sweep.get("instance")
        if isinstance(src, dict) and "file" in src:
            inst = load_instance(src["file"])
        elif isinstance(src, dict) and "family" in src:
            built = _build_family(src["family"], src)
            inst = built
        else:
            raise MalformedInputError(f"sweep {sid!r}: instance needs a file or family")
        policy = policy_from_spec(str(sweep.get("policy", "")), inst, sweep.get("k"))
        rep = _evaluate(
            inst,
            policy,
            str(sweep.get("mode", "exact")),
            int(sweep.get("samples", 1000)),
            sweep.get("seed"),
            bool(sweep.get("timing", False)),
        )
        base = {c: "" for c in EXPERIMENT_COLUMNS}
        base["sweep"] = sid
        base["kind"] = "run"
        base.update(rep.to_row())
        rows.append(base)
        return rows
    if command == "verify":
        suite = str(sweep.get("suite", ""))
        inst = None
        src = sweep.get("instance")
        if isinstance(src, dict) and "file" in src:
            inst = load_instance(src["file"])
        elif isinstance(src, dict) and "family" in src:
            inst = _build_family(src["family"], src)
        elif suite not in _NO_INSTANCE_SUITES:
            raise MalformedInputError(f"sweep {sid!r}: suite {suite!r} needs an instance")
        for res in _suite_rows(suite, inst, sweep):
            base = {c: "" for c in EXPERIMENT_COLUMNS}
            base["sweep"] = sid
            base["kind"] = "verify"
            base.update(res.to_row())
            rows.append(base)
        return rows
    raise MalformedInputError(f"sweep {sid!r}: unknown command {command!r}")


def cmd_experiment(args) -> int:
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except OSError as exc:
        raise MalformedInputError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{args.config}:{exc.lineno}: invalid syntax ({exc.msg})") from exc
    if not isinstance(config, dict) or not isinstance(config.get("sweeps", []), list):
        raise MalformedInputError("experiment config must be an object with a sweeps array")
    sweeps = config.get("sweeps", [])
    if args.jobs > 1 and len(sweeps) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            row_blocks = list(pool.map(_sweep_rows, sweeps))
    else:
        row_blocks = [_sweep_rows(s) for s in sweeps]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EXPERIMENT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for block in row_blocks:
        for row in block:
            w.writerow(row)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# --- entry point ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="adasub", description=__doc__)
    parser.add_argument(
        "--gnuplot-hints", action="store_true", help="print plotting recipes and exit"
    )
    sub = parser.add_subparsers(dest="cmd")

    g = sub.add_parser("gen", help="write a canonical instance file", parents=[])
    g.add_argument("family", choices=("bags", "trunc-pair", "cover", "tabular"))
    g.add_argument("--k", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--universe", type=int)
    g.add_argument("--outcomes", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="evaluate a policy on an instance")
    r.add_argument("instance")
    r.add_argument("policy")
    r.add_argument("--k", type=int)
    r.add_argument("--mode", choices=("exact", "mc"), default="exact")
    r.add_argument("--samples", type=int, default=1000)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--timing", action="store_true", help="measure wall_ms (off: column is 0)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a verifier suite")
    v.add_argument("target", nargs="+", metavar="[instance] suite")
    v.add_argument("--corpus", choices=("random", "cover"))
    v.add_argument("--seeds", type=int, default=1)
    v.add_argument("--expect-violation", action="store_true")
    v.add_argument("--l", type=int)
    v.add_argument("--i", type=int)
    v.add_argument("--k", type=int)
    v.add_argument("--r", type=int)
    v.add_argument("--n", type=int)
    v.add_argument("--m", type=int)
    v.add_argument("--universe", type=int)
    v.add_argument("--outcomes", type=int)
    v.add_argument("--eps", type=float)
    v.add_argument("--delta", type=float)
    v.add_argument("--trials", type=int)
    v.add_argument("--sizes")
    v.add_argument("--seed", type=int)
    v.add_argument("--out")
    v.add_argument("--format", choices=("csv", "json"), default="csv")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("experiment", help="run a sweep config")
    e.add_argument("config")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.gnuplot_hints:
        sys.stdout.write(_GNUPLOT_HINTS)
        return EXIT_OK
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return EXIT_MALFORMED
    try:
        return args.func(args)
    except MalformedInputError as exc:
        print(f"adasub: error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except TooLargeError as exc:
        print(f"adasub: error: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (InfeasibleError, InconsistentObservationError) as exc:
        print(f"adasub: error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AdasubError as exc:
        print(f"adasub: error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
