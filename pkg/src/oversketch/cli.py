"""Command-line experiments: multiply schemes, error sweeps, cost curves,
the sketched-Hessian LP run, and the statistical verification suites.

Every command is fully determined by its flags and --seed; rerunning with
the same configuration produces byte-identical output files. Results are
data only (CSV or JSON) so downstream plotting never parses logs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import accuracy, costmodel, lp
from .matrix import ramp_matrix, save_matrix
from .multiply import (
    MultiplyPlan,
    blocked_multiply,
    coded_naive_multiply,
    naive_multiply,
    oversketch_multiply,
)
from .simulator import Simulator, StragglerModel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any flag")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_straggler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--median", type=float, default=40.0, help="median task seconds")
    p.add_argument("--straggler-prob", type=float, default=0.05)
    p.add_argument("--mult-low", type=float, default=2.5)
    p.add_argument("--mult-high", type=float, default=9.4)
    p.add_argument("--mult-power", type=float, default=8.0,
                   help="1 = uniform multiplier; larger skews toward mult-low")
    p.add_argument("--jitter-sigma", type=float, default=0.05)
    p.add_argument("--invocation", type=float, default=9.0,
                   help="worker-launch overhead per wave, seconds")


def _add_cost_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.05, help="seconds per message")
    p.add_argument("--beta", type=float, default=8e-8, help="seconds per entry")
    p.add_argument("--gamma", type=float, default=2e-11, help="seconds per FLOP")
    p.add_argument("--memory", type=int, default=376_000_000,
                   help="per-worker memory budget in matrix entries")
    p.add_argument("--price", type=float, default=4.897e-6,
                   help="dollars per worker per 100 ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oversketch",
        description="Distributed (sketched) matrix multiplication experiments "
        "on a simulated serverless worker pool.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("multiply", help="run one multiplication scheme")
    p.add_argument("--scheme", required=True,
                   choices=("naive", "blocked", "oversketch", "coded"))
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--a", type=int, help="chunk size for naive/coded")
    p.add_argument("--b", type=int, help="block size for blocked/oversketch")
    p.add_argument("--N", type=int, dest="keep",
                   help="sub-sketches kept per output block")
    p.add_argument("--e", type=int, dest="spare", default=0,
                   help="straggler allowance per output block")
    p.add_argument("--family", choices=("ramp", "random"), default="ramp")
    p.add_argument("--graceful", action="store_true",
                   help="degrade instead of erroring when a block loses too many partials")
    p.add_argument("--save-result", action="store_true")
    p.add_argument("--no-oracle", action="store_true",
                   help="skip the dense reference product and error column")
    _add_straggler_flags(p)
    _add_cost_flags(p)
    _add_common(p)

    p = sub.add_parser("error-sweep", help="sketch error vs ignored workers")
    p.add_argument("--m", type=int, default=160)
    p.add_argument("--n", type=int, default=960)
    p.add_argument("--l", type=int, default=160)
    p.add_argument("--b", type=int, default=16)
    p.add_argument("--z-blocks", type=int, default=30,
                   help="total sub-sketches (sketched width / block size)")
    p.add_argument("--e-max", type=int, default=10)
    p.add_argument("--seeds", type=int, default=10, help="sketch seeds per point")
    p.add_argument("--family", choices=("ramp", "random"), default="ramp")
    _add_straggler_flags(p)
    _add_common(p)

    p = sub.add_parser("cost-compare", help="predicted workers/dollars per scheme")
    p.add_argument("--n-range", default="1024:16384:5",
                   help="min:max:count, geometric grid of inner dimensions")
    p.add_argument("--m", type=int, help="rows of A (default n)")
    p.add_argument("--l", type=int, help="columns of B (default n)")
    p.add_argument("--z-fraction", type=float, default=0.5,
                   help="sketched width as a fraction of n for the oversketch row")
    p.add_argument("--e", type=int, dest="spare", default=1)
    _add_cost_flags(p)
    _add_common(p)

    p = sub.add_parser("lp", help="barrier LP with simulated sketched Hessian")
    p.add_argument("--b", type=int, default=16)
    p.add_argument("--n", type=int, help="constraints (default 40*b)")
    p.add_argument("--m", type=int, help="variables (default 5*b)")
    p.add_argument("--z-blocks", type=int, default=20,
                   help="workers per Hessian block (sketched width / block size)")
    p.add_argument("--e-set", default="0,1,2",
                   help="comma-separated ignored-workers-per-block values")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--tau0", type=float, default=1.0)
    p.add_argument("--tau-double-every", type=int, default=10)
    p.add_argument("--instance", help="load a problem file instead of generating")
    _add_straggler_flags(p)
    _add_common(p)

    p = sub.add_parser("verify", help="run the statistical acceptance suites")
    p.add_argument("--trials-scale", type=float, default=1.0,
                   help="multiplier on default Monte Carlo trial counts")
    _add_common(p)
    return parser


def _straggler_model(args) -> StragglerModel:
    return StragglerModel(
        median_s=args.median,
        straggler_prob=args.straggler_prob,
        multiplier_low=args.mult_low,
        multiplier_high=args.mult_high,
        multiplier_power=args.mult_power,
        jitter_sigma=args.jitter_sigma,
    )


def _cost_params(args) -> costmodel.CostParams:
    return costmodel.CostParams(
        alpha=args.alpha,
        beta=args.beta,
        gamma=args.gamma,
        memory=args.memory,
        price_per_100ms=args.price,
    )


def _make_operands(family: str, m: int, n: int, l: int, seed: int):
    if family == "ramp":
        if l != m:
            raise ValueError("the ramp family uses B = A^T, which needs l == m")
        a = ramp_matrix(m, n)
        return a, a.T.copy()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    return rng.standard_normal((m, n)), rng.standard_normal((n, l))


def _write_rows(path: Path, fieldnames: list[str], rows: list[dict], fmt: str) -> Path:
    """Deterministic table output; floats go through repr via str()."""
    if fmt == "json":
        path = path.with_suffix(".json")
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path
    path = path.with_suffix(".csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})
    return path


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _report_rows(report: costmodel.CostReport) -> list[dict]:
    rows = []
    for phase in report.phases:
        rows.append(
            {
                "scheme": report.scheme,
                "phase": phase.phase,
                "workers": phase.workers,
                "messages": phase.messages,
                "entries": phase.entries,
                "flops": phase.flops,
                "t_worker_s": phase.t_worker(report.params),
                "cost_worker_s": phase.cost(report.params),
                "dollars": phase.dollars(report.params),
            }
        )
    return rows


def cmd_multiply(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.scheme in ("naive", "coded"):
        if args.a is None or args.a < 1:
            raise ValueError("--a must be a positive chunk size for this scheme")
    else:
        if args.b is None or args.b < 1:
            raise ValueError("--b must be a positive block size for this scheme")
    if args.scheme == "oversketch" and (args.keep is None or args.keep < 1):
        raise ValueError("--N (kept sub-sketches) must be >= 1 for oversketch")

    a, b_mat = _make_operands(args.family, args.m, args.n, args.l, args.seed)
    sim = Simulator(model=_straggler_model(args), invocation_s=args.invocation,
                    seed=args.seed)
    params = _cost_params(args)

    if args.scheme == "naive":
        product = naive_multiply(a, b_mat, args.a, sim)
        plan = MultiplyPlan("naive", args.m, args.n, args.l, args.a)
        predicted = costmodel.predict_naive(args.m, args.n, args.l, params, chunk=args.a)
    elif args.scheme == "blocked":
        product = blocked_multiply(a, b_mat, args.b, sim)
        plan = MultiplyPlan("blocked", args.m, args.n, args.l, args.b)
        predicted = costmodel.predict_blocked(args.m, args.n, args.l, params,
                                              block_size=args.b)
    elif args.scheme == "oversketch":
        outcome = oversketch_multiply(
            a, b_mat, args.b, args.keep, args.spare, sim, seed=args.seed,
            strict=not args.graceful,
        )
        product = outcome.product
        plan = MultiplyPlan("oversketch", args.m, args.n, args.l, args.b,
                            keep_count=args.keep, spare_count=args.spare)
        predicted = costmodel.predict_oversketch(
            args.m, args.n, args.l, args.b, args.keep, args.spare, params
        )
    else:
        outcome = coded_naive_multiply(a, b_mat, args.a, sim)
        product = outcome.product
        plan = MultiplyPlan("coded", args.m, args.n, args.l, args.a)
        predicted = costmodel.predict_coded_naive(args.m, args.n, args.l, params,
                                                  chunk=args.a)

    measured = costmodel.measure_costs(sim.trace, params, expected=predicted)

    error = ""
    if not args.no_oracle:
        error = accuracy.frobenius_error(a @ b_mat, product)

    with open(out_dir / "trace.csv", "w", newline="") as fh:
        sim.trace.write_csv(fh)
    with open(out_dir / "waves.json", "w") as fh:
        sim.trace.write_json(fh)
    _write_rows(out_dir / "cost", list(_report_rows(measured)[0].keys()),
                _report_rows(measured), args.format)
    summary = [{
        "scheme": args.scheme,
        "m": args.m, "n": args.n, "l": args.l,
        "tile": args.a if args.scheme in ("naive", "coded") else args.b,
        "keep": args.keep if args.scheme == "oversketch" else "",
        "spare": args.spare if args.scheme == "oversketch" else "",
        "seed": args.seed,
        "tasks_planned": plan.workers_launched,
        "tasks_traced": len(sim.trace.tasks),
        "wallclock_s": sim.trace.total_wallclock_s,
        "c_total_worker_s": measured.c_total,
        "dollars": measured.dollars,
        "error_vs_oracle": error,
        "cost_divergences": ";".join(measured.divergences),
    }]
    _write_rows(out_dir / "summary", list(summary[0].keys()), summary, args.format)
    if args.save_result:
        save_matrix(out_dir / "result.bin", product)
    return EXIT_OK


def cmd_error_sweep(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")
    if args.seeds == 1:
        warnings.warn("single-seed sweep: std column will be empty")
    if args.e_max >= args.z_blocks:
        raise ValueError("--e-max must leave at least one kept sub-sketch")
    a, b_mat = _make_operands(args.family, args.m, args.n, args.l, args.seed)
    exact = a @ b_mat

    rows = []
    for spare in range(args.e_max + 1):
        keep = args.z_blocks - spare
        errors = []
        for s in range(args.seeds):
            sim = Simulator(model=_straggler_model(args),
                            invocation_s=args.invocation, seed=args.seed + s)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                outcome = oversketch_multiply(
                    a, b_mat, args.b, keep, spare, sim, seed=args.seed + s,
                    simulate_sketch=False,
                )
            errors.append(accuracy.frobenius_error(exact, outcome.product))
        errors = np.array(errors)
        rows.append({
            "e": spare,
            "keep": keep,
            "mean_error": float(errors.mean()),
            "std_error": float(errors.std(ddof=1)) if args.seeds > 1 else "",
            "seeds": args.seeds,
        })
    path = _write_rows(out_dir / "error_sweep",
                       ["e", "keep", "mean_error", "std_error", "seeds"],
                       rows, args.format)
    print(f"wrote {path}")
    return EXIT_OK


def _parse_n_range(spec: str) -> list[int]:
    lo, hi, count = spec.split(":")
    lo, hi, count = int(lo), int(hi), int(count)
    if count < 1 or lo < 1 or hi < lo:
        raise ValueError(f"bad --n-range {spec!r}")
    if count == 1:
        return [lo]
    grid = np.geomspace(lo, hi, count)
    return sorted({int(round(v)) for v in grid})


def cmd_cost_compare(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = _cost_params(args)
    rows = []
    for n in _parse_n_range(args.n_range):
        m = args.m if args.m else n
        l = args.l if args.l else n
        b = params.blocked_size()
        specs = {
            "naive": lambda: costmodel.predict_naive(m, n, l, params),
            "blocked": lambda: costmodel.predict_blocked(m, n, l, params),
            "oversketch": lambda: costmodel.predict_oversketch(
                m, n, l, b,
                keep=max(1, int(round(args.z_fraction * n / b))),
                spare=args.spare,
                params=params,
            ),
            "coded": lambda: costmodel.predict_coded_naive(m, n, l, params),
        }
        for scheme, make in specs.items():
            try:
                report = make()
                rows.append({
                    "n": n, "scheme": scheme,
                    "workers": report.workers,
                    "dollars": report.dollars,
                    "c_total_worker_s": report.c_total,
                    "feasible": 1,
                })
            except costmodel.InfeasibleMemoryError:
                rows.append({
                    "n": n, "scheme": scheme, "workers": "",
                    "dollars": "", "c_total_worker_s": "", "feasible": 0,
                })
    path = _write_rows(out_dir / "cost_compare",
                       ["n", "scheme", "workers", "dollars",
                        "c_total_worker_s", "feasible"],
                       rows, args.format)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_lp(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = args.n if args.n else 40 * args.b
    m = args.m if args.m else 5 * args.b
    schedule = {
        "tau0": args.tau0,
        "iterations": args.iterations,
        "tau_double_every": args.tau_double_every,
    }
    if args.instance:
        problem = lp.load_problem(args.instance, **schedule)
        x0 = np.zeros(problem.n_variables)
        if np.any(problem.slacks(x0) <= 0):
            raise ValueError("loaded instance is not strictly feasible at the origin")
    else:
        problem, x0 = lp.make_lp_instance(n, m, args.seed)
        problem = lp.BarrierProblem(problem.a, problem.b, problem.c, **schedule)

    reference = lp.reference_solution(problem, x0)
    ref_objective = reference.objective

    def rows_for(tag: str, result: lp.LPResult) -> list[dict]:
        cumulative = 0.0
        rows = []
        for rec in result.records:
            cumulative += rec.compute_s
            pct = (100.0 * abs(rec.objective - ref_objective) / abs(ref_objective)
                   if ref_objective else "")
            rows.append({
                "e": tag,
                "iteration": rec.iteration,
                "tau": rec.tau,
                "objective": rec.objective,
                "pct_error": pct,
                "compute_s": rec.compute_s,
                "reduction_s": rec.reduction_s,
                "invocation_s": rec.invocation_s,
                "total_s": rec.total_s,
                "cumulative_compute_s": cumulative,
            })
        return rows

    all_rows = rows_for("exact", reference)
    for spare_text in args.e_set.split(","):
        spare = int(spare_text)
        keep = args.z_blocks - spare
        if keep < 1:
            raise ValueError(f"e={spare} leaves no kept sub-sketches")
        sim = Simulator(model=_straggler_model(args),
                        invocation_s=args.invocation, seed=args.seed)
        mode = lp.SketchedHessian(block_size=args.b, keep=keep, spare=spare,
                                  seed=args.seed)
        result = lp.solve_lp(problem, x0, hessian_mode=mode, sim=sim)
        all_rows.extend(rows_for(str(spare), result))

    fields = ["e", "iteration", "tau", "objective", "pct_error", "compute_s",
              "reduction_s", "invocation_s", "total_s", "cumulative_compute_s"]
    path = _write_rows(out_dir / "lp_iterations", fields, all_rows, args.format)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.trials_scale * 100_000 < 1000:
        warnings.warn("very low trial counts: insufficient statistical power")
    results = accuracy.run_suites(seed=args.seed, trials_scale=args.trials_scale)
    rows = [{"suite": r.name, "passed": int(r.passed), "detail": r.detail}
            for r in results]
    _write_rows(Path(args.out) / "verify", ["suite", "passed", "detail"],
                rows, args.format)
    failures = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failures += 0 if r.passed else 1
    if failures:
        print(f"{failures} suite(s) failed")
        return EXIT_VERIFY
    return EXIT_OK


_HANDLERS = {
    "multiply": cmd_multiply,
    "error-sweep": cmd_error_sweep,
    "cost-compare": cmd_cost_compare,
    "lp": cmd_lp,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        with open(known.config) as fh:
            parser.set_defaults(**json.load(fh))
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
