import json
import logging
import os
import sys
import time
from argparse import ArgumentParser
from typing import Callable, Dict, List, Optional, Tuple

from gse.config import RunConfig, load_config
from gse.control import ControlPolicy, duality_gap, feedback_policy, verify_variational
from gse.db import init_db
from gse.errors import ConfigError, GridTooSmallError, ModelError, OrderParamError
from gse.functional import parisi_finite_beta, parisi_zero_t
from gse.model import validate
from gse.oracle import covariance_check, extrapolate_gse, run_oracle
from gse.optimizer import beta_sweep, gse_estimate
from gse.order_param import StepOrderParam
from gse.pde import evaluate, solve_finite_beta, solve_zero_t, write_solution
from gse.runner import Runner, threads_from_env
from gse.types import Seed
from gse.util import plain, substream_seed, write_csv, write_json


EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

# Bad input rather than a failed check.
CONFIG_ERRORS = (ConfigError, GridTooSmallError, ModelError, OrderParamError)


def setup_logger(stream=sys.stdout) -> None:
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(stream)
    handler.setLevel(logging.INFO)
    formatter = logging.Formatter(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    handler.setFormatter(formatter)
    root.addHandler(handler)


class Context:
    """Resolved config plus the pieces every subcommand needs."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg.output.directory
        self.seed = Seed(cfg.seed)
        self.runner = Runner(cfg.threads)
        self.model = cfg.model.to_model()
        self.grid = cfg.grid.to_grid(self.model)
        self.search_grid = cfg.optimizer.search_grid(self.grid)

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def stream(self, name: str) -> Seed:
        return substream_seed(self.seed, name)


Outcome = Tuple[bool, dict]


def _order_param(ctx: Context):
    """(eta spec for the control module, PDE solution, record of the order parameter)."""
    section = ctx.cfg.order_param
    alpha = section.to_alpha()
    if alpha is not None:
        sol = solve_finite_beta(ctx.model, alpha, section.beta, ctx.grid)
        return (alpha, section.beta), sol, {"alpha": alpha.to_pairs(), "beta": section.beta}
    gamma = section.to_gamma()
    return gamma, solve_zero_t(ctx.model, gamma, ctx.grid), {"gamma": gamma.to_pairs()}


def cmd_solve(ctx: Context) -> Outcome:
    section = ctx.cfg.order_param
    eta, sol, record = _order_param(ctx)
    if section.alpha is not None:
        value = parisi_finite_beta(ctx.model, eta[0], eta[1], ctx.grid)
    else:
        value = parisi_zero_t(ctx.model, eta, ctx.grid)
    record.update(value.to_record())
    record["diagnostics"] = validate(ctx.model).__dict__

    psi, dpsi = evaluate(sol, 0.0, ctx.grid.nodes)
    write_csv(ctx.path("profile.csv"), [{"x": x, "psi": p, "dpsi": d} for x, p, d in zip(ctx.grid.nodes, psi, dpsi)])
    if section.export_solution:
        write_solution(sol, ctx.path("solution"))
    write_json(ctx.path("functional.json"), record)
    return True, record


def _nonincreasing(values: List[float], tolerance: float) -> bool:
    return all(b <= a + tolerance for a, b in zip(values, values[1:]))


def cmd_optimize(ctx: Context) -> Outcome:
    section = ctx.cfg.optimizer
    report = gse_estimate(
        ctx.model, section.k_max, section.to_config(ctx.stream("optimize")), ctx.grid,
        search_grid=ctx.search_grid, runner=ctx.runner,
    )
    record = report.to_record()
    record["best"] = report.best.to_record(with_trace=section.trace)
    record["nested_ok"] = _nonincreasing([row["value"] for row in report.rows], section.f_tol)
    write_csv(ctx.path("optimize.csv"), [{k: v for k, v in row.items() if k != "gamma"} for row in report.rows])
    write_json(ctx.path("optimize.json"), record)
    return record["nested_ok"], record


def cmd_sweep_beta(ctx: Context) -> Outcome:
    section = ctx.cfg.sweep
    gamma = (
        ctx.cfg.order_param.to_gamma() if section.gamma is None
        else StepOrderParam.from_pairs(section.gamma)
    )
    cfg = ctx.cfg.optimizer.to_config(ctx.stream("sweep")) if section.optimize else None
    sweep = beta_sweep(ctx.model, gamma, section.betas, ctx.grid, cfg=cfg, runner=ctx.runner)
    monotone = _nonincreasing([row["difference"] for row in sweep.rows], ctx.cfg.optimizer.f_tol)
    record = dict(sweep.to_record(), monotone=monotone)
    write_csv(ctx.path("sweep.csv"), sweep.rows)
    write_json(ctx.path("sweep.json"), record)
    return monotone and sweep.weak_convergence_monotone is not False, record


def cmd_verify_control(ctx: Context) -> Outcome:
    section = ctx.cfg.control
    eta, sol, record = _order_param(ctx)
    params = section.to_params(ctx.stream("control"))
    checks, duality = [], []
    for s, x in section.points:
        checks.append(verify_variational(ctx.model, eta, sol, s, x, params).to_record())
        for choice in section.duality_policies:
            policy = feedback_policy(sol) if choice == "feedback" else ControlPolicy.constant(float(choice))
            report = duality_gap(ctx.model, eta, sol, policy, s, x, params)
            duality.append(dict(report.to_record(), s=s, x=x, policy=policy.name))
    ok = all(p["ok"] for p in checks) and all(d["ok"] for d in duality)
    record.update({"variational": checks, "duality": duality, "ok": ok})
    write_json(ctx.path("control.json"), record)
    return ok, record


def _oracle_results(ctx: Context):
    section = ctx.cfg.oracle
    cache = init_db(ctx.path("oracle.db")) if section.cache else None
    try:
        return run_oracle(
            ctx.model, section.sizes, section.samples, section.beta, ctx.stream("oracle"),
            runner=ctx.runner, cache=cache, sweeps=section.sweeps, restarts=section.restarts,
        )
    finally:
        if cache is not None:
            cache.close()


def cmd_oracle(ctx: Context) -> Outcome:
    section = ctx.cfg.oracle
    os.makedirs(ctx.out, exist_ok=True)
    results = _oracle_results(ctx)
    write_csv(ctx.path("oracle_samples.csv"), [s.to_row(section.beta) for r in results for s in r.samples])
    traces = [row for r in results for s in r.samples for row in s.trace_rows()]
    if traces:
        write_csv(ctx.path("anneal_trace.csv"), traces)

    covariance = covariance_check(ctx.model, section.covariance_n, section.covariance_samples, ctx.stream("covariance"))
    record = {
        "results": [r.to_record() for r in results],
        "covariance": covariance.to_record(),
        "anneal_trace": "anneal_trace.csv" if traces else None,
    }
    if len({r.n for r in results}) >= 3:
        record["extrapolation"] = extrapolate_gse(results, section.omega).to_record()
    write_json(ctx.path("oracle.json"), record)
    return covariance.ok, record


def cmd_compare(ctx: Context) -> Outcome:
    section = ctx.cfg.compare
    optimizer = ctx.cfg.optimizer
    os.makedirs(ctx.out, exist_ok=True)
    report = gse_estimate(
        ctx.model, optimizer.k_max, optimizer.to_config(ctx.stream("optimize")), ctx.grid,
        search_grid=ctx.search_grid, runner=ctx.runner,
    )
    results = _oracle_results(ctx)
    extrapolation = extrapolate_gse(results, ctx.cfg.oracle.omega)

    finite_size = []
    for r in results:
        shortfall = r.mean - 3.0 * r.std_error - report.estimate
        finite_size.append({
            "N": r.n,
            "mean": r.mean,
            "std_error": r.std_error,
            "soft_ok": shortfall <= 0.0,
            "hard_ok": shortfall <= section.soft_margin,
        })

    difference = abs(report.estimate - extrapolation.estimate)
    row = {
        "model": ctx.model.key,
        "estimate": report.estimate,
        "estimate_error": report.error,
        "oracle_extrapolation": extrapolation.estimate,
        "oracle_error": extrapolation.error,
        "k0_bound": report.zero_step_bound,
        "difference": difference,
        "agreement_ok": difference <= section.tolerance,
        "below_k0_ok": report.estimate <= report.zero_step_bound - section.k0_margin,
        "finite_size_ok": all(f["hard_ok"] for f in finite_size),
        "cap_policy": report.best.cap_policy,
    }
    row["pass"] = row["agreement_ok"] and row["below_k0_ok"] and row["finite_size_ok"]
    for f in finite_size:
        if not f["soft_ok"]:
            logging.warning(f"FiniteSize\t => N={f['N']} mean L_N exceeds the estimate beyond 3 SE")

    record = {"summary": row, "finite_size": finite_size, "gse": report.to_record(), "extrapolation": extrapolation.to_record()}
    write_csv(ctx.path("compare.csv"), [row])
    write_json(ctx.path("compare.json"), record)
    return row["pass"], record


COMMANDS: Dict[str, Callable[[Context], Outcome]] = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "sweep-beta": cmd_sweep_beta,
    "verify-control": cmd_verify_control,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
}


def make_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="gse", description="Ground state energy of mixed p-spin glasses")
    parser.add_argument("command", choices=sorted(COMMANDS), help="What to run")
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="Root seed (overrides the config)")
    parser.add_argument("--out", default=None, help="Output directory (overrides the config)")
    parser.add_argument("--threads", type=int, default=None, help="Worker processes")
    parser.add_argument("--json", action="store_true", help="Print the result record as JSON on stdout")
    return parser


def resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output"] = cfg.output.model_copy(update={"directory": args.out})
    if args.threads is not None:
        updates["threads"] = args.threads
    elif cfg.threads is None:
        updates["threads"] = threads_from_env()
    return cfg.model_copy(update=updates)


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    setup_logger(sys.stderr if args.json else sys.stdout)

    try:
        cfg = resolve(args)
        ctx = Context(cfg)
    except CONFIG_ERRORS as e:
        logging.error(f"ConfigError\t => {e}")
        return EXIT_CONFIG

    os.makedirs(ctx.out, exist_ok=True)
    write_json(ctx.path("resolved_config.json"), json.loads(cfg.model_dump_json()))

    started = time.perf_counter()
    try:
        ok, record = COMMANDS[args.command](ctx)
    except CONFIG_ERRORS as e:
        logging.error(f"ConfigError\t => {e}")
        return EXIT_CONFIG
    write_json(ctx.path("timing.json"), {"command": args.command, "seconds": time.perf_counter() - started})

    if args.json:
        print(json.dumps(plain(record), sort_keys=True))
    logging.info(f"Done\t => {args.command} {'passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_FAILED


def run():
    sys.exit(main())
