"""Command line interface.

Subcommands:
  simulate  one-cell replication experiment, writes metrics + summary CSV
  sweep     effect-size sweep experiment (ribbon data for plotting)
  estimate  run the iterative estimator on user CSVs, optional bootstrap
  design    optimal design for given coefficients over an exposure range
  weights   importance weights for a first-stage CSV and a design JSON

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import adapt, bootstrap as bootstrap_mod, dataio, design as design_mod, sim
from .errors import OdiwiError, SchemaError
from .estimator import OdiwiConfig, odiwi_estimate, naive_estimate, trajectory_rows
from .glm import bernoulli_logit, gaussian_identity

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _family(name):
    if name in ("logit", "bernoulli", "bernoulli_logit"):
        return bernoulli_logit()
    if name in ("gaussian", "gaussian_identity"):
        return gaussian_identity()
    raise argparse.ArgumentTypeError(f"unknown family {name!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _default_threads():
    return int(os.environ.get("ODIWI_THREADS", "1"))


def _add_odiwi_options(p):
    p.add_argument("--iters", type=int, default=10, help="ODIWI iterations L")
    p.add_argument("--momentum", type=float, default=0.5)
    p.add_argument("--inits", type=int, default=5, help="number of initializations M")
    p.add_argument(
        "--init-mode", choices=["uniform", "dirichlet_random"], default="dirichlet_random"
    )
    p.add_argument(
        "--aggregation",
        choices=["after_first_iteration", "after_last_iteration"],
        default="after_last_iteration",
    )
    p.add_argument("--criterion", choices=["D", "A", "E"], default="D")
    p.add_argument("--kernel", choices=["gaussian", "uniform", "triangle"], default="gaussian")
    p.add_argument("--bandwidth-fraction", type=float, default=0.10)
    p.add_argument("--clip-quantile", type=float, default=0.99)
    p.add_argument("--grid-resolution", type=int, default=201)


def _odiwi_config(args, seed, inits=None, init_mode=None):
    return OdiwiConfig(
        iterations=args.iters,
        momentum=args.momentum,
        num_inits=args.inits if inits is None else inits,
        init_mode=args.init_mode if init_mode is None else init_mode,
        aggregation=args.aggregation,
        criterion=args.criterion,
        kernel_shape=args.kernel,
        bandwidth_fraction=args.bandwidth_fraction,
        clip_quantile=args.clip_quantile,
        grid_resolution=args.grid_resolution,
        seed=seed,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="odiwi",
        description="Two-stage exposure-effect estimation with optimal-design importance weighting",
    )
    parser.add_argument(
        "--config", default=None, help="flat JSON file with default option values"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one-cell replication experiment")
    p.add_argument("--beta-x", type=float, default=1.5)
    p.add_argument("--beta0", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-first", type=int, default=500)
    p.add_argument("--n-second", type=int, default=2000)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--shift-sd", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--summary-out", default=None)
    p.add_argument("--dump-data-prefix", default=None, help="also write one dataset draw")
    _add_odiwi_options(p)

    p = sub.add_parser("sweep", help="effect-size sweep experiment")
    p.add_argument("--beta-x-grid", type=_float_list, default=[0.0, 0.5, 1.0, 1.5, 2.0])
    p.add_argument("--beta0", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-first", type=int, default=500)
    p.add_argument("--n-second", type=int, default=2000)
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--shift-sd", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--summary-out", default=None)
    _add_odiwi_options(p)

    p = sub.add_parser("estimate", help="run the estimator on user CSV datasets")
    p.add_argument("--first-stage", required=True)
    p.add_argument("--second-stage", required=True)
    p.add_argument("--family", type=_family, default="logit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates (0 = off)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True, help="result JSON path")
    p.add_argument("--trajectory-out", default=None)
    _add_odiwi_options(p)

    p = sub.add_parser("design", help="optimal design for given coefficients")
    p.add_argument("--beta", type=_float_list, required=True, help="e.g. 0,1")
    p.add_argument("--family", type=_family, default="logit")
    p.add_argument("--range", type=_float_list, required=True, help="lo,hi exposure range")
    p.add_argument("--resolution", type=int, default=201)
    p.add_argument("--criterion", choices=["D", "A", "E"], default="D")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", required=True, help="design JSON path")

    p = sub.add_parser("weights", help="importance weights for a design")
    p.add_argument("--first-stage", required=True)
    p.add_argument("--design", required=True, help="design JSON path")
    p.add_argument("--kernel", choices=["gaussian", "uniform", "triangle"], default="gaussian")
    p.add_argument("--bandwidth", type=float, default=None, help="default: 10%% of exposure range")
    p.add_argument("--clip-quantile", type=float, default=0.99)
    p.add_argument("--out", required=True, help="weights CSV path")

    parser._command_parsers = dict(sub.choices)
    return parser


def _apply_config_file(parser, argv):
    """Load --config JSON as option defaults; explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        return argv
    with open(known.config, encoding="utf-8") as fh:
        values = json.load(fh)
    if not isinstance(values, dict):
        raise SchemaError("config file must contain a flat JSON object")
    command_parsers = parser._command_parsers.values()
    valid = set()
    for cp in command_parsers:
        valid |= {a.dest for a in cp._actions}
    unknown = set(values) - valid
    if unknown:
        raise SchemaError(f"unknown config keys: {sorted(unknown)}")
    for cp in command_parsers:
        dests = {a.dest for a in cp._actions}
        cp.set_defaults(**{k: v for k, v in values.items() if k in dests})
    return argv


def _metadata(args, extra=None):
    meta = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("config",) and not callable(v)
    }
    meta = {k: (v.kind if hasattr(v, "kind") else v) for k, v in meta.items()}
    if extra:
        meta.update(extra)
    return meta


def _cmd_simulate(args):
    return _run_experiment(args, [args.beta_x])


def _cmd_sweep(args):
    return _run_experiment(args, args.beta_x_grid)


def _run_experiment(args, grid):
    config = sim.SimConfig(
        n_first=args.n_first,
        n_second=args.n_second,
        covariate_dim=args.dim,
        beta0=args.beta0,
        replications=args.reps,
        seed=args.seed,
        shift_sd=args.shift_sd,
    )
    odiwi_config = _odiwi_config(args, seed=args.seed)
    threads = args.threads if args.threads is not None else _default_threads()
    rows = sim.run_experiment(config, grid, odiwi_config, n_jobs=threads)
    meta = _metadata(args, {"sim_config": config.to_dict()})
    dataio.write_metrics_csv(args.out, rows, metadata=meta)
    summary = sim.summarize(rows)
    summary_path = args.summary_out or _sibling(args.out, "_summary.csv")
    dataio.write_summary_csv(summary_path, summary, metadata=meta)
    if getattr(args, "dump_data_prefix", None):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0, 0]))
        truth = sim.draw_truth(config, rng)
        dstar = sim.gen_first_stage(config, truth, rng)
        sim2 = sim.gen_second_stage(config, truth, rng)
        dataio.write_first_stage_csv(args.dump_data_prefix + "_first_stage.csv", dstar, metadata=meta)
        dataio.write_second_stage_csv(args.dump_data_prefix + "_second_stage.csv", sim2.data, metadata=meta)
    failed = sum(1 for r in rows if r.flags)
    print(
        f"wrote {len(rows)} metric rows ({failed} flagged) to {args.out}; summary in {summary_path}"
    )
    return 0


def _sibling(path, suffix):
    root, _ = os.path.splitext(path)
    return root + suffix


def _cmd_estimate(args):
    family = args.family if not isinstance(args.family, str) else _family(args.family)
    dstar, report1 = dataio.load_first_stage(args.first_stage)
    d, report2 = dataio.load_second_stage(args.second_stage, family=family)
    print(f"loaded first stage: {report1['rows']} rows; second stage: {report2['rows']} rows")
    config = _odiwi_config(args, seed=args.seed)
    result = odiwi_estimate(dstar, d, family, config)
    payload = result.to_dict()
    naive_fit = naive_estimate(dstar, d, family)
    payload["naive_beta"] = naive_fit.beta.tolist()
    if args.bootstrap:
        boot = bootstrap_mod.bootstrap_ci(
            dstar,
            d,
            family,
            config,
            num_replicates=args.bootstrap,
            level=args.level,
            seed=args.seed,
        )
        payload["bootstrap"] = {
            "point_estimate": boot.point_estimate,
            "interval": list(boot.interval),
            "level": boot.level,
            "num_replicates": boot.num_replicates,
            "num_failed": boot.num_failed,
            "replicate_estimates": boot.replicate_estimates.tolist(),
        }
    meta = _metadata(args)
    dataio.write_json(args.out, payload, metadata=meta)
    traj_path = args.trajectory_out or _sibling(args.out, "_trajectory.csv")
    dataio.write_trajectory_csv(traj_path, trajectory_rows(result), metadata=meta)
    beta = result.final_beta
    line = f"exposure effect estimate {beta[1]:.6g}"
    if args.bootstrap:
        lo, hi = payload["bootstrap"]["interval"]
        line += f" ({100 * args.level:.0f}% CI {lo:.6g} to {hi:.6g})"
    print(line + f"; wrote {args.out}")
    return 0


def _cmd_design(args):
    family = args.family if not isinstance(args.family, str) else _family(args.family)
    lo, hi = args.range
    if hi <= lo:
        raise SchemaError("--range must be lo,hi with hi > lo")
    grid = design_mod.build_candidate_grid(np.array([lo, hi]), resolution=args.resolution)
    xi = design_mod.solve_optimal_design(
        grid, np.asarray(args.beta), family, criterion=args.criterion, tol=args.tol
    )
    span = hi - lo
    k = 1 + grid.exposure_dim
    xi = design_mod.prune_design(
        xi, merge_radius=0.01 * span, min_weight=1e-4, max_support=k * (k + 1) // 2
    )
    dataio.write_json(args.out, xi.to_dict(), metadata=_metadata(args))
    pts = ", ".join(f"{p[0]:.4g} (w={w:.3g})" for p, w in zip(xi.support, xi.weights))
    print(f"{args.criterion}-optimal design: {pts}; certificate {xi.certificate:.6g}; wrote {args.out}")
    return 0


def _cmd_weights(args):
    dstar, _ = dataio.load_first_stage(args.first_stage)
    with open(args.design, encoding="utf-8") as fh:
        xi = design_mod.Design.from_dict(json.load(fh))
    span = float(dstar.exposures.max() - dstar.exposures.min())
    bandwidth = args.bandwidth if args.bandwidth is not None else 0.10 * span
    kernel = adapt.KernelSpec(shape=args.kernel, bandwidth=bandwidth)
    p_target = adapt.design_density(xi, kernel)
    p_source = adapt.kde_fit(dstar.exposures, adapt.KernelSpec(shape=args.kernel))
    w = adapt.importance_weights(
        dstar.exposures, p_target, p_source, clip_quantile=args.clip_quantile
    )
    dataio.write_weights_csv(args.out, dstar.row_ids, w.values, metadata=_metadata(args))
    print(f"wrote {len(w)} weights to {args.out} (max {w.values.max():.4g})")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "estimate": _cmd_estimate,
    "design": _cmd_design,
    "weights": _cmd_weights,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
    except (OSError, json.JSONDecodeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (SchemaError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OdiwiError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
