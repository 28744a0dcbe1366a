"""Command-line experiment runner.

Subcommands cover the full offline pipeline: ``oracle`` (model-based
reference), ``simulate`` (episode generation), ``learn`` (offline gain
learning from stored files), ``bounds`` (perturbation-bound verification),
``sweep`` (gain error vs episode count), ``compare`` (sample-average vs
trajectory-average learning).  Every run writes CSV artifacts plus a JSON
manifest with content hashes; identical config + seed reproduces the bytes.

Exit codes: 0 success, 2 config error, 3 excitation/rank failure,
4 trajectory divergence, 5 non-convergence.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .bounds import verify_bound
from .config import ExperimentConfig, canonical_json
from .datamatrices import build_matrices
from .errors import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    LqrLearnError,
    ModeError,
)
from .learners import (
    covariance_gap_residual,
    learn_episodic,
    learn_exact,
    learn_naive_average,
    write_run_report,
)
from .linalg import is_hurwitz
from .riccati import are_residual, closed_loop_eigs, kleinman_iterate
from .runio import RunWriter, read_manifest
from .simulate import generate_episodes, simulate_episode
from .svg import line_chart
from .systems import check_detectability, check_stabilizability
from .trajectory import Trajectory, format_float


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _load_config(args):
    if args.config is None:
        with resources.as_file(
            resources.files("lqrlearn").joinpath("configs/reproduction.json")
        ) as p:
            cfg = ExperimentConfig.from_json(p)
    else:
        cfg = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        cfg.episodes.master_seed = int(args.seed)
    return cfg


def _run_dir(args, cfg, command):
    if args.out is not None:
        return Path(args.out)
    return Path(cfg.output_dir) / command


def _say(args, message):
    if not args.quiet:
        print(message)


def _matrix_lines(M):
    M = np.atleast_2d(M)
    return [",".join(format_float(v) for v in row) for row in M]


def _matrix_csv(M):
    return "\n".join(_matrix_lines(M)) + "\n"


def _seed_list(cfg, count):
    base = cfg.episodes.master_seed
    return [base + i for i in range(count)]


def _exploration_dict(cfg):
    return {
        "count": cfg.exploration.count,
        "amplitude": cfg.exploration.amplitude,
        "freq_range": cfg.exploration.frequency_range,
    }


def _simulate_suite(cfg, master_seed, N, record_disturbance, workers):
    """All N episodes under one master seed; per-episode divergence capture.

    Returns (episodes, errors) where ``episodes`` maps index -> Trajectory
    for the ones that stayed bounded.  The whole batch integrates in one
    vectorized pass; only when something diverges does the suite fall back
    to episode-by-episode integration (bit-identical results) so the
    failure can be pinned to specific episodes.
    """
    sim = cfg.simulation
    sig = cfg.exploration.draw(master_seed, channels=cfg.system.m)
    x0 = sim.start_state(cfg.system.n)
    try:
        batch = generate_episodes(
            cfg.system, sig, N, sim.duration, sim.dt, master_seed, x0=x0,
            record_disturbance=record_disturbance,
            interval_length=sim.interval_length,
            interval_count=sim.interval_count,
            blowup=sim.blowup_threshold,
        )
        return dict(enumerate(batch)), {}
    except DivergenceError:
        pass

    def one(i):
        return simulate_episode(
            cfg.system, sig, i, sim.duration, sim.dt, master_seed, x0=x0,
            record_disturbance=record_disturbance,
            interval_length=sim.interval_length,
            interval_count=sim.interval_count,
            blowup=sim.blowup_threshold,
        )

    episodes, errors = {}, {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {i: pool.submit(one, i) for i in range(N)}
        for i in range(N):
            try:
                episodes[i] = futures[i].result()
            except DivergenceError as exc:
                errors[i] = exc
    return episodes, errors


def _oracle_gain(cfg):
    history, _ = kleinman_iterate(cfg.system, cfg.cost, K0=cfg.learning.K0)
    return history[-1].K, history[-1].P


def _finish(writer, command, cfg, extra=None):
    return writer.finalize(command, cfg.canonical_json(),
                           cfg.episodes.master_seed, extra=extra)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_oracle(args):
    cfg = _load_config(args)
    if not check_stabilizability(cfg.system):
        raise ConfigError(
            "system fails the stabilizability rank test: an unstable mode of A "
            "is unreachable through B, so no stabilizing gain exists"
        )
    check_detectability(cfg.system.A, cfg.cost.Q)  # warns when deficient
    history, converged = kleinman_iterate(cfg.system, cfg.cost, K0=cfg.learning.K0)
    K, P = history[-1].K, history[-1].P
    residual = are_residual(cfg.system, cfg.cost, P)
    eigs = closed_loop_eigs(cfg.system, K)

    writer = RunWriter(_run_dir(args, cfg, "oracle"))
    writer.write_text("oracle_gain.csv", _matrix_csv(K))
    writer.write_text("oracle_cost.csv", _matrix_csv(P))
    writer.write_text("oracle_summary.json", canonical_json({
        "gain": K.tolist(),
        "cost_matrix": P.tolist(),
        "are_residual": residual,
        "closed_loop_eigenvalues": [[v.real, v.imag] for v in eigs],
        "iterations": len(history),
        "converged": bool(converged),
    }))
    _finish(writer, "oracle", cfg)
    _say(args, f"oracle gain: {np.array2string(K.ravel(), precision=6)}  "
               f"(residual {residual:.2e}, {len(history)} iterations)")
    return 0


def cmd_simulate(args):
    cfg = _load_config(args)
    N = cfg.episodes.count
    record = args.mode == "controlled"
    episodes, errors = _simulate_suite(
        cfg, cfg.episodes.master_seed, N, record, args.workers)

    writer = RunWriter(_run_dir(args, cfg, "simulate"))
    for i in sorted(episodes):
        name = f"episode_{i:04d}.csv"
        episodes[i].to_csv(writer.path(name))
        writer.register(name)
    for i in sorted(errors):
        writer.record_error(f"episode_{i:04d}", errors[i])
    _finish(writer, "simulate", cfg, extra={
        "mode": args.mode,
        "episodes_requested": N,
        "episodes_written": len(episodes),
        "episodes_diverged": len(errors),
    })
    _say(args, f"wrote {len(episodes)}/{N} episodes "
               f"({args.mode} mode) to {writer.run_dir}")
    if len(errors) > 0.1 * N:
        raise DivergenceError(
            f"{len(errors)}/{N} episodes exceeded the blow-up threshold; "
            "the run is unusable (see manifest errors)"
        )
    return 0


def _load_episode_files(data):
    manifest, base = read_manifest(data)
    names = sorted(n for n in manifest.get("files", {}) if n.startswith("episode_"))
    if not names:
        raise ConfigError(f"no episode files listed in manifest under {base}")
    return [Trajectory.from_csv(base / n) for n in names], manifest


def cmd_learn(args):
    cfg = _load_config(args)
    trajs, manifest = _load_episode_files(args.data)
    if args.algorithm == "exact":
        if manifest.get("mode") == "uncertain" or trajs[0].disturbances is None:
            raise ModeError(
                "exact learning needs controlled-mode data with the disturbance "
                "recorded; re-run `simulate --mode controlled`"
            )
        # one recorded batch is the designed regime; stacking more adds rows
        history, converged = learn_exact(
            [build_matrices(tr, include_e=True) for tr in trajs],
            cfg.cost, cfg.learning)
    elif args.algorithm == "episodic":
        history, converged = learn_episodic(
            [build_matrices(tr) for tr in trajs], cfg.cost, cfg.learning)
    else:
        history, converged = learn_naive_average(trajs, cfg.cost, cfg.learning)

    K_ref = None
    if args.reference is not None:
        K_ref = np.loadtxt(args.reference, delimiter=",", ndmin=2)

    writer = RunWriter(_run_dir(args, cfg, f"learn-{args.algorithm}"))
    write_run_report(history, converged, writer.path("run_report.csv"), K_ref=K_ref)
    writer.register("run_report.csv")
    final = history[-1]
    writer.write_text("final_gain.csv", _matrix_csv(final.K))
    writer.write_text("final_cost.csv", _matrix_csv(final.P))
    summary = {
        "algorithm": args.algorithm,
        "iterations": len(history),
        "converged": bool(converged),
        "gain": final.K.tolist(),
    }
    if K_ref is not None:
        summary["gain_error_vs_reference"] = float(np.max(np.abs(final.K - K_ref)))

    iters = [it.iteration for it in history]
    steps = [it.extra.get("delta_P", float("nan")) for it in history]
    series = [("step size ||P_k - P_k-1||", iters, steps)]
    if K_ref is not None:
        gerr = [float(np.max(np.abs(it.K - K_ref))) for it in history]
        series.append(("gain error vs reference", iters, gerr))
    writer.write_text("convergence.svg", line_chart(
        series, title=f"{args.algorithm} learning convergence",
        xlabel="iteration", ylabel="magnitude", logy=True))
    writer.write_text("learn_summary.json", canonical_json(summary))
    _finish(writer, f"learn-{args.algorithm}", cfg, extra={
        "data_manifest_config": manifest.get("config_sha256"),
    })
    msg = (f"{args.algorithm}: converged in {len(history)} iterations; "
           f"gain {np.array2string(final.K.ravel(), precision=6)}")
    if K_ref is not None:
        msg += f"; max entry error vs reference {summary['gain_error_vs_reference']:.3e}"
    _say(args, msg)
    return 0


def cmd_bounds(args):
    cfg = _load_config(args)
    batch_sizes = args.batch_sizes
    seeds = _seed_list(cfg, args.seeds)
    writer = RunWriter(_run_dir(args, cfg, "bounds"))
    summary = {}
    med_g2, med_real = [], []
    for N in batch_sizes:
        report = verify_bound(
            cfg.system, cfg.cost, cfg.learning, N, seeds,
            exploration=_exploration_dict(cfg),
            dt=cfg.simulation.dt,
            interval_length=cfg.simulation.interval_length,
            interval_count=cfg.simulation.interval_count,
            x0=cfg.simulation.start_state(cfg.system.n),
        )
        name = f"bound_report_N{N}.csv"
        report.to_csv(writer.path(name))
        writer.register(name)
        finals = report.final_rows()
        summary[str(N)] = {
            "rows": len(report.rows),
            "satisfied_fraction": report.satisfied_fraction(),
            "final_satisfied": sum(r.bound_satisfied for r in finals),
            "seeds": len(finals),
            "median_final_gamma2": float(np.median([r.gamma2 for r in finals])),
            "median_final_realized": float(np.median([r.realized_error for r in finals])),
        }
        med_g2.append(summary[str(N)]["median_final_gamma2"])
        med_real.append(summary[str(N)]["median_final_realized"])
        _say(args, f"N={N}: bound held on {summary[str(N)]['final_satisfied']}"
                   f"/{len(finals)} seeds at the final step "
                   f"(median bound {med_g2[-1]:.3e}, realized {med_real[-1]:.3e})")
    writer.write_text("bounds_summary.json", canonical_json(summary))
    writer.write_text("bounds.svg", line_chart(
        [("median error bound", batch_sizes, med_g2),
         ("median realized error", batch_sizes, med_real)],
        title="solution-error bound vs episode count",
        xlabel="episodes averaged", ylabel="stacked (P, K) error", logy=True))
    _finish(writer, "bounds", cfg, extra={"batch_sizes": batch_sizes,
                                          "seed_count": args.seeds})
    return 0


def _sweep_cell(cfg, N, seed, K_opt, workers):
    """One (episode count, seed) cell: episodic learning + stability verdict."""
    out = {"N": N, "seed": seed, "gain_error": float("nan"), "hurwitz": "",
           "iterations": 0, "converged": 0, "error": ""}
    try:
        episodes, errors = _simulate_suite(cfg, seed, N, False, workers)
        if errors:
            raise DivergenceError(
                f"{len(errors)}/{N} episodes diverged during sweep cell")
        trajs = [episodes[i] for i in sorted(episodes)]
        K_final = None
        try:
            history, converged = learn_episodic(
                [build_matrices(tr) for tr in trajs], cfg.cost, cfg.learning)
            K_final = history[-1].K
            out["iterations"] = len(history)
            out["converged"] = int(converged)
        except ConvergenceError as exc:
            out["error"] = str(exc)
            if exc.history:
                K_final = exc.history[-1].K
                out["iterations"] = len(exc.history)
        if K_final is not None:
            out["gain_error"] = float(np.max(np.abs(K_final - K_opt)))
            Acl = cfg.system.A - cfg.system.B @ K_final
            out["hurwitz"] = int(is_hurwitz(Acl))
    except LqrLearnError as exc:
        out["error"] = str(exc)
    return out


def cmd_sweep(args):
    cfg = _load_config(args)
    K_opt, _ = _oracle_gain(cfg)
    seeds = _seed_list(cfg, args.seeds)
    cells = [(N, seed) for N in args.batch_sizes for seed in seeds]
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        futures = {
            (N, seed): pool.submit(_sweep_cell, cfg, N, seed, K_opt, 1)
            for N, seed in cells
        }
        results = [futures[key].result() for key in cells]

    writer = RunWriter(_run_dir(args, cfg, "sweep"))
    lines = ["N,seed,gain_error,hurwitz,iterations,converged,error"]
    for r in results:
        err_text = r["error"].replace("\n", " ").replace(",", ";")
        lines.append(
            f"{r['N']},{r['seed']},{format_float(r['gain_error'])},{r['hurwitz']},"
            f"{r['iterations']},{r['converged']},{err_text}"
        )
    writer.write_text("sweep.csv", "\n".join(lines) + "\n")

    summary_lines = ["N,median_gain_error,stable_fraction,mean_iterations,failed_cells"]
    medians = []
    for N in args.batch_sizes:
        rows = [r for r in results if r["N"] == N]
        errs = [r["gain_error"] for r in rows if np.isfinite(r["gain_error"])]
        stable = [r["hurwitz"] for r in rows if r["hurwitz"] != ""]
        med = float(np.median(errs)) if errs else float("nan")
        frac = float(np.mean(stable)) if stable else float("nan")
        iters = [r["iterations"] for r in rows if r["iterations"]]
        mean_it = float(np.mean(iters)) if iters else float("nan")
        failed = sum(1 for r in rows if r["error"])
        medians.append(med)
        summary_lines.append(
            f"{N},{format_float(med)},{format_float(frac)},"
            f"{format_float(mean_it)},{failed}"
        )
        _say(args, f"N={N}: median gain error {med:.4g}, "
                   f"stable {sum(stable)}/{len(rows)} seeds, {failed} failed cells")
    writer.write_text("sweep_summary.csv", "\n".join(summary_lines) + "\n")
    writer.write_text("sweep.svg", line_chart(
        [("median gain error", args.batch_sizes, medians)],
        title="gain error vs episode count",
        xlabel="episodes averaged", ylabel="max-entry gain error", logy=True))
    _finish(writer, "sweep", cfg, extra={"batch_sizes": args.batch_sizes,
                                         "seed_count": args.seeds})
    return 0


def cmd_compare(args):
    cfg = _load_config(args)
    K_opt, P_opt = _oracle_gain(cfg)
    seeds = _seed_list(cfg, args.seeds)
    N = cfg.episodes.count

    def one(seed):
        episodes, errors = _simulate_suite(cfg, seed, N, False, 1)
        if errors:
            raise DivergenceError(f"{len(errors)}/{N} episodes diverged")
        trajs = [episodes[i] for i in sorted(episodes)]
        row = {"seed": seed, "episodic_error": float("nan"),
               "naive_error": float("nan"), "error": ""}
        try:
            hist_e, _ = learn_episodic(
                [build_matrices(tr) for tr in trajs], cfg.cost, cfg.learning)
            row["episodic_error"] = float(np.max(np.abs(hist_e[-1].K - K_opt)))
        except LqrLearnError as exc:
            row["error"] = f"episodic: {exc}"
        try:
            hist_n, _ = learn_naive_average(trajs, cfg.cost, cfg.learning)
            row["naive_error"] = float(np.max(np.abs(hist_n[-1].K - K_opt)))
        except LqrLearnError as exc:
            row["error"] += f" naive: {exc}"
        return row, trajs

    rows = []
    first_trajs = None
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        futures = {seed: pool.submit(one, seed) for seed in seeds}
        for seed in seeds:
            row, trajs = futures[seed].result()
            rows.append(row)
            if first_trajs is None:
                first_trajs = trajs

    # Covariance-gap witness on the first seed's batch: the quantity
    # trajectory averaging drops, with a bootstrap standard error.
    residual, boot_se = _gap_with_bootstrap(first_trajs, P_opt, K_opt, cfg)

    writer = RunWriter(_run_dir(args, cfg, "compare"))
    lines = ["seed,episodic_error,naive_error,naive_worse,error"]
    worse = 0
    paired = 0
    for r in rows:
        flag = ""
        if np.isfinite(r["episodic_error"]) and np.isfinite(r["naive_error"]):
            paired += 1
            flag = int(r["naive_error"] > r["episodic_error"])
            worse += flag
        err_text = r["error"].replace("\n", " ").replace(",", ";")
        lines.append(
            f"{r['seed']},{format_float(r['episodic_error'])},"
            f"{format_float(r['naive_error'])},{flag},{err_text}"
        )
    writer.write_text("compare.csv", "\n".join(lines) + "\n")
    summary = {
        "episodes_per_seed": N,
        "paired_seeds": paired,
        "naive_worse_count": worse,
        "median_episodic_error": float(np.median(
            [r["episodic_error"] for r in rows if np.isfinite(r["episodic_error"])])),
        "median_naive_error": float(np.median(
            [r["naive_error"] for r in rows if np.isfinite(r["naive_error"])])),
        "covariance_gap_residual": residual,
        "covariance_gap_bootstrap_se": boot_se,
    }
    writer.write_text("compare_summary.json", canonical_json(summary))
    _finish(writer, "compare", cfg, extra={"seed_count": args.seeds})
    _say(args, f"trajectory-averaging was worse on {worse}/{paired} paired seeds; "
               f"covariance-gap residual {residual:.4g} "
               f"(bootstrap SE {boot_se:.2g})")
    return 0


def _gap_with_bootstrap(trajs, P, K, cfg, reps=200):
    residual = covariance_gap_residual(trajs, P, (K, K), cfg.cost)
    rng = np.random.default_rng(np.random.SeedSequence(
        cfg.episodes.master_seed, spawn_key=(10_000,)))
    n_ep = len(trajs)
    samples = np.empty(reps)
    for b in range(reps):
        idx = rng.integers(0, n_ep, n_ep)
        samples[b] = covariance_gap_residual(
            [trajs[i] for i in idx], P, (K, K), cfg.cost)
    return float(residual), float(np.std(samples, ddof=1))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("episode counts must be positive")
    return values


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="experiment config JSON (default: bundled reproduction config)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="run directory (default: config output dir / command name)")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config master seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker threads for episodes and sweep cells")

    parser = argparse.ArgumentParser(
        prog="lqrlearn",
        description="Learn optimal state-feedback gains offline from disturbed "
                    "trajectory data, and validate them against the model-based answer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("oracle", parents=[common],
                   help="model-based reference gain via Lyapunov policy iteration")

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="generate and store episode trajectories")
    p_sim.add_argument("--mode", choices=("controlled", "uncertain"),
                       default="uncertain",
                       help="controlled records the disturbance signal; uncertain omits it")

    p_learn = sub.add_parser("learn", parents=[common],
                             help="learn a gain offline from stored episodes")
    p_learn.add_argument("--algorithm", choices=("exact", "episodic", "naive"),
                         required=True)
    p_learn.add_argument("--data", metavar="DIR", required=True,
                         help="run directory (or manifest path) produced by simulate")
    p_learn.add_argument("--reference", metavar="CSV", default=None,
                         help="gain CSV to report per-iteration error against")

    p_bounds = sub.add_parser("bounds", parents=[common],
                              help="verify the solution-error bound on matched runs")
    p_bounds.add_argument("--batch-sizes", type=_int_list, default=None,
                          help="comma-separated episode counts (default: config value)")
    p_bounds.add_argument("--seeds", type=int, default=20,
                          help="number of master seeds (consecutive from config seed)")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="gain error and stability across episode counts")
    p_sweep.add_argument("--batch-sizes", type=_int_list, default=[1, 10, 50])
    p_sweep.add_argument("--seeds", type=int, default=20)

    p_cmp = sub.add_parser("compare", parents=[common],
                           help="sample-average vs trajectory-average learning")
    p_cmp.add_argument("--seeds", type=int, default=20)
    return parser


_DISPATCH = {
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "batch_sizes", "missing") is None:
        cfg = _load_config(args)
        args.batch_sizes = [cfg.episodes.count]
    try:
        return _DISPATCH[args.command](args)
    except LqrLearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
