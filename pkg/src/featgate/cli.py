"""Command-line entry point.

Four subcommands share one flag set: ``run`` executes a single experiment,
``grid`` sweeps the (M, w) grid, ``importance`` writes the per-feature score
table for a dataset, and ``selftest`` cross-checks the numerical core against
its independent oracles. Exit status is 0 on success, 1 when a run or check
fails, and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import aggregator, importance, nbc, oracles, simnet
from .config import ExperimentConfig, load_config
from .dataset import assign_cluster_labels, ingest_csv, synth_generate
from .errors import FeatgateError, UsageError


@dataclass(frozen=True)
class RunConfig:
    """Validated command-line invocation."""

    command: str
    config_path: str
    out_dir: str
    seed: int | None
    parallel: int | None
    verbose: bool


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featgate",
        description="Feature-significance scoring and data admission experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run one experiment at the configured (M, w)"),
        ("grid", "sweep the configured M and w grids"),
        ("importance", "write the per-feature importance table"),
        ("selftest", "run the oracle cross-checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default="./out", help="output directory (default ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--parallel", type=int, default=None,
                       help="concurrent grid cells (default from config)")
        p.add_argument("--verbose", action="store_true", help="progress output")
    return parser


def parse_args(argv) -> RunConfig:
    ns = _build_parser().parse_args(argv)
    return RunConfig(
        command=ns.command,
        config_path=ns.config,
        out_dir=ns.out,
        seed=ns.seed,
        parallel=ns.parallel,
        verbose=ns.verbose,
    )


def _effective_config(rc: RunConfig) -> ExperimentConfig:
    cfg = load_config(rc.config_path)
    if rc.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=rc.seed))
    if rc.parallel is not None:
        cfg = replace(cfg, parallel=rc.parallel)
    return cfg


def _out_dir(rc: RunConfig) -> Path:
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(rc: RunConfig) -> int:
    cfg = _effective_config(rc)
    out = _out_dir(rc)
    t0 = time.perf_counter()
    report = simnet.run_experiment(cfg.sim)
    simnet.write_csv([report], out / "report.csv")
    simnet.write_text_report([report], out / "report.txt")
    if rc.verbose:
        print(f"run finished in {time.perf_counter() - t0:.1f}s -> {out / 'report.csv'}")
    return 0


def cmd_grid(rc: RunConfig) -> int:
    cfg = _effective_config(rc)
    out = _out_dir(rc)
    t0 = time.perf_counter()
    reports = simnet.run_grid(cfg.sim, cfg.m_list, cfg.w_list, cfg.parallel)
    simnet.write_csv(reports, out / "grid_report.csv")
    simnet.write_text_report(reports, out / "grid_report.txt")
    if rc.verbose:
        print(f"grid of {len(reports)} cells finished in "
              f"{time.perf_counter() - t0:.1f}s -> {out / 'grid_report.csv'}")
    return 0


def _importance_corpus(cfg: ExperimentConfig):
    sim = cfg.sim
    if sim.csv_path is None:
        n_irr = min(int(round(sim.irrelevant_fraction * sim.n_features)),
                    sim.n_features - 1)
        return synth_generate(sim.warmup_per_node, sim.n_nodes, sim.n_features,
                              sim.separation, sim.noise_std, n_irr, sim.seed)
    d = ingest_csv(sim.csv_path)
    return assign_cluster_labels(d, sim.n_nodes, sim.seed)


def cmd_importance(rc: RunConfig) -> int:
    cfg = _effective_config(rc)
    out = _out_dir(rc)
    sim = cfg.sim
    corpus = _importance_corpus(cfg)
    model = nbc.train(corpus, range(corpus.n_features), sim.variance_floor)
    local_class = model.class_ids[0]
    black_box = importance.NbcLocalPosterior(model, local_class, sim.pfi_loss)
    scores = importance.compute_all(black_box, corpus, sim.estimator_config(),
                                    sim.seed)
    ann = simnet.make_ann(sim)
    selection = aggregator.select_features(scores, ann, sim.selection_mode_obj())
    selected = set(selection.indices)

    order = np.lexsort((np.arange(scores.n_features), -selection.scores))
    lines = ["index,name,pfi,shapley,fit,fused,selected"]
    for j in order:
        j = int(j)
        lines.append(
            f"{j},{corpus.feature_names[j]},{scores.pfi[j]:.6f},"
            f"{scores.shapley[j]:.6f},{scores.fit[j]:.6f},"
            f"{selection.scores[j]:.6f},{int(j in selected)}"
        )
    path = out / "importance_report.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if rc.verbose:
        print(f"importance table for M={scores.n_features} -> {path}")
    return 0


def _check_nbc_oracle() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(25):
        k = int(rng.integers(2, 4))
        m = int(rng.integers(1, 4))
        corpus = synth_generate(8, k, m, separation=2.0, noise_std=1.0,
                                n_irrelevant=0, seed=int(rng.integers(1 << 30)))
        model = nbc.train(corpus, range(m))
        for _ in range(8):
            x = rng.normal(0.0, 3.0, size=m)
            got = nbc.posterior(model, x)
            want = oracles.direct_posterior(model, x)
            worst = max(worst, float(np.abs(got - want).max()))
    ok = worst <= 1e-9
    return ok, f"max |posterior - density oracle| = {worst:.2e} (tol 1e-9)"


def _check_shapley_oracle() -> tuple[bool, str]:
    corpus = synth_generate(8, 4, 4, separation=2.0, noise_std=1.0,
                            n_irrelevant=1, seed=11)
    model = nbc.train(corpus, range(4))
    black_box = importance.NbcLocalPosterior(model, 0)
    X = corpus.matrix()
    rng = np.random.default_rng(13)
    exacts, errs = [], []
    for _ in range(8):
        i = int(rng.integers(0, len(X)))
        j = int(rng.integers(0, 4))
        exact = oracles.exact_shapley(black_box, X, i, j)
        mc = importance.shapley_instance(black_box, corpus, i, j, m_iters=2000,
                                         seed=int(rng.integers(1 << 30)))
        exacts.append(exact)
        errs.append(abs(mc - exact))
    spread = max(exacts) - min(exacts)
    mae = sum(errs) / len(errs)
    tol = 0.02 * max(spread, 1e-6)
    ok = mae <= tol
    return ok, f"Shapley MC vs enumeration MAE = {mae:.4f} (tol {tol:.4f})"


def _check_ann_gradients(weights_file: str | None) -> tuple[bool, str]:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        wts = aggregator.init_weights(4, 3, seed=int(rng.integers(1 << 30)))
        O = rng.uniform(0.0, 1.0, size=(6, 3))
        t = rng.uniform(0.0, 1.0, size=6)
        worst = max(worst, oracles.gradient_check(wts, O, t))
    detail = f"max rel. gradient error = {worst:.2e} (tol 1e-4)"
    if weights_file is not None:
        try:
            wts = aggregator.load_weights(weights_file)
            O = rng.uniform(0.0, 1.0, size=(6, wts.n_inputs))
            t = rng.uniform(0.0, 1.0, size=6)
            worst = max(worst, oracles.gradient_check(wts, O, t))
            detail = f"max rel. gradient error = {worst:.2e} (tol 1e-4, incl. {weights_file})"
        except (ValueError, OSError) as exc:
            return False, f"weights file rejected: {exc}"
    return worst <= 1e-4, detail


def _check_fit_additive() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    X = rng.normal(0.0, 1.0, size=(16, 3))
    additive = importance.FunctionModel(
        lambda A: np.sin(A[:, 0]) + 0.5 * A[:, 1] ** 2 - 0.25 * A[:, 2]
    )
    from .dataset import from_matrix
    d = from_matrix(X)
    worst = max(importance.fit_interaction(additive, d, j) for j in range(3))
    ok = worst <= 1e-6
    return ok, f"max interaction share of additive model = {worst:.2e} (tol 1e-6)"


def cmd_selftest(rc: RunConfig) -> int:
    cfg = _effective_config(rc)
    checks = [
        ("nbc-density-oracle", _check_nbc_oracle),
        ("shapley-exact-enumeration", _check_shapley_oracle),
        ("ann-gradient-finite-diff",
         lambda: _check_ann_gradients(cfg.ann_weights_file)),
        ("fit-additive-zero", _check_fit_additive),
    ]
    all_ok = True
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all_ok else 1


_COMMANDS = {
    "run": cmd_run,
    "grid": cmd_grid,
    "importance": cmd_importance,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    try:
        rc = parse_args(argv if argv is not None else sys.argv[1:])
        return _COMMANDS[rc.command](rc)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FeatgateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
