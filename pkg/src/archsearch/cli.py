"""Command-line entry point: ``archsearch <verb> [options]``.

Exit codes: 0 success, 2 usage error, 3 evaluator failure, 4 corrupt or
missing run state.  Every output file carries the run's config hash.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import driver, metrics
from .driver import (
    Archive,
    CorruptCheckpoint,
    RunConfig,
    SearchAborted,
    SearchState,
)
from .evaluation import VARIANTS, EvaluationError
from .searchspace import COMPLEXITY_NAMES, SearchSpaceError, complexity_batch, enumerate_array, sample_uniform
from .surrogates import MODEL_IDS, AllModelsFailed, adaptive_switch, fit_model

log = logging.getLogger("archsearch")

EXIT_OK, EXIT_USAGE, EXIT_EVALUATOR, EXIT_STATE = 0, 2, 3, 4


class UsageError(Exception):
    pass


class MissingRunArtifacts(Exception):
    pass


# -- output helpers ---------------------------------------------------------------------


def write_csv(path: Path, header: list[str], rows, config_hash: str):
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_json(path: Path, obj: dict, config_hash: str):
    path.write_text(json.dumps({"config_hash": config_hash, **obj}, indent=2, sort_keys=True) + "\n")


def write_svg(fig, path: Path, config_hash: str):
    import matplotlib.pyplot as plt

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    text = buf.getvalue()
    head, sep, rest = text.partition("?>")
    path.write_text(f"{head}{sep}\n<!-- config_hash={config_hash} -->{rest}" if sep else f"<!-- config_hash={config_hash} -->\n{text}")


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "archsearch"
    return plt.subplots(figsize=(6, 4.5))


def prepare_out(out: Path, force: bool) -> Path:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"output directory {out} is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- config handling ----------------------------------------------------------------------

STUDY_KEYS = ("study", "transfer")


def load_config(args) -> tuple[RunConfig, dict]:
    """Read the JSON config (optional) and apply command-line overrides."""
    raw: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    extras = {k: raw.pop(k) for k in STUDY_KEYS if k in raw}
    evaluator = dict(raw.get("evaluator", {"kind": "synthetic", "variant": "smooth"}))
    if args.evaluator:
        evaluator["kind"] = args.evaluator
    if args.variant:
        evaluator["variant"] = args.variant
    if evaluator.get("kind") == "external" and "command" not in evaluator:
        evaluator["command"] = [sys.executable, "-m", "archsearch.stub", "--variant", evaluator.get("variant", "smooth")]
    if evaluator.get("kind") == "tabular" and "path" not in evaluator:
        raise UsageError("tabular evaluator needs evaluator.path in the config")
    raw["evaluator"] = evaluator
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = RunConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    if args.budget is not None:
        if args.budget < cfg.n_initial:
            raise UsageError(f"--budget {args.budget} is below the {cfg.n_initial} initial samples")
        cfg = replace(cfg, iterations=math.ceil((args.budget - cfg.n_initial) / cfg.batch_size))
    return cfg, extras


# -- run artifacts -----------------------------------------------------------------------------


def write_run(out: Path, state: SearchState):
    cfg = state.config
    h = cfg.config_hash()
    names = cfg.complexity_names
    write_json(out / "config.json", {"config": cfg.to_dict()}, h)
    state.archive.export_csv(out / "archive.csv", h)
    if state.metrics:
        header = driver.metric_columns(cfg)
        write_csv(out / "metrics.csv", header, ([row[k] for k in header] for row in state.metrics), h)
    score_rows = [
        [r.iteration, s["model"], s["cv_tau"], s["cv_rmse"], s["model"] == r.model_id]
        for r in state.reports
        for s in r.cv_scores
    ]
    write_csv(out / "surrogates.csv", ["iteration", "model", "cv_tau", "cv_rmse", "selected"], score_rows, h)
    front = sorted(state.front(), key=lambda a: [a.complexity[n] for n in names])
    write_csv(
        out / "front.csv",
        ["genome", "accuracy", *COMPLEXITY_NAMES, "iteration"],
        ([a.text, a.accuracy, *(a.complexity[c] for c in COMPLEXITY_NAMES), a.iteration] for a in front),
        h,
    )
    if len(cfg.objectives) == 2:
        write_svg(_front_figure(state.archive, front, names[0]), out / "front.svg", h)


def _front_figure(archive: Archive, front, name: str):
    fig, ax = _figure()
    ax.scatter(archive.complexity_matrix([name])[:, 0], archive.accuracies(), s=8, c="0.7", label="evaluated")
    ax.plot([a.complexity[name] for a in front], [a.accuracy for a in front], "o-", c="C3", ms=4, label="non-dominated")
    ax.set_xlabel(name)
    ax.set_ylabel("accuracy")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return fig


# -- verbs ----------------------------------------------------------------------------------


def cmd_search(args) -> int:
    cfg, _ = load_config(args)
    if cfg.scalarized:
        raise UsageError("config sets scalar_target; use the search-scalar verb")
    out = prepare_out(Path(args.out), args.force)
    state = driver.run_search(cfg, checkpoint_path=out / "checkpoint.json", stop_after=args.stop_after)
    write_run(out, state)
    _report(state)
    return EXIT_OK


def _report(state: SearchState):
    last = state.metrics[-1]
    extra = f"hypervolume {last['hypervolume']:.6f}" if "hypervolume" in last else f"best scalarized {last['best_scalarized']:.6f}"
    print(f"{len(state.archive)} evaluations, {len(state.front())} non-dominated, {extra}")


def median_complexity(cfg: RunConfig, name: str = "madds", n_samples: int = 20_000) -> float:
    """Median of ``name`` over the space (exact when enumerable, else sampled)."""
    space = cfg.search_space()
    try:
        G = enumerate_array(space)
    except SearchSpaceError:
        G = sample_uniform(np.random.default_rng([cfg.seed, 9]), space, n_samples)
    comp = complexity_batch(G, driver.backbone_from_dict(cfg.backbone), driver.latency_from_dict(cfg.latency))
    return float(np.median(comp[:, COMPLEXITY_NAMES.index(name)]))


def cmd_search_scalar(args) -> int:
    cfg, _ = load_config(args)
    if len(cfg.objectives) != 2:
        raise UsageError("scalarized search takes exactly one complexity objective")
    if cfg.scalar_target is None:
        cfg = replace(cfg, scalar_target=median_complexity(cfg, cfg.objectives[1]))
    out = prepare_out(Path(args.out), args.force)
    result = driver.run_scalarized(cfg, checkpoint_path=out / "checkpoint.json")
    write_run(out, result.state)
    h = cfg.config_hash()
    write_csv(out / "trajectory.csv", ["evaluations", "best_scalarized"], enumerate(result.trajectory.tolist(), 1), h)
    best = result.best
    write_json(out / "best.json", {"best": best.to_dict(), "scalarized": float(result.trajectory[-1]), "target": cfg.scalar_target}, h)
    print(f"best {best.text}: accuracy {best.accuracy:.6f}, {cfg.objectives[1]} {best.complexity[cfg.objectives[1]]:.6g} (target {cfg.scalar_target:.6g})")
    return EXIT_OK


def surrogate_study(cfg: RunConfig, pool: int = 2000, sizes=(100, 200, 300, 400, 500), trials: int = 10, models=MODEL_IDS):
    """Held-out rank correlation of each predictor and of adaptive switching.

    Returns rows (model, size, trial, spearman, kendall).
    """
    space = cfg.search_space()
    evaluator = driver.make_evaluator(cfg.evaluator)
    rng = np.random.default_rng([cfg.seed, 7])
    G = np.unique(sample_uniform(rng, space, pool), axis=0)
    G = G[rng.permutation(len(G))]
    y = evaluator.accuracy(G)
    rows = []
    for size in sizes:
        for trial in range(trials):
            r = np.random.default_rng([cfg.seed, 8, size, trial])
            idx = r.permutation(len(G))
            train, test = idx[:size], idx[size:]
            seed = [cfg.seed, size, trial]
            preds = {m: fit_model(m, G[train], y[train], seed=seed).predict(G[test]) for m in models}
            try:
                chosen, _ = adaptive_switch(driver.TrainingSet(G[train], y[train]), seed=seed, models=models)
                preds["AS"] = chosen.predict(G[test])
            except AllModelsFailed:
                preds["AS"] = np.full(len(test), np.nan)
            for model, p in preds.items():
                rows.append((model, size, trial, _safe(metrics.spearman, p, y[test]), _safe(metrics.kendall_tau, p, y[test])))
    return rows


def _safe(fn, a, b) -> float:
    try:
        return fn(a, b)
    except ValueError:
        return math.nan


def summarize_study(rows, models):
    out = []
    sizes = sorted({r[1] for r in rows})
    for model in models:
        for size in sizes:
            sel = [r for r in rows if r[0] == model and r[1] == size]
            s = np.array([r[3] for r in sel])
            k = np.array([r[4] for r in sel])
            out.append((model, size, len(sel), float(np.mean(s)), float(np.std(s)), float(np.mean(k)), float(np.std(k))))
    return out


def cmd_surrogate_study(args) -> int:
    cfg, extras = load_config(args)
    opts = extras.get("study", {})
    if cfg.evaluator.get("kind") == "external":
        raise UsageError("the surrogate study needs a synthetic or tabular evaluator")
    out = prepare_out(Path(args.out), args.force)
    models = tuple(opts.get("models", MODEL_IDS))
    rows = surrogate_study(cfg, opts.get("pool", 2000), tuple(opts.get("sizes", (100, 200, 300, 400, 500))), opts.get("trials", 10), models)
    h = cfg.config_hash()
    write_json(out / "config.json", {"config": cfg.to_dict(), "study": opts}, h)
    write_csv(out / "surrogate_trials.csv", ["model", "size", "trial", "spearman", "kendall"], rows, h)
    summary = summarize_study(rows, (*models, "AS"))
    write_csv(out / "surrogate_study.csv", ["model", "size", "trials", "spearman_mean", "spearman_sd", "kendall_mean", "kendall_sd"], summary, h)
    fig, ax = _figure()
    for model in (*models, "AS"):
        sel = [r for r in summary if r[0] == model]
        ax.errorbar([r[1] for r in sel], [r[5] for r in sel], yerr=[r[6] for r in sel], marker="o", capsize=3, label=model)
    ax.set_xlabel("training samples")
    ax.set_ylabel("held-out Kendall tau")
    ax.legend()
    fig.tight_layout()
    write_svg(fig, out / "surrogate_study.svg", h)
    for r in summary:
        print(f"{r[0]:>4} n={r[1]:<4} spearman {r[3]:.3f}±{r[4]:.3f}  kendall {r[5]:.3f}±{r[6]:.3f}")
    return EXIT_OK


def padded_curve(state_or_archive, cfg: metrics.HvConfig, names, budget: int) -> np.ndarray:
    archive = state_or_archive.archive if isinstance(state_or_archive, SearchState) else state_or_archive
    curve = metrics.hypervolume_curve(archive.objective_matrix(names), cfg)
    if len(curve) < budget:
        curve = np.concatenate([curve, np.full(budget - len(curve), curve[-1])])
    return curve[:budget]


def efficiency_study(cfg: RunConfig, seeds):
    """Surrogate-assisted search vs uniform sampling at equal budget.

    Both methods share the initial samples and the frozen reference of each
    seed's run.  Returns (curves, exhaustive hypervolumes) with curves keyed
    by (method, seed).
    """
    budget = cfg.n_initial + cfg.iterations * cfg.batch_size
    names = cfg.complexity_names
    curves, exhaustive = {}, {}
    for seed in seeds:
        c = replace(cfg, seed=seed)
        state = driver.run_search(c)
        rand = driver.random_search(c)
        curves["search", seed] = padded_curve(state, state.hv_config, names, budget)
        curves["random", seed] = padded_curve(rand, state.hv_config, names, budget)
        try:
            _, F = driver.exhaustive_front(c.search_space(), c)
            exhaustive[seed] = state.hv_config.hypervolume(F)
        except SearchSpaceError:
            exhaustive[seed] = math.nan
    return curves, exhaustive


def cmd_efficiency_study(args) -> int:
    cfg, extras = load_config(args)
    opts = extras.get("study", {})
    if cfg.space is None:
        cfg = replace(cfg, space="reduced")
    out = prepare_out(Path(args.out), args.force)
    seeds = [cfg.seed + i for i in range(opts.get("seeds", 5))]
    curves, exhaustive = efficiency_study(cfg, seeds)
    h = cfg.config_hash()
    write_json(out / "config.json", {"config": cfg.to_dict(), "study": opts, "exhaustive_hv": {str(k): v for k, v in exhaustive.items()}}, h)
    budget = len(next(iter(curves.values())))
    per_seed = [(m, s, i + 1, float(v)) for (m, s), c in curves.items() for i, v in enumerate(c)]
    write_csv(out / "hv_runs.csv", ["method", "seed", "evaluations", "hypervolume"], per_seed, h)
    rows = []
    fig, ax = _figure()
    for method in ("search", "random"):
        stack = np.array([curves[method, s] for s in seeds])
        mean, sd = stack.mean(axis=0), stack.std(axis=0)
        rows.extend((method, i + 1, float(mean[i]), float(sd[i]), len(seeds)) for i in range(budget))
        x = np.arange(1, budget + 1)
        ax.plot(x, mean, label=method)
        ax.fill_between(x, mean - sd, mean + sd, alpha=0.2)
    write_csv(out / "hv_curves.csv", ["method", "evaluations", "hv_mean", "hv_sd", "seeds"], rows, h)
    ax.set_xlabel("evaluations")
    ax.set_ylabel("hypervolume")
    ax.legend()
    fig.tight_layout()
    write_svg(fig, out / "hv_curves.svg", h)
    for method in ("search", "random"):
        final = [curves[method, s][-1] for s in seeds]
        print(f"{method:>6}: final hypervolume {np.mean(final):.6f} ± {np.std(final):.6f}")
    return EXIT_OK


def load_run(run: Path) -> tuple[Archive, RunConfig, str]:
    cfg_path, arch_path = run / "config.json", run / "archive.csv"
    missing = [p.name for p in (cfg_path, arch_path) if not p.is_file()]
    if missing:
        raise MissingRunArtifacts(f"{run}: missing {', '.join(missing)}")
    try:
        cfg = RunConfig.from_dict(json.loads(cfg_path.read_text())["config"])
        archive, h = driver.read_archive_csv(arch_path)
    except (ValueError, KeyError, SearchSpaceError) as exc:
        raise MissingRunArtifacts(f"{run}: unreadable run artifacts ({exc})") from exc
    return archive, cfg, h


def cmd_analyze(args) -> int:
    run = Path(args.run)
    archive, cfg, h = load_run(run)
    out = Path(args.out) if args.out else run / "analysis"
    prepare_out(out, args.force)
    names = cfg.complexity_names
    front = sorted(archive.front(names), key=lambda a: [a.complexity[n] for n in names])
    write_csv(out / "front.csv", ["genome", "accuracy", *COMPLEXITY_NAMES, "iteration"],
              ([a.text, a.accuracy, *(a.complexity[c] for c in COMPLEXITY_NAMES), a.iteration] for a in front), h)
    dist = driver.mine_frequencies(archive, names, cfg.search_space())
    freq = dist.frequencies()
    rows = [(pos, int(code), float(cnt), float(f), float(p))
            for pos, (codes, counts, fr, pr) in enumerate(zip(dist.codes, dist.counts, freq, dist.probs))
            for code, cnt, f, p in zip(codes, counts, fr, pr)]
    write_csv(out / "gene_frequencies.csv", ["position", "code", "count", "frequency", "smoothed"], rows, h)
    write_json(out / "gene_distribution.json", {"distribution": dist.to_dict()}, h)
    write_svg(_heatmap(dist), out / "gene_frequencies.svg", h)
    cols = ["accuracy", *COMPLEXITY_NAMES]
    data = [archive.accuracies(), *archive.complexity_matrix(COMPLEXITY_NAMES).T]
    corr = metrics.spearman_matrix(data)
    write_csv(out / "correlations.csv", ["", *cols], ([c, *map(float, corr[i])] for i, c in enumerate(cols)), h)
    print(f"{len(front)} non-dominated of {len(archive)}; spearman(accuracy, madds) = {corr[0, 1]:.3f}")
    return EXIT_OK


def _heatmap(dist: driver.GeneDistribution):
    fig, ax = _figure()
    width = max(len(c) for c in dist.codes)
    grid = np.full((len(dist.codes), width), np.nan)
    for pos, f in enumerate(dist.frequencies()):
        grid[pos, : len(f)] = f
    im = ax.imshow(grid.T, aspect="auto", cmap="viridis", vmin=0, vmax=1, interpolation="nearest")
    ax.set_xlabel("gene position")
    ax.set_ylabel("choice index (0 = absent where allowed)")
    fig.colorbar(im, ax=ax, label="frequency on the front")
    fig.tight_layout()
    return fig


def cmd_transfer(args) -> int:
    cfg, extras = load_config(args)
    opts = extras.get("transfer", {})
    if args.source:
        opts["source"] = args.source
    if "source" not in opts:
        raise UsageError("transfer needs a source run directory (--source or transfer.source in the config)")
    source, src_cfg, _ = load_run(Path(opts["source"]))
    dist = driver.mine_frequencies(source, src_cfg.complexity_names, cfg.search_space())
    seeded = driver.transfer_init(dist, cfg.n_initial, seed=[cfg.seed, 3], space=cfg.search_space())
    out = prepare_out(Path(args.out), args.force)
    state = driver.run_search(cfg, seeded=seeded, checkpoint_path=out / "checkpoint.json")
    write_run(out, state)
    write_json(out / "transfer_distribution.json", {"source": str(opts["source"]), "distribution": dist.to_dict()}, cfg.config_hash())
    _report(state)
    return EXIT_OK


def cmd_resume(args) -> int:
    run = Path(args.run)
    ckpt = run / "checkpoint.json"
    if not ckpt.is_file():
        raise MissingRunArtifacts(f"{run}: no checkpoint.json")
    state = driver.resume(ckpt)
    if state.finished and not args.force:
        raise UsageError(f"{run} holds a completed run; pass --force to rewrite its outputs")
    state = driver.resume_search(ckpt, stop_after=args.stop_after)
    write_run(run, state)
    if state.config.scalarized:
        values = driver.scalarized_values(state.archive, state.config)
        write_csv(run / "trajectory.csv", ["evaluations", "best_scalarized"],
                  enumerate(np.maximum.accumulate(values).tolist(), 1), state.config.config_hash())
    _report(state)
    return EXIT_OK


def cmd_eval_stub(args) -> int:
    from . import stub

    return stub.main(args.stub_args)


# -- parser ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="archsearch", description="Surrogate-assisted multi-objective architecture search.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--budget", type=int, help="total evaluations (sets the iteration count)")
        p.add_argument("--evaluator", choices=("synthetic", "tabular", "external"))
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    p = sub.add_parser("search", help="run the multi-objective search")
    common(p)
    p.add_argument("--stop-after", type=int, help="stop after this iteration (resumable)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("search-scalar", help="single-objective search with a complexity target")
    common(p)
    p.set_defaults(func=cmd_search_scalar)

    p = sub.add_parser("surrogate-study", help="held-out rank correlation of the predictors")
    common(p)
    p.set_defaults(func=cmd_surrogate_study)

    p = sub.add_parser("efficiency-study", help="hypervolume curves against random sampling")
    common(p)
    p.set_defaults(func=cmd_efficiency_study)

    p = sub.add_parser("analyze", help="front table, gene frequencies and objective correlations")
    p.add_argument("run", help="completed run directory")
    p.add_argument("--out", help="output directory (default RUN/analysis)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("transfer", help="search initialized from a source run's front")
    common(p)
    p.add_argument("--source", help="source run directory")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("resume", help="continue a checkpointed run")
    p.add_argument("run", help="run directory holding checkpoint.json")
    p.add_argument("--stop-after", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval-stub", help="serve synthetic evaluations over stdin/stdout", add_help=False)
    p.add_argument("stub_args", nargs=argparse.REMAINDER)
    p.set_defaults(func=cmd_eval_stub)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    # everything after eval-stub belongs to the stub's own parser
    head = [a for a in argv[:2] if a in ("-v", "--verbose", "eval-stub")]
    if "eval-stub" in head:
        from . import stub

        return stub.main(argv[argv.index("eval-stub") + 1 :])
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (SearchAborted, EvaluationError) as exc:
        return _fail(EXIT_EVALUATOR, type(exc).__name__, str(exc))
    except (CorruptCheckpoint, MissingRunArtifacts) as exc:
        return _fail(EXIT_STATE, type(exc).__name__, str(exc))
    except (SearchSpaceError, ValueError) as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
