"""Command-line front end.

Every subcommand reads CSV/JSON inputs, writes its artifacts into ``--out``
and exits with 0 (success), 2 (usage or configuration), 3 (data) or
4 (numerical failure).  Settings come from an optional ``--config`` JSON
file; explicit flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import ArpackError

from . import pipeline as pl
from .dataset import (
    Dataset,
    inverse_scaling,
    load_csv,
    load_sidecar,
    mean_distance,
    permute,
    save_csv,
    save_sidecar,
)
from .errors import BifidError, DimensionError, ParameterError, StateError
from .fusion import save_trace
from .graph import KernelSpec, dump_matrix, graph_laplacian
from .metrics import comparison_table, relative_errors, save_comparison, selection_study
from .regtune import save_lcurve
from .selection import load_selection, save_selection
from .spectral import fiedler, load_spectrum, save_spectrum, smallest_nonzero
from . import synthetic

DEMOS = ("ring-disk", "canonical", "analytic-pair")


def _fmt(x) -> str:
    return repr(float(x))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_matrix_csv(path: Path, prefix: str, M: np.ndarray, lead=None, lead_names=()) -> None:
    header = ["index", *lead_names, *(f"{prefix}{k}" for k in range(M.shape[1]))]
    rows = []
    for i in range(M.shape[0]):
        extra = [] if lead is None else [_fmt(v) for v in lead[i]]
        rows.append([i, *extra, *(_fmt(v) for v in M[i])])
    _write_rows(path, header, rows)


# -- configuration ------------------------------------------------------------


def _load_config(args) -> tuple[pl.PipelineConfig, dict]:
    """Config file (if any) overlaid with explicit flags."""
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(str(path))
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config {path}: {exc}") from exc
    paths = {k: raw.pop(k) for k in ("low", "high", "out") if k in raw}
    cfg = pl.PipelineConfig.from_json(raw)

    kernel = cfg.kernel
    if getattr(args, "sigma", None) is not None:
        kernel = KernelSpec.fixed(args.sigma)
    if getattr(args, "self_tuned", None) is not None:
        kernel = KernelSpec.self_tuned(args.self_tuned)
    lcurve = getattr(args, "lcurve", None)
    cfg = pl.with_overrides(
        cfg,
        kernel=kernel,
        p_exp=getattr(args, "p_exp", None),
        q_exp=getattr(args, "q_exp", None),
        n_select=getattr(args, "n_select", None),
        K_cutoff=getattr(args, "K", None),
        tau=getattr(args, "tau", None),
        omega=getattr(args, "omega", None),
        omega_policy="lcurve" if lcurve is not None else ("fixed" if getattr(args, "omega", None) is not None else None),
        lcurve_decades=tuple(lcurve) if lcurve is not None else None,
        lcurve_points=getattr(args, "lcurve_points", None),
        seed=getattr(args, "seed", None),
        n_restarts=getattr(args, "restarts", None),
        strategy=getattr(args, "strategy", None),
        eigensolver=getattr(args, "eigensolver", None),
        sparse_threshold=getattr(args, "sparse_threshold", None),
        grad_tol=getattr(args, "grad_tol", None),
        max_iters=getattr(args, "max_iters", None),
    )
    for key in ("low", "high", "out"):
        val = getattr(args, key, None)
        if val is not None:
            paths[key] = val
    return cfg, paths


def _require(paths: dict, key: str) -> Path:
    if key not in paths:
        raise ParameterError(f"missing --{key} (or '{key}' in the config file)")
    return Path(paths[key])


def _input_file(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(str(path))
    return path


def _out_dir(paths: dict) -> Path:
    out = _require(paths, "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- stage writers ------------------------------------------------------------


def _save_graph(out: Path, g: pl.GraphStage, cfg: pl.PipelineConfig, source: str) -> None:
    save_csv(g.low, out / "low_scaled.csv")
    save_sidecar(g.low, out / "low_scaled.json", {"source": source, "stage": "graph"})
    save_spectrum(g.spectrum, out)
    try:
        tau = smallest_nonzero(g.spectrum)
    except BifidError:
        tau = None
    _write_json(out / "graph.json", {
        "config": cfg.to_json(),
        "n_points": g.low.n_points,
        "dim": g.low.dim,
        "n_modes": g.spectrum.n_modes,
        "method": g.spectrum.method,
        "lambda_1": float(g.spectrum.eigenvalues[0]),
        "smallest_nonzero": tau,
    })


def _load_graph(out: Path) -> pl.GraphStage:
    src = _input_file(out / "low_scaled.csv")
    low = load_csv(src, "low")
    side = load_sidecar(out / "low_scaled.json")
    if side.get("scaling") is None:
        raise StateError(f"{out / 'low_scaled.json'} carries no scaling record")
    sc = side["scaling"]
    low = Dataset(low.points, "low", sc, columns=low.columns)
    _input_file(out / "spectrum_eigenvalues.csv")
    spec = load_spectrum(out)
    if spec.n_nodes != low.n_points:
        raise DimensionError(f"spectrum has {spec.n_nodes} nodes but {low.n_points} points")
    return pl.GraphStage(low, sc, spec)


def _save_selection(out: Path, g: pl.GraphStage, sel) -> None:
    save_selection(sel, out)
    reidx = permute(g.low, sel.permutation)
    save_csv(reidx, out / "low_reindexed.csv")
    save_sidecar(reidx, out / "low_reindexed.json", {"stage": "select"})
    acquire = inverse_scaling(g.low.take(sel.selected))
    _write_rows(
        out / "acquire.csv",
        ["index", *acquire.columns],
        [[int(i), *(_fmt(v) for v in row)] for i, row in zip(sel.selected, acquire.points)],
    )


def _high_for_selection(path: Path, g: pl.GraphStage, selected) -> Dataset:
    high = load_csv(_input_file(path), "high")
    if high.dim != g.low.dim:
        raise DimensionError(f"high-fidelity file has {high.dim} columns, low-fidelity {g.low.dim}")
    if high.n_points == len(selected):
        return high
    if high.n_points == g.low.n_points:
        return high.take(selected)
    raise DimensionError(
        f"high-fidelity file has {high.n_points} rows; expected {len(selected)} (acquire list) or {g.low.n_points}"
    )


def _save_fusion(out: Path, g: pl.GraphStage, fs: pl.FusionStage, cfg: pl.PipelineConfig) -> None:
    save_csv(fs.bi, out / "bi.csv")
    save_sidecar(fs.bi_scaled, out / "bi.json", {"stage": "fuse"})
    fs.model.save(out)
    save_trace(fs.result.trace, out / "trace.csv")
    _write_matrix_csv(out / "influence.csv", "psi", fs.model.influence())
    summary = {
        "config": cfg.to_json(),
        "omega": fs.omega,
        "status": fs.result.status,
        "converged": bool(fs.result.converged),
        "iterations": fs.result.n_iter,
        "grad_inf_norm": fs.result.grad_inf_norm,
        "j_data": fs.result.loss.j_data,
        "j_reg": fs.result.loss.j_reg,
        "j_total": fs.result.loss.j_total,
        "tau": fs.model.tau,
        "K": fs.model.K,
    }
    if fs.lcurve is not None:
        save_lcurve(fs.lcurve, out / "lcurve.csv")
        summary["lcurve"] = _lcurve_summary(fs.lcurve)
    _write_json(out / "fuse.json", summary)


def _lcurve_summary(curve) -> dict:
    return {
        "omega_star": curve.omega_star,
        "elbow_index": curve.elbow_index,
        "no_elbow": curve.no_elbow,
        "degenerate": curve.degenerate,
        "n_points": len(curve),
    }


# -- subcommands --------------------------------------------------------------


def cmd_graph(args) -> int:
    cfg, paths = _load_config(args)
    low_path = _input_file(_require(paths, "low"))
    out = _out_dir(paths)
    low = load_csv(low_path, "low")
    n_modes = args.modes if args.modes is not None else cfg.n_modes
    g = pl.graph_stage(low, cfg, n_modes)
    _save_graph(out, g, cfg, str(low_path))
    if args.dump_matrices:
        bundle = graph_laplacian(g.low, cfg.kernel, cfg.p_exp, cfg.q_exp, cfg.sparse_threshold)
        W = bundle.W.toarray() if bundle.is_sparse else bundle.W
        L = bundle.L.toarray() if bundle.is_sparse else bundle.L
        dump_matrix(W, out / "adjacency.bin", "adjacency")
        dump_matrix(L, out / "laplacian.bin", "laplacian")
    print(f"graph: {g.low.n_points} points, {g.spectrum.n_modes} modes, lambda_1={g.spectrum.eigenvalues[0]:.3e}")
    return 0


def cmd_select(args) -> int:
    cfg, paths = _load_config(args)
    out = _require(paths, "out")
    g = _load_graph(out)
    if cfg.n_select > g.spectrum.n_modes:
        raise ParameterError(f"N={cfg.n_select} exceeds the {g.spectrum.n_modes} modes in {out}")
    sel = pl.selection_stage(g, cfg)
    _save_selection(out, g, sel)
    print(f"select: {sel.n_selected} points -> {out / 'acquire.csv'}")
    return 0


def _fusion_inputs(args):
    cfg, paths = _load_config(args)
    out = _require(paths, "out")
    g = _load_graph(out)
    _input_file(out / "selection.json")
    sel = load_selection(out)
    high = _high_for_selection(_require(paths, "high"), g, sel.selected)
    if cfg.n_modes > g.spectrum.n_modes:
        cfg = pl.with_overrides(cfg, K_cutoff=min(cfg.K, g.spectrum.n_modes))
    cfg = pl.with_overrides(cfg, n_select=sel.n_selected)
    return cfg, out, g, sel, high


def cmd_fuse(args) -> int:
    cfg, out, g, sel, high = _fusion_inputs(args)
    fs = pl.fusion_stage(g, sel.selected, high, cfg)
    _save_fusion(out, g, fs, cfg)
    print(f"fuse: omega={fs.omega:.3e} status={fs.result.status} j_data={fs.result.loss.j_data:.3e}")
    return 0


def cmd_lcurve(args) -> int:
    cfg, out, g, sel, high = _fusion_inputs(args)
    if cfg.omega_policy != "lcurve":
        cfg = pl.with_overrides(cfg, omega_policy="lcurve")
    fs = pl.fusion_stage(g, sel.selected, high, cfg)
    save_lcurve(fs.lcurve, out / "lcurve.csv")
    _write_json(out / "lcurve.json", {"config": cfg.to_json(), **_lcurve_summary(fs.lcurve)})
    flag = " (no elbow)" if fs.lcurve.no_elbow else ""
    print(f"lcurve: omega*={fs.lcurve.omega_star:.3e}{flag}")
    return 0


def cmd_report(args) -> int:
    approx = load_csv(_input_file(Path(args.approx)), "bi")
    truth = load_csv(_input_file(Path(args.truth)), "high")
    val = None
    if args.selection:
        sel = load_selection(_input_file(Path(args.selection) / "selection.json").parent)
        val = pl.validation_set(truth.n_points, sel.selected)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bi_rep = relative_errors(approx, truth, val, truth.columns)
    if args.low:
        low = load_csv(_input_file(Path(args.low)), "low")
        low_rep = relative_errors(low, truth, val, truth.columns)
    else:
        low_rep = bi_rep
    table = comparison_table(low_rep, bi_rep)
    save_comparison(table, out / "report")
    _write_matrix_csv(out / "errors_bi.csv", "e", bi_rep.errors)
    sys.stdout.write(table.to_markdown())
    return 0


def cmd_study(args) -> int:
    cfg, paths = _load_config(args)
    low = load_csv(_input_file(_require(paths, "low")), "low")
    high = load_csv(_input_file(_require(paths, "high")), "high")
    out = _out_dir(paths)
    res = _run_study(low, high, cfg, args.trials)
    _write_json(out / "study.json", {"config": cfg.to_json(), **res.to_json()})
    (out / "study.md").write_text(res.to_markdown(), encoding="utf-8")
    sys.stdout.write(res.to_markdown())
    return 0


def _run_study(low, high, cfg, n_trials):
    if high.points.shape != low.points.shape:
        raise DimensionError("study needs high-fidelity values at every low-fidelity point")
    g = pl.graph_stage(low, cfg)
    seeds = [cfg.seed + 1000 + t for t in range(n_trials)]

    def trial(strategy, seed):
        s = cfg.seed if strategy == "centroid" else seed
        return pl.run(low, high, cfg, graph=g, strategy=strategy, seed=s).bi_report.means

    return selection_study(trial, n_trials, seeds, high.columns)


# -- demos --------------------------------------------------------------------


def demo_problem(name: str):
    """The shipped synthetic problem and its settings."""
    if name == "ring-disk":
        return synthetic.ring_disk(), pl.PipelineConfig(kernel=KernelSpec.fixed(0.25), n_select=7, K_cutoff=20, omega=1e-6)
    if name == "canonical":
        return synthetic.canonical_clusters(), pl.PipelineConfig(
            kernel=KernelSpec.self_tuned(), n_select=3, K_cutoff=9, omega=1e-8
        )
    if name == "analytic-pair":
        return synthetic.analytic_pair(), pl.PipelineConfig(kernel=KernelSpec.self_tuned(), n_select=10, omega=1e-6)
    raise ParameterError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")


def cmd_demo(args) -> int:
    prob, cfg = demo_problem(args.name)
    if args.config or any(getattr(args, k, None) is not None for k in ("omega", "lcurve", "seed", "K", "n_select")):
        base, _ = _load_config(argparse.Namespace(config=args.config))
        if args.config:
            cfg = base
        cfg = pl.with_overrides(
            cfg,
            omega=args.omega,
            omega_policy="lcurve" if args.lcurve is not None else ("fixed" if args.omega is not None else None),
            lcurve_decades=tuple(args.lcurve) if args.lcurve is not None else None,
            seed=args.seed,
            K_cutoff=args.K,
            n_select=args.n_select,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(prob.low, out / "low.csv")
    save_csv(prob.high, out / "high.csv")
    if prob.labels is not None:
        _write_rows(out / "labels.csv", ["index", "label"], [[i, int(v)] for i, v in enumerate(prob.labels)])
    _write_json(out / "config.json", cfg.to_json())

    res = pl.run(prob.low, prob.high, cfg)
    g, sel, fs = res.graph, res.selection, res.fusion
    _save_graph(out, g, cfg, "demo:" + args.name)
    _save_selection(out, g, sel)
    _save_fusion(out, g, fs, cfg)

    n_show = min(g.spectrum.n_modes, cfg.K)
    _write_matrix_csv(
        out / "eigenfunctions.csv", "phi", g.spectrum.eigenfunctions[:, :n_show], prob.low.points, prob.low.columns
    )
    save_comparison(res.table, out / "report")
    _write_matrix_csv(out / "errors_low.csv", "e", res.low_report.errors)
    _write_matrix_csv(out / "errors_bi.csv", "e", res.bi_report.errors)

    summary = {
        "demo": args.name,
        "mean_distance_low": mean_distance(prob.low, prob.high),
        "mean_distance_bi": mean_distance(fs.bi, prob.high),
        "factors": res.table.to_json()["components"],
        "selected": [int(i) for i in sel.selected],
        "omega": fs.omega,
        "status": fs.result.status,
    }
    summary["distance_ratio"] = summary["mean_distance_bi"] / summary["mean_distance_low"]
    if args.name == "ring-disk":
        f = fiedler(g.spectrum)
        agree = float(np.mean((f > 0) == (prob.labels == 1)))
        summary["fiedler_agreement"] = max(agree, 1 - agree)
        summary["selected_in_disk"] = int(np.sum(prob.labels[sel.selected] == 0))
    _write_json(out / "summary.json", summary)
    sys.stdout.write(res.table.to_markdown())
    print(f"demo {args.name}: mean distance ratio bi/low = {summary['distance_ratio']:.4f}")
    return 0


# -- argument parsing ---------------------------------------------------------


def _add_common(p, *, low=False, high=False, kernel=False, fusion=False, select=False):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory")
    if low:
        p.add_argument("--low", help="low-fidelity CSV")
    if high:
        p.add_argument("--high", help="high-fidelity CSV (acquire-list rows, or one row per low-fidelity point)")
    if kernel:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--sigma", type=float, help="fixed Gaussian bandwidth")
        g.add_argument("--self-tuned", type=int, metavar="K", help="per-point bandwidth from the K-th neighbour")
        p.add_argument("--p-exp", type=float)
        p.add_argument("--q-exp", type=float)
        p.add_argument("--eigensolver", choices=["auto", "dense", "iterative"])
        p.add_argument("--sparse-threshold", type=float)
    if select:
        p.add_argument("-N", "--n-select", type=int, help="number of high-fidelity points")
        p.add_argument("--seed", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--strategy", choices=["centroid", "random"])
    if fusion:
        p.add_argument("-K", type=int, help="spectrum cutoff (default 3N)")
        p.add_argument("--tau", type=float, help="default: smallest nonzero eigenvalue")
        p.add_argument("--omega", type=float)
        p.add_argument("--lcurve", nargs=2, type=float, metavar=("LO", "HI"), help="choose omega on 10^LO..10^HI")
        p.add_argument("--lcurve-points", type=int)
        p.add_argument("--grad-tol", type=float)
        p.add_argument("--max-iters", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bifid", description="Graph-based bi-fidelity data fusion")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="scale low-fidelity data, build the graph and its spectrum")
    _add_common(p, low=True, kernel=True, select=False, fusion=True)
    p.add_argument("-N", "--n-select", type=int, help="used only to size the default number of modes")
    p.add_argument("--modes", type=int, help="number of eigenpairs (default max(N, K))")
    p.add_argument("--dump-matrices", action="store_true", help="also write adjacency.bin and laplacian.bin")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("select", help="pick the points that need high-fidelity data")
    _add_common(p, select=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("fuse", help="fit the influence functions and write bi-fidelity data")
    _add_common(p, high=True, fusion=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("lcurve", help="sweep omega and locate the L-curve elbow")
    _add_common(p, high=True, fusion=True)
    p.set_defaults(func=cmd_lcurve)

    p = sub.add_parser("report", help="relative error tables")
    p.add_argument("--approx", required=True, help="CSV being assessed (e.g. bi.csv)")
    p.add_argument("--truth", required=True, help="high-fidelity CSV, one row per point")
    p.add_argument("--low", help="low-fidelity CSV for the comparison column")
    p.add_argument("--selection", help="directory with selection.json; its points are excluded from validation")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("study", help="centroid vs random selection")
    _add_common(p, low=True, high=True, kernel=True, fusion=True, select=True)
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("demo", help="run a shipped synthetic problem end to end")
    p.add_argument("name", help=", ".join(DEMOS))
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--omega", type=float)
    p.add_argument("--lcurve", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--seed", type=int)
    p.add_argument("-K", type=int)
    p.add_argument("-N", "--n-select", type=int)
    p.set_defaults(func=cmd_demo)
    return ap


def _origin(exc: BaseException) -> str:
    """Name of the innermost package module in the traceback."""
    name = "bifid"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("bifid."):
            name = mod
    return name


def _thread_limit():
    val = os.environ.get("BIFID_THREADS")
    if not val:
        return None
    try:
        n = int(val)
    except ValueError:
        raise ParameterError(f"BIFID_THREADS must be an integer, got {val!r}") from None
    if n < 1:
        raise ParameterError("BIFID_THREADS must be at least 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        n_threads = _thread_limit()
        if n_threads is None:
            return args.func(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=n_threads):
            return args.func(args)
    except FileNotFoundError as exc:
        print(f"bifid: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except BifidError as exc:
        print(f"bifid: {_origin(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, ArpackError, ArithmeticError) as exc:
        print(f"bifid: {_origin(exc)}: numerical failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"bifid: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
