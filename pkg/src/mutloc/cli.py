"""Command-line front end.

Exit codes: 0 success, 1 computational failure, 2 usage or input error.
Every output file is written through a temporary file and renamed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__, metrics
from .config import dump_config, load_config
from .errors import ConfigError, FormatError, MutlocError, NotConnected
from .formats import FORMAT_VERSION, atomic_write_text, fmt, format_graph, format_trajectory, read_graph, read_trajectory
from .kernels import DEFAULT_SIZES, GRAD_TOL, gradient_check
from .posegraph import optimize
from .simulator import STAGES, parse_stages, run_pipeline, trace_csv

OUT_ENV = "MUTLOC_OUT"
DEFAULT_OUT = "mutloc-out"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    config_path: str
    seeds: tuple[int, ...]
    stages: tuple[str, ...]
    out_dir: str
    tool_version: str = __version__
    format_version: str = FORMAT_VERSION

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise UsageError(f"seeds must be unique, got {list(self.seeds)}")

    def to_json(self) -> str:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["stages"] = list(self.stages)
        return json.dumps(d, indent=2) + "\n"


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"3"``, ``"0,4,7"`` or ranges like ``"0-9"`` (inclusive)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise UsageError(f"empty seed range {part!r}")
                seeds.extend(range(lo_i, hi_i + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed {part!r}") from None
    if any(s < 0 for s in seeds):
        raise UsageError("seeds must be non-negative")
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"duplicate seeds in {text!r}")
    return tuple(seeds)


def _default_out() -> str:
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


def _check_out_dir(path: Path) -> None:
    if path.exists() and not path.is_dir():
        raise UsageError(f"output path exists and is not a directory: {path}")
    probe = path
    while not probe.exists():
        probe = probe.parent
    if not os.access(probe, os.W_OK):
        raise UsageError(f"output directory not writable: {path}")


def _err(msg: str) -> None:
    print(f"mutloc: error: {msg}", file=sys.stderr)


def _stage_file(stage: str) -> str:
    return stage.replace("+", "_")


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        stages = parse_stages(args.stages)
        seeds = parse_seeds(args.seeds) if args.seeds is not None else (cfg.seed,)
        out = Path(args.out)
        _check_out_dir(out)
        manifest = RunManifest(str(args.config), seeds, stages, str(out))
    except ConfigError as exc:
        _err(f"{args.config}: {exc}")
        return EXIT_USAGE
    except (UsageError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE

    traces = {}
    for seed in seeds:
        try:
            traces[seed] = run_pipeline(cfg.with_seed(seed), stages)
        except MutlocError as exc:
            _err(f"seed {seed}: {exc}")
            return EXIT_FAIL

    pooled_gt: list = []
    pooled_est: dict[str, list] = {s: [] for s in stages}
    for seed, tr in traces.items():
        d = out / f"seed_{seed:04d}"
        atomic_write_text(d / "trace.csv", trace_csv(tr))
        idx = range(1, len(tr.gt_rel) + 1)
        atomic_write_text(d / "gt_relative.txt", format_trajectory(tr.gt_rel, idx, "index x y yaw (ground truth)"))
        for s in stages:
            atomic_write_text(d / f"est_{_stage_file(s)}.txt", format_trajectory(tr.estimates[s], idx, f"index x y yaw ({s})"))
            if s in tr.pgo:
                res = tr.pgo[s].result
                atomic_write_text(d / f"graph_{_stage_file(s)}.txt", format_graph(res.graph))
                atomic_write_text(d / f"cost_{_stage_file(s)}.csv", _cost_csv(res.cost_history))
            pooled_est[s].extend(tr.estimates[s])
        pooled_gt.extend(tr.gt_rel)

    rows = {s: (metrics.dof_error_stats(pooled_gt, pooled_est[s]), metrics.ate(pooled_gt, pooled_est[s])) for s in stages}
    atomic_write_text(out / "summary.csv", metrics.table_csv(rows))
    atomic_write_text(out / "config.json", dump_config(cfg))
    atomic_write_text(out / "manifest.json", manifest.to_json())
    if not args.no_plots:
        _write_figures(out / "figures", traces, stages, pooled_gt, pooled_est)
    print(metrics.format_table(rows))
    print(f"wrote {out}")
    return EXIT_OK


def _write_figures(fig_dir: Path, traces, stages, pooled_gt, pooled_est) -> None:
    from . import plotting

    fig_dir.mkdir(parents=True, exist_ok=True)
    first = next(iter(traces.values()))
    plotting.plot_relative_poses(first, fig_dir / "relative_poses.png", list(stages))
    errors = {s: metrics.abs_errors(pooled_gt, pooled_est[s]) for s in stages}
    plotting.plot_error_violins(errors, fig_dir / "dof_errors.png")
    pgo_stage = next((s for s in ("full", "iml+pgo") if s in first.pgo), None)
    if pgo_stage is not None:
        plotting.plot_cost_history(first.pgo[pgo_stage].result.cost_history, fig_dir / "cost_history.png")


def _cost_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "cost"])
    for i, c in enumerate(history):
        w.writerow([i, fmt(c)])
    return buf.getvalue()


# -- gradcheck -----------------------------------------------------------------


def _parse_shape(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(v) for v in text.lower().replace("x", ",").split(","))
    except ValueError:
        raise UsageError(f"bad --sizes {text!r}; expected C,W,H") from None
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f"bad --sizes {text!r}; expected three positive integers C,W,H")
    return dims


def _parse_kernel_sizes(text: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad --kernel-sizes {text!r}") from None
    if not ks or any(k < 1 or k % 2 == 0 for k in ks):
        raise UsageError("kernel sizes must be odd positive integers")
    return ks


def cmd_gradcheck(args) -> int:
    try:
        shape = _parse_shape(args.sizes)
        ksizes = _parse_kernel_sizes(args.kernel_sizes)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    report = gradient_check(shape, ksizes, seed=args.seed, corrupt=args.corrupt_group)
    failed = [name for name, e in report.items() if not e < GRAD_TOL]
    width = max(len(n) for n in report)
    for name, e in report.items():
        print(f"{name:<{width}}  {e:.3e}  {'ok' if e < GRAD_TOL else 'FAIL'}")
    if failed:
        _err(f"gradient mismatch in {', '.join(failed)} (tolerance {GRAD_TOL:g})")
        return EXIT_FAIL
    print(f"all {len(report)} groups below {GRAD_TOL:g}")
    return EXIT_OK


# -- optimize ------------------------------------------------------------------


def cmd_optimize(args) -> int:
    try:
        graph = read_graph(args.graph)
        anchor = args.anchor if args.anchor is not None else graph.default_anchor()
        graph.vertex(anchor)
        out = Path(args.out)
        _check_out_dir(out)
    except (FormatError, UsageError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except KeyError:
        _err(f"--anchor: graph has no vertex {args.anchor}")
        return EXIT_USAGE
    try:
        result = optimize(graph, anchor)
    except NotConnected as exc:
        _err(f"{args.graph}: {exc}")
        return EXIT_USAGE
    except MutlocError as exc:
        _err(str(exc))
        return EXIT_FAIL
    atomic_write_text(out / "optimized_graph.txt", format_graph(result.graph))
    atomic_write_text(out / "cost_history.csv", _cost_csv(result.cost_history))
    print(f"iterations {result.iterations}  final cost {result.cost:.6g}  anchor {anchor}")
    if not result.converged:
        _err(
            f"NonConvergence: no convergence after {result.iterations} accepted steps "
            f"(cost {result.cost:.6g}, damping {result.damping:.3g})"
        )
        return EXIT_FAIL
    return EXIT_OK


# -- evaluate ------------------------------------------------------------------

EVAL_COLUMNS = ["ate", *metrics.TABLE_COLUMNS[1:7], "count"]


def cmd_evaluate(args) -> int:
    try:
        gi, gt = read_trajectory(args.gt)
        ei, est = read_trajectory(args.est)
        if len(gt) != len(est):
            raise UsageError(f"length mismatch: {args.gt} has {len(gt)} poses, {args.est} has {len(est)}")
        if not gt:
            raise UsageError(f"{args.gt}: no poses")
        if gi != ei:
            raise UsageError(f"index mismatch between {args.gt} and {args.est}")
        a = metrics.ate(gt, est)
        st = metrics.dof_error_stats(gt, est)
    except (FormatError, UsageError, MutlocError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    vals = asdict(st)
    w.writerow([f"{a:.17g}", *(f"{vals[c]:.17g}" for c in EVAL_COLUMNS[1:7]), st.count])
    text = buf.getvalue()
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mutloc", description="Two-robot mutual localization toolkit.")
    p.add_argument("--version", action="version", version=f"mutloc {__version__} (file format {FORMAT_VERSION})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the staged pipeline on a scenario config")
    s.add_argument("config", help="scenario JSON file")
    s.add_argument("--stages", default=",".join(STAGES), help="comma list from: " + ", ".join(STAGES))
    s.add_argument("--seeds", default=None, help="e.g. 0 or 0,3,5 or 0-9 (default: config seed)")
    s.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    s.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gradcheck", help="finite-difference check of ACN and AIncep gradients")
    g.add_argument("--sizes", default="4,16,16", help="tensor shape C,W,H (default 4,16,16)")
    g.add_argument("--kernel-sizes", default=",".join(map(str, DEFAULT_SIZES)), help="ACN kernel sizes")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt-group", default=None, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    o = sub.add_parser("optimize", help="optimize a pose-graph file")
    o.add_argument("graph", help="graph file (VERTEX/EDGE records)")
    o.add_argument("--anchor", type=int, default=None, help="vertex id held fixed (default: A0)")
    o.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("evaluate", help="ATE and per-DoF error of an estimate against ground truth")
    e.add_argument("gt", help="ground-truth trajectory file")
    e.add_argument("est", help="estimated trajectory file")
    e.add_argument("--out", default=None, help="also write the CSV here")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "out", "unset") is None and args.command != "evaluate":
        args.out = _default_out()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
