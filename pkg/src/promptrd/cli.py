"""Command-line pipeline: gen-data, constants, frontier, oracle-check, eval, plot, reproduce.

Exit codes: 0 success, 1 usage error, 2 data or guard error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from promptrd import __version__
from promptrd.compressors import CompressorSpec, PARAM_GRID, default_sweep, evaluate, write_eval
from promptrd.constants import (
    EnumerationMode,
    TableMode,
    compute_constants,
    read_constants,
    write_constants,
)
from promptrd.core import Infeasible, Metric, PromptRDError
from promptrd.dataset import (
    MarkovChainParams,
    QUERY_IDS,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from promptrd.decoder import DecoderSpec, default_eps
from promptrd.frontier import (
    breakpoints_for,
    dual_value,
    frontier_from_merged,
    parse_grid,
)
from promptrd.lp_oracle import solve_primal

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MANIFEST_VERSION = 1
MANIFEST_DEFAULTS = {
    "version": MANIFEST_VERSION,
    "seed": 0,
    "per_query": 200,
    "min_len": 4,
    "max_len": 10,
    "stay": 0.9,
    "dataset": "",
    "decoder": "literal",
    "eps": -1.0,  # negative: metric default
    "metric": "log",
    "enumeration": "pruned",
    "grid": "0.1:1.0:0.05",
    "out_dir": "out",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _grid(text: str) -> list[float]:
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fmt(v) -> str:
    if isinstance(v, Infeasible):
        return "inf"
    v = float(v)
    return "inf" if math.isinf(v) else format(v, ".17g")


def _chain(args) -> MarkovChainParams:
    return MarkovChainParams(stay_prob=args.stay, min_len=args.min_len, max_len=args.max_len)


def _decoder_spec(args) -> DecoderSpec:
    eps = args.eps if args.eps is not None and args.eps >= 0 else default_eps(Metric.parse(args.metric))
    return DecoderSpec(args.decoder, eps, _chain(args), getattr(args, "table", None))


# ---------------------------------------------------------------------------
# frontier files


def write_frontier(path, rows, meta: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("rate", "distortion"))
        for r, d in rows:
            w.writerow([_fmt(r), _fmt(d)])


def read_series(path) -> list[tuple[str, list[float], list[float], bool]]:
    """Plot series ``(name, rates, distortions, is_curve)`` from a frontier or eval CSV."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(ln for ln in fh if not ln.startswith("#")))
    if not rows:
        raise PromptRDError(f"{path}: empty file")
    header = tuple(rows[0])
    if header == ("rate", "distortion"):
        pts = [(float(r), float(d)) for r, d in rows[1:] if not math.isinf(float(d))]
        return [(path.stem, [p[0] for p in pts], [p[1] for p in pts], True)]
    if header[:4] == ("compressor", "param", "avg_rate", "avg_distortion"):
        series: dict[str, list] = {}
        for kind, _, r, d in rows[1:]:
            series.setdefault(kind, []).append((float(r), float(d)))
        return [(k, [p[0] for p in v], [p[1] for p in v], False) for k, v in series.items()]
    raise PromptRDError(f"{path}: not a frontier or eval file (header {header})")


def render_chart(inputs, out) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "promptrd", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for path in inputs:
            for name, xs, ys, is_curve in read_series(path):
                if is_curve:
                    ax.plot(xs, ys, label=name)
                else:
                    ax.plot(xs, ys, marker="o", linestyle="none", label=name)
        ax.set_xlabel("rate")
        ax.set_ylabel("distortion")
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> None:
    records = generate_dataset(_chain(args), list(QUERY_IDS), args.per_query, args.seed)
    write_dataset(records, args.out)


def cmd_constants(args) -> None:
    records = read_dataset(args.data)
    spec = _decoder_spec(args)
    metric = Metric.parse(args.metric)
    table = compute_constants(records, spec.build(), metric, args.enumeration, args.mode,
                              query_id=args.query, workers=args.threads)
    write_constants(table, args.out)


def _frontier_meta(table, merged, mode: str) -> dict:
    meta = {"mode": mode, "r_min": _fmt(merged.r_min)}
    for k in ("metric", "decoder", "enumeration"):
        meta[k] = table.meta.get(k, "unknown")
    return meta


def _frontier_rows(merged, grid):
    if grid is None:
        return frontier_from_merged(merged).vertices
    return [(R, dual_value(R, merged)) for R in grid]


def cmd_frontier(args) -> None:
    table = read_constants(args.constants, args.mode)
    out = Path(args.out)
    if table.mode is TableMode.CONDITIONAL and (len(table.query_ids) > 1 or args.mode == "conditional"):
        for q, sub in table.split_by_query().items():
            merged = breakpoints_for(sub)
            meta = {**_frontier_meta(table, merged, "conditional"), "query_id": q}
            write_frontier(out.with_name(f"{out.stem}.{q}{out.suffix}"), _frontier_rows(merged, args.grid), meta)
        return
    merged = breakpoints_for(table)
    write_frontier(out, _frontier_rows(merged, args.grid), _frontier_meta(table, merged, table.mode.value))


def cmd_oracle_check(args) -> int:
    table = read_constants(args.constants)
    merged = breakpoints_for(table)
    rates = [args.rate]
    if args.trials:
        rng = np.random.Generator(np.random.PCG64(args.seed))
        hi = float(sum(max(e.rate for e in g.entries) for g in table.groups))
        rates += [float(r) for r in rng.uniform(float(merged.r_min), hi, size=args.trials)]
    worst = 0.0
    for R in rates:
        dual = dual_value(R, merged)
        primal = solve_primal(table, R)
        if isinstance(dual, Infeasible) or isinstance(primal, Infeasible):
            both = isinstance(dual, Infeasible) and isinstance(primal, Infeasible)
            print(f"rate {R:.12g}: dual {'infeasible' if isinstance(dual, Infeasible) else _num(dual)}, "
                  f"primal {'infeasible' if isinstance(primal, Infeasible) else _num(primal.objective)}"
                  f" (r_min {_num(merged.r_min)})")
            if not both:
                worst = math.inf
            continue
        diff = abs(float(dual) - primal.objective)
        worst = max(worst, diff)
        print(f"rate {R:.12g}: dual {_num(dual)}, primal {_num(primal.objective)}, difference {diff:.3g}")
    if len(rates) > 1:
        print(f"max difference {worst:.3g} over {len(rates)} rates")
    return 0 if worst <= 1e-7 * max(1.0, max(abs(float(v)) for v in merged.agg_distortion)) else 2


def _num(v) -> str:
    return f"{float(v):.12g}"


def cmd_eval(args) -> None:
    records = read_dataset(args.data)
    spec = _decoder_spec(args)
    metric = Metric.parse(args.metric)
    decoder = spec.build()
    if args.compressor:
        params = [float(p) for p in args.params.split(",")] if args.params else list(PARAM_GRID)
        if args.compressor in ("identity", "query_oracle"):
            specs = [CompressorSpec(args.compressor)]
        else:
            specs = [CompressorSpec(args.compressor, p) for p in params]
    else:
        specs = default_sweep()
    points = [evaluate(s, records, decoder, metric, _chain(args), workers=args.threads) for s in specs]
    write_eval(points, args.out, args.hist)


def cmd_plot(args) -> None:
    render_chart(args.inputs, args.out)


def load_manifest(path) -> dict:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise PromptRDError(f"{path}: {exc}") from None
    unknown = set(raw) - set(MANIFEST_DEFAULTS)
    if unknown:
        raise PromptRDError(f"{path}: unknown manifest keys {sorted(unknown)}")
    manifest = {**MANIFEST_DEFAULTS, **raw}
    if manifest["version"] != MANIFEST_VERSION:
        raise PromptRDError(f"{path}: manifest version {manifest['version']} is not {MANIFEST_VERSION}")
    return manifest


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in manifest.items():
            fh.write(f"{k} = {_toml_value(v)}\n")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def cmd_reproduce(args) -> None:
    manifest_path = Path(args.manifest)
    m = load_manifest(manifest_path)
    out = Path(args.out_dir) if args.out_dir else manifest_path.parent / m["out_dir"]
    out.mkdir(parents=True, exist_ok=True)
    chain = MarkovChainParams(stay_prob=m["stay"], min_len=m["min_len"], max_len=m["max_len"])
    metric = Metric.parse(m["metric"])
    eps = m["eps"] if m["eps"] >= 0 else default_eps(metric)
    grid = parse_grid(m["grid"])

    if m["dataset"]:
        records = read_dataset(manifest_path.parent / m["dataset"])
    else:
        records = generate_dataset(chain, list(QUERY_IDS), m["per_query"], m["seed"])
    write_dataset(records, out / "dataset.jsonl")

    decoder = DecoderSpec(m["decoder"], eps, chain).build()
    frontier_files = []
    for mode in (TableMode.AGNOSTIC, TableMode.AVERAGE, TableMode.CONDITIONAL):
        table = compute_constants(records, decoder, metric, m["enumeration"], mode, workers=args.threads)
        write_constants(table, out / f"constants_{mode.value}.csv")
        if mode is TableMode.CONDITIONAL:
            for q, sub in table.split_by_query().items():
                merged = breakpoints_for(sub)
                meta = {**_frontier_meta(table, merged, "conditional"), "query_id": q}
                write_frontier(out / f"frontier_conditional.{q}.csv", _frontier_rows(merged, grid), meta)
        else:
            merged = breakpoints_for(table)
            path = out / f"frontier_{mode.value}.csv"
            write_frontier(path, _frontier_rows(merged, grid), _frontier_meta(table, merged, mode.value))
            frontier_files.append(path)

    points = [evaluate(s, records, decoder, metric, chain, workers=args.threads) for s in default_sweep()]
    write_eval(points, out / "eval.csv", out / "eval_hist.csv")
    render_chart(frontier_files + [out / "eval.csv"], out / "chart.svg")
    write_manifest({**m, "eps": eps, "tool_version": __version__}, out / "run_manifest.toml")


# ---------------------------------------------------------------------------


def _add_chain(p) -> None:
    p.add_argument("--stay", type=float, default=0.9, help="chain stay probability")
    p.add_argument("--min-len", type=int, default=4)
    p.add_argument("--max-len", type=int, default=10)


def _add_decoder(p) -> None:
    p.add_argument("--decoder", choices=("literal", "bayes", "external"), default="literal")
    p.add_argument("--eps", type=float, default=None, help="literal-decoder smoothing (default by metric)")
    p.add_argument("--table", help="external distortion CSV for --decoder external")
    p.add_argument("--metric", choices=("log", "01"), default="log")
    p.add_argument("--threads", type=int, default=1)
    _add_chain(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="promptrd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--per-query", type=int, default=200)
    p.add_argument("--out", required=True)
    _add_chain(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("constants", help="compute a constants table")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=[m.value for m in TableMode], default="agnostic")
    p.add_argument("--query", help="restrict a conditional table to one query")
    p.add_argument("--enumeration", choices=[m.value for m in EnumerationMode], default="pruned")
    p.add_argument("--out", required=True)
    _add_decoder(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("frontier", help="solve the distortion-rate function")
    p.add_argument("--constants", required=True)
    p.add_argument("--mode", choices=[m.value for m in TableMode], default=None)
    p.add_argument("--grid", type=_grid, default=None, help="start:stop:step (inclusive)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_frontier)

    p = sub.add_parser("oracle-check", help="compare the dual algorithm with the primal simplex")
    p.add_argument("--constants", required=True)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--trials", type=int, default=0, help="extra random rates to check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("eval", help="evaluate compressors")
    p.add_argument("--data", required=True)
    p.add_argument("--compressor", choices=("identity", "surprisal", "query_oracle", "threshold_dynamic"))
    p.add_argument("--params", help="comma-separated rate/threshold values")
    p.add_argument("--out", required=True)
    p.add_argument("--hist")
    _add_decoder(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render frontier/eval CSVs to SVG")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("reproduce", help="run the whole pipeline from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except (PromptRDError, OSError, ValueError, KeyError) as exc:
        print(f"promptrd {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
