"""Command-line front end: ``freqest {run,bounds,plot,optimize-base}``.

Exit codes: 0 success, 1 configuration or input error, 2 a risk cell had
more than 1% failed trials (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as cfgmod
from . import model as mdl
from .errors import ConfigError, DomainError
from .harness import CSV_COLUMNS, RiskCurve, fit_decay, run_plan
from .strategies import DEFAULT_BASE_GRID, StrategySpec, optimize_exponential_base, schedule

log = logging.getLogger("freqest")

EXIT_OK, EXIT_CONFIG, EXIT_CELLS = 0, 1, 2
INT_COLUMNS = ("n", "failures")
TEXT_COLUMNS = ("strategy", "estimator")


class InputError(Exception):
    """Bad command-line input or unreadable table; maps to exit code 1."""


# --------------------------------------------------------------------------
# formatting and atomic output


def fmt(x: float) -> str:
    """17 significant digits: parses back to the identical double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return fmt(v)
    if isinstance(v, (np.floating,)):
        return _json_value(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _dumps_json(obj) -> str:
    def walk(o):
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        return _json_value(o)

    return json.dumps(walk(obj), indent=2, sort_keys=False) + "\n"


def risk_table_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r[c] if c in TEXT_COLUMNS + INT_COLUMNS else fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def risk_table_json(curve: RiskCurve) -> str:
    return _dumps_json(
        {
            "meta": {"eta": curve.eta, "t2": cfgmod.format_t2(curve.t2), "trials": curve.trials, "seed": curve.seed},
            "columns": list(CSV_COLUMNS),
            "rows": [c.row() for c in curve.cells],
        }
    )


def write_bundle(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write every file atomically (temp file + rename).

    If any write fails, files already placed by this call are removed.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    placed: list[Path] = []
    try:
        for name, content in files.items():
            target = out_dir / name
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=out_dir)
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(content)
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            placed.append(target)
    except BaseException:
        for p in placed:
            p.unlink(missing_ok=True)
        raise
    return placed


# --------------------------------------------------------------------------
# reading tables back


def read_table(path: Path) -> tuple[list[dict], dict]:
    """Rows of a risk table (CSV or JSON) and any metadata it carries."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    meta: dict = {}
    if path.suffix == ".json":
        try:
            data = json.loads(text)
            rows, meta, columns = data["rows"], data.get("meta", {}), data.get("columns", [])
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"{path}: not a risk table ({exc})") from None
    else:
        reader = csv.DictReader(io.StringIO(text))
        columns = reader.fieldnames or []
        rows = list(reader)
    missing = [c for c in CSV_COLUMNS if c not in columns]
    if missing:
        raise InputError(f"{path}: missing columns {', '.join(missing)}")
    if not rows:
        raise InputError(f"{path}: table has no rows")
    out = []
    for r in rows:
        try:
            out.append(
                {
                    c: (str(r[c]) if c in TEXT_COLUMNS else int(r[c]) if c in INT_COLUMNS else float(r[c]))
                    for c in CSV_COLUMNS
                }
            )
        except (KeyError, ValueError) as exc:
            raise InputError(f"{path}: bad row {r!r} ({exc})") from None
    return out, meta


# --------------------------------------------------------------------------
# plotting


def render_svg(panels: Sequence[tuple[str, list[dict]]]) -> str:
    """Log-scale risk curves, one panel per table, with each strategy's bound as a thin line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "freqest", "svg.fonttype": "none", "path.simplify": False}):
        fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.8), squeeze=False, sharey=True)
        for ax, (title, rows) in zip(axes[0], panels):
            labels: list[tuple[str, str]] = []
            for r in rows:
                key = (r["strategy"], r["estimator"])
                if key not in labels:
                    labels.append(key)
            for i, key in enumerate(labels):
                sel = sorted((r for r in rows if (r["strategy"], r["estimator"]) == key), key=lambda r: r["n"])
                n = np.array([r["n"] for r in sel], dtype=float)
                risk = np.array([r["risk_mean"] for r in sel])
                crb = np.array([r["crb"] for r in sel])
                color = f"C{i}"
                ok = risk > 0
                ax.semilogy(n[ok], risk[ok], "o-", ms=3, color=color, label=f"{key[0]} ({key[1]})")
                okb = np.isfinite(crb) & (crb > 0)
                ax.semilogy(n[okb], crb[okb], "-", lw=0.6, color=color)
            ult = {r["n"]: r["crb_ultimate"] for r in rows if math.isfinite(r["crb_ultimate"]) and r["crb_ultimate"] > 0}
            if ult:
                nu = sorted(ult)
                ax.semilogy(nu, [ult[k] for k in nu], "k--", lw=0.8, label="T2 limit")
            ax.set_title(title)
            ax.set_xlabel("measurements N")
            ax.grid(True, which="major", lw=0.3)
        axes[0][0].set_ylabel("Bayes risk")
        axes[0][-1].legend(fontsize=7, loc="lower left")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


# --------------------------------------------------------------------------
# run


def _fit_summary(curve: RiskCurve) -> dict:
    out = {}
    for s in curve.strategies():
        cells = curve.select(s)
        entry = {}
        for column in ("risk_mean", "risk_median"):
            try:
                f = fit_decay(cells, s, column=column)
                entry[column] = {"slope": f.slope, "intercept": f.intercept, "r2": f.r2, "scale": f.scale, "points": f.points}
            except ValueError as exc:
                entry[column] = {"error": str(exc)}
        out[s] = entry
    return out


def _schedules(cfg: cfgmod.PlanConfig, curve: RiskCurve) -> dict:
    out = {}
    n_max = max(cfg.n_values)
    for spec in cfg.strategies:
        if spec.offline:
            out[spec.label] = {"times": [float(t) for t in schedule(spec.with_n(n_max))]}
        else:
            cells = curve.select(spec.label)
            out[spec.label] = {"n": [c.n for c in cells], "median_last_time": [c.time_median for c in cells]}
    return out


def cmd_run(args) -> int:
    try:
        cfg = cfgmod.load(cfgmod.resolve(args.config))
        cfg = cfg.replace(seed=args.seed, trials=args.trials, workers=args.workers, format=args.format)
        if args.plot is not None:
            cfg = cfg.replace(plot=args.plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out_dir or cfg.out_dir or "out")

    curve = run_plan(cfg.to_plan())
    rows = [c.row() for c in curve.cells]
    files = {
        f"risk.{cfg.format}": risk_table_csv(rows) if cfg.format == "csv" else risk_table_json(curve),
        "schedules.json": _dumps_json(_schedules(cfg, curve)),
        "fits.json": _dumps_json(_fit_summary(curve)),
        "config.toml": cfgmod.dumps(cfg),
    }
    if cfg.plot:
        files["risk.svg"] = render_svg([(_panel_title(cfg.t2), rows)])
    try:
        write_bundle(out_dir, files)
    except OSError as exc:
        print(f"error writing outputs to {out_dir}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {', '.join(files)} to {out_dir}")
    if curve.failed:
        bad = [f"{c.strategy}/{c.estimator} n={c.n}" for c in curve.cells if c.failed]
        print(f"cells with more than 1% failed trials: {'; '.join(bad)}", file=sys.stderr)
        return EXIT_CELLS
    return EXIT_OK


def _panel_title(t2: float) -> str:
    return "T2 = inf" if t2 == mdl.INF else f"T2 = {cfgmod.format_t2(t2)}"


# --------------------------------------------------------------------------
# bounds


def _times_from_args(args) -> np.ndarray | None:
    if args.times is not None:
        try:
            vals = [float(v) for v in args.times.replace(",", " ").split()]
        except ValueError:
            raise InputError(f"--times: cannot parse {args.times!r}") from None
        return np.array(vals)
    kind = "fixed" if args.fixed else "linear" if args.linear else "exponential" if args.exponential else None
    if kind is None:
        return None
    if args.n is None:
        raise InputError("--n is required with a schedule flag")
    try:
        return schedule(StrategySpec(kind, args.n, base=args.exponential or 9 / 8))
    except DomainError as exc:
        raise InputError(str(exc)) from None


def cmd_bounds(args) -> int:
    try:
        t2 = cfgmod.parse_t2(args.t2)
        times = _times_from_args(args)
        if times is None and not args.ultimate:
            raise InputError("give a schedule (--fixed, --linear, --exponential or --times) or --ultimate")
        if times is not None and times.size == 0:
            raise InputError("empty schedule")
        if times is not None and np.any(times < 0):
            raise InputError("times must be >= 0")
        if not 0 < args.eta <= 1:
            raise InputError("--eta must lie in (0, 1]")
        n = int(times.size) if times is not None else args.n
        if n is None or n < 1:
            raise InputError("--n must be >= 1")
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    row: dict = {"n": n}
    if times is not None:
        row["crb"] = mdl.crb(times)
        row["crb_sharp"] = mdl.crb_t2_sharp(times, args.eta, t2)
    row["crb_ultimate"] = mdl.crb_ultimate(n, args.eta, t2)
    row["floor"] = mdl.info_theoretic_floor(n)
    if args.format == "json":
        sys.stdout.write(_dumps_json(row))
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([v if k == "n" else fmt(v) for k, v in row.items()])
    return EXIT_OK


# --------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    try:
        panels = []
        for p in args.tables:
            rows, meta = read_table(Path(p))
            title = _panel_title(cfgmod.parse_t2(meta["t2"])) if "t2" in meta else Path(p).stem
            panels.append((title, rows))
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.output)
    try:
        write_bundle(out.parent if str(out.parent) else Path("."), {out.name: render_svg(panels)})
    except OSError as exc:
        print(f"error writing {out}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# optimize-base


def _base_grid(text: str | None) -> list[float]:
    if text is None:
        return list(DEFAULT_BASE_GRID)
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 12) for i in range(count)]
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"--bases: cannot parse {text!r}; use 'lo:hi:step' or a comma list") from None


def cmd_optimize_base(args) -> int:
    try:
        t2 = cfgmod.parse_t2(args.t2)
        bases = _base_grid(args.bases)
        if args.trials < 1:
            raise InputError("--trials must be >= 1")
        best, scores = optimize_exponential_base(
            args.n, args.eta, t2, bases, args.trials, args.seed, workers=args.workers
        )
    except (InputError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = [{"base": b, "risk_mean": r, "risk_stderr": s} for b, (r, s) in scores.items()]
    if args.format == "json":
        text = _dumps_json({"n": args.n, "t2": cfgmod.format_t2(t2), "best": best, "rows": rows})
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["base", "risk_mean", "risk_stderr"])
        for r in rows:
            w.writerow([fmt(r["base"]), fmt(r["risk_mean"]), fmt(r["risk_stderr"])])
        text = buf.getvalue()
    if args.out_dir:
        write_bundle(Path(args.out_dir), {f"optimize_base.{args.format}": text})
    else:
        sys.stdout.write(text)
    print(f"best base: {best:g}", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freqest", description="Bayes-risk simulations for single-qubit frequency estimation.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a plan config and write the risk table")
    run.add_argument("config", help=f"config path or bundled name ({', '.join(cfgmod.bundled())})")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out-dir")
    run.add_argument("--format", choices=cfgmod.FORMATS)
    run.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None)
    run.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="lower bounds for a schedule")
    g = b.add_mutually_exclusive_group()
    g.add_argument("--fixed", action="store_true", help="N measurements at t = pi")
    g.add_argument("--linear", action="store_true", help="t_k = k pi")
    g.add_argument("--exponential", type=float, metavar="BASE", help="t_k = BASE^k")
    g.add_argument("--times", help="explicit comma-separated times")
    b.add_argument("--n", type=int)
    b.add_argument("--eta", type=float, default=1.0)
    b.add_argument("--t2", default="inf", help="'inf', a number, or e.g. '1e4pi'")
    b.add_argument("--ultimate", action="store_true", help="report the dephasing-limited bound for --n")
    b.add_argument("--format", choices=cfgmod.FORMATS, default="csv")
    b.set_defaults(func=cmd_bounds)

    p = sub.add_parser("plot", help="render risk tables to SVG, one panel per table")
    p.add_argument("tables", nargs="+")
    p.add_argument("-o", "--output", default="risk.svg")
    p.set_defaults(func=cmd_plot)

    o = sub.add_parser("optimize-base", help="Monte Carlo search for the best exponential base")
    o.add_argument("--n", type=int, default=124)
    o.add_argument("--eta", type=float, default=1.0)
    o.add_argument("--t2", default="inf")
    o.add_argument("--bases", help="'lo:hi:step' or a comma list (default 1.05:1.40:0.01 plus 9/8)")
    o.add_argument("--trials", type=int, default=1000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--workers", type=int, default=1)
    o.add_argument("--out-dir")
    o.add_argument("--format", choices=cfgmod.FORMATS, default="csv")
    o.set_defaults(func=cmd_optimize_base)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
