"""Command-line front end.

Subcommands: ``rate``, ``estimate``, ``simulate``, ``figures``, ``sweep``.
Exit status is 0 on success with a secure rate, 2 when the computed rate is
insecure, and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

import numpy as np

from . import figures
from .config import (
    RunConfig,
    build_assumptions,
    build_attack,
    build_detector,
    build_source,
    load_config,
)
from .errors import DomainError, NoDataError, OutOfRegimeError, ValidationError
from .estimation import (
    ReceiverAssumptions,
    TestCounts,
    TestSourceConfig,
    estimate_pipeline,
)
from .keyrate import (
    STATUS_NO_KEY_GAIN,
    KeyRateInputs,
    RateResult,
    eta_bar_from_eta_e,
    rate_avg_eta,
    rate_estimated,
    rate_estimated_etamax,
)
from .sim import eve_information, run_session, write_trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INSECURE = 2

RATE_COLUMNS = ("formula", "rate", "status", "secure")
SWEEP_COLUMNS = (
    "q_bar",
    "delta_bar",
    "eta_e_bar",
    "eta_max",
    "rate_estimated",
    "status_estimated",
    "rate_etamax",
    "status_etamax",
)


def fmt_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, (list, tuple)):
        return ";".join(fmt_value(x) for x in v)
    if v is None:
        return ""
    return str(v)


def write_rows(
    rows: Iterable[Sequence[Any]], columns: Sequence[str], fmt: str, out: TextIO
) -> None:
    if fmt == "csv":
        out.write(",".join(columns) + "\n")
        for row in rows:
            out.write(",".join(fmt_value(v) for v in row) + "\n")
    else:
        for row in rows:
            rec = {c: (v.item() if isinstance(v, np.generic) else v) for c, v in zip(columns, row)}
            out.write(json.dumps(rec) + "\n")


def write_mapping(d: dict[str, Any], fmt: str, out: TextIO) -> None:
    if fmt == "csv":
        write_rows(d.items(), ("key", "value"), fmt, out)
    else:
        out.write(json.dumps(d) + "\n")


def _open_out(args, name: str):
    if args.out is None:
        return _Stdout()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return open(out_dir / name, "w", newline="")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


def _ext(args) -> str:
    return "csv" if args.format == "csv" else "jsonl"


# --- rate ---------------------------------------------------------------


def rate_inputs(cfg: RunConfig, args) -> tuple[KeyRateInputs, float | None]:
    sec = cfg.section("rate")
    for flag, key in (
        ("q_bar", "q_bar"),
        ("delta_bar", "delta_bar"),
        ("eta_e", "eta_e_bar"),
        ("eta_max", "eta_max"),
        ("eta_bar", "eta_bar"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            sec[key] = v
    eta_bar = sec.pop("eta_bar", None)
    missing = {"q_bar", "delta_bar", "eta_e_bar"} - set(sec)
    if missing:
        raise ValidationError(f"missing rate inputs: {sorted(missing)}")
    return KeyRateInputs(**sec), eta_bar


def rate_table(inputs: KeyRateInputs, eta_bar: float | None = None) -> list[tuple]:
    q = inputs.q_bar
    if q <= 0:
        raise NoDataError("q_bar = 0: no detections")
    if eta_bar is None:
        eta_bar = eta_bar_from_eta_e(q, inputs.eta_e_bar, inputs.eta_max)
    if eta_bar <= 0.0:
        avg = RateResult(0.0, STATUS_NO_KEY_GAIN)
    else:
        avg = rate_avg_eta(q, min(1.0, eta_bar), inputs.delta_bar)
    rows = []
    for name, r in (
        ("avg_eta", avg),
        ("estimated", rate_estimated(inputs)),
        ("estimated_etamax", rate_estimated_etamax(inputs)),
    ):
        rows.append((name, r.rate, r.status, r.secure))
    return rows


def cmd_rate(args, cfg: RunConfig) -> int:
    inputs, eta_bar = rate_inputs(cfg, args)
    rows = rate_table(inputs, eta_bar)
    with _open_out(args, f"rate.{_ext(args)}") as out:
        write_rows(rows, RATE_COLUMNS, args.format, out)
    if inputs.exceeds_eta_max:
        print("warning: eta_e_bar exceeds eta_max (possible attack)", file=sys.stderr)
    return EXIT_OK if rows[-1][3] else EXIT_INSECURE


# --- estimate -------------------------------------------------------------


def load_counts_file(path: str | Path) -> dict[str, Any]:
    with open(path) as fh:
        data = json.load(fh)
    if "counts" not in data:
        raise ValidationError(f"{path}: no 'counts' object")
    return data


def estimate_from(cfg: RunConfig, data: dict[str, Any]):
    counts = TestCounts(**data["counts"])
    if "source" in cfg:
        src = build_source(cfg)
    elif "source" in data:
        src = TestSourceConfig(**data["source"])
    else:
        raise ValidationError("no test source description in config or counts file")
    if "assumptions" in cfg:
        a = build_assumptions(cfg)
    else:
        a = ReceiverAssumptions(**data.get("assumptions", {}))
    return estimate_pipeline(counts, src, a, **cfg.section("estimate"))


def estimate_report(result) -> dict[str, Any]:
    inputs = result.inputs
    r = rate_estimated_etamax(inputs)
    rep = {
        "q_bar": inputs.q_bar,
        "delta_bar": inputs.delta_bar,
        "eta_e_bar": inputs.eta_e_bar,
        "eta_max": inputs.eta_max,
        "rate": r.rate,
        "status": r.status,
        "secure": r.secure,
    }
    for k, v in result.diagnostics.items():
        rep.setdefault(k, v)
    return rep


def cmd_estimate(args, cfg: RunConfig) -> int:
    if args.counts is not None:
        data = load_counts_file(args.counts)
    elif "counts" in cfg:
        data = {"counts": cfg.section("counts")}
    else:
        raise ValidationError("estimate needs --counts PATH")
    rep = estimate_report(estimate_from(cfg, data))
    with _open_out(args, f"estimate.{_ext(args)}") as out:
        write_mapping(rep, args.format, out)
    return EXIT_OK if rep["secure"] else EXIT_INSECURE


# --- simulate -------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig) -> int:
    if args.out is None:
        raise ValidationError("simulate needs --out DIR")
    det = build_detector(cfg)
    src = build_source(cfg)
    atk = build_attack(cfg)
    a = build_assumptions(cfg)
    sess = cfg.section("session")
    n_gates = sess.get("n_gates", 100_000)
    seed = args.seed if args.seed is not None else sess.get("seed", 0)
    want_trace = sess.get("trace", False)
    result = run_session(
        n_gates, det, src, atk, seed, trace=want_trace, workers=sess.get("workers", 1)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "n_gates": n_gates,
        "seed": seed,
        "attack": {"kind": atk.kind, **asdict(atk)},
        "counts": result.counts.as_dict(),
        "source": asdict(src),
        "assumptions": asdict(a),
    }
    with open(out_dir / "counts.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if want_trace:
        write_trace(result.trace, out_dir / "trace.tsv")

    est = estimate_from(cfg, payload)
    rep = estimate_report(est)
    eve = eve_information(result, est.inputs, nominal_eta=sess.get("nominal_eta"))
    summary = {
        "n_gates": n_gates,
        "seed": seed,
        "attack": atk.kind,
        **result.counts.as_dict(),
        "q_t": result.counts.q_t if result.counts.test_gates else None,
        "eve_known_fraction": result.eve_known_fraction,
        "true_eta_bar": result.true_eta_bar,
        "sifted_eta_bar": result.sifted_eta_bar,
        "sifted_bit_mean": result.sifted_bit_mean,
        "eta_e_bar": rep["eta_e_bar"],
        "rate": rep["rate"],
        "status": rep["status"],
        "secure": rep["secure"],
        "bound": eve.bound,
        "true_bound": eve.true_bound,
        "violates_true_bound": eve.violates_true_bound,
        "naive_rate": eve.naive_rate,
    }
    with open(out_dir / f"summary.{_ext(args)}", "w", newline="") as fh:
        write_mapping(summary, args.format, fh)
    return EXIT_OK


# --- figures --------------------------------------------------------------


def _write_table(path: Path, rows, columns, fmt: str) -> None:
    with open(path, "w", newline="") as fh:
        write_rows(rows, columns, fmt, fh)


def _series(rows, key_idx: Sequence[int], x_idx: int, y_idx: int, label) -> dict:
    out: dict[str, tuple[list, list]] = {}
    for row in rows:
        name = label(*[row[i] for i in key_idx])
        xs, ys = out.setdefault(name, ([], []))
        xs.append(row[x_idx])
        ys.append(row[y_idx])
    return out


def cmd_figures(args, cfg: RunConfig) -> int:
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    fc = cfg.section("figures")
    which = ("3", "4", "5") if args.which == "all" else (args.which,)
    ext = _ext(args)
    for w in which:
        if w == "3":
            pairs = fc.get("fig3_pairs", figures.FIG3_PAIRS)
            rows = figures.fig3_rows(pairs, fc.get("fig3_points", 101))
            cols = figures.FIG3_COLUMNS
            meta = {
                "formula": "rate_estimated",
                "pairs_q_bar_delta_bar": [list(p) for p in pairs],
                "harness_choice": ["pairs_q_bar_delta_bar"],
            }
            series = _series(rows, (0, 1), 2, 3, lambda q, d: f"q={q:g}, delta={d:g}")
            labels = ("estimated efficiency", "key rate")
            logx = False
        elif w == "4":
            deltas = fc.get("fig4_deltas", figures.FIG4_DELTAS)
            rows = figures.fig4_rows(deltas, fc.get("fig4_points", 100))
            cols = figures.FIG4_COLUMNS
            meta = {
                "formula": "rate_estimated_etamax at eta_e_bar == eta_max",
                "deltas": list(deltas),
                "harness_choice": ["deltas"],
            }
            series = _series(rows, (0,), 1, 2, lambda d: f"delta={d:g}")
            labels = ("estimated efficiency = eta_max", "key rate")
            logx = False
        else:
            dets = fc.get("fig5_detectors", figures.FIG5_DETECTORS)
            rows = figures.fig5_rows(
                dets,
                fc.get("fig5_mu_min", 1e-4),
                fc.get("fig5_mu_max", 0.5),
                fc.get("fig5_points", 81),
            )
            cols = figures.FIG5_COLUMNS
            meta = {
                "formula": "eta_t_faint_laser with q_t = 1-(1-d)exp(-mu*eta), zeta = eps_tot = 0",
                "detectors_eta_d": [list(p) for p in dets],
                "harness_choice": ["mu grid"],
            }
            series = _series(rows, (0, 1), 2, 5, lambda e, d: f"eta={e:g}, d={d:g}")
            labels = ("mean photon number", "estimated efficiency")
            logx = True
        _write_table(out_dir / f"fig{w}.{ext}", rows, cols, args.format)
        with open(out_dir / f"fig{w}_meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if args.plot:
            figures.plot_svg(out_dir / f"fig{w}.svg", series, *labels, logx=logx)
    return EXIT_OK


# --- sweep ------------------------------------------------------------------


SWEEPABLE = ("q_bar", "delta_bar", "eta_e_bar", "eta_max")


def sweep_rows(base: dict[str, float], param: str, lo: float, hi: float, steps: int):
    if param not in SWEEPABLE:
        raise ValidationError(f"can only sweep {SWEEPABLE}, got {param!r}")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    rows = []
    for v in np.linspace(lo, hi, steps):
        vals = dict(base)
        vals[param] = float(v)
        inputs = KeyRateInputs(**vals)
        r1 = rate_estimated(inputs)
        r2 = rate_estimated_etamax(inputs)
        rows.append(
            (
                inputs.q_bar,
                inputs.delta_bar,
                inputs.eta_e_bar,
                inputs.eta_max,
                r1.rate,
                r1.status,
                r2.rate,
                r2.status,
            )
        )
    return rows


def cmd_sweep(args, cfg: RunConfig) -> int:
    sw = cfg.section("sweep")
    for key in ("param", "min", "max", "steps"):
        v = getattr(args, key if key not in ("min", "max") else f"s{key}", None)
        if v is not None:
            sw[key] = v
    missing = {"param", "min", "max", "steps"} - set(sw)
    if missing:
        raise ValidationError(f"missing sweep settings: {sorted(missing)}")
    base = {"q_bar": 1.0, "delta_bar": 0.0, "eta_e_bar": 1.0, "eta_max": 1.0}
    base.update({k: v for k, v in cfg.section("rate").items() if k != "eta_bar"})
    for flag, key in (("q_bar", "q_bar"), ("delta_bar", "delta_bar"), ("eta_e", "eta_e_bar"),
                      ("eta_max", "eta_max")):
        v = getattr(args, flag, None)
        if v is not None:
            base[key] = v
    rows = sweep_rows(base, sw["param"], sw["min"], sw["max"], sw["steps"])
    with _open_out(args, f"sweep.{_ext(args)}") as out:
        write_rows(rows, SWEEP_COLUMNS, args.format, out)
    return EXIT_OK


# --- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="INI config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--format", choices=("csv", "jsonlines"), default="csv")

    rate_flags = argparse.ArgumentParser(add_help=False)
    rate_flags.add_argument("--q-bar", dest="q_bar", type=float)
    rate_flags.add_argument("--delta-bar", dest="delta_bar", type=float)
    rate_flags.add_argument("--eta-e", dest="eta_e", type=float)
    rate_flags.add_argument("--eta-max", dest="eta_max", type=float)

    p = argparse.ArgumentParser(prog="qkdcal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("rate", parents=[common, rate_flags], help="evaluate the rate bounds")
    s.add_argument("--eta-bar", dest="eta_bar", type=float,
                   help="average efficiency of detected states (default: derived)")
    s.set_defaults(func=cmd_rate)

    s = sub.add_parser("estimate", parents=[common], help="estimate eta_E from counts")
    s.add_argument("--counts", type=str, default=None, help="counts JSON from simulate")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", parents=[common], help="run a Monte-Carlo session")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("figures", parents=[common], help="write figure data")
    s.add_argument("--which", choices=("3", "4", "5", "all"), default="all")
    s.add_argument("--plot", action="store_true", help="also write SVG line charts")
    s.set_defaults(func=cmd_figures)

    s = sub.add_parser("sweep", parents=[common, rate_flags], help="sweep one rate input")
    s.add_argument("--param", choices=SWEEPABLE)
    s.add_argument("--min", dest="smin", type=float)
    s.add_argument("--max", dest="smax", type=float)
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return args.func(args, cfg)
    except (ValidationError, DomainError, NoDataError, OutOfRegimeError, OSError,
            TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
