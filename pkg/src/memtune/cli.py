"""Command-line front end.

Physical inputs are given in laboratory units (mW, um, nm, K/mW, Hz) and
converted to SI here; the library works in SI throughout. Every command
writes one table (CSV or JSON) either to stdout or into ``--out DIR``.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dissipation import (
    FrameModel,
    ModeCouplingPair,
    demo_frame,
    find_q_gaps,
    load_frame,
    q_inverse_spectrum,
    q_spectrum_over_tuning,
    spectrum_vs_power,
)
from .errors import BucklingError, DataFormatError, MemtuneError, ValidationError
from .fitting import extract_thermal_parameters, fit_f_vs_P, fit_q_spectrum, read_power_scan
from .model import ModeIndex, ThermalCoupling, load_spec, lowest_modes, preset, preset_names
from .ringdown import extract_q, read_trace, synthesize_ringdown, write_trace
from .thermal import BeamSpec, ThermalGrid, chi_of_beam, solve_heating

CONFIG_SCHEMA = "runconfig-v1"

DEFAULTS = {
    "preset": "t1_500",
    "seed": 0,
    "format": "csv",
    "grid": 201,
    "beam_diameter": 350.0,
    "beam_center": "0,0",
    "powers": "0:160:1601",
    "count": 13,
    "power": 1.0,
}


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


class Output:
    """Collects named tables and writes them deterministically."""

    def __init__(self, out_dir: str | None, fmt: str, quiet: bool):
        self.out_dir = Path(out_dir) if out_dir else None
        self.fmt = fmt
        self.quiet = quiet
        if self.out_dir is not None:
            try:
                self.out_dir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise DataFormatError(f"cannot create output directory: {exc}") from None

    def table(self, name: str, header: list[str], rows: list) -> None:
        if self.fmt == "json":
            records = [{h: (float(v) if isinstance(v, (float, np.floating)) else v)
                        for h, v in zip(header, r)} for r in rows]
            text = json.dumps(records, indent=2, sort_keys=True) + "\n"
            self._emit(f"{name}.json", text)
        else:
            buf = io.StringIO()
            # mode labels such as (1,2) contain commas and get quoted
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(header)
            writer.writerows([_fmt(v) for v in r] for r in rows)
            self._emit(f"{name}.csv", buf.getvalue())

    def document(self, name: str, doc: dict) -> None:
        self._emit(f"{name}.json", json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")

    def _emit(self, filename: str, text: str) -> None:
        if self.out_dir is None:
            sys.stdout.write(text)
            return
        path = self.out_dir / filename
        try:
            path.write_text(text)
        except OSError as exc:
            raise DataFormatError(f"cannot write {path}: {exc}") from None
        if not self.quiet:
            print(f"wrote {path}", file=sys.stderr)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- argument parsing helpers ------------------------------------------------

def parse_powers(text: str) -> list[float]:
    """Powers in mW as ``start:stop:num`` (inclusive linspace) or a comma list; returns W."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            vals = np.linspace(float(start), float(stop), int(num))
        else:
            vals = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValidationError(f"cannot parse power list {text!r}") from None
    if np.any(vals < 0):
        raise ValidationError("powers must be non-negative")
    return [float(v) * 1e-3 for v in vals]


def _pair(text: str, unit: float = 1.0) -> tuple[float, float]:
    try:
        a, b = (float(v) * unit for v in text.split(","))
    except ValueError:
        raise ValidationError(f"expected two comma-separated numbers, got {text!r}") from None
    return a, b


def _coupling_pair(text: str) -> ModeCouplingPair:
    # "m,n:m,n:g_Hz"
    try:
        a, b, g = text.split(":")
        return ModeCouplingPair(ModeIndex.parse(a), ModeIndex.parse(b), float(g))
    except ValueError:
        raise ValidationError(f"coupling pair must look like '1,3:2,2:5000', got {text!r}") from None


def _chi_scale(items) -> dict:
    out = {}
    for text in items or []:
        try:
            idx, val = text.split("=")
            out[ModeIndex.parse(idx)] = float(val)
        except ValueError:
            raise ValidationError(f"chi scale must look like '1,3=1.5', got {text!r}") from None
    return out


class Context:
    def __init__(self, args):
        self.args = args
        if args.spec:
            try:
                self.spec = load_spec(args.spec)
            except FileNotFoundError:
                raise ValidationError(f"spec file not found: {args.spec}") from None
        else:
            self.spec = preset(args.preset)
        if getattr(args, "absorption", None) is not None:
            self.spec = self.spec.with_(absorption_fraction=args.absorption)
        self.out = Output(args.out, args.format, args.quiet)

    def frame(self) -> FrameModel:
        a = self.args
        if a.frame in (None, "demo"):
            frame = demo_frame()
        else:
            try:
                frame = load_frame(a.frame)
            except FileNotFoundError:
                raise ValidationError(f"frame file not found: {a.frame}") from None
        if getattr(a, "holder_dt", None) is not None:
            frame = frame.heated(a.holder_dt)
        return frame

    def beam(self, power: float = 0.0) -> BeamSpec:
        cx, cy = _pair(self.args.beam_center, 1e-6)
        return BeamSpec(power, self.args.beam_diameter * 1e-6, (cx, cy))

    def grid(self) -> ThermalGrid:
        return ThermalGrid.square(self.args.grid)

    def chi(self) -> float:
        """chi in K/W, from --chi (K/mW) or a heat solve."""
        if self.args.chi is not None:
            return self.args.chi * 1e3
        return chi_of_beam(self.spec, self.beam(), self.grid()).chi


# -- commands ----------------------------------------------------------------

def cmd_modes(ctx: Context) -> int:
    rows = [(i.m, i.n, f) for i, f in lowest_modes(ctx.spec, ctx.args.count)]
    ctx.out.table("modes", ["m", "n", "frequency_Hz"], rows)
    return 0


def cmd_sweep(ctx: Context) -> int:
    a = ctx.args
    powers = parse_powers(a.powers)
    if a.modes:
        modes = [ModeIndex.parse(t) for t in a.modes.split(";")]
    else:
        modes = [i for i, _ in lowest_modes(ctx.spec, a.count)]
    pairs = [_coupling_pair(t) for t in a.pair or []]
    header = ["power_W", "mode", "frequency_Hz"]
    if not powers:
        ctx.out.table("sweep", header, [])
        return 0
    coupling = ThermalCoupling(ctx.chi())
    rows, status = [], 0
    for p in powers:
        try:
            rows += spectrum_vs_power(ctx.spec, coupling, modes, pairs, [p], _chi_scale(a.chi_scale))
        except BucklingError as exc:
            print(f"buckling: {exc}", file=sys.stderr)
            status = 3
            break
    ctx.out.table("sweep", header, rows)
    return status


def cmd_thermal(ctx: Context) -> int:
    a = ctx.args
    field = solve_heating(ctx.spec, ctx.beam(a.power * 1e-3), ctx.grid())
    summary = {"schema": "thermal-summary-v1", **field.summary(),
               "power_W": a.power * 1e-3, "absorption_fraction": ctx.spec.absorption_fraction,
               "beam_diameter_m": a.beam_diameter * 1e-6}
    if a.diameter_sweep:
        sweep = []
        for d in (float(v) for v in a.diameter_sweep.split(",")):
            b = BeamSpec(0.0, d * 1e-6, ctx.beam().center)
            sweep.append({"beam_diameter_m": d * 1e-6,
                          "chi_K_per_W": chi_of_beam(ctx.spec, b, ctx.grid()).chi})
        summary["diameter_sweep"] = sweep
    if ctx.out.out_dir is not None and not a.no_field:
        x, y = field.grid.coordinates(field.side_length)
        rows = [(xi, yj, field.delta_T[i, j]) for i, xi in enumerate(x) for j, yj in enumerate(y)]
        ctx.out.table("thermal_field", ["x_m", "y_m", "delta_T_K"], rows)
    ctx.out.document("thermal_summary", summary)
    return 0


def cmd_qspec(ctx: Context) -> int:
    a = ctx.args
    frame = ctx.frame()
    powers = parse_powers(a.powers)
    header = ["power_W", "f_Hz", "Q_inverse", "Q"]
    status = 0
    try:
        pts = q_spectrum_over_tuning(ctx.spec, frame, powers, chi=ctx.chi()) if powers else []
    except BucklingError as exc:
        print(f"buckling: {exc}", file=sys.stderr)
        pts = [(p, f, float(q_inverse_spectrum(frame, f))) for p, f in exc.partial]
        status = 3
    ctx.out.table("qspec", header, [(p, f, q, 1.0 / q) for p, f, q in pts])
    if a.min_q is not None and pts:
        fs = [f for _, f, _ in pts]
        band = (min(fs), max(fs))
        gaps = find_q_gaps(frame, band, a.min_q)
        ctx.out.document("gaps", {"band_Hz": list(band), "min_Q": a.min_q,
                                  "gaps_Hz": [list(g) for g in gaps]})
    return status


def cmd_gaps(ctx: Context) -> int:
    a = ctx.args
    if a.band is None:
        raise ValidationError("gaps requires --band LOW,HIGH (Hz)")
    band = _pair(a.band)
    gaps = find_q_gaps(ctx.frame(), band, a.min_q)
    ctx.out.table("gaps", ["f_low_Hz", "f_high_Hz"], [(lo, hi) for lo, hi in gaps])
    return 0


def _read_q_points(path: str):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or "f_Hz" not in header or "Q_inverse" not in header:
            raise DataFormatError("expected columns f_Hz and Q_inverse", path=path, line=1)
        fi, qi = header.index("f_Hz"), header.index("Q_inverse")
        f, q = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} columns, got {len(row)}", path=path, line=lineno)
            try:
                f.append(float(row[fi]))
                q.append(float(row[qi]))
            except ValueError:
                raise DataFormatError(f"not a number in {row!r}", path=path, line=lineno) from None
    return np.array(f), np.array(q)


def cmd_fit(ctx: Context) -> int:
    a = ctx.args
    path = a.input
    if not Path(path).exists():
        raise DataFormatError("input file not found", path=path)
    kind = a.kind
    if kind == "f-vs-p":
        fit = fit_f_vs_P(read_power_scan(path))
        report = {"schema": "fit-f-vs-p-v1", **fit.to_dict()}
    elif kind == "ringdown":
        res = extract_q(read_trace(path, a.meta))
        report = {"schema": "fit-ringdown-v1", **res.to_dict()}
    elif kind == "q-spectrum":
        f, q = _read_q_points(path)
        report = {"schema": "fit-q-spectrum-v1", **fit_q_spectrum(f, q).to_dict()}
    else:  # thermal-params
        if a.holder_dt is None or a.holder_df is None:
            raise ValidationError("thermal-params requires --holder-dt K and --holder-df Hz")
        params = extract_thermal_parameters(ctx.spec, a.holder_dt, a.holder_df, read_power_scan(path))
        report = {"schema": "fit-thermal-params-v1", **params.to_dict()}
    ctx.out.document(f"fit_{kind.replace('-', '_')}", report)
    return 0


def cmd_synth_ringdown(ctx: Context) -> int:
    a = ctx.args
    if ctx.out.out_dir is None:
        raise ValidationError("synth-ringdown requires --out DIR")
    f = a.frequency if a.frequency is not None else lowest_modes(ctx.spec, 1)[0][1]
    tau = a.q / (math.pi * f)
    fs = a.sample_rate if a.sample_rate is not None else 3.0 * f
    trace = synthesize_ringdown(f, a.q, a.amp * 1e-9, a.noise, fs, a.duration_tau * tau, seed=a.seed)
    write_trace(trace, ctx.out.out_dir / "ringdown.csv")
    if not a.quiet:
        print(f"wrote {ctx.out.out_dir / 'ringdown.csv'} (+ .json sidecar)", file=sys.stderr)
    return 0


def cmd_spec(ctx: Context) -> int:
    ctx.out.document("spec", ctx.spec.to_dict())
    return 0


COMMANDS = {
    "modes": cmd_modes,
    "sweep": cmd_sweep,
    "thermal": cmd_thermal,
    "qspec": cmd_qspec,
    "gaps": cmd_gaps,
    "fit": cmd_fit,
    "synth-ringdown": cmd_synth_ringdown,
    "spec": cmd_spec,
}


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {"default": None}
    g = parser.add_argument_group("global options")
    g.add_argument("--preset", choices=preset_names(), **kw, help="membrane preset (default t1_500)")
    g.add_argument("--spec", metavar="FILE", **kw, help="membrane spec JSON (memspec-v1)")
    g.add_argument("--frame", metavar="FILE", **kw, help="frame model JSON (framemodel-v1) or 'demo'")
    g.add_argument("--out", metavar="DIR", **kw, help="output directory (default: stdout)")
    g.add_argument("--seed", type=int, **kw, help="random seed")
    g.add_argument("--format", choices=["csv", "json"], **kw)
    g.add_argument("--config", metavar="FILE", **kw, help="run configuration JSON (runconfig-v1)")
    if suppress:
        g.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
        g.add_argument("--error-json", action="store_true", default=argparse.SUPPRESS)
    else:
        g.add_argument("--quiet", action="store_true", help="no progress messages")
        g.add_argument("--error-json", action="store_true", help="report errors as JSON on stderr")


def _beam_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", type=int, help="grid points per side (odd, default 201)")
    p.add_argument("--beam-diameter", type=float, help="1/e^2 beam diameter in um (default 350)")
    p.add_argument("--beam-center", help="beam center x,y in um from the membrane center")
    p.add_argument("--absorption", type=float, help="absorbed fraction of incident power")
    p.add_argument("--chi", type=float, help="heating coefficient in K/mW (skips the heat solve)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memtune", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("modes", help="lowest membrane modes at zero power")
    _common(p, True)
    p.add_argument("--count", type=int, help="number of modes (default 13)")

    p = sub.add_parser("sweep", help="mode spectrum versus heating power")
    _common(p, True)
    _beam_options(p)
    p.add_argument("--powers", help="mW, start:stop:num or a,b,c (default 0:160:1601)")
    p.add_argument("--count", type=int, help="number of lowest modes (default 13)")
    p.add_argument("--modes", help="explicit modes, e.g. '1,1;1,2;2,1'")
    p.add_argument("--pair", action="append", help="coupled pair 'm,n:m,n:g_Hz' (repeatable)")
    p.add_argument("--chi-scale", action="append", help="per-mode chi multiplier 'm,n=s' (repeatable)")

    p = sub.add_parser("thermal", help="laser heating temperature field")
    _common(p, True)
    _beam_options(p)
    p.add_argument("--power", type=float, help="incident power in mW (default 1)")
    p.add_argument("--diameter-sweep", help="comma list of beam diameters (um) to report chi for")
    p.add_argument("--no-field", action="store_true", help="skip the (large) field CSV")

    p = sub.add_parser("qspec", help="dissipation spectrum along a tuning sweep")
    _common(p, True)
    _beam_options(p)
    p.add_argument("--powers", help="mW, start:stop:num or a,b,c (default 0:160:1601)")
    p.add_argument("--holder-dt", type=float, help="sample-holder heating in K")
    p.add_argument("--min-q", type=float, help="also report frequency gaps with Q >= this")

    p = sub.add_parser("gaps", help="frequency intervals free of frame-mode loss")
    _common(p, True)
    p.add_argument("--band", help="LOW,HIGH in Hz")
    p.add_argument("--min-q", type=float, required=True)
    p.add_argument("--holder-dt", type=float, help="sample-holder heating in K")

    p = sub.add_parser("fit", help="fit measured data")
    _common(p, True)
    p.add_argument("kind", choices=["f-vs-p", "ringdown", "q-spectrum", "thermal-params"])
    p.add_argument("input", help="input CSV")
    p.add_argument("--meta", help="ring-down metadata sidecar (default: input with .json)")
    p.add_argument("--holder-dt", type=float, help="holder heating in K (thermal-params)")
    p.add_argument("--holder-df", type=float, help="measured f11 shift in Hz (thermal-params)")

    p = sub.add_parser("synth-ringdown", help="synthesize a ring-down record")
    _common(p, True)
    p.add_argument("--frequency", type=float, help="Hz (default: f11 of the membrane)")
    p.add_argument("--q", type=float, default=1e6)
    p.add_argument("--amp", type=float, default=0.5, help="initial amplitude in nm")
    p.add_argument("--noise", type=float, default=1e-14, help="noise floor in m/sqrt(Hz)")
    p.add_argument("--sample-rate", type=float, help="Hz (default 3 x frequency)")
    p.add_argument("--duration-tau", type=float, default=5.0, help="record length in decay times")

    p = sub.add_parser("spec", help="write the membrane spec as JSON")
    _common(p, True)
    return parser


def _apply_config(args) -> None:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", path=args.config, line=exc.lineno) from None
        if cfg.pop("schema", None) != CONFIG_SCHEMA:
            raise ValidationError(f"config must declare schema {CONFIG_SCHEMA!r}")
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None and (hasattr(args, key) or key in ("preset", "seed", "format")):
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        ctx = Context(args)
        return COMMANDS[args.command](ctx)
    except (MemtuneError, OSError) as exc:
        status = exc.exit_status if isinstance(exc, MemtuneError) else 4
        if isinstance(exc, ValueError) and not isinstance(exc, MemtuneError):
            status = 2
        if getattr(args, "error_json", False):
            print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                              "exit_status": status}, sort_keys=True), file=sys.stderr)
        else:
            print(f"memtune: error: {exc}", file=sys.stderr)
        return status


if __name__ == "__main__":
    sys.exit(main())
