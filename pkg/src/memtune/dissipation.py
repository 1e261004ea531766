"""Dissipation spectra from coupling to frame modes, and mode anticrossings.

The membrane mode leaks energy into discrete, lossy modes of its support
frame. In the weak-coupling limit each frame mode adds a Lorentzian to the
inverse quality factor::

    1/Q(f) = 1/Q_bg + sum_j g_j**2 * gamma_j / ((f - f_j')**2 + (gamma_j/2)**2) / f

where ``f_j' = f_j * (1 - beta_j * dT_holder)`` is the frame-mode frequency
after heating the sample holder.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, ValidationError
from .model import MembraneSpec, ModeIndex, ThermalCoupling, mode_frequency, stress_at_power
from .thermal import BeamSpec, ThermalGrid, f_of_P_curve

FRAME_SCHEMA = "framemodel-v1"


@dataclass(frozen=True)
class FrameMode:
    """One frame mode: rest frequency, full linewidth and coupling (Hz), shift (1/K)."""

    rest_frequency: float
    linewidth: float
    coupling: float
    temp_shift: float = 0.0

    def __post_init__(self):
        if not self.rest_frequency > 0:
            raise ValidationError("frame mode frequency must be positive")
        if not self.linewidth > 0:
            raise ValidationError("frame mode linewidth must be positive")
        if not self.coupling >= 0:
            raise ValidationError("frame mode coupling must be non-negative")
        if not self.temp_shift >= 0:
            raise ValidationError("frame mode temperature shift must be non-negative")


@dataclass(frozen=True)
class FrameModel:
    """Frame modes plus the frequency-independent background Q."""

    modes: tuple[FrameMode, ...] = ()
    baseline_Q_bg: float = 1e6
    holder_delta_T: float = 0.0

    def __post_init__(self):
        if not self.baseline_Q_bg > 0:
            raise ValidationError("baseline Q must be positive")
        modes = tuple(sorted(self.modes, key=lambda m: m.rest_frequency))
        object.__setattr__(self, "modes", modes)
        if np.any(self.effective_frequencies <= 0):
            raise ValidationError("holder heating drives a frame mode to non-positive frequency")

    @property
    def effective_frequencies(self) -> np.ndarray:
        return np.array([m.rest_frequency * (1.0 - m.temp_shift * self.holder_delta_T)
                         for m in self.modes])

    def heated(self, holder_delta_T: float) -> "FrameModel":
        return FrameModel(self.modes, self.baseline_Q_bg, holder_delta_T)

    def to_dict(self) -> dict:
        return {
            "schema": FRAME_SCHEMA,
            "baseline_Q": self.baseline_Q_bg,
            "holder_delta_T_K": self.holder_delta_T,
            "modes": [
                {"frequency_Hz": m.rest_frequency, "linewidth_Hz": m.linewidth,
                 "coupling_Hz": m.coupling, "temp_shift_per_K": m.temp_shift}
                for m in self.modes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrameModel":
        if data.get("schema") != FRAME_SCHEMA:
            raise DataFormatError(f"expected schema {FRAME_SCHEMA!r}, got {data.get('schema')!r}")
        try:
            modes = tuple(
                FrameMode(float(m["frequency_Hz"]), float(m["linewidth_Hz"]),
                          float(m["coupling_Hz"]), float(m.get("temp_shift_per_K", 0.0)))
                for m in data.get("modes", [])
            )
            return cls(modes, float(data["baseline_Q"]), float(data.get("holder_delta_T_K", 0.0)))
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"bad frame model: missing or invalid field {exc}") from None


def load_frame(path: str | Path) -> FrameModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
    return FrameModel.from_dict(data)


def save_frame(frame: FrameModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(frame.to_dict(), indent=2, sort_keys=True) + "\n")


def demo_frame() -> FrameModel:
    """Three-mode synthetic frame inside the tuning range of the 500 um preset."""
    return FrameModel(
        modes=(
            FrameMode(165e3, 800.0, 85.0, 1e-4),
            FrameMode(200e3, 800.0, 110.0, 1e-4),
            FrameMode(235e3, 800.0, 75.0, 1e-4),
        ),
        baseline_Q_bg=1e6,
    )


def q_inverse_spectrum(frame: FrameModel, f):
    """Inverse quality factor at membrane frequency ``f`` (Hz); scalar or array."""
    fa = np.asarray(f, dtype=float)
    if np.any(fa <= 0):
        raise ValidationError("frequency must be positive")
    out = np.full(fa.shape, 1.0 / frame.baseline_Q_bg)
    for mode, fj in zip(frame.modes, frame.effective_frequencies):
        g2, gam = mode.coupling**2, mode.linewidth
        out = out + g2 * gam / ((fa - fj) ** 2 + 0.25 * gam * gam) / fa
    return float(out) if out.ndim == 0 else out


def q_spectrum_over_tuning(spec: MembraneSpec, frame: FrameModel, powers,
                           beam: BeamSpec | None = None, grid: ThermalGrid | None = None,
                           chi: float | None = None) -> list[tuple[float, float, float]]:
    """``(P, f11, 1/Q)`` along a laser-tuning sweep."""
    curve = f_of_P_curve(spec, powers, beam=beam, grid=grid, chi=chi)
    if not curve:
        return []
    f = np.array([c[1] for c in curve])
    qi = np.atleast_1d(q_inverse_spectrum(frame, f))
    return [(p, fi, float(q)) for (p, fi), q in zip(curve, qi)]


def anticrossing_branches(f_a, f_b, g_ab):
    """Upper and lower eigenfrequencies of ``[[f_a, g], [g, f_b]]``."""
    f_a = np.asarray(f_a, dtype=float)
    f_b = np.asarray(f_b, dtype=float)
    g = np.asarray(g_ab, dtype=float)
    mean = 0.5 * (f_a + f_b)
    half_split = np.hypot(0.5 * (f_a - f_b), g)
    up, lo = mean + half_split, mean - half_split
    if up.ndim == 0:
        return float(up), float(lo)
    return up, lo


@dataclass(frozen=True)
class ModeCouplingPair:
    idx_a: ModeIndex
    idx_b: ModeIndex
    coupling: float

    def __post_init__(self):
        if self.idx_a == self.idx_b:
            raise ValidationError("a mode cannot couple to itself")
        if not self.coupling >= 0:
            raise ValidationError("mode coupling must be non-negative")

    @property
    def label(self) -> str:
        return f"{self.idx_a.label}/{self.idx_b.label}"


def spectrum_vs_power(spec: MembraneSpec, coupling: ThermalCoupling, modes, pairs, powers,
                      chi_scale: dict | None = None) -> list[tuple[float, str, float]]:
    """Membrane mode spectrum along a heating sweep, with anticrossings.

    Args:
        spec: Membrane.
        coupling: Heating coefficient of the fundamental mode.
        modes: Iterable of :class:`ModeIndex`.
        pairs: Iterable of :class:`ModeCouplingPair`; each mode may appear in
            at most one pair. Both modes of a pair must be in ``modes``.
        powers: Heating powers (W).
        chi_scale: Optional per-mode multiplier on chi, for modes whose shape
            samples the heated spot more or less strongly than average.

    Returns:
        Rows ``(P, label, f)`` sorted by power, then frequency. Coupled modes
        appear as ``"(a)/(b)+"`` and ``"(a)/(b)-"`` branches.
    """
    modes = list(modes)
    pairs = list(pairs)
    chi_scale = chi_scale or {}
    paired: dict[ModeIndex, ModeCouplingPair] = {}
    for pr in pairs:
        for idx in (pr.idx_a, pr.idx_b):
            if idx not in modes:
                raise ValidationError(f"coupled mode {idx.label} is not in the mode list")
            if idx in paired:
                raise ValidationError(f"mode {idx.label} appears in more than one coupling pair")
            paired[idx] = pr
    rows = []
    for p in powers:
        p = float(p)
        bare = {}
        for idx in modes:
            c = ThermalCoupling(coupling.chi * chi_scale.get(idx, 1.0))
            bare[idx] = mode_frequency(spec, stress_at_power(spec, c, p).stress, idx)
        at_p = [(idx.label, f) for idx, f in bare.items() if idx not in paired]
        for pr in pairs:
            up, lo = anticrossing_branches(bare[pr.idx_a], bare[pr.idx_b], pr.coupling)
            at_p += [(pr.label + "+", up), (pr.label + "-", lo)]
        at_p.sort(key=lambda r: (r[1], r[0]))
        rows += [(p, label, f) for label, f in at_p]
    return rows


def find_q_gaps(frame: FrameModel, band: tuple[float, float], min_Q: float,
                step: float | None = None, resolution: float = 1.0) -> list[tuple[float, float]]:
    """Maximal frequency intervals inside ``band`` where ``Q(f) >= min_Q``.

    The band is scanned with ``step`` (default: a tenth of the narrowest frame
    linewidth) and every interval edge is refined by bisection to
    ``resolution`` Hz. An empty list is a valid answer.
    """
    lo, hi = map(float, band)
    if not 0 < lo < hi:
        raise ValidationError("band must satisfy 0 < low < high")
    if step is None:
        widths = [m.linewidth for m in frame.modes]
        step = min(widths) / 10.0 if widths else (hi - lo) / 1000.0
    limit = 1.0 / min_Q

    def ok(f):
        return q_inverse_spectrum(frame, f) <= limit

    n = max(2, int(math.ceil((hi - lo) / step)) + 1)
    f = np.linspace(lo, hi, n)
    good = np.asarray(q_inverse_spectrum(frame, f)) <= limit

    def edge(a, b):
        # ok(a) != ok(b); shrink to resolution
        ga = ok(a)
        while b - a > resolution:
            mid = 0.5 * (a + b)
            if ok(mid) == ga:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)

    gaps = []
    start = lo if good[0] else None
    for i in range(1, n):
        if good[i] and not good[i - 1]:
            start = edge(f[i - 1], f[i])
        elif not good[i] and good[i - 1]:
            gaps.append((start, edge(f[i - 1], f[i])))
            start = None
    if start is not None:
        gaps.append((start, hi))
    return gaps
