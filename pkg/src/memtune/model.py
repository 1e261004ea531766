"""Closed-form physics of a tensioned square membrane.

All quantities are SI. The mode frequencies of a square membrane of side
``l`` under isotropic tensile stress ``S`` are::

    f_mn = 1/(2 l) * sqrt(S/rho * (m**2 + n**2))

Heating lowers the stress through thermal expansion of the membrane relative
to its frame. With an average temperature rise ``dT = chi * P`` the stress is
quadratic in the heating power, so ``f_mn(P)**2`` is a quadratic polynomial
``a + b P + c P**2`` whose coefficients map one-to-one onto the physical
constants (see :func:`fit_coefficients_from_model`).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BucklingError, DataFormatError, ValidationError

SPEC_SCHEMA = "memspec-v1"

#: Maximum thickness-to-side ratio accepted as a thin membrane.
THIN_LIMIT = 0.01


@dataclass(frozen=True)
class MembraneSpec:
    """Geometry and material constants of one membrane.

    Attributes:
        side_length: Side length l (m).
        thickness: Thickness t (m).
        density: Mass density (kg/m^3).
        youngs_modulus: Young's modulus E (Pa).
        initial_stress: Tensile stress at zero heating S0 (Pa).
        expansion_alpha0: Linear expansion coefficient (1/K).
        expansion_alpha1: Second-order expansion coefficient (1/K^2).
        heat_conductivity: In-plane thermal conductivity (W/(K m)).
        absorption_fraction: Fraction of incident optical power absorbed.
        frame_expansion: Expansion coefficient of the supporting frame (1/K).
    """

    side_length: float
    thickness: float
    density: float = 2900.0
    youngs_modulus: float = 260e9
    initial_stress: float = 98.0e6
    expansion_alpha0: float = 1.6e-6
    expansion_alpha1: float = 1.3e-8
    heat_conductivity: float = 3.0
    absorption_fraction: float = 1.5e-3
    frame_expansion: float = 2.6e-6

    def __post_init__(self):
        positive = {
            "side_length": self.side_length,
            "thickness": self.thickness,
            "density": self.density,
            "youngs_modulus": self.youngs_modulus,
            "initial_stress": self.initial_stress,
            "heat_conductivity": self.heat_conductivity,
        }
        for name, value in positive.items():
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value!r}")
        for name in ("expansion_alpha0", "expansion_alpha1", "frame_expansion"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if not 0.0 <= self.absorption_fraction <= 1.0:
            raise ValidationError(
                f"absorption_fraction must lie in [0, 1], got {self.absorption_fraction!r}"
            )
        if self.thickness / self.side_length >= THIN_LIMIT:
            raise ValidationError(
                f"t/l = {self.thickness / self.side_length:.3g} is outside the "
                f"thin-membrane range (< {THIN_LIMIT})"
            )

    def with_(self, **changes) -> "MembraneSpec":
        """Return a copy with some fields replaced (re-validated)."""
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"schema": SPEC_SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "MembraneSpec":
        data = dict(data)
        schema = data.pop("schema", None)
        if schema != SPEC_SCHEMA:
            raise DataFormatError(f"expected schema {SPEC_SCHEMA!r}, got {schema!r}")
        data.pop("name", None)
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except TypeError as exc:
            raise DataFormatError(f"bad membrane spec fields: {exc}") from None


@dataclass(frozen=True, order=True)
class ModeIndex:
    """Mode label: number of antinodes along the two sides."""

    m: int
    n: int

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n or self.m < 1 or self.n < 1:
            raise ValidationError(f"mode indices must be positive integers, got ({self.m}, {self.n})")

    @property
    def weight(self) -> int:
        return self.m * self.m + self.n * self.n

    @property
    def label(self) -> str:
        return f"({self.m},{self.n})"

    @classmethod
    def parse(cls, text: str) -> "ModeIndex":
        """Parse ``"m,n"`` or ``"(m,n)"``."""
        parts = text.strip().strip("()").split(",")
        if len(parts) != 2:
            raise ValidationError(f"cannot parse mode index {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            raise ValidationError(f"cannot parse mode index {text!r}") from None


FUNDAMENTAL = ModeIndex(1, 1)


@dataclass(frozen=True)
class ThermalCoupling:
    """Average membrane temperature rise per incident laser power, chi (K/W)."""

    chi: float

    def __post_init__(self):
        if not (math.isfinite(self.chi) and self.chi >= 0):
            raise ValidationError(f"chi must be non-negative, got {self.chi!r}")


@dataclass(frozen=True)
class StressState:
    stress: float
    delta_T: float
    power: float


@dataclass(frozen=True)
class FitCoefficients:
    """Coefficients of ``f(P) = sqrt(a + b P + c P**2)`` in Hz^2, Hz^2/W, Hz^2/W^2."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"zero-power coefficient a must be positive, got {self.a!r}")

    def rescaled(self, s: float) -> "FitCoefficients":
        """Coefficients for the power axis measured in units of ``s`` watts."""
        return FitCoefficients(self.a, self.b * s, self.c * s * s)


def _mode_factor(spec: MembraneSpec, idx: ModeIndex) -> float:
    # f**2 = factor * S
    return idx.weight / (4.0 * spec.side_length**2 * spec.density)


def mode_frequency(spec: MembraneSpec, stress, idx: ModeIndex = FUNDAMENTAL):
    """Eigenfrequency (Hz) of mode ``idx`` at tensile stress ``stress`` (Pa).

    Accepts scalars or arrays of stress. Raises :class:`BucklingError` for
    negative stress, where the tensioned-membrane model does not apply.
    """
    s = np.asarray(stress, dtype=float)
    if np.any(s < 0):
        raise BucklingError(f"negative stress {float(np.min(s)):.6g} Pa: membrane buckled")
    f = np.sqrt(_mode_factor(spec, idx) * s)
    return float(f) if f.ndim == 0 else f


def lowest_modes(spec: MembraneSpec, count: int = 13, stress: float | None = None):
    """The ``count`` lowest modes as ``(ModeIndex, frequency)`` pairs.

    Degenerate partners (m,n)/(n,m) are both listed, (m,n) with m < n first.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    s = spec.initial_stress if stress is None else stress
    kmax = int(math.ceil(math.sqrt(count))) + 2
    idxs = [ModeIndex(m, n) for m in range(1, kmax + 1) for n in range(1, kmax + 1)]
    idxs.sort(key=lambda i: (i.weight, i.m))
    return [(i, mode_frequency(spec, s, i)) for i in idxs[:count]]


def critical_power(spec: MembraneSpec, coupling: ThermalCoupling) -> float:
    """Smallest positive power (W) at which the stress reaches zero (inf if never)."""
    E = spec.youngs_modulus
    lin = E * spec.expansion_alpha0 * coupling.chi
    quad = E * spec.expansion_alpha1 * coupling.chi**2
    # S0 - lin P - quad P^2 = 0
    roots = np.roots([-quad, -lin, spec.initial_stress]) if quad != 0 else (
        np.array([spec.initial_stress / lin]) if lin != 0 else np.array([])
    )
    real = [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 * max(1.0, abs(r)) and r.real > 0]
    return min(real) if real else math.inf


def stress_at_power(spec: MembraneSpec, coupling: ThermalCoupling, power: float) -> StressState:
    """Tensile stress under laser heating with a homogeneous temperature rise chi*P."""
    if power < 0:
        raise ValidationError(f"power must be non-negative, got {power!r}")
    dT = coupling.chi * power
    E = spec.youngs_modulus
    s = spec.initial_stress - E * (spec.expansion_alpha0 * dT + spec.expansion_alpha1 * dT * dT)
    if s < 0:
        pc = critical_power(spec, coupling)
        raise BucklingError(
            f"stress {s:.6g} Pa at P = {power:.6g} W; buckling above P_crit = {pc:.6g} W",
            p_crit=pc,
        )
    return StressState(stress=s, delta_T=dT, power=power)


def frequency_at_power(spec: MembraneSpec, coupling: ThermalCoupling, power: float,
                       idx: ModeIndex = FUNDAMENTAL) -> float:
    return mode_frequency(spec, stress_at_power(spec, coupling, power).stress, idx)


def frequency_slope_at_zero_power(spec: MembraneSpec, coupling: ThermalCoupling,
                                  idx: ModeIndex = FUNDAMENTAL) -> float:
    """Analytic df/dP at P = 0 in Hz/W."""
    f0 = mode_frequency(spec, spec.initial_stress, idx)
    return -f0 * spec.youngs_modulus * spec.expansion_alpha0 * coupling.chi / (2.0 * spec.initial_stress)


def secant_slope(spec: MembraneSpec, coupling: ThermalCoupling, p_max: float,
                 idx: ModeIndex = FUNDAMENTAL) -> float:
    """Average df/dP (Hz/W) over the window [0, p_max]."""
    if p_max <= 0:
        raise ValidationError("p_max must be positive")
    f0 = mode_frequency(spec, spec.initial_stress, idx)
    return (frequency_at_power(spec, coupling, p_max, idx) - f0) / p_max


def stress_from_global_heating(spec: MembraneSpec, delta_T: float) -> StressState:
    """Stress after heating membrane and frame together by ``delta_T``.

    Both the membrane length and its frame expand, so only the mismatch of
    expansion coefficients changes the stress.
    """
    if delta_T < 0:
        raise ValidationError(f"holder heating delta_T must be non-negative, got {delta_T!r}")
    d_alpha = spec.frame_expansion - spec.expansion_alpha0
    s = spec.initial_stress + spec.youngs_modulus * d_alpha * delta_T
    if s < 0:
        raise BucklingError(f"stress {s:.6g} Pa after holder heating by {delta_T} K")
    return StressState(stress=s, delta_T=delta_T, power=0.0)


def alpha0_from_global_heating(spec: MembraneSpec, delta_T: float, delta_f: float,
                               idx: ModeIndex = FUNDAMENTAL) -> float:
    """Membrane expansion coefficient from a holder-heating frequency shift.

    ``spec.expansion_alpha0`` is ignored; ``spec.frame_expansion``,
    ``youngs_modulus`` and ``initial_stress`` are used.
    """
    if not delta_T > 0:
        raise ValidationError("holder heating delta_T must be positive")
    f0 = mode_frequency(spec, spec.initial_stress, idx)
    f1 = f0 + delta_f
    if f1 <= 0:
        raise BucklingError(f"frequency shift {delta_f} Hz implies non-positive stress")
    ds = spec.initial_stress * ((f1 / f0) ** 2 - 1.0)
    return spec.frame_expansion - ds / (spec.youngs_modulus * delta_T)


def fit_coefficients_from_model(spec: MembraneSpec, coupling: ThermalCoupling,
                                idx: ModeIndex = FUNDAMENTAL) -> FitCoefficients:
    """Exact (a, b, c) such that ``f(P)**2 = a + b P + c P**2`` for the physical model."""
    k = _mode_factor(spec, idx)
    E, chi = spec.youngs_modulus, coupling.chi
    return FitCoefficients(
        a=k * spec.initial_stress,
        b=-k * E * spec.expansion_alpha0 * chi,
        c=-k * E * spec.expansion_alpha1 * chi * chi,
    )


def fit_form_frequency(coeffs: FitCoefficients, power):
    """Evaluate ``sqrt(a + b P + c P**2)``; negative radicand means buckling."""
    p = np.asarray(power, dtype=float)
    rad = coeffs.a + coeffs.b * p + coeffs.c * p * p
    if np.any(rad < 0):
        raise BucklingError("negative f^2 in fit form: beyond buckling")
    f = np.sqrt(rad)
    return float(f) if f.ndim == 0 else f


# Reference membranes: (side length, thickness, S0, f11, df11/dP, Q_max). Units SI
# except the slope, kept in Hz/mW as tabulated.
MEMBRANE_TABLE = {
    "t1_250": (250e-6, 50e-9, 66.4e6, 428e3, -259.0, 3.2e5),
    "t1_500": (500e-6, 50e-9, 98.0e6, 260e3, -363.0, 10e5),
    "t1_1000": (1000e-6, 50e-9, 120e6, 144e3, -68.9, 15e5),
    "t1_1500": (1500e-6, 50e-9, 78.8e6, 77.7e3, -49.5, 5.7e5),
    "t1_500_t75": (500e-6, 75e-9, 114e6, 281e3, -89.6, 10e5),
    "t1_500_t100": (500e-6, 100e-9, 217e6, 387e3, -10.5, 0.37e5),
}

#: Measured heating coefficient for the 500 um membrane (K/W).
NOMINAL_CHI = 0.6e3


def preset(name: str) -> MembraneSpec:
    """Named membrane preset.

    ``t1_*`` presets take geometry and S0 from the measured table; all other
    constants are the shared low-stress SiN values (rho = 2900 kg/m^3,
    E = 260 GPa, alpha0 = 1.6 ppm/K, alpha1 = 1.3e-8/K^2, kappa = 3 W/(K m),
    alpha_f = 2.6 ppm/K, absorption 1.5e-3). ``highstress`` is a stoichiometric
    membrane with S0 = 980 MPa and 100x lower absorption.
    """
    if name in MEMBRANE_TABLE:
        l, t, s0 = MEMBRANE_TABLE[name][:3]
        return MembraneSpec(side_length=l, thickness=t, initial_stress=s0)
    if name == "highstress":
        return MembraneSpec(side_length=1.5e-3, thickness=50e-9, initial_stress=980e6,
                            absorption_fraction=1.5e-5)
    raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")


def preset_names() -> list[str]:
    return [*MEMBRANE_TABLE, "highstress"]


def load_spec(path: str | Path) -> MembraneSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from None
    return MembraneSpec.from_dict(data)


def save_spec(spec: MembraneSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
