"""Steady-state laser heating of the membrane.

The membrane is treated as a 2D conducting sheet of thickness ``t`` whose
edges are held at the frame temperature. For a Gaussian beam the temperature
rise obeys::

    -kappa * t * laplacian(dT) = a_abs * P * 2/(pi w^2) * exp(-2 r^2 / w^2)

with ``dT = 0`` on the boundary. The 5-point finite-difference system on a
uniform grid is diagonalized exactly by the type-I discrete sine transform,
so each solve is direct; the discrete residual is checked afterwards.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.fft import dstn, idstn
from scipy.special import erf

from .errors import BucklingError, SolverError, ValidationError
from .model import (
    FUNDAMENTAL,
    MembraneSpec,
    ModeIndex,
    ThermalCoupling,
    mode_frequency,
    stress_at_power,
)

DEFAULT_GRID = 201
RESIDUAL_TOL = 1e-10
#: Minimum fraction of beam power that must fall on the membrane.
MIN_ENCLOSED = 0.99


@dataclass(frozen=True)
class BeamSpec:
    """Heating laser: incident power (W), 1/e^2 diameter (m), center (m).

    The center is in membrane coordinates with the origin at the middle.
    """

    power: float
    diameter_e2: float = 350e-6
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.power >= 0:
            raise ValidationError(f"beam power must be non-negative, got {self.power!r}")
        if not self.diameter_e2 > 0:
            raise ValidationError("beam diameter must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def waist(self) -> float:
        return self.diameter_e2 / 2.0

    def with_power(self, power: float) -> "BeamSpec":
        return BeamSpec(power, self.diameter_e2, self.center)


@dataclass(frozen=True)
class ThermalGrid:
    nx: int = DEFAULT_GRID
    ny: int = DEFAULT_GRID

    def __post_init__(self):
        for name, v in (("nx", self.nx), ("ny", self.ny)):
            if int(v) != v or v < 17 or v % 2 == 0:
                raise ValidationError(f"{name} must be an odd integer >= 17, got {v!r}")

    @classmethod
    def square(cls, n: int) -> "ThermalGrid":
        return cls(n, n)

    def spacing(self, side_length: float) -> tuple[float, float]:
        return side_length / (self.nx - 1), side_length / (self.ny - 1)

    def coordinates(self, side_length: float) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates with the origin at the membrane center.

        Built from integer offsets so that the grid is exactly mirror-symmetric.
        """
        hx, hy = self.spacing(side_length)
        x = (np.arange(self.nx) - (self.nx - 1) // 2) * hx
        y = (np.arange(self.ny) - (self.ny - 1) // 2) * hy
        return x, y


@dataclass(frozen=True)
class TemperatureField:
    """Solution of one heating problem.

    Attributes:
        grid: Discretization used.
        side_length: Membrane side (m), needed to recover coordinates.
        delta_T: ``(nx, ny)`` array of temperature rise above the frame (K).
        avg_delta_T: Area-weighted mean of ``delta_T`` over the membrane (K).
        chi: Heating coefficient avg_delta_T / P (K/W); from a unit-power
            solve when P = 0.
        residual: Relative residual of the discrete linear system.
        enclosed_fraction: Fraction of the Gaussian power inside the membrane.
    """

    grid: ThermalGrid
    side_length: float
    delta_T: np.ndarray
    avg_delta_T: float
    chi: float
    residual: float
    enclosed_fraction: float

    @property
    def beam_truncated(self) -> bool:
        return self.enclosed_fraction < MIN_ENCLOSED

    @property
    def max_delta_T(self) -> float:
        return float(self.delta_T.max())

    def summary(self) -> dict:
        return {
            "avg_delta_T_K": self.avg_delta_T,
            "max_delta_T_K": self.max_delta_T,
            "chi_K_per_W": self.chi,
            "chi_K_per_mW": self.chi * 1e-3,
            "residual": self.residual,
            "enclosed_fraction": self.enclosed_fraction,
            "beam_truncated": self.beam_truncated,
            "grid": {"nx": self.grid.nx, "ny": self.grid.ny,
                     "hx_m": self.grid.spacing(self.side_length)[0],
                     "hy_m": self.grid.spacing(self.side_length)[1]},
        }

    def write_csv(self, path: str | Path) -> None:
        x, y = self.grid.coordinates(self.side_length)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_m", "y_m", "delta_T_K"])
            for i, xi in enumerate(x):
                for j, yj in enumerate(y):
                    w.writerow([f"{xi:.12e}", f"{yj:.12e}", f"{self.delta_T[i, j]:.12e}"])

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def enclosed_fraction(side_length: float, beam: BeamSpec) -> float:
    """Fraction of a Gaussian beam's power falling inside the square membrane."""
    half = side_length / 2.0
    s = math.sqrt(2.0) / beam.waist

    def axis(c):
        return 0.5 * (erf(s * (half - c)) + erf(s * (half + c)))

    return float(axis(beam.center[0]) * axis(beam.center[1]))


def gaussian_source(spec: MembraneSpec, beam: BeamSpec, grid: ThermalGrid) -> np.ndarray:
    """Absorbed power density (W/m^2) at every grid node."""
    x, y = grid.coordinates(spec.side_length)
    w = beam.waist
    dx2 = (x - beam.center[0]) ** 2
    dy2 = (y - beam.center[1]) ** 2
    peak = spec.absorption_fraction * beam.power * 2.0 / (math.pi * w * w)
    return peak * np.exp(-2.0 * (dx2[:, None] + dy2[None, :]) / (w * w))


def laplacian_matrix(grid: ThermalGrid, hx: float, hy: float) -> sp.csr_matrix:
    """Sparse negative 5-point Laplacian on the interior nodes (Dirichlet)."""
    nx, ny = grid.nx - 2, grid.ny - 2

    def second_diff(n, h):
        return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / (h * h)

    return (sp.kron(second_diff(nx, hx), sp.identity(ny))
            + sp.kron(sp.identity(nx), second_diff(ny, hy))).tocsr()


def _dst_solve(rhs: np.ndarray, hx: float, hy: float) -> np.ndarray:
    nx, ny = rhs.shape
    lx = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, nx + 1) / (nx + 1))) / (hx * hx)
    ly = (2.0 - 2.0 * np.cos(np.pi * np.arange(1, ny + 1) / (ny + 1))) / (hy * hy)
    return idstn(dstn(rhs, type=1) / (lx[:, None] + ly[None, :]), type=1)


def _area_mean(field: np.ndarray, grid: ThermalGrid) -> float:
    # trapezoidal weights over the closed square
    wx = np.ones(grid.nx)
    wx[[0, -1]] = 0.5
    wy = np.ones(grid.ny)
    wy[[0, -1]] = 0.5
    return float(wx @ field @ wy / ((grid.nx - 1) * (grid.ny - 1)))


def _solve_field(spec: MembraneSpec, beam: BeamSpec, grid: ThermalGrid):
    hx, hy = grid.spacing(spec.side_length)
    q = gaussian_source(spec, beam, grid)
    rhs = q[1:-1, 1:-1] / (spec.heat_conductivity * spec.thickness)
    u = _dst_solve(rhs, hx, hy)
    r = laplacian_matrix(grid, hx, hy) @ u.ravel() - rhs.ravel()
    scale = np.linalg.norm(rhs.ravel())
    residual = float(np.linalg.norm(r) / scale) if scale > 0 else 0.0
    if not residual < RESIDUAL_TOL:
        raise SolverError(f"heat solve residual {residual:.3g} exceeds {RESIDUAL_TOL:g}")
    field = np.zeros((grid.nx, grid.ny))
    field[1:-1, 1:-1] = u
    return field, residual


def _check_beam(spec: MembraneSpec, beam: BeamSpec) -> float:
    half = spec.side_length / 2.0
    if abs(beam.center[0]) >= half or abs(beam.center[1]) >= half:
        raise ValidationError(f"beam center {beam.center} lies outside the membrane")
    frac = enclosed_fraction(spec.side_length, beam)
    if frac < MIN_ENCLOSED:
        warnings.warn(f"only {frac:.2%} of the beam power falls on the membrane",
                      RuntimeWarning, stacklevel=3)
    return frac


def solve_heating(spec: MembraneSpec, beam: BeamSpec, grid: ThermalGrid | None = None) -> TemperatureField:
    """Temperature rise produced by ``beam`` on ``spec``.

    Raises:
        ValidationError: if the beam center is outside the membrane.
        SolverError: if the discrete residual exceeds 1e-10 (relative).
    """
    grid = grid or ThermalGrid()
    frac = _check_beam(spec, beam)
    if beam.power > 0:
        field, residual = _solve_field(spec, beam, grid)
        avg = _area_mean(field, grid)
        chi = avg / beam.power
    else:
        # zero field; chi by linearity from a unit-power solve
        unit, residual = _solve_field(spec, beam.with_power(1.0), grid)
        field = np.zeros_like(unit)
        avg = 0.0
        chi = _area_mean(unit, grid)
    return TemperatureField(grid, spec.side_length, field, avg, chi, residual, frac)


def chi_of_beam(spec: MembraneSpec, beam: BeamSpec, grid: ThermalGrid | None = None) -> ThermalCoupling:
    """Heating coefficient for the beam geometry (its power is ignored)."""
    return ThermalCoupling(solve_heating(spec, beam.with_power(1.0), grid).chi)


def absorption_from_chi(spec: MembraneSpec, beam: BeamSpec, measured_chi: float,
                        grid: ThermalGrid | None = None) -> float:
    """Absorbed fraction that reproduces a measured chi (K/W).

    ``spec.absorption_fraction`` is ignored. Exact by linearity in the source.
    """
    if measured_chi < 0:
        raise ValidationError("measured chi must be non-negative")
    if measured_chi == 0:
        return 0.0
    chi_unit = chi_of_beam(spec.with_(absorption_fraction=1.0), beam, grid).chi
    return measured_chi / chi_unit


def f_of_P_curve(spec: MembraneSpec, powers, beam: BeamSpec | None = None,
                 grid: ThermalGrid | None = None, chi: float | None = None,
                 idx: ModeIndex = FUNDAMENTAL) -> list[tuple[float, float]]:
    """Mode frequency versus heating power.

    ``chi`` (K/W) is used when given, otherwise it is computed from ``beam``
    by a heat solve. On buckling a :class:`BucklingError` is raised whose
    ``partial`` attribute holds the points computed so far.
    """
    if chi is None:
        if beam is None:
            raise ValidationError("either chi or a beam geometry is required")
        coupling = chi_of_beam(spec, beam, grid)
    else:
        coupling = ThermalCoupling(chi)
    out: list[tuple[float, float]] = []
    for p in powers:
        p = float(p)
        try:
            s = stress_at_power(spec, coupling, p).stress
        except BucklingError as exc:
            raise BucklingError(str(exc), p_crit=exc.p_crit, partial=out) from None
        out.append((p, mode_frequency(spec, s, idx)))
    return out
