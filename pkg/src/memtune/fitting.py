"""Parameter estimation from tuning sweeps and dissipation spectra."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .dissipation import FrameMode, FrameModel, q_inverse_spectrum
from .errors import DataFormatError, FitError, ValidationError
from .model import (
    FUNDAMENTAL,
    FitCoefficients,
    MembraneSpec,
    ModeIndex,
    alpha0_from_global_heating,
    fit_form_frequency,
)

#: Residual bound (Hz) above which an f(P) fit is flagged.
FIT_RESIDUAL_LIMIT = 1e3


@dataclass(frozen=True)
class PowerScanData:
    """Measured fundamental frequency versus heating power."""

    power: np.ndarray
    frequency: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        f = np.asarray(self.frequency, dtype=float)
        object.__setattr__(self, "power", p)
        object.__setattr__(self, "frequency", f)
        if p.shape != f.shape or p.ndim != 1:
            raise ValidationError("power and frequency must be 1-D arrays of equal length")
        if np.any(np.diff(p) <= 0):
            raise ValidationError("powers must be strictly increasing")
        if np.any(f <= 0):
            raise ValidationError("frequencies must be positive")
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != f.shape or np.any(s <= 0):
                raise ValidationError("sigma must be positive and match the data")
            object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.power.size


def read_power_scan(path: str | Path) -> PowerScanData:
    """Read ``power_W,frequency_Hz[,sigma_Hz]`` CSV."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["power_W", "frequency_Hz"] or len(header) > 3 or (
                len(header) == 3 and header[2] != "sigma_Hz"):
            raise DataFormatError("expected header power_W,frequency_Hz[,sigma_Hz]", path=str(path), line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} columns, got {len(row)}",
                                      path=str(path), line=lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataFormatError(f"not a number in {row!r}", path=str(path), line=lineno) from None
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    try:
        return PowerScanData(arr[:, 0], arr[:, 1], arr[:, 2] if len(header) == 3 else None)
    except ValidationError as exc:
        raise DataFormatError(str(exc), path=str(path)) from None


def write_power_scan(data: PowerScanData, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        if data.sigma is None:
            fh.write("power_W,frequency_Hz\n")
            for p, f in zip(data.power, data.frequency):
                fh.write(f"{p:.12e},{f:.12e}\n")
        else:
            fh.write("power_W,frequency_Hz,sigma_Hz\n")
            for p, f, s in zip(data.power, data.frequency, data.sigma):
                fh.write(f"{p:.12e},{f:.12e},{s:.12e}\n")


@dataclass(frozen=True)
class FrequencyFit:
    coefficients: FitCoefficients
    covariance: np.ndarray
    residuals: np.ndarray
    max_residual: float
    exceeds_limit: bool

    def to_dict(self) -> dict:
        c = self.coefficients
        err = np.sqrt(np.diag(self.covariance))
        return {
            "a_Hz2": c.a, "b_Hz2_per_W": c.b, "c_Hz2_per_W2": c.c,
            "a_err": err[0], "b_err": err[1], "c_err": err[2],
            "max_abs_residual_Hz": self.max_residual,
            "rms_residual_Hz": float(np.sqrt(np.mean(self.residuals**2))),
            "exceeds_1kHz": self.exceeds_limit,
        }


def fit_f_vs_P(data: PowerScanData) -> FrequencyFit:
    """Fit ``f(P) = sqrt(a + b P + c P**2)``.

    ``f**2`` is linear in (a, b, c), so this is a linear least-squares problem
    solved in closed form. With per-point ``sigma`` the weights use the
    propagated uncertainty of ``f**2``, ``2 f sigma``.
    """
    if len(data) < 4:
        raise FitError("need at least 4 points to fit f(P)")
    if np.unique(data.power).size < 3:
        raise FitError("need at least 3 distinct powers")
    p, f = data.power, data.frequency
    A = np.column_stack([np.ones_like(p), p, p * p])
    y = f * f
    w = np.ones_like(p) if data.sigma is None else 1.0 / (2.0 * f * data.sigma)
    Aw, yw = A * w[:, None], y * w
    # column scaling keeps the problem well conditioned for any power unit
    scale = np.abs(Aw).max(axis=0)
    sol, _, rank, _ = np.linalg.lstsq(Aw / scale, yw, rcond=None)
    if rank < 3:
        raise FitError("design matrix is rank deficient")
    coef = sol / scale
    dof = len(data) - 3
    resid_w = yw - Aw @ coef
    cov_unit = np.linalg.inv((Aw / scale).T @ (Aw / scale)) / np.outer(scale, scale)
    s2 = float(resid_w @ resid_w) / dof if (data.sigma is None and dof > 0) else 1.0
    try:
        coeffs = FitCoefficients(*coef)
        model = fit_form_frequency(coeffs, p)
    except Exception as exc:  # a <= 0 or negative radicand inside the data range
        raise FitError(f"fitted f(P) is unphysical: {exc}") from None
    resid = f - model
    mx = float(np.max(np.abs(resid)))
    return FrequencyFit(coeffs, cov_unit * s2, resid, mx, mx > FIT_RESIDUAL_LIMIT)


@dataclass(frozen=True)
class ThermalParameters:
    alpha0: float
    alpha1: float
    chi: float
    fit: FrequencyFit
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "alpha0_per_K": self.alpha0,
            "alpha1_per_K2": self.alpha1,
            "chi_K_per_W": self.chi,
            "chi_K_per_mW": self.chi * 1e-3,
            "fit": self.fit.to_dict(),
            "flags": list(self.flags),
        }


def extract_thermal_parameters(spec: MembraneSpec, holder_delta_T: float, holder_delta_f: float,
                               power_scan: PowerScanData,
                               idx: ModeIndex = FUNDAMENTAL) -> ThermalParameters:
    """Recover (alpha0, alpha1, chi) from a holder-heating point and a power scan.

    The power scan alone only fixes the products ``alpha0*chi`` and
    ``alpha1*chi**2``; the holder-heating shift pins ``alpha0`` and so breaks
    the degeneracy. ``spec`` supplies S0, E and the frame expansion; its
    alpha0/alpha1 fields are ignored.
    """
    alpha0 = alpha0_from_global_heating(spec, holder_delta_T, holder_delta_f, idx)
    if not alpha0 > 0:
        raise FitError(f"holder heating gives non-positive alpha0 = {alpha0:.4g}/K")
    fit = fit_f_vs_P(power_scan)
    a, b, c = fit.coefficients.a, fit.coefficients.b, fit.coefficients.c
    if not b < 0:
        raise FitError(f"linear coefficient b = {b:.4g} is not negative: frequency does not fall with power")
    E, s0 = spec.youngs_modulus, spec.initial_stress
    chi = -b * s0 / (a * E * alpha0)
    alpha1 = -c * s0 / (a * E * chi * chi)
    flags = ()
    if c > 0:
        flags = ("positive quadratic coefficient: alpha1 < 0",)
    return ThermalParameters(alpha0, alpha1, chi, fit, flags)


@dataclass
class QSpectrumFit:
    frame: FrameModel
    covariances: list[np.ndarray] = field(default_factory=list)
    baseline_estimate: float = 0.0
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        peaks = []
        for mode, cov in zip(self.frame.modes, self.covariances):
            err = np.sqrt(np.diag(cov))
            peaks.append({
                "frequency_Hz": mode.rest_frequency, "frequency_err": err[0],
                "linewidth_Hz": mode.linewidth, "linewidth_err": err[1],
                "coupling_Hz": mode.coupling, "coupling_err": err[2],
            })
        return {
            "baseline_Q": self.frame.baseline_Q_bg,
            "baseline_inverse_Q": 1.0 / self.frame.baseline_Q_bg,
            "peaks": peaks,
            "flags": list(self.flags),
        }


def _peak_regions(y: np.ndarray, high: float, low: float, min_points: int = 3) -> list[tuple[int, int]]:
    """Runs of ``y > low`` that contain at least ``min_points`` samples above ``high``.

    The lower hysteresis level keeps noise near ``high`` from splitting one
    peak into fragments.
    """
    ext = y > low
    core = y > high
    regions = []
    i, n = 0, y.size
    while i < n:
        if not ext[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and ext[j + 1]:
            j += 1
        if np.count_nonzero(core[i:j + 1]) >= min_points:
            regions.append((i, j))
        i = j + 1
    return regions


def _model(params: np.ndarray, f: np.ndarray, npk: int) -> np.ndarray:
    out = np.full_like(f, params[-1])
    for j in range(npk):
        fj, lg, g = params[3 * j:3 * j + 3]
        gam = math.exp(lg)
        out = out + g * g * gam / ((f - fj) ** 2 + 0.25 * gam * gam) / f
    return out


def fit_q_spectrum(freqs, q_inverse, threshold: float = 3.0, quantile: float = 5.0) -> QSpectrumFit:
    """Estimate a frame model from measured ``(f, 1/Q)`` points.

    The baseline is first taken as a low percentile of 1/Q; contiguous runs
    above ``threshold`` times that baseline are treated as peaks. Each peak is
    initialized from its height and half width, then all peaks and the
    baseline are refined jointly by nonlinear least squares on relative
    residuals. Returned frame-mode frequencies are the observed (effective)
    positions; ``temp_shift`` is left at zero.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(q_inverse, dtype=float)
    if f.shape != y.shape or f.ndim != 1 or f.size < 5:
        raise ValidationError("need matching 1-D arrays of at least 5 points")
    if np.any(f <= 0) or np.any(y <= 0):
        raise ValidationError("frequencies and 1/Q values must be positive")
    order = np.argsort(f)
    f, y = f[order], y[order]
    base0 = float(np.percentile(y, quantile))
    regions = _peak_regions(y, threshold * base0, (1.0 + 0.5 * (threshold - 1.0)) * base0)
    covered = np.zeros(f.size, dtype=bool)
    for a, b in regions:
        covered[a:b + 1] = True
    if np.count_nonzero(~covered) < max(3, 0.1 * f.size):
        raise FitError("no baseline region identifiable")
    if not regions:
        base = float(np.median(y))
        return QSpectrumFit(FrameModel((), 1.0 / base), [], base0, [])

    init = []
    for a, b in regions:
        k = a + int(np.argmax(y[a:b + 1]))
        excess = y[k] - base0
        half = base0 + 0.5 * excess
        # half-maximum crossings, linearly interpolated
        left = k
        while left > 0 and y[left] > half:
            left -= 1
        right = k
        while right < f.size - 1 and y[right] > half:
            right += 1
        fl = np.interp(half, [y[left], y[left + 1]], [f[left], f[left + 1]]) if left < k else f[k]
        fr = np.interp(half, [y[right], y[right - 1]], [f[right], f[right - 1]]) if right > k else f[k]
        gam = max(fr - fl, 2.0 * float(np.min(np.diff(f))))
        g = math.sqrt(max(excess, 0.0) * gam * f[k] / 4.0)
        init += [f[k], math.log(gam), g]
    npk = len(regions)
    x0 = np.array(init + [base0])

    def resid(params):
        return (_model(params, f, npk) - y) / y

    sol = optimize.least_squares(resid, x0, method="lm", x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    if not sol.success:
        raise FitError(f"q-spectrum fit did not converge: {sol.message}")
    params = sol.x
    base = float(params[-1])
    if not base > 0:
        raise FitError("fitted baseline is not positive")
    dof = max(f.size - params.size, 1)
    s2 = float(sol.fun @ sol.fun) / dof
    try:
        cov_full = np.linalg.inv(sol.jac.T @ sol.jac) * s2
    except np.linalg.LinAlgError:
        cov_full = np.full((params.size, params.size), np.nan)
    modes, covs = [], []
    for j in range(npk):
        fj, lg, g = params[3 * j:3 * j + 3]
        gam = math.exp(lg)
        # to (f, gamma, |g|) coordinates
        J = np.diag([1.0, gam, math.copysign(1.0, g)])
        cov = J @ cov_full[3 * j:3 * j + 3, 3 * j:3 * j + 3] @ J.T
        modes.append(FrameMode(float(fj), gam, abs(float(g))))
        covs.append(cov)
    flags = []
    for i in range(npk):
        for j in range(i + 1, npk):
            if abs(modes[i].rest_frequency - modes[j].rest_frequency) < modes[i].linewidth + modes[j].linewidth:
                flags.append(f"peaks {i} and {j} overlap beyond separability")
    # keep covariances aligned with the frame's sorted mode order
    pairs = sorted(zip(modes, covs), key=lambda mc: mc[0].rest_frequency)
    frame = FrameModel(tuple(m for m, _ in pairs), 1.0 / base)
    return QSpectrumFit(frame, [c for _, c in pairs], base0, flags)


def q_spectrum_residuals(fit: QSpectrumFit, freqs, q_inverse) -> np.ndarray:
    """Relative residuals of the fitted model at the given points."""
    y = np.asarray(q_inverse, dtype=float)
    return (q_inverse_spectrum(fit.frame, np.asarray(freqs, dtype=float)) - y) / y
