"""Ring-down records: synthesis and decay-time extraction.

A ring-down is the free decay ``x(t) = A0 exp(-t/tau) sin(2 pi f t + phi0)``
observed on top of white detection noise. The quality factor follows from the
amplitude decay time as ``Q = pi f tau``.

Extraction works like a lock-in: the record is band-limited around the
refined carrier with a Gaussian filter (equivalent to quadrature mixing plus a
low-pass of cutoff f/20), which also decimates the complex baseband envelope.
The log of the envelope is then fitted by weighted linear regression.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import DataFormatError, FitError, ModelViolationError, ValidationError

#: Minimum ratio of sample rate to carrier frequency.
NYQUIST_MARGIN = 2.5
#: Envelope must exceed this multiple of the demodulated noise to be fitted.
WINDOW_SNR = 5.0
#: Low-pass -3 dB cutoff as a fraction of the carrier frequency.
CUTOFF_FRACTION = 1.0 / 20.0
_GAUSS_SPAN = 5.0  # filter truncated at this many sigma
_EDGE_SIGMAS = 10.0  # samples this many kernel widths from either end are dropped


@dataclass(frozen=True)
class RingdownTrace:
    """Uniformly sampled displacement record (m) with its acquisition metadata."""

    samples: np.ndarray
    sample_rate: float
    drive_frequency: float
    initial_amplitude: float = 0.0
    noise_floor: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if not self.drive_frequency > 0:
            raise ValidationError("drive frequency must be positive")
        if not self.sample_rate > NYQUIST_MARGIN * self.drive_frequency:
            raise ValidationError(
                f"sample rate {self.sample_rate:g} Hz must exceed "
                f"{NYQUIST_MARGIN} x drive frequency ({self.drive_frequency:g} Hz)"
            )
        if samples.ndim != 1 or samples.size < 10 * self.sample_rate / self.drive_frequency:
            raise ValidationError("trace must cover at least 10 oscillation periods")
        if self.noise_floor < 0:
            raise ValidationError("noise floor must be non-negative")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def snr_per_root_hz(self) -> float:
        """Initial amplitude over the displacement noise density (sqrt(Hz))."""
        return self.initial_amplitude / self.noise_floor if self.noise_floor > 0 else math.inf

    def metadata(self) -> dict:
        return {
            "schema": "ringdown-v1",
            "sample_rate_Hz": self.sample_rate,
            "drive_frequency_Hz": self.drive_frequency,
            "initial_amplitude_m": self.initial_amplitude,
            "noise_floor_m_per_rtHz": self.noise_floor,
            "n_samples": int(self.samples.size),
        }


@dataclass(frozen=True)
class RingdownResult:
    tau: float
    tau_uncertainty: float
    quality_factor: float
    frequency: float
    fit_window: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "tau_s": self.tau,
            "tau_uncertainty_s": self.tau_uncertainty,
            "Q": self.quality_factor,
            "Q_uncertainty": self.quality_factor * self.tau_uncertainty / self.tau,
            "frequency_Hz": self.frequency,
            "fit_window": list(self.fit_window),
        }


def synthesize_ringdown(f: float, Q: float, amp0: float, noise_floor: float, sample_rate: float,
                        duration: float, seed: int | None = 0, phase: float = 0.0) -> RingdownTrace:
    """Damped sinusoid with decay time ``Q/(pi f)`` plus white Gaussian noise.

    ``noise_floor`` is the one-sided displacement noise density (m/sqrt(Hz)),
    so each sample has variance ``noise_floor**2 * sample_rate / 2``.
    """
    if not Q > 1:
        raise ValidationError("Q must exceed 1")
    if not sample_rate > NYQUIST_MARGIN * f:
        raise ValidationError(f"sample rate must exceed {NYQUIST_MARGIN} x f")
    tau = Q / (math.pi * f)
    if duration < 3 * tau:
        warnings.warn(f"record of {duration:g} s is shorter than 3 tau ({3 * tau:g} s)",
                      RuntimeWarning, stacklevel=2)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = amp0 * np.exp(-t / tau) * np.sin(2 * math.pi * f * t + phase)
    if noise_floor > 0:
        rng = np.random.default_rng(seed)
        x += rng.standard_normal(n) * (noise_floor * math.sqrt(sample_rate / 2.0))
    return RingdownTrace(x, sample_rate, f, amp0, noise_floor)


def _refine_frequency(spectrum: np.ndarray, df: float, f_guess: float) -> float:
    mag = np.abs(spectrum)
    k0 = int(round(f_guess / df))
    half = max(2, int(math.ceil(0.01 * f_guess / df)))
    lo, hi = max(1, k0 - half), min(mag.size - 2, k0 + half)
    k = lo + int(np.argmax(mag[lo:hi + 1]))
    # parabolic interpolation of the log magnitude
    y0, y1, y2 = np.log(mag[k - 1:k + 2] + 1e-300)
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
    return (k + shift) * df


def demodulate(trace: RingdownTrace, cutoff: float | None = None):
    """Complex baseband envelope of ``trace`` around its refined carrier.

    Returns ``(times, envelope, noise_rms, frequency, kernel_sigma_t, inflation)``
    where ``noise_rms`` is the expected rms of the complex envelope noise,
    ``kernel_sigma_t`` the time width of the filter and ``inflation`` the
    variance inflation factor for regressions on the correlated samples.
    """
    x = trace.samples
    fs = trace.sample_rate
    # zero-padding to a fast length only adds silence after the record
    n = sfft.next_fast_len(x.size, real=True)
    df = fs / n
    X = sfft.rfft(x, n)
    f_c = _refine_frequency(X, df, trace.drive_frequency)
    cutoff = CUTOFF_FRACTION * f_c if cutoff is None else cutoff
    sigma = cutoff / math.sqrt(2.0 * math.log(math.sqrt(2.0)))  # amplitude 1/sqrt(2) at cutoff
    k_c = int(round(f_c / df))
    half = int(math.ceil(_GAUSS_SPAN * sigma / df))
    lo, hi = k_c - half, k_c + half
    if lo < 1 or hi >= X.size:
        raise FitError("demodulation band exceeds the sampled spectrum")
    k = np.arange(lo, hi + 1)
    W = np.exp(-0.5 * ((k * df - f_c) / sigma) ** 2)
    # band-limited analytic signal shifted to baseband, sampled at m points
    # across the (padded) record
    m = sfft.next_fast_len(k.size)
    band = W * X[lo:hi + 1]
    Y = np.zeros(m, dtype=complex)
    Y[:half + 1] = band[half:]
    Y[m - half:] = band[:half]
    z = sfft.ifft(Y) * (2.0 * m / n)
    times = np.arange(m) * (n / fs) / m
    keep = times <= trace.duration
    times, z = times[keep], z[keep]
    sigma_x = trace.noise_floor * math.sqrt(fs / 2.0)
    w2 = float(np.sum(W * W))
    noise_rms = 2.0 * sigma_x * math.sqrt(w2 / n)
    inflation = m / w2
    sigma_t = 1.0 / (2.0 * math.pi * sigma)
    return times, z, noise_rms, f_c, sigma_t, inflation


def _weighted_line(t, y, w):
    W = w.sum()
    tm = (w * t).sum() / W
    ym = (w * y).sum() / W
    dt = t - tm
    sxx = (w * dt * dt).sum()
    slope = (w * dt * (y - ym)).sum() / sxx
    return slope, ym - slope * tm, sxx


def extract_q(trace: RingdownTrace) -> RingdownResult:
    """Decay time and quality factor of a ring-down record.

    Raises:
        FitError: no usable window (SNR too low) or no measurable decay.
        ModelViolationError: the envelope is not monotone (beating between
            modes or other contamination).
    """
    times, z, noise, f_c, sigma_t, inflation = demodulate(trace)
    env = np.abs(z)
    edge = _EDGE_SIGMAS * sigma_t
    usable = (times >= edge) & (times <= trace.duration - edge)
    floor = max(noise, 1e-12 * float(env[usable].max(initial=0.0)))
    win = usable & (env > WINDOW_SNR * floor)
    if np.count_nonzero(win) < 8:
        raise FitError("no part of the record exceeds the noise floor; SNR too low")
    idx = np.flatnonzero(win)
    # first pass on the raw threshold, then cut where the fitted envelope
    # reaches the threshold so that noise near it does not bias the slope
    first, last = idx[0], idx[-1]
    sel = slice(first, last + 1)
    t_w, y_w = times[sel], np.log(env[sel])
    slope, icpt, _ = _weighted_line(t_w, y_w, env[sel] ** 2)
    if slope < 0:
        t_cut = (math.log(WINDOW_SNR * floor) - icpt) / slope
        last = min(last, int(np.searchsorted(times, t_cut)) - 1)
    sel = slice(first, last + 1)
    t_w, e_w = times[sel], env[sel]
    if e_w.size < 8:
        raise FitError("fit window too short")
    _check_monotone(e_w, floor)
    # weights from the fitted envelope, not the noisy one, to avoid a
    # noise-correlated weighting bias
    y_w = np.log(e_w)
    slope, icpt, _ = _weighted_line(t_w, y_w, e_w**2)
    for _ in range(2):
        ref = icpt
        weights = np.exp(2.0 * slope * t_w)  # model envelope squared over exp(2 ref)
        slope, icpt, sxx = _weighted_line(t_w, y_w, weights)
    span = t_w[-1] - t_w[0]
    if not slope < 0 or -slope * span < 1e-3:
        raise FitError("no measurable decay: tau is out of range (undamped trace?)")
    if noise > 0:
        # var(log env) = (noise**2 / 2) / env**2
        var_slope = 0.5 * noise**2 / (sxx * math.exp(2.0 * ref)) * inflation
    else:
        resid = y_w - (icpt + slope * t_w)
        var_slope = float((weights * resid**2).sum() / max(e_w.size - 2, 1) / sxx) * inflation
    tau = -1.0 / slope
    tau_err = math.sqrt(var_slope) / (slope * slope)
    return RingdownResult(
        tau=tau,
        tau_uncertainty=tau_err,
        quality_factor=math.pi * f_c * tau,
        frequency=f_c,
        fit_window=(int(round(t_w[0] * trace.sample_rate)), int(round(t_w[-1] * trace.sample_rate))),
    )


def _check_monotone(env: np.ndarray, floor: float) -> None:
    running_min = np.minimum.accumulate(env)
    rise = env - running_min
    allowed = 10.0 * floor + 0.02 * running_min
    if np.any(rise > allowed):
        i = int(np.argmax(rise - allowed))
        raise ModelViolationError(
            f"envelope rises by {rise[i] / running_min[i]:.1%} after decaying: "
            "beating or multi-mode contamination"
        )


def write_trace(trace: RingdownTrace, csv_path: str | Path) -> Path:
    """Write ``time_s,displacement_m`` CSV and a ``.json`` metadata sidecar."""
    csv_path = Path(csv_path)
    t = trace.times
    with open(csv_path, "w", newline="") as fh:
        fh.write("time_s,displacement_m\n")
        for ti, xi in zip(t, trace.samples):
            fh.write(f"{ti:.12e},{xi:.12e}\n")
    sidecar = csv_path.with_suffix(".json")
    sidecar.write_text(json.dumps(trace.metadata(), indent=2, sort_keys=True) + "\n")
    return sidecar


def read_trace(csv_path: str | Path, meta_path: str | Path | None = None) -> RingdownTrace:
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else csv_path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise DataFormatError("missing metadata sidecar", path=str(meta_path)) from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc.msg}", path=str(meta_path), line=exc.lineno) from None
    values = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["time_s", "displacement_m"]:
            raise DataFormatError("expected header time_s,displacement_m", path=str(csv_path), line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataFormatError(f"expected 2 columns, got {len(row)}", path=str(csv_path), line=lineno)
            try:
                values.append(float(row[1]))
            except ValueError:
                raise DataFormatError(f"not a number: {row[1]!r}", path=str(csv_path), line=lineno) from None
    try:
        return RingdownTrace(
            np.array(values),
            float(meta["sample_rate_Hz"]),
            float(meta["drive_frequency_Hz"]),
            float(meta.get("initial_amplitude_m", 0.0)),
            float(meta.get("noise_floor_m_per_rtHz", 0.0)),
        )
    except KeyError as exc:
        raise DataFormatError(f"metadata missing {exc}", path=str(meta_path)) from None
