"""Synthetic datasets shipped with the package, and the code that makes them."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dissipation import demo_frame, save_frame
from .fitting import PowerScanData, write_power_scan
from .model import (
    NOMINAL_CHI,
    ThermalCoupling,
    fit_coefficients_from_model,
    preset,
    stress_from_global_heating,
    mode_frequency,
)
from .thermal import f_of_P_curve

HOLDER_DELTA_T = 16.0


def demo_power_scan() -> PowerScanData:
    """Noiseless f11(P) for the 500 um preset with chi = 0.6 K/mW, 0-160 mW."""
    spec = preset("t1_500")
    powers = np.linspace(0.0, 0.160, 33)
    curve = f_of_P_curve(spec, powers, chi=NOMINAL_CHI)
    return PowerScanData([p for p, _ in curve], [f for _, f in curve])


def demo_truth() -> dict:
    spec = preset("t1_500")
    c = fit_coefficients_from_model(spec, ThermalCoupling(NOMINAL_CHI))
    f0 = mode_frequency(spec, spec.initial_stress)
    f_hot = mode_frequency(spec, stress_from_global_heating(spec, HOLDER_DELTA_T).stress)
    return {
        "schema": "powerscan-truth-v1",
        "preset": "t1_500",
        "a_Hz2": c.a,
        "b_Hz2_per_W": c.b,
        "c_Hz2_per_W2": c.c,
        "alpha0_per_K": spec.expansion_alpha0,
        "alpha1_per_K2": spec.expansion_alpha1,
        "chi_K_per_W": NOMINAL_CHI,
        "holder_delta_T_K": HOLDER_DELTA_T,
        "holder_delta_f_Hz": f_hot - f0,
    }


def write_demo_data(directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_power_scan(demo_power_scan(), d / "powerscan_demo.csv")
    (d / "powerscan_demo_truth.json").write_text(json.dumps(demo_truth(), indent=2, sort_keys=True) + "\n")
    save_frame(demo_frame(), d / "frame_demo.json")


if __name__ == "__main__":
    write_demo_data(Path(__file__).parent / "data")
