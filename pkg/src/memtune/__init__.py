"""Virtual experiment for laser-tuned tensioned SiN membranes.

Mode spectra versus heating power, the laser-heating temperature field,
frame-mode dissipation spectra, ring-down synthesis and analysis, and the
fits that turn measured data back into material and thermal parameters.
"""

from importlib import resources

__version__ = "0.1.0"

from .dissipation import (  # noqa: E402
    FrameMode,
    FrameModel,
    ModeCouplingPair,
    anticrossing_branches,
    demo_frame,
    find_q_gaps,
    q_inverse_spectrum,
    q_spectrum_over_tuning,
    spectrum_vs_power,
)
from .errors import (  # noqa: E402
    BucklingError,
    DataFormatError,
    FitError,
    MemtuneError,
    ModelViolationError,
    NumericalError,
    SolverError,
    ValidationError,
)
from .fitting import (  # noqa: E402
    PowerScanData,
    extract_thermal_parameters,
    fit_f_vs_P,
    fit_q_spectrum,
)
from .model import (  # noqa: E402
    FitCoefficients,
    MembraneSpec,
    ModeIndex,
    StressState,
    ThermalCoupling,
    alpha0_from_global_heating,
    fit_coefficients_from_model,
    fit_form_frequency,
    frequency_slope_at_zero_power,
    mode_frequency,
    preset,
    stress_at_power,
    stress_from_global_heating,
)
from .ringdown import RingdownResult, RingdownTrace, extract_q, synthesize_ringdown  # noqa: E402
from .thermal import (  # noqa: E402
    BeamSpec,
    TemperatureField,
    ThermalGrid,
    absorption_from_chi,
    chi_of_beam,
    f_of_P_curve,
    solve_heating,
)


__all__ = [
    "BeamSpec",
    "BucklingError",
    "DataFormatError",
    "FitCoefficients",
    "FitError",
    "FrameMode",
    "FrameModel",
    "MembraneSpec",
    "MemtuneError",
    "ModeCouplingPair",
    "ModeIndex",
    "ModelViolationError",
    "NumericalError",
    "PowerScanData",
    "RingdownResult",
    "RingdownTrace",
    "SolverError",
    "StressState",
    "TemperatureField",
    "ThermalCoupling",
    "ThermalGrid",
    "ValidationError",
    "absorption_from_chi",
    "alpha0_from_global_heating",
    "anticrossing_branches",
    "chi_of_beam",
    "demo_frame",
    "extract_q",
    "extract_thermal_parameters",
    "f_of_P_curve",
    "find_q_gaps",
    "fit_coefficients_from_model",
    "fit_f_vs_P",
    "fit_form_frequency",
    "fit_q_spectrum",
    "frequency_slope_at_zero_power",
    "mode_frequency",
    "preset",
    "q_inverse_spectrum",
    "q_spectrum_over_tuning",
    "solve_heating",
    "spectrum_vs_power",
    "stress_at_power",
    "stress_from_global_heating",
    "synthesize_ringdown",
    "data_path",
]


def data_path(name: str):
    """Path to a file shipped in ``memtune/data``."""
    return resources.files(__name__).joinpath("data", name)
