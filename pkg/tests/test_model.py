import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memtune.errors import BucklingError, DataFormatError, ValidationError
from memtune.model import (
    MEMBRANE_TABLE,
    FitCoefficients,
    MembraneSpec,
    ModeIndex,
    ThermalCoupling,
    alpha0_from_global_heating,
    critical_power,
    fit_coefficients_from_model,
    fit_form_frequency,
    frequency_at_power,
    frequency_slope_at_zero_power,
    load_spec,
    lowest_modes,
    mode_frequency,
    preset,
    preset_names,
    save_spec,
    secant_slope,
    stress_at_power,
    stress_from_global_heating,
)

CHI = ThermalCoupling(0.6e3)  # 0.6 K/mW


@pytest.fixture
def spec500():
    return preset("t1_500")


def test_mode_frequency_table_values():
    s = MembraneSpec(500e-6, 50e-9, density=2900.0, initial_stress=98.0e6)
    assert mode_frequency(s, 98.0e6) == pytest.approx(260e3, rel=5e-3)
    s = MembraneSpec(250e-6, 50e-9, density=2900.0, initial_stress=66.4e6)
    assert mode_frequency(s, 66.4e6) == pytest.approx(428e3, rel=5e-3)


def test_mode_frequency_closed_form_by_hand(spec500):
    # sqrt(98e6 / 2900 * 2) / (2 * 500e-6)
    assert mode_frequency(spec500, 98.0e6) == pytest.approx(259973.4734479, rel=1e-12)


def test_zero_tension_and_symmetry(spec500):
    assert mode_frequency(spec500, 0.0) == 0.0
    assert mode_frequency(spec500, 5e7, ModeIndex(2, 1)) == mode_frequency(spec500, 5e7, ModeIndex(1, 2))


def test_negative_stress_is_buckling(spec500):
    with pytest.raises(BucklingError):
        mode_frequency(spec500, -1.0)


def test_mode_frequency_scales_inverse_length(spec500):
    big = spec500.with_(side_length=1e-3)
    assert mode_frequency(big, 5e7) == pytest.approx(0.5 * mode_frequency(spec500, 5e7), rel=1e-14)


@given(st.floats(1e5, 1e9), st.integers(1, 9), st.integers(1, 9))
def test_frequency_ratio_law(stress, m, n):
    s = preset("t1_500")
    ratio = mode_frequency(s, stress, ModeIndex(m, n)) / mode_frequency(s, stress, ModeIndex(1, 1))
    assert ratio == pytest.approx(math.sqrt((m * m + n * n) / 2.0), rel=1e-14)


@pytest.mark.parametrize("name", list(MEMBRANE_TABLE))
def test_reference_presets_reproduce_f11(name):
    s = preset(name)
    assert mode_frequency(s, s.initial_stress) == pytest.approx(MEMBRANE_TABLE[name][3], rel=0.01)


def test_spec_validation():
    with pytest.raises(ValidationError):
        MembraneSpec(500e-6, 10e-6)  # t/l = 0.02, not thin
    with pytest.raises(ValidationError):
        MembraneSpec(500e-6, 50e-9, absorption_fraction=1.5)
    with pytest.raises(ValidationError):
        MembraneSpec(-1.0, 50e-9)
    with pytest.raises(ValidationError):
        ModeIndex(0, 1)
    with pytest.raises(ValidationError):
        preset("nope")


def test_stress_at_zero_power(spec500):
    st0 = stress_at_power(spec500, CHI, 0.0)
    assert (st0.stress, st0.delta_T, st0.power) == (spec500.initial_stress, 0.0, 0.0)


def test_stress_at_160mW_hand_arithmetic(spec500):
    # 98e6 - 260e9 * (1.6e-6 * 96 + 1.3e-8 * 96**2) = 98e6 - 39.936e6 - 31.15008e6
    st160 = stress_at_power(spec500, CHI, 0.160)
    assert st160.delta_T == pytest.approx(96.0, rel=1e-14)
    assert st160.stress == pytest.approx(26.91392e6, rel=1e-12)
    assert mode_frequency(spec500, st160.stress) == pytest.approx(136e3, rel=5e-3)


def test_stress_linear_without_alpha1(spec500):
    s = spec500.with_(expansion_alpha1=0.0)
    slope = (stress_at_power(s, CHI, 1e-3).stress - s.initial_stress) / 1e-3
    assert slope == pytest.approx(-s.youngs_modulus * s.expansion_alpha0 * CHI.chi, rel=1e-9)


def test_stress_exactly_quadratic(spec500):
    dp = 0.01
    s = [stress_at_power(spec500, CHI, p).stress for p in (0.03, 0.04, 0.05)]
    second = s[2] - 2 * s[1] + s[0]
    expected = 2 * (-spec500.youngs_modulus * spec500.expansion_alpha1 * CHI.chi**2) * dp * dp
    assert second == pytest.approx(expected, rel=1e-6, abs=1e-7 * spec500.initial_stress)


def test_buckling_carries_critical_power(spec500):
    pc = critical_power(spec500, CHI)
    # S0 = E a0 chi P + E a1 chi^2 P^2 solved by hand-free quadratic formula
    E = spec500.youngs_modulus
    qa, qb = E * spec500.expansion_alpha1 * CHI.chi**2, E * spec500.expansion_alpha0 * CHI.chi
    expected = (-qb + math.sqrt(qb * qb + 4 * qa * spec500.initial_stress)) / (2 * qa)
    assert pc == pytest.approx(expected, rel=1e-12)
    assert stress_at_power(spec500, CHI, pc * (1 - 1e-9)).stress >= 0
    with pytest.raises(BucklingError) as info:
        stress_at_power(spec500, CHI, pc * 1.01)
    assert info.value.p_crit == pytest.approx(pc)


def test_negative_power_rejected(spec500):
    with pytest.raises(ValidationError):
        stress_at_power(spec500, CHI, -1e-3)


def test_slope_matches_hand_value_and_finite_difference(spec500):
    slope = frequency_slope_at_zero_power(spec500, CHI)
    assert slope * 1e-3 == pytest.approx(-331.07, abs=0.01)
    # Richardson-extrapolated forward differences
    h = 1e-6
    d1 = (frequency_at_power(spec500, CHI, h) - frequency_at_power(spec500, CHI, 0)) / h
    d2 = (frequency_at_power(spec500, CHI, h / 2) - frequency_at_power(spec500, CHI, 0)) / (h / 2)
    assert 2 * d2 - d1 == pytest.approx(slope, rel=1e-6)


def test_slope_zero_and_linear_in_chi(spec500):
    assert frequency_slope_at_zero_power(spec500.with_(expansion_alpha0=0.0), CHI) == 0.0
    s1 = frequency_slope_at_zero_power(spec500, CHI)
    s2 = frequency_slope_at_zero_power(spec500, ThermalCoupling(2 * CHI.chi))
    assert s2 == pytest.approx(2 * s1, rel=1e-14)


def test_secant_slope_steeper_than_tangent(spec500):
    # f(P) is concave, so the window average is more negative
    assert secant_slope(spec500, CHI, 0.02) < frequency_slope_at_zero_power(spec500, CHI) < 0


def test_global_heating_hand_arithmetic(spec500):
    assert stress_from_global_heating(spec500, 0.0).stress == spec500.initial_stress
    shift = stress_from_global_heating(spec500, 16.0).stress - spec500.initial_stress
    assert shift == pytest.approx(4.16e6, rel=1e-9)
    matched = spec500.with_(frame_expansion=spec500.expansion_alpha0)
    assert stress_from_global_heating(matched, 40.0).stress == matched.initial_stress


def _holder_shift(spec, dT):
    return mode_frequency(spec, stress_from_global_heating(spec, dT).stress) - mode_frequency(
        spec, spec.initial_stress)


def test_alpha0_round_trip(spec500):
    df = _holder_shift(spec500, 16.0)
    assert alpha0_from_global_heating(spec500, 16.0, df) == pytest.approx(1.6e-6, rel=1e-12)
    assert alpha0_from_global_heating(spec500, 16.0, 0.0) == spec500.frame_expansion
    zero = spec500.with_(expansion_alpha0=0.0)
    assert alpha0_from_global_heating(spec500, 16.0, _holder_shift(zero, 16.0)) == pytest.approx(0.0, abs=1e-19)


@settings(max_examples=200)
@given(st.floats(0.1e-6, 10e-6), st.floats(1.0, 50.0))
def test_alpha0_round_trip_property(alpha0, dT):
    s = preset("t1_500").with_(expansion_alpha0=alpha0)
    assert alpha0_from_global_heating(s, dT, _holder_shift(s, dT)) == pytest.approx(alpha0, rel=1e-10)


def test_alpha0_inconsistent_shift(spec500):
    with pytest.raises(BucklingError):
        alpha0_from_global_heating(spec500, 16.0, -3e5)
    with pytest.raises(ValidationError):
        alpha0_from_global_heating(spec500, 0.0, 10.0)


def test_fit_form_basics():
    c = FitCoefficients(4.0e10, -1e11, 0.0)
    assert fit_form_frequency(c, 0.0) == math.sqrt(4.0e10)
    f = fit_form_frequency(c, np.linspace(0, 0.3, 50))
    assert np.all(np.diff(f) < 0)
    with pytest.raises(BucklingError):
        fit_form_frequency(c, 1.0)
    with pytest.raises(ValidationError):
        FitCoefficients(0.0, 1.0, 1.0)


def test_fit_form_identity_on_reference_spec(spec500):
    coeffs = fit_coefficients_from_model(spec500, CHI)
    pc = critical_power(spec500, CHI)
    for p in np.linspace(0, 0.999 * pc, 57):
        assert fit_form_frequency(coeffs, p) == pytest.approx(frequency_at_power(spec500, CHI, p), rel=1e-12)


def test_fit_form_identity_random_specs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        s = MembraneSpec(
            side_length=rng.uniform(200e-6, 2e-3),
            thickness=50e-9,
            initial_stress=rng.uniform(50e6, 1e9),
            expansion_alpha0=rng.uniform(0.1e-6, 5e-6),
            expansion_alpha1=rng.uniform(0.0, 5e-8),
        )
        c = ThermalCoupling(rng.uniform(10.0, 2000.0))
        idx = ModeIndex(int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        p = rng.uniform(0, 0.99) * min(critical_power(s, c), 1.0)
        expected = frequency_at_power(s, c, p, idx)
        got = fit_form_frequency(fit_coefficients_from_model(s, c, idx), p)
        assert got == pytest.approx(expected, rel=1e-10)


def test_lowest_modes_order(spec500):
    modes = lowest_modes(spec500, 13)
    assert len(modes) == 13
    assert modes[0][0] == ModeIndex(1, 1)
    assert [i.label for i, _ in modes[1:3]] == ["(1,2)", "(2,1)"]
    assert modes[1][1] == modes[2][1]
    freqs = [f for _, f in modes]
    assert freqs == sorted(freqs)
    assert len(lowest_modes(spec500, 1)) == 1


def test_spec_json_round_trip(tmp_path, spec500):
    path = tmp_path / "spec.json"
    save_spec(spec500, path)
    assert json.loads(path.read_text())["schema"] == "memspec-v1"
    assert load_spec(path) == spec500
    path.write_text('{"schema": "other"}')
    with pytest.raises(DataFormatError):
        load_spec(path)


def test_presets_complete():
    assert preset_names() == ["t1_250", "t1_500", "t1_1000", "t1_1500", "t1_500_t75", "t1_500_t100", "highstress"]
    assert preset("highstress").initial_stress == 980e6
