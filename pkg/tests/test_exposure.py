import math

import numpy as np
import pytest
from scipy import stats

from conftest import CLOCK_A, SET_A
from tccva import ExposureKind, ExposureParams, Model, ShiftCurve, SimConfig, build_model, iter_bundles
from tccva.errors import ParameterDomainError, ShapeError
from tccva.exposure import exposure_moments, expected_positive_part, simulate_exposure, write_profile_csv
from tccva.paths import base_grid

# Frozen by tests/oracles.py: Euler on the bridge SDE, 3000 steps to u = 1.5, 2e5 paths, seed 5
BRIDGE_U15_MEAN = (0.0021861348514960713, 0.00015481134682702698)
BRIDGE_U15_VAR = 0.004793310621279606

GAUSS = ExposureParams("gaussian_forward", 0.08, 3.0)
BRIDGE = ExposureParams("drifted_bridge", 0.08, 3.0, gamma=0.001)


def _simulate(e, times, m, seed):
    rng = np.random.default_rng(seed)
    h = np.diff(times)
    dw = np.sqrt(h) * rng.standard_normal((m, h.size))
    res = rng.standard_normal((m, h.size)) if e.needs_residual else None
    return simulate_exposure(e, times, dw, res)


@pytest.mark.parametrize("text,kind", [("gaussian", ExposureKind.GAUSSIAN), ("Drifted-Bridge", ExposureKind.BRIDGE),
                                       ("bridge", ExposureKind.BRIDGE), (ExposureKind.GAUSSIAN, ExposureKind.GAUSSIAN)])
def test_kind_parsing(text, kind):
    assert ExposureKind.parse(text) is kind


def test_domain_errors():
    with pytest.raises(ParameterDomainError):
        ExposureParams("gaussian", -0.1, 3.0)
    with pytest.raises(ParameterDomainError):
        ExposureParams("gaussian", 0.1, 0.0)
    with pytest.raises(ValueError):
        ExposureParams("swaption", 0.1, 3.0)
    with pytest.raises(ParameterDomainError):
        exposure_moments(BRIDGE, 3.5)


def test_zero_volatility_forward_is_constant():
    e = ExposureParams("gaussian", 0.0, 3.0, V0=0.4)
    times = base_grid(3.0, 0.1)
    v = simulate_exposure(e, times, np.ones((2, times.size - 1)))
    assert np.all(v == 0.4)


def test_zero_volatility_bridge_is_hump():
    e = ExposureParams("bridge", 0.0, 3.0, gamma=0.001)
    times = base_grid(3.0, 0.01)
    v = simulate_exposure(e, times, np.zeros(times.size - 1))
    assert np.allclose(v, 0.001 * times * (3.0 - times), atol=1e-15)
    assert times[np.argmax(v)] == pytest.approx(1.5)
    assert v[-1] == 0.0


def test_forward_terminal_variance():
    v = _simulate(GAUSS, base_grid(3.0, 0.1), 100_000, 1)[:, -1]
    target = 0.08**2 * 3
    assert abs(v.var(ddof=1) - target) <= 3 * target * math.sqrt(2 / v.size)


def test_expected_positive_part_examples():
    assert expected_positive_part(GAUSS, 0.0) == 0.0
    assert expected_positive_part(GAUSS, 1.0) == pytest.approx(0.08 / math.sqrt(2 * math.pi), rel=1e-14)
    assert 0.08 / math.sqrt(2 * math.pi) == pytest.approx(0.031915, abs=5e-7)
    assert expected_positive_part(BRIDGE, 3.0) == 0.0
    assert expected_positive_part(BRIDGE, np.array([0.0, 1.0])).shape == (2,)


def test_bridge_moments_against_frozen_oracle():
    mean, sd = exposure_moments(BRIDGE, 1.5)
    m_ref, se = BRIDGE_U15_MEAN
    assert float(mean) == pytest.approx(0.001 * 1.5 * 1.5)
    assert abs(float(mean) - m_ref) <= 3 * se
    var_se = BRIDGE_U15_VAR * math.sqrt(2 / 200_000)
    assert abs(float(sd) ** 2 - BRIDGE_U15_VAR) <= 3 * var_se


@pytest.mark.parametrize("e", [GAUSS, BRIDGE], ids=["gaussian", "bridge"])
def test_simulated_marginals_match_closed_forms(e):
    times = base_grid(3.0, 0.05)
    v = _simulate(e, times, 100_000, 2)
    for u in (0.5, 1.0, 1.5, 2.0, 2.5):
        k = int(round(u / 0.05))
        pos = np.maximum(v[:, k], 0.0)
        se = pos.std(ddof=1) / math.sqrt(pos.size)
        assert abs(pos.mean() - expected_positive_part(e, u)) <= 3 * se
        mean, sd = exposure_moments(e, u)
        assert abs(v[:, k].var(ddof=1) / sd**2 - 1) <= 3 * math.sqrt(2 / v.shape[0])


def test_bridge_pinning():
    delta = 0.01
    v = _simulate(BRIDGE, base_grid(3.0, delta), 50_000, 3)
    assert np.all(v[:, -1] == 0.0)
    assert v[:, -2].var(ddof=1) < 2 * 0.08**2 * delta
    var = v.var(axis=0)
    assert np.all(np.diff(var[-50:]) < 0)


def test_bridge_residual_required():
    times = base_grid(3.0, 0.5)
    with pytest.raises(ValueError):
        simulate_exposure(BRIDGE, times, np.zeros(times.size - 1))
    with pytest.raises(ShapeError):
        simulate_exposure(BRIDGE, times, np.zeros(times.size - 1), np.zeros(2))
    with pytest.raises(ShapeError):
        simulate_exposure(GAUSS, times, np.zeros(times.size))
    with pytest.raises(ParameterDomainError):
        simulate_exposure(BRIDGE, np.linspace(0, 4, 5), np.zeros(4), np.zeros(4))


@pytest.mark.parametrize("e", [GAUSS, BRIDGE], ids=["gaussian", "bridge"])
def test_synchronised_exposure_keeps_its_law(e):
    """Exposure on the synchronised driver against a directly simulated one (two-sample KS at 1%)."""
    im = build_model(Model.TCCIR, SET_A, CLOCK_A, shift=ShiftCurve.zero(3.0, Model.TCCIR))
    sim = SimConfig(3.0, 0.1, 100_000, 0.9, seed=4)
    tilde = np.concatenate([b.V for b in iter_bundles(im, sim, exposure=e)])
    direct = _simulate(e, sim.times, sim.m, 5)
    for k in (10, 20, 29):
        assert stats.ks_2samp(tilde[:, k], direct[:, k]).pvalue >= 0.01


def test_profile_csv(tmp_path):
    times = base_grid(3.0, 0.5)
    write_profile_csv(GAUSS, times, tmp_path / "ee.csv")
    lines = (tmp_path / "ee.csv").read_text().splitlines()
    assert lines[0] == "u,expected_positive_exposure" and len(lines) == times.size + 1
    u, val = lines[3].split(",")
    assert float(val) == pytest.approx(expected_positive_part(GAUSS, float(u)))
