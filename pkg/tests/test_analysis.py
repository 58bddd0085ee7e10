import math

import numpy as np
import pytest

from acdcdyn import analysis
from acdcdyn.lti import RationalTF, tf_to_ss
from acdcdyn.system import build, scenario_islanded_pv


@pytest.fixture(scope="module")
def islanded_model():
    return build(scenario_islanded_pv())


class TestBode:
    def test_table_shape_and_grid(self, islanded_model):
        t = analysis.bode(islanded_model, "p_load_load1", "omega_vsc1",
                          points=50)
        assert len(t.f_hz) == 50
        assert t.f_hz[0] == pytest.approx(1e-2 / (2 * math.pi))
        assert t.f_hz[-1] == pytest.approx(1e4 / (2 * math.pi))

    def test_unknown_channel(self, islanded_model):
        with pytest.raises(KeyError):
            analysis.bode(islanded_model, "bogus", "omega_vsc1")

    def test_static_gain_flat(self):
        ss = tf_to_ss(RationalTF.from_coeffs([2.0], [1.0]), "u", "y")
        t = analysis.bode(ss, "u", "y", points=2)
        assert np.allclose(t.mag_db, 20 * math.log10(2.0))


class TestStability:
    def test_islanded_stable(self, islanded_model):
        r = analysis.stability(islanded_model)
        assert r.stable
        assert all(not p.structural for p in r.nonstructural_poles)

    def test_damping_in_unit_interval(self, islanded_model):
        z = analysis.dominant_damping(analysis.stability(islanded_model))
        assert 0.0 < z < 1.0


class TestBounds:
    def test_islanded_bound_scales_with_kp(self):
        assert analysis.bound_islanded_kd(0.05) == pytest.approx(
            2 * analysis.bound_islanded_kd(0.025))

    def test_bound_infinite_at_mpp(self):
        assert analysis.bound_islanded_kd(0.025, k_pv=0.0) == math.inf

    def test_bound_validation(self):
        with pytest.raises(ValueError):
            analysis.bound_islanded_kd(-0.025)

    def test_ratio_bounds_strict(self):
        r = analysis.check_ratio_bounds_async(0.025, 0.001, 0.025, 0.012)
        assert r["vsc1"] and r["vsc2"]
        # boundary is excluded (strict inequality)
        b1, _ = analysis.ASYNC_RATIO_BOUNDS
        r2 = analysis.check_ratio_bounds_async(0.025, b1 * 0.025, 0.025, 0.001)
        assert not r2["vsc1"]

    def test_ratio_bounds_validation(self):
        with pytest.raises(ValueError):
            analysis.check_ratio_bounds_async(0.0, 0.001, 0.025, 0.001)


class TestPeaks:
    def test_interior_peak_quadratic_refinement(self):
        x = np.logspace(0, 2, 61)
        y = -((np.log10(x) - 1.0) ** 2)  # maximum at x = 10
        f, m = analysis.interior_peak(x, y)
        assert f == pytest.approx(10.0, rel=1e-6)
        assert m == pytest.approx(0.0, abs=1e-9)

    def test_monotone_raises(self):
        x = np.linspace(1, 10, 20)
        with pytest.raises(analysis.NoInteriorPeak):
            analysis.interior_peak(x, x.copy())

    def test_interior_peaks_finds_both(self):
        x = np.logspace(0, 2, 200)
        lx = np.log10(x)
        y = np.exp(-((lx - 0.5) ** 2) / 0.01) + \
            0.5 * np.exp(-((lx - 1.5) ** 2) / 0.01)
        pk = analysis.interior_peaks(x, y)
        assert len(pk) == 2
        assert pk[0][0] == pytest.approx(10 ** 0.5, rel=1e-3)
        assert pk[1][0] == pytest.approx(10 ** 1.5, rel=1e-3)

    def test_resonance_peak_on_model(self, islanded_model):
        t = analysis.bode(islanded_model, "p_load_load1", "omega_vsc1")
        f, _ = analysis.resonance_peak(t)
        assert 0.5 < f < 20.0


class TestSweep:
    def test_grid_and_error_isolation(self):
        def builder(k_d):
            if k_d < 0:
                raise ValueError("bad gain")
            return scenario_islanded_pv(k_d=k_d)

        res = analysis.sweep(builder, {"k_d": [-1.0, 0.005, 0.01]},
                             [("p_load_load1", "omega_vsc1")], points=120)
        assert len(res.points) == 3
        assert res.points[0].error and res.points[0].stable is None
        for pt in res.points[1:]:
            assert pt.stable is True
            f, m = pt.peaks[("p_load_load1", "omega_vsc1")]
            assert np.isfinite(f) and np.isfinite(m)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            analysis.sweep(lambda: None, {}, [])
