import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bifid.errors import OptimizationError, ParameterError
from bifid.regtune import LCurve, elbow, menger_curvature, omega_grid, save_lcurve, sweep

from conftest import canonical_pipeline_problem


def _curve(jd, jr, omegas=None):
    jd, jr = np.asarray(jd, float), np.asarray(jr, float)
    om = np.logspace(-3, 0, jd.size) if omegas is None else np.asarray(omegas)
    return LCurve(om, jd, jr)


def test_grid():
    g = omega_grid(-8, -2)
    assert g.size == 13 and g[0] == pytest.approx(1e-8) and g[-1] == pytest.approx(1e-2)
    assert np.allclose(np.diff(np.log10(g)), 0.5)


def test_two_point_grid_rejected():
    prob = canonical_pipeline_problem()
    with pytest.raises(ParameterError):
        sweep(prob, [1e-3, 1e-2])
    with pytest.raises(ParameterError):
        sweep(prob, [1e-3, 1e-3, 1e-2])
    with pytest.raises(ParameterError):
        sweep(prob, [0.0, 1e-3, 1e-2])


def test_elbow_needs_three_points():
    with pytest.raises(ParameterError):
        elbow(_curve([1, 2], [2, 1]))


def test_collinear_no_elbow():
    c = elbow(_curve([10, 100, 1000], [1000, 100, 10]))
    assert c.no_elbow and c.elbow_index == 1
    assert np.allclose(c.curvatures, 0)


def test_right_angle_corner():
    # log-space polyline (0,3) ... (0,0) ... (3,0) padded with straight points
    x = [0, 0, 0, 0, 1, 2, 3]
    y = [3, 2, 1, 0, 0, 0, 0]
    c = elbow(_curve(10.0 ** np.array(x), 10.0 ** np.array(y)))
    assert c.elbow_index == 3 and not c.no_elbow


def test_menger_circle():
    t = np.linspace(0, np.pi / 2, 7)
    k = menger_curvature(2 * np.cos(t), 2 * np.sin(t))
    assert np.allclose(k, 0.5)
    assert np.allclose(menger_curvature(2 * np.cos(t), -2 * np.sin(t)), -0.5)


def test_tie_goes_to_smaller_omega():
    # symmetric zig-zag: two equal corners
    x = [0, 1, 1, 2, 2]
    y = [0, 0, 1, 1, 2]
    c = elbow(_curve(10.0 ** np.array(x), 10.0 ** np.array(y)))
    assert c.elbow_index == 1


def test_zero_loss_clamped():
    c = elbow(_curve([0.0, 1e-3, 1e-1, 1.0], [10.0, 1.0, 0.1, 0.05]))
    assert c.degenerate
    assert np.all(np.isfinite(c.curvatures))


@given(st.floats(1e-6, 1e6), st.integers(0, 1000))
def test_argmax_invariant_under_scaling(scale, seed):
    r = np.random.default_rng(seed)
    jd = np.sort(10 ** r.uniform(-8, 0, 9))
    jr = np.sort(10 ** r.uniform(-2, 4, 9))[::-1]
    a = elbow(_curve(jd, jr))
    b = elbow(_curve(jd * scale, jr))
    assert a.elbow_index == b.elbow_index


@pytest.fixture(scope="module")
def canonical_curve():
    return sweep(canonical_pipeline_problem(), omega_grid(-8, -2))


def test_canonical_monotone(canonical_curve):
    c = canonical_curve
    assert np.all(np.diff(c.j_data) >= -1e-10)
    assert np.all(np.diff(c.j_reg) <= 1e-10)


def test_canonical_cold_start_agrees(canonical_curve):
    cold = sweep(canonical_pipeline_problem(), omega_grid(-8, -2), warm_start=False)
    assert np.all(np.diff(cold.j_data) >= -1e-10)
    assert np.all(np.diff(cold.j_reg) <= 1e-10)
    om = canonical_curve.omegas
    tot_w = canonical_curve.j_data + om * canonical_curve.j_reg
    tot_c = cold.j_data + om * cold.j_reg
    assert np.allclose(tot_w, tot_c, rtol=5e-3, atol=0)
    # below ~1e-6 the minimum is flat and the two paths settle at different points
    big = om >= 1e-6
    assert np.allclose(canonical_curve.j_data[big], cold.j_data[big], rtol=2e-3, atol=0)


def test_canonical_elbow_interior():
    c = sweep(canonical_pipeline_problem(), omega_grid(-4, 0))
    assert 0 < c.elbow_index < len(c) - 1
    assert 1e-3 <= c.omega_star <= 1e-1


def test_sweep_deterministic(canonical_curve):
    again = sweep(canonical_pipeline_problem(), omega_grid(-8, -2))
    assert np.array_equal(again.j_data, canonical_curve.j_data)
    assert np.array_equal(again.j_reg, canonical_curve.j_reg)
    assert again.elbow_index == canonical_curve.elbow_index


def test_sweep_failure_reports_omega(monkeypatch):
    import bifid.regtune as rt

    def boom(problem, cfg, alpha0=None):
        raise OptimizationError("line search failed")

    monkeypatch.setattr(rt, "optimize", boom)
    with pytest.raises(OptimizationError, match="omega=1.000e-02"):
        sweep(canonical_pipeline_problem(), omega_grid(-4, -2, 3))


def test_save_lcurve(tmp_path, canonical_curve):
    save_lcurve(canonical_curve, tmp_path / "l.csv")
    rows = (tmp_path / "l.csv").read_text().splitlines()
    assert rows[0] == "omega,j_data,j_reg,curvature,is_elbow"
    assert len(rows) == 14
    assert rows[1].split(",")[3] == "" and rows[-1].split(",")[3] == ""
    assert sum(int(r.split(",")[4]) for r in rows[1:]) == 1
