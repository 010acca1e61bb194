import numpy as np
import pytest
from scipy.optimize import brentq

from hyperham.hyperkahler import HamiltonianTriple, HyperhamiltonianSystem, HyperkahlerChart, vector_field
from hyperham.integrate import (
    Trajectory,
    conservation_report,
    divergence_residual,
    empirical_order,
    integrate_exact_blocks,
    integrate_rk4,
    sample_times,
    step_count,
)
from hyperham.oscillator import CliffordOscillator, exact_flow, oscillator_field
from hyperham.pauli import ConstantField, evolve_pauli_r4, spinor_to_r4
from hyperham.quaternion_core import standard_quaternion_triple

T = standard_quaternion_triple()
E1 = np.array([1.0, 0, 0, 0])


def rk4_error(osc, xi0, dt, t1=10.0):
    traj = integrate_rk4(lambda t, x: oscillator_field(osc, x), xi0, 0.0, t1, dt)
    exact = np.array([exact_flow(osc, xi0, t) for t in traj.times])
    return np.abs(traj.states - exact).max()


def test_step_count():
    assert step_count(0, 10, 1e-3) == 10000
    assert step_count(0, 1, 0.3) == 4
    assert step_count(0, 0.9, 0.3) == 3


def test_rk4_matches_exact_flow():
    osc = CliffordOscillator.constant(T, [1, 0, 0])
    assert rk4_error(osc, E1, 1e-3) <= 1e-9


def test_rk4_zero_field(rng):
    xi0 = rng.standard_normal(4)
    traj = integrate_rk4(lambda t, x: np.zeros_like(x), xi0, 0, 1, 0.1)
    assert len(traj) == 11
    assert np.all(traj.states == xi0)


def test_rk4_lands_on_t1_with_partial_step():
    traj = integrate_rk4(lambda t, x: np.ones_like(x), [0.0], 0.0, 1.0, 0.3)
    np.testing.assert_allclose(traj.times, [0, 0.3, 0.6, 0.9, 1.0], atol=1e-15)
    assert traj.times[-1] == 1.0
    assert traj.final[0] == pytest.approx(1.0, abs=1e-15)


def test_rk4_time_dependent_field():
    traj = integrate_rk4(lambda t, x: np.array([np.cos(t)]), [0.0], 0.0, 3.0, 1e-2)
    assert traj.final[0] == pytest.approx(np.sin(3.0), abs=1e-10)


def test_rk4_stride_samples():
    traj = integrate_rk4(lambda t, x: -x, [1.0], 0.0, 1.0, 1e-2, stride=10)
    np.testing.assert_allclose(traj.times, np.linspace(0, 1, 11), atol=1e-14)
    traj = integrate_rk4(lambda t, x: -x, [1.0], 0.0, 1.05, 1e-2, stride=10)
    assert traj.times[-1] == 1.05 and traj.times[-2] == pytest.approx(1.0)


def test_rk4_complex_state():
    traj = integrate_rk4(lambda t, z: 1j * z, [1.0 + 0j], 0.0, 1.0, 1e-3)
    assert abs(traj.final[0] - np.exp(1j)) <= 1e-12


def test_rk4_argument_errors():
    f = lambda t, x: x  # noqa: E731
    with pytest.raises(ValueError):
        integrate_rk4(f, [1.0], 0, 1, 0)
    with pytest.raises(ValueError):
        integrate_rk4(f, [1.0], 1, 1, 0.1)
    with pytest.raises(ValueError):
        integrate_rk4(f, [1.0], 0, 1, 0.1, stride=0)


def test_rk4_nonfinite_aborts():
    with np.errstate(over="ignore", invalid="ignore"):
        traj = integrate_rk4(lambda t, x: x ** 2, [1.0], 0.0, 2.0, 1e-2)
    assert traj.failed and "non-finite" in traj.message
    assert traj.times[-1] < 2.0
    assert np.all(np.isfinite(traj.states))


def test_rk4_halving_dt():
    osc = CliffordOscillator.constant(T, [3, 0, 4])
    xi0 = np.array([0.2, -1.0, 0.5, 0.3])
    e1, e2 = rk4_error(osc, xi0, 2e-3), rk4_error(osc, xi0, 1e-3)
    assert 16 / 1.5 <= e1 / e2 <= 16 * 1.5


def test_rk4_order():
    osc = CliffordOscillator.constant(T, [3, 0, 4])
    xi0 = np.array([0.2, -1.0, 0.5, 0.3])
    dts = [4e-3, 2e-3, 1e-3]
    order = empirical_order(dts, [rk4_error(osc, xi0, dt) for dt in dts])
    assert 3.8 <= order <= 4.2


def test_exact_blocks_match_exact_flow(rng):
    osc = CliffordOscillator.constant(T, [[0.3, 1.0, -2.0], [1.0, 0.0, 0.5]])
    xi0 = rng.standard_normal(8)
    traj = integrate_exact_blocks(osc, xi0, 0.0, 10.0, 0.05)
    exact = np.array([exact_flow(osc, xi0, t) for t in traj.times])
    assert np.abs(traj.states - exact).max() <= 1e-14
    assert traj.times[-1] == 10.0


def test_exact_blocks_period():
    osc = CliffordOscillator.constant(T, [3, 0, 4])
    A = (3 * T[0] + 4 * T[2]) / 5
    v = A @ E1

    # xi(t) . (A xi0) = sin(5t) changes sign at half and full periods;
    # the bracket isolates the full one
    t_ret = brentq(lambda t: exact_flow(osc, E1, t) @ v, 1.1, 1.4, xtol=1e-14)
    assert abs(t_ret - 2 * np.pi / 5) <= 1e-10
    assert np.abs(exact_flow(osc, E1, t_ret) - E1).max() <= 1e-10
    # no earlier return: the overlap with xi0 stays below 1 in between
    ts = np.linspace(0.01, t_ret - 0.01, 500)
    assert max(exact_flow(osc, E1, t) @ E1 for t in ts) < 1 - 1e-4


def test_exact_blocks_single_sample(rng):
    osc = CliffordOscillator.constant(T, [1, 2, 3])
    xi0 = rng.standard_normal(4)
    traj = integrate_exact_blocks(osc, xi0, 2.0, 2.0, 0.1)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.states[0], xi0)


def test_exact_blocks_long_time_norm(rng):
    osc = CliffordOscillator.constant(T, [[3, 0, 4], [0.1, -0.7, 0.2]])
    xi0 = rng.standard_normal(8)
    t_end = 1e4 * 2 * np.pi / 5
    traj = integrate_exact_blocks(osc, xi0, 0.0, t_end, t_end / 997)
    for k in range(2):
        n0 = np.linalg.norm(xi0[4 * k:4 * k + 4])
        n = np.linalg.norm(traj.states[:, 4 * k:4 * k + 4], axis=1)
        assert np.abs(n - n0).max() <= 1e-13


def test_sample_times():
    t = sample_times(0.0, 1.0, 0.25)
    np.testing.assert_array_equal(t, [0, 0.25, 0.5, 0.75, 1.0])
    assert sample_times(3.0, 3.0, 0.1).tolist() == [3.0]


def test_conservation_exact_oscillator(rng):
    osc = CliffordOscillator.constant(T, [0.5, 1.5, -1.0])
    traj = integrate_exact_blocks(osc, rng.standard_normal(4), 0, 100, 0.1)
    rep = conservation_report(traj, {"rho": lambda x: x @ x}, tol=1e-12)
    assert rep.passed and rep.drifts["rho"] <= 1e-12


def test_conservation_rk4_pauli():
    xi0 = spinor_to_r4(np.array([1, 1]) / np.sqrt(2))
    traj = evolve_pauli_r4(ConstantField([0.3, -0.4, 1.0]), xi0, 0, 10, 1e-3)
    rep = conservation_report(traj, [("norm2", lambda x: x @ x)], tol=1e-9)
    assert rep.drifts["norm2"] <= 1e-9
    assert rep.passed


def test_conservation_planted_jump(rng):
    osc = CliffordOscillator.constant(T, [1, 0, 0])
    traj = integrate_exact_blocks(osc, E1, 0, 10, 0.1)
    states = traj.states.copy()
    states[50:] *= np.sqrt(1.1)
    rep = conservation_report(Trajectory(traj.times, states), {"rho": lambda x: x @ x}, tol=1e-9)
    assert not rep.passed
    assert rep.drifts["rho"] >= 0.1 - 1e-12
    assert "FAIL" in rep.to_text()
    assert rep.to_record()["quantities"]["rho"]["passed"] is False


def test_conservation_empty_trajectory():
    with pytest.raises(ValueError):
        conservation_report(Trajectory(np.zeros(0), np.zeros((0, 4))), {}, 1e-9)


def test_divergence_examples(rng):
    Q = rng.standard_normal((3, 4, 4))
    sys = HyperhamiltonianSystem(HyperkahlerChart.flat(),
                                 HamiltonianTriple.quadratic(Q=Q + Q.transpose(0, 2, 1)))
    f = vector_field(sys)
    assert abs(divergence_residual(f, rng.standard_normal(4))) <= 1e-8
    assert divergence_residual(lambda x: x, rng.standard_normal(4)) == pytest.approx(4, abs=1e-9)


def test_divergence_fd_order(rng):
    # smooth non-quadratic h: the exact divergence is 0, so the estimate is pure O(h^2) error
    def h(x):
        return np.exp(0.5 * x[0]) * np.sin(x[1]) + x[2] ** 3 * x[3] + np.cos(x[0] * x[3])

    sys = HyperhamiltonianSystem(HyperkahlerChart.flat(), HamiltonianTriple([h, h, h], fd_step=1e-4))
    f = vector_field(sys)
    x = np.array([0.3, -0.8, 1.1, 0.6])
    r1 = abs(divergence_residual(f, x, fd_step=0.02))
    r2 = abs(divergence_residual(f, x, fd_step=0.01))
    assert r1 > 1e-6
    assert 3.5 <= r1 / r2 <= 4.5


def test_determinism(rng):
    osc = CliffordOscillator.affine(T, rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (2, 3, 2)))
    xi0 = rng.standard_normal(8)
    f = lambda t, x: oscillator_field(osc, x)  # noqa: E731
    a = integrate_rk4(f, xi0, 0, 2, 1e-3, stride=7)
    b = integrate_rk4(f, xi0, 0, 2, 1e-3, stride=7)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.times.tobytes() == b.times.tobytes()


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], np.zeros((2, 4)))
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], np.zeros((3, 4)))


def test_csv_round_trip(tmp_path, rng):
    osc = CliffordOscillator.constant(T, [1, 2, 3])
    traj = integrate_exact_blocks(osc, rng.standard_normal(4), 0, 1, 0.1)
    traj.attach("rho", lambda x: x @ x)
    traj.diagnostics["hopf"] = rng.standard_normal((len(traj), 3))
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x1,x2,x3,x4,d_rho,d_hopf1,d_hopf2,d_hopf3"
    back, names = Trajectory.from_csv(path)
    assert names == ["x1", "x2", "x3", "x4"]
    assert back.times.tobytes() == traj.times.tobytes()
    assert back.states.tobytes() == traj.states.tobytes()
    assert back.diagnostics["d_rho"].tobytes() == traj.diagnostics["rho"].tobytes()


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,x1\n0,1\n")
    with pytest.raises(ValueError):
        Trajectory.from_csv(path)
