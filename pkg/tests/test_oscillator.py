import numpy as np
import pytest
from scipy.linalg import expm

from hyperham.integrate import integrate_exact_blocks, integrate_rk4
from hyperham.oscillator import (
    BlockState,
    CliffordOscillator,
    RadialHamiltonians,
    exact_flow,
    frequency_decomposition,
    gradient_form_field,
    great_circle_residual,
    oscillator_field,
    oscillator_from_hamiltonians,
)
from hyperham.quaternion_core import (
    GeneratorSet,
    hopf_map,
    standard_quaternion_triple,
    symplectic_generators,
)

T = standard_quaternion_triple()
K1, K2, K3 = T
E1 = np.array([1.0, 0, 0, 0])


def expm_flow(S, nu_rows, xi0, t):
    """Oracle: per-block matrix exponential of t * sum nu K."""
    m = S.dim
    blocks = np.asarray(xi0).reshape(-1, m)
    return np.concatenate([expm(t * S.combine(nu)) @ b for nu, b in zip(nu_rows, blocks)])


def test_block_state():
    s = BlockState([1, 2, 3, 4, 0, 0, 0, 2], 4)
    assert s.n == 2
    np.testing.assert_array_equal(s.radii, [30, 4])
    np.testing.assert_array_equal(np.asarray(s), s.vector)
    with pytest.raises(ValueError):
        BlockState([1, 2, 3], 4)


def test_frequency_decomposition():
    fd = frequency_decomposition([3, 0, 4], T)
    assert fd.omega == 5.0
    np.testing.assert_allclose(fd.A, (3 * K1 + 4 * K3) / 5, atol=1e-15)
    np.testing.assert_allclose(fd.A @ fd.A, -np.eye(4), atol=1e-15)
    fd = frequency_decomposition([1, 0, 0], T)
    assert fd.omega == 1.0 and not fd.degenerate
    np.testing.assert_array_equal(fd.A, K1)
    fd = frequency_decomposition([0, 0, 0], T)
    assert fd.omega == 0.0 and fd.degenerate


def test_frequency_decomposition_rejects_nan():
    with pytest.raises(ValueError):
        frequency_decomposition([np.nan, 0, 0], T)


def test_invalid_generators_rejected():
    with pytest.raises(ValueError):
        CliffordOscillator.constant(GeneratorSet((K1, K1)), [1, 0])


def test_exact_flow_quarter_period():
    osc = CliffordOscillator.constant(T, [1, 0, 0])
    out = exact_flow(osc, E1, np.pi / 2)
    np.testing.assert_allclose(out, [0, -1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(out, expm(np.pi / 2 * K1) @ E1, atol=1e-15)


def test_exact_flow_zero_time_and_period(rng):
    osc = CliffordOscillator.constant(T, [0.3, -1.2, 0.7])
    omega = np.linalg.norm([0.3, -1.2, 0.7])
    xi0 = rng.standard_normal(4)
    np.testing.assert_array_equal(exact_flow(osc, xi0, 0.0), xi0)
    np.testing.assert_allclose(exact_flow(osc, xi0, 2 * np.pi / omega), xi0, atol=1e-12)


def test_degenerate_block_is_identity(rng):
    osc = CliffordOscillator.constant(T, [[0, 0, 0], [1, 2, 3]])
    xi0 = rng.standard_normal(8)
    out = exact_flow(osc, xi0, 3.7)
    np.testing.assert_array_equal(out[:4], xi0[:4])


def test_exact_flow_matches_expm(rng):
    for _ in range(100):
        n = rng.integers(1, 4)
        nu = rng.uniform(-2, 2, (n, 3))
        xi0 = rng.standard_normal(4 * n)
        t = rng.uniform(0, 10)
        osc = CliffordOscillator.constant(T, nu)
        assert np.abs(exact_flow(osc, xi0, t) - expm_flow(T, nu, xi0, t)).max() <= 1e-11


def test_rho_dependent_coefficients_match_expm(rng):
    slope = rng.uniform(-1, 1, (2, 3, 2))
    const = rng.uniform(-1, 1, (2, 3))
    osc = CliffordOscillator.affine(T, const, slope)
    for _ in range(20):
        xi0 = rng.standard_normal(8)
        t = rng.uniform(0, 10)
        rho = np.array([xi0[:4] @ xi0[:4], xi0[4:] @ xi0[4:]])
        nu = const + slope @ rho
        assert np.abs(exact_flow(osc, xi0, t) - expm_flow(T, nu, xi0, t)).max() <= 1e-11


def test_exact_flow_two_dimensional_oscillator():
    osc = CliffordOscillator.constant(symplectic_generators(), [[2.0]])
    q, p = exact_flow(osc, [1.0, 0.0], 0.3)
    assert q == pytest.approx(np.cos(0.6)) and p == pytest.approx(-np.sin(0.6))


def test_radius_conservation(rng):
    osc = CliffordOscillator.affine(T, rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3, 3)))
    xi0 = rng.standard_normal(12)
    rho0 = BlockState(xi0, 4).radii
    for t in np.linspace(0, 1000, 37):
        rho = BlockState(exact_flow(osc, xi0, t), 4).radii
        assert np.all(np.abs(rho - rho0) <= 1e-12 * (1 + rho0))


def test_flow_property(rng):
    osc = CliffordOscillator.constant(T, [[0.4, 1.1, -0.3], [2.0, 0.0, 0.5]])
    for _ in range(20):
        xi0 = rng.standard_normal(8)
        t, s = rng.uniform(0, 10, 2)
        lhs = exact_flow(osc, xi0, t + s)
        rhs = exact_flow(osc, exact_flow(osc, xi0, s), t)
        assert np.abs(lhs - rhs).max() <= 1e-11


def test_hopf_constant_along_exact_flow(rng):
    for _ in range(20):
        nu = rng.uniform(-2, 2, 3)
        osc = CliffordOscillator.constant(T, nu)
        A = frequency_decomposition(nu, T).A
        xi0 = rng.standard_normal(4)
        mu0 = hopf_map(xi0, A)
        for t in rng.uniform(0, 10, 5):
            assert np.abs(hopf_map(exact_flow(osc, xi0, t), A) - mu0).max() <= 1e-10


def test_oscillator_field_examples(rng):
    osc = CliffordOscillator.constant(T, [1, 0, 0])
    np.testing.assert_array_equal(oscillator_field(osc, E1), [0, -1, 0, 0])
    np.testing.assert_array_equal(oscillator_field(osc, np.zeros(4)), 0)
    osc = CliffordOscillator.affine(T, rng.uniform(-1, 1, (2, 3)), rng.uniform(-1, 1, (2, 3, 2)))
    for _ in range(20):
        xi = rng.standard_normal(8)
        f = oscillator_field(osc, xi)
        assert abs(xi[:4] @ f[:4]) <= 1e-12 and abs(xi[4:] @ f[4:]) <= 1e-12


def test_gradient_form_examples(rng):
    xi = rng.standard_normal(4)
    rho = xi @ xi
    h = RadialHamiltonians(lambda r: np.array([r[0] / 2, 0, 0]),
                           lambda r: np.array([[0.5, 0, 0]]))
    np.testing.assert_allclose(gradient_form_field(h, xi, T), K1 @ xi, atol=1e-15)
    const = RadialHamiltonians(lambda r: np.array([1.0, 2.0, 3.0]),
                               lambda r: np.zeros((1, 3)))
    np.testing.assert_array_equal(gradient_form_field(const, xi, T), 0)
    quartic = RadialHamiltonians(lambda r: np.array([r[0] ** 2 / 4, 0, 0]),
                                 lambda r: np.array([[r[0] / 2, 0, 0]]))
    np.testing.assert_allclose(gradient_form_field(quartic, xi, T), rho * K1 @ xi, atol=1e-13)


def _coupled_hamiltonians():
    def values(r):
        return np.array([r[0] * r[1], np.sin(r[0]) + r[1] ** 2, 0.3 * r[0]])

    def derivatives(r):
        return np.array([[r[1], np.cos(r[0]), 0.3],
                         [r[0], 2 * r[1], 0.0]])

    return values, derivatives


def test_gradient_form_matches_oscillator(rng):
    values, derivatives = _coupled_hamiltonians()
    h = RadialHamiltonians(values, derivatives)
    osc = oscillator_from_hamiltonians(h, T, n_blocks=2)
    for _ in range(50):
        xi = rng.standard_normal(8)
        assert np.abs(gradient_form_field(h, xi, T) - oscillator_field(osc, xi)).max() <= 1e-12


def test_gradient_form_finite_difference_fallback(rng):
    values, derivatives = _coupled_hamiltonians()
    exact = RadialHamiltonians(values, derivatives)
    approx = RadialHamiltonians(values)
    for _ in range(10):
        xi = rng.standard_normal(8)
        diff = gradient_form_field(approx, xi, T) - gradient_form_field(exact, xi, T)
        assert np.abs(diff).max() <= 1e-7


def test_great_circle_exact():
    nu = np.array([0.5, -1.0, 2.0])
    osc = CliffordOscillator.constant(T, nu)
    traj = integrate_exact_blocks(osc, [0.3, 1.0, -0.2, 0.5], 0, 10, 0.01)
    A = frequency_decomposition(nu, T).A
    assert great_circle_residual(traj, A) <= 1e-12


def test_great_circle_rk4():
    nu = np.array([0.5, -1.0, 0.2])
    osc = CliffordOscillator.constant(T, nu)
    traj = integrate_rk4(lambda t, x: oscillator_field(osc, x), [0.3, 1.0, -0.2, 0.5],
                         0, 10, 1e-3, stride=10)
    assert great_circle_residual(traj, frequency_decomposition(nu, T).A) <= 1e-8


def test_great_circle_planted_defect():
    osc = CliffordOscillator.constant(T, [1, 0, 0])
    traj = integrate_exact_blocks(osc, E1, 0, 10, 0.1)
    states = traj.states.copy()
    # (0,0,1,0) is orthogonal to span{e1, K1 e1}
    states[37, 2] += 0.1
    assert great_circle_residual(states, K1) >= 0.09


def test_great_circle_degenerate():
    with pytest.raises(ValueError):
        great_circle_residual(np.zeros((3, 4)), K1)
    with pytest.raises(ValueError):
        great_circle_residual(np.tile(E1, (3, 1)), np.zeros((4, 4)))
