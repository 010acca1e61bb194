"""Pointwise hyperkähler structures on a single coordinate chart.

A chart supplies a metric ``g(x)`` and three complex structures ``Y_a(x)``.
From them:

* Kähler forms ``W_a = g Y_a``,
* Poisson tensors ``K_a = (W_a^T)^{-1} = -g^{-1} Y_a^T``,
* component fields ``X_a = K_a grad h^a`` with ``X_a ⌋ omega_a = dh^a``,
* the hyperhamiltonian field ``X = X_1 + X_2 + X_3``.

Nothing here projects a chart onto a valid structure; the ``verify_*``
functions only measure how far a chart is from one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quaternion_core import (
    DEFAULT_TOL,
    LEVI_CIVITA,
    QuaternionTriple,
    block_diagonal,
    check_rotation,
    max_abs,
    standard_quaternion_triple,
)

RCOND_MIN = 1e-12


class StructureError(ValueError):
    """A chart fails a pointwise requirement (singular metric, non-Kähler pair, ...)."""


def fd_steps(x: np.ndarray, fd_step: float | None) -> np.ndarray:
    """Per-coordinate step: ``1e-5 (1 + |x_i|)`` unless ``fd_step`` is given."""
    if fd_step is None:
        return 1e-5 * (1.0 + np.abs(x))
    return np.full(x.shape, float(fd_step))


def _const(mat) -> Callable:
    m = np.array(mat, dtype=float)
    m.setflags(write=False)
    return lambda x: m


@dataclass(frozen=True)
class HyperkahlerChart:
    """Metric and complex-structure providers on a chart of dimension ``4n``."""

    dim: int
    metric: Callable
    structures: tuple[Callable, Callable, Callable]
    constant: bool = False

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 4:
            raise ValueError(f"chart dimension must be a positive multiple of 4, got {self.dim}")
        if len(self.structures) != 3:
            raise ValueError("a chart needs exactly three complex structures")
        object.__setattr__(self, "structures", tuple(self.structures))

    @classmethod
    def constant(cls, g, Y: Sequence) -> "HyperkahlerChart":
        g = np.asarray(g, dtype=float)
        return cls(g.shape[0], _const(g), tuple(_const(y) for y in Y), constant=True)

    @classmethod
    def flat(cls, n: int = 1, triple: QuaternionTriple | None = None) -> "HyperkahlerChart":
        """``g = I`` and ``Y_a`` = ``n`` diagonal copies of a quaternion triple."""
        T = standard_quaternion_triple() if triple is None else triple
        return cls.constant(np.eye(4 * n), [block_diagonal(k, n) for k in T])

    @classmethod
    def linear(cls, P, n: int = 1) -> "HyperkahlerChart":
        """Flat structure pulled back through the linear coordinates ``x = P u``.

        ``g = P^T P`` and ``Y_a = P^{-1} K_a P``; a convenient source of
        non-identity metrics compatible with a valid structure.
        """
        P = np.asarray(P, dtype=float)
        Pinv = np.linalg.inv(P)
        T = standard_quaternion_triple()
        return cls.constant(P.T @ P, [Pinv @ block_diagonal(k, n) @ P for k in T])

    def g(self, x) -> np.ndarray:
        return np.asarray(self.metric(x), dtype=float)

    def Y(self, x, a: int) -> np.ndarray:
        """Complex structure ``a`` (0-based) at ``x``."""
        return np.asarray(self.structures[a](x), dtype=float)


class HamiltonianTriple:
    """Three scalar functions ``h^a(x)`` with optional analytic gradients.

    Missing gradients fall back to central differences (see :func:`fd_steps`).
    """

    def __init__(self, functions: Sequence[Callable], gradients: Sequence[Callable] | None = None,
                 dim: int | None = None, fd_step: float | None = None,
                 description: dict | None = None):
        if len(functions) != 3:
            raise ValueError("a hamiltonian triple has exactly three functions")
        if gradients is not None and len(gradients) != 3:
            raise ValueError("gradients must be given for all three functions or none")
        self.functions = tuple(functions)
        self.gradients = None if gradients is None else tuple(gradients)
        self.dim = dim
        self.fd_step = fd_step
        self.description = description

    @classmethod
    def quadratic(cls, Q=None, b=None, c=None, dim: int | None = None) -> "HamiltonianTriple":
        """``h^a = x^T Q_a x / 2 + b_a . x + c_a``; any of ``Q, b, c`` may be omitted."""
        if dim is None:
            for arr, axis in ((Q, -1), (b, -1)):
                if arr is not None:
                    dim = np.asarray(arr).shape[axis]
                    break
        if dim is None:
            raise ValueError("cannot infer dimension for a quadratic triple")
        Qs = np.zeros((3, dim, dim)) if Q is None else np.asarray(Q, dtype=float)
        bs = np.zeros((3, dim)) if b is None else np.asarray(b, dtype=float)
        cs = np.zeros(3) if c is None else np.asarray(c, dtype=float)
        if Qs.shape != (3, dim, dim) or bs.shape != (3, dim) or cs.shape != (3,):
            raise ValueError("quadratic triple has inconsistent shapes")
        sym = 0.5 * (Qs + Qs.transpose(0, 2, 1))
        for arr in (Qs, sym, bs, cs):
            arr.setflags(write=False)

        def value(a):
            return lambda x: 0.5 * x @ Qs[a] @ x + bs[a] @ x + cs[a]

        def grad(a):
            return lambda x: sym[a] @ x + bs[a]

        desc = {"Q": Qs.tolist(), "b": bs.tolist(), "c": cs.tolist()}
        return cls([value(a) for a in range(3)], [grad(a) for a in range(3)], dim=dim,
                   description=desc)

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([float(f(x)) for f in self.functions])

    def gradient(self, x, a: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.gradients is not None:
            g = np.asarray(self.gradients[a](x), dtype=float)
        else:
            f = self.functions[a]
            steps = fd_steps(x, self.fd_step)
            g = np.empty_like(x)
            for i, h in enumerate(steps):
                e = np.zeros_like(x)
                e[i] = h
                g[i] = (f(x + e) - f(x - e)) / (2 * h)
        if g.shape != x.shape or not np.all(np.isfinite(g)):
            raise ValueError(f"gradient of h^{a + 1} is invalid at the evaluation point")
        return g


@dataclass(frozen=True)
class HyperhamiltonianSystem:
    chart: HyperkahlerChart
    hamiltonians: HamiltonianTriple

    def __post_init__(self):
        d = self.hamiltonians.dim
        if d is not None and d != self.chart.dim:
            raise ValueError(f"hamiltonians have dimension {d}, chart has {self.chart.dim}")

    @property
    def dim(self) -> int:
        return self.chart.dim


@dataclass
class StructureReport:
    tol: float
    residuals: dict[str, float] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)
    point: list[float] | None = None

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.errors and self.max_residual <= self.tol

    def failures(self) -> list[str]:
        out = list(self.errors)
        out += [f"{k}: residual {v:.3e}" for k, v in self.residuals.items() if v > self.tol]
        return out

    def to_text(self) -> str:
        lines = [f"hyperkahler structure: {'PASS' if self.passed else 'FAIL'} (tol {self.tol:.1e})",
                 f"  max residual {self.max_residual:.3e}"]
        lines += [f"  {f}" for f in self.failures()]
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {"passed": self.passed, "tol": self.tol, "max_residual": self.max_residual,
                "residuals": dict(self.residuals), "failures": self.failures(),
                "point": self.point}


@dataclass
class ClosednessReport:
    tol: float
    alpha: int
    fd_step: float | None
    point_residuals: list[float] = field(default_factory=list)
    worst_index: tuple[int, int, int] | None = None

    @property
    def max_residual(self) -> float:
        return max(self.point_residuals, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def to_text(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = (f"closedness of omega_{self.alpha + 1}: {status} "
                f"(max |dW| {self.max_residual:.3e}, tol {self.tol:.1e}, "
                f"{len(self.point_residuals)} points)")
        if not self.passed and self.worst_index is not None:
            i, j, k = (v + 1 for v in self.worst_index)
            line += f"\n  worst component (dW)_{i}{j}{k}"
        return line

    def to_record(self) -> dict:
        return {"passed": self.passed, "alpha": self.alpha + 1, "tol": self.tol,
                "fd_step": self.fd_step, "max_residual": self.max_residual,
                "point_residuals": list(self.point_residuals)}


def _rcond(M: np.ndarray) -> float:
    c = np.linalg.cond(M, 1)
    return 0.0 if not np.isfinite(c) else 1.0 / c


def kahler_form_at(chart: HyperkahlerChart, x, a: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``W_a(x) = g(x) Y_a(x)``; raises if it is not antisymmetric within ``tol``."""
    x = np.asarray(x, dtype=float)
    W = chart.g(x) @ chart.Y(x, a)
    r = max_abs(W + W.T)
    if r > tol:
        raise StructureError(f"g Y_{a + 1} is not antisymmetric (residual {r:.3e})")
    return W


def poisson_tensor_at(chart: HyperkahlerChart, x, a: int) -> np.ndarray:
    """``K_a(x) = -g^{-1} Y_a^T``."""
    x = np.asarray(x, dtype=float)
    g = chart.g(x)
    Y = chart.Y(x, a)
    if _rcond(g) < RCOND_MIN:
        raise StructureError("metric is singular at the evaluation point")
    if _rcond(g @ Y) < RCOND_MIN:
        raise StructureError(f"Kähler form {a + 1} is degenerate at the evaluation point")
    return -np.linalg.solve(g, Y.T)


def verify_structure_at(chart: HyperkahlerChart, x, tol: float = DEFAULT_TOL) -> StructureReport:
    """All pointwise algebraic checks at ``x``; failures are reported, not raised."""
    x = np.asarray(x, dtype=float)
    report = StructureReport(tol=tol, point=x.tolist())
    try:
        g = chart.g(x)
        Y = np.stack([chart.Y(x, a) for a in range(3)])
    except Exception as exc:  # provider failure goes into the report
        report.errors.append(f"evaluation failed: {exc}")
        return report
    eye = np.eye(chart.dim)
    report.residuals["metric symmetry"] = max_abs(g - g.T)
    for a in range(3):
        report.residuals[f"Y{a + 1}^2 + I"] = max_abs(Y[a] @ Y[a] + eye)
    for a in range(3):
        for b in range(3):
            if a != b:
                rhs = np.tensordot(LEVI_CIVITA[a, b], Y, axes=1)
                report.residuals[f"Y{a + 1}Y{b + 1} - eps Y"] = max_abs(Y[a] @ Y[b] - rhs)
    for a in range(3):
        W = g @ Y[a]
        report.residuals[f"W{a + 1} antisymmetry"] = max_abs(W + W.T)
    try:
        K = np.stack([poisson_tensor_at(chart, x, a) for a in range(3)])
        eta = np.linalg.inv(g)
    except (StructureError, np.linalg.LinAlgError) as exc:
        report.errors.append(str(exc))
        return report
    for a in range(3):
        for b in range(3):
            rhs = np.tensordot(LEVI_CIVITA[a, b], K, axes=1) - (a == b) * eta
            report.residuals[f"K{a + 1} g K{b + 1} relation"] = max_abs(K[a] @ g @ K[b] - rhs)
    return report


def kahler_form_derivatives(chart: HyperkahlerChart, x, a: int,
                            fd_step: float | None = None) -> np.ndarray:
    """``D[i] = dW_a/dx_i`` by central differences, shape ``(dim, dim, dim)``."""
    x = np.asarray(x, dtype=float)
    steps = fd_steps(x, fd_step)
    D = np.empty((x.size, chart.dim, chart.dim))
    for i, h in enumerate(steps):
        e = np.zeros_like(x)
        e[i] = h
        Wp = chart.g(x + e) @ chart.Y(x + e, a)
        Wm = chart.g(x - e) @ chart.Y(x - e, a)
        D[i] = (Wp - Wm) / (2 * h)
    return D


def exterior_derivative_at(chart: HyperkahlerChart, x, a: int,
                           fd_step: float | None = None) -> np.ndarray:
    """``(dW)_ijk = d_i W_jk + d_j W_ki + d_k W_ij``."""
    D = kahler_form_derivatives(chart, x, a, fd_step)
    return D + D.transpose(1, 2, 0) + D.transpose(2, 0, 1)


def verify_closedness(chart: HyperkahlerChart, points, a: int, fd_step: float | None = None,
                      tol: float = 1e-8) -> ClosednessReport:
    """Check ``d omega_a = 0`` at each point by central differences."""
    report = ClosednessReport(tol=tol, alpha=a, fd_step=fd_step)
    worst = -1.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        dW = np.abs(exterior_derivative_at(chart, x, a, fd_step))
        r = float(dW.max())
        report.point_residuals.append(r)
        if r > worst:
            worst = r
            report.worst_index = tuple(int(i) for i in np.unravel_index(dW.argmax(), dW.shape))
    return report


def component_field_at(sys: HyperhamiltonianSystem, x, a: int) -> np.ndarray:
    """``X_a = K_a grad h^a`` (no sum)."""
    x = np.asarray(x, dtype=float)
    return poisson_tensor_at(sys.chart, x, a) @ sys.hamiltonians.gradient(x, a)


def hyperham_field_at(sys: HyperhamiltonianSystem, x) -> np.ndarray:
    """``X = X_1 + X_2 + X_3``."""
    x = np.asarray(x, dtype=float)
    return sum(component_field_at(sys, x, a) for a in range(3))


def vector_field(sys: HyperhamiltonianSystem, component: int | None = None) -> Callable:
    """Autonomous callable ``x -> X(x)`` (or ``X_a`` for one component).

    For constant charts the Poisson tensors are computed once up front.
    """
    alphas = range(3) if component is None else (component,)
    h = sys.hamiltonians
    if sys.chart.constant:
        x0 = np.zeros(sys.dim)
        K = {a: poisson_tensor_at(sys.chart, x0, a) for a in alphas}
        return lambda x: sum(K[a] @ h.gradient(x, a) for a in alphas)
    return lambda x: sum(component_field_at(sys, x, a) for a in alphas)


def rotate_system(sys: HyperhamiltonianSystem, R, check: bool = True,
                  tol: float = DEFAULT_TOL) -> HyperhamiltonianSystem:
    """Rotate structures and hamiltonians together: ``Y'_a = R_ab Y_b``, ``h'^a = R_ab h^b``."""
    R = check_rotation(R, tol) if check else np.asarray(R, dtype=float)
    chart, h = sys.chart, sys.hamiltonians

    def structure(a):
        return lambda x: sum(R[a, b] * chart.Y(x, b) for b in range(3))

    def value(a):
        return lambda x: sum(R[a, b] * h.functions[b](x) for b in range(3))

    def grad(a):
        return lambda x: sum(R[a, b] * h.gradient(x, b) for b in range(3))

    new_chart = HyperkahlerChart(chart.dim, chart.metric,
                                 tuple(structure(a) for a in range(3)))
    new_h = HamiltonianTriple([value(a) for a in range(3)], [grad(a) for a in range(3)],
                              dim=h.dim)
    return HyperhamiltonianSystem(new_chart, new_h)


def rotation_equivariance_residual(sys: HyperhamiltonianSystem, R, points,
                                   check: bool = True) -> float:
    """``max_x |X'(x) - X(x)|`` for the system rotated by ``R``.

    With ``check=False`` any 3x3 matrix is accepted, which is how a broken
    (non-orthogonal) transformation is measured.
    """
    rotated = rotate_system(sys, R, check=check)
    worst = 0.0
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        worst = max(worst, max_abs(hyperham_field_at(rotated, x) - hyperham_field_at(sys, x)))
    return worst
