"""Clifford and quaternionic oscillators.

A state is ``n`` blocks ``xi_k`` in ``R^m`` evolving by
``xi_k' = sum_a nu_ka(rho) K_a xi_k`` with ``rho_k = |xi_k|^2``. The radii are
conserved, so the coefficients are constant on each orbit and the flow is the
closed form ``[cos(w_k t) I + sin(w_k t) A_k] xi_k(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quaternion_core import (
    DEFAULT_TOL,
    GeneratorSet,
    validate_generator_set,
)


@dataclass(frozen=True)
class BlockState:
    """Flat vector viewed as ``n`` blocks of size ``m``."""

    vector: np.ndarray
    m: int

    def __post_init__(self):
        v = np.array(self.vector, dtype=float).ravel()
        if self.m <= 0 or v.size % self.m:
            raise ValueError(f"state of length {v.size} does not split into blocks of {self.m}")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_blocks(cls, blocks) -> "BlockState":
        b = np.asarray(blocks, dtype=float)
        return cls(b.ravel(), b.shape[-1])

    @property
    def n(self) -> int:
        return self.vector.size // self.m

    @property
    def blocks(self) -> np.ndarray:
        return self.vector.reshape(self.n, self.m)

    @property
    def radii(self) -> np.ndarray:
        return block_radii(self.vector, self.m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.vector, dtype=dtype)


def block_radii(xi, m: int) -> np.ndarray:
    """``rho_k = |xi_k|^2``; works on a single state or on ``(N, n*m)`` samples."""
    xi = np.asarray(xi, dtype=float)
    blocks = xi.reshape(xi.shape[:-1] + (-1, m))
    return np.einsum("...i,...i->...", blocks, blocks)


@dataclass(frozen=True)
class FrequencyDecomposition:
    omega: float
    A: np.ndarray
    degenerate: bool = False


class CliffordOscillator:
    """Oscillator system on ``n`` blocks sharing one generator set.

    Args:
        generators: a valid Clifford generator set.
        nu: callable mapping the radii ``(n,)`` to coefficients ``(n, p)``.
        n_blocks: number of blocks.
        tol: tolerance for validating the generators.
    """

    def __init__(self, generators: GeneratorSet, nu: Callable, n_blocks: int = 1,
                 tol: float = DEFAULT_TOL, description: dict | None = None):
        report = validate_generator_set(generators, tol)
        if not report.valid:
            raise ValueError("invalid generator set: " + "; ".join(report.failures()))
        self.generators = generators
        self.nu = nu
        self.n_blocks = int(n_blocks)
        self.description = description or {"nu": "callable"}

    @classmethod
    def constant(cls, generators: GeneratorSet, nu, **kw) -> "CliffordOscillator":
        """Constant coefficients; ``nu`` has shape ``(p,)`` (one block) or ``(n, p)``."""
        table = np.atleast_2d(np.asarray(nu, dtype=float))
        table.setflags(write=False)
        return cls(generators, lambda rho: table, n_blocks=table.shape[0],
                   description={"nu": table.tolist()}, **kw)

    @classmethod
    def affine(cls, generators: GeneratorSet, constant, slope=None, **kw) -> "CliffordOscillator":
        """``nu_ka = constant_ka + sum_j slope_kaj rho_j``."""
        c = np.atleast_2d(np.asarray(constant, dtype=float))
        n, p = c.shape
        s = np.zeros((n, p, n)) if slope is None else np.asarray(slope, dtype=float)
        if s.shape != (n, p, n):
            raise ValueError(f"slope must have shape {(n, p, n)}, got {s.shape}")
        c.setflags(write=False)
        s.setflags(write=False)
        return cls(generators, lambda rho: c + s @ rho, n_blocks=n,
                   description={"nu": c.tolist(), "nu_slope": s.tolist()}, **kw)

    @property
    def m(self) -> int:
        return self.generators.dim

    @property
    def dim(self) -> int:
        return self.m * self.n_blocks

    def coefficients(self, rho) -> np.ndarray:
        nu = np.asarray(self.nu(np.asarray(rho, dtype=float)), dtype=float)
        nu = np.broadcast_to(nu, (self.n_blocks, self.generators.p))
        if not np.all(np.isfinite(nu)):
            raise ValueError("coefficient provider returned non-finite values")
        return nu

    def _blocks(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim,):
            raise ValueError(f"state must have length {self.dim}, got shape {xi.shape}")
        return xi.reshape(self.n_blocks, self.m)

    def decompositions(self, xi) -> list[FrequencyDecomposition]:
        """Per-block frequency and unit generator, at the radii of ``xi``."""
        blocks = self._blocks(xi)
        nu = self.coefficients(np.einsum("ki,ki->k", blocks, blocks))
        return [frequency_decomposition(row, self.generators) for row in nu]


def frequency_decomposition(nu_row, S: GeneratorSet) -> FrequencyDecomposition:
    """Split ``sum_a nu_a K_a`` into ``omega * A`` with ``omega = |nu|`` and ``A^2 = -I``."""
    nu = np.asarray(nu_row, dtype=float)
    if not np.all(np.isfinite(nu)):
        raise ValueError("coefficients must be finite")
    omega = float(np.linalg.norm(nu))
    if omega == 0.0:
        return FrequencyDecomposition(0.0, np.zeros((S.dim, S.dim)), degenerate=True)
    return FrequencyDecomposition(omega, S.combine(nu / omega))


def propagate_blocks(decomps, blocks, times) -> np.ndarray:
    """Closed-form flow of every block at each of ``times`` (offsets from the start).

    Returns an ``(len(times), n*m)`` array. ``cos``/``sin`` are evaluated afresh at
    every time so long horizons do not accumulate error.
    """
    t = np.asarray(times, dtype=float)
    out = np.empty((t.size,) + blocks.shape)
    for k, (fd, x0) in enumerate(zip(decomps, blocks)):
        phase = fd.omega * t
        out[:, k, :] = np.cos(phase)[:, None] * x0 + np.sin(phase)[:, None] * (fd.A @ x0)
    return out.reshape(t.size, -1)


def exact_flow(sys: CliffordOscillator, xi0, t: float) -> np.ndarray:
    """State at time ``t`` from ``xi0``, with coefficients frozen at the initial radii."""
    blocks = sys._blocks(xi0)
    return propagate_blocks(sys.decompositions(xi0), blocks, [t])[0]


def oscillator_field(sys: CliffordOscillator, xi) -> np.ndarray:
    """Right-hand side ``sum_a nu_ka(rho) K_a xi_k`` per block."""
    blocks = sys._blocks(xi)
    nu = sys.coefficients(np.einsum("ki,ki->k", blocks, blocks))
    K = sys.generators.stack()
    return np.einsum("ka,aij,kj->ki", nu, K, blocks).ravel()


class RadialHamiltonians:
    """Functions ``h^a(rho_1, ..., rho_n)`` of the block radii.

    Args:
        values: ``rho -> (p,)`` array of ``h^a``.
        derivatives: optional ``rho -> (n, p)`` array of ``dh^a/drho_k``. When absent,
            central differences with step ``1e-5 (1 + |rho_k|)`` are used.
    """

    def __init__(self, values: Callable, derivatives: Callable | None = None):
        self.values = values
        self.derivatives = derivatives

    def __call__(self, rho) -> np.ndarray:
        return np.asarray(self.values(np.asarray(rho, dtype=float)), dtype=float)

    def radial_gradient(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.derivatives is not None:
            d = np.asarray(self.derivatives(rho), dtype=float)
        else:
            cols = []
            for k in range(rho.size):
                h = 1e-5 * (1.0 + abs(rho[k]))
                e = np.zeros_like(rho)
                e[k] = h
                cols.append((self(rho + e) - self(rho - e)) / (2 * h))
            d = np.stack(cols)
        if d.ndim != 2 or d.shape[0] != rho.size or not np.all(np.isfinite(d)):
            raise ValueError("hamiltonian gradient provider returned an invalid result")
        return d


def gradient_form_field(h: RadialHamiltonians, xi, S: GeneratorSet) -> np.ndarray:
    """``sum_a K_a grad h^a`` for radial hamiltonians.

    ``grad_{xi_k} h^a = 2 (dh^a/drho_k) xi_k``, so this equals
    :func:`oscillator_field` with ``nu_ka = 2 dh^a/drho_k``.
    """
    xi = np.asarray(xi, dtype=float)
    blocks = xi.reshape(-1, S.dim)
    d = h.radial_gradient(np.einsum("ki,ki->k", blocks, blocks))
    return np.einsum("ka,aij,kj->ki", 2.0 * d, S.stack(), blocks).ravel()


def oscillator_from_hamiltonians(h: RadialHamiltonians, S: GeneratorSet, n_blocks: int = 1
                                 ) -> CliffordOscillator:
    return CliffordOscillator(S, lambda rho: 2.0 * h.radial_gradient(rho), n_blocks=n_blocks)


def great_circle_residual(states, A) -> float:
    """Largest distance of ``states`` from the plane ``span{xi(0), A xi(0)}``.

    ``states`` is an ``(N, m)`` array (or a trajectory) of one block whose
    first row is the initial point.
    """
    X = np.asarray(getattr(states, "states", states), dtype=float)
    A = np.asarray(A, dtype=float)
    x0 = X[0]
    r0 = np.linalg.norm(x0)
    if r0 == 0.0:
        raise ValueError("degenerate plane: initial point is zero")
    e1 = x0 / r0
    v = A @ x0
    v = v - (e1 @ v) * e1
    nv = np.linalg.norm(v)
    if nv <= 1e-14 * r0:
        raise ValueError("degenerate plane: A xi(0) is parallel to xi(0) or zero")
    e2 = v / nv
    proj = np.outer(X @ e1, e1) + np.outer(X @ e2, e2)
    return float(np.max(np.linalg.norm(X - proj, axis=1)))
