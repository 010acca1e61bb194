"""Spin-only Pauli equation ``dPsi/dt = i (B . sigma) Psi`` in C^2 and in R^4.

The coupling constant is fixed to 1. A spinor ``(psi_+, psi_-)`` maps to
``xi = (Re psi_+, Im psi_+, Re psi_-, Im psi_-)``, where the equation becomes
``xi' = A(B) xi`` with ``A = B_y Kh1 + B_x Kh2 + B_z Kh3`` antisymmetric. The
complex evolution here is written independently of the real matrices so the
two can check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hyperkahler import HamiltonianTriple, HyperhamiltonianSystem, HyperkahlerChart
from .integrate import Trajectory, integrate_exact_blocks, integrate_rk4, sample_times
from .oscillator import CliffordOscillator
from .quaternion_core import commutant_triple

SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

R4_COLUMNS = ("chi_p", "zeta_p", "chi_m", "zeta_m")


class MagneticField:
    """Base class: ``field(t)`` returns ``(B_x, B_y, B_z)``."""

    is_constant = False

    def __call__(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def out_of_domain(self, t0: float, t1: float) -> bool:
        return False

    def describe(self) -> dict:
        raise NotImplementedError


class ConstantField(MagneticField):
    is_constant = True

    def __init__(self, B):
        B = np.array(B, dtype=float)
        if B.shape != (3,) or not np.all(np.isfinite(B)):
            raise ValueError(f"constant field needs three finite components, got {B!r}")
        B.setflags(write=False)
        self.B = B

    def __call__(self, t: float) -> np.ndarray:
        return self.B

    def describe(self) -> dict:
        return {"kind": "constant", "B": self.B.tolist()}


class RotatingField(MagneticField):
    """``B(t) = (b cos(rate t), b sin(rate t), bz)``."""

    def __init__(self, b: float, rate: float, bz: float):
        if not all(np.isfinite([b, rate, bz])):
            raise ValueError("rotating field parameters must be finite")
        self.b, self.rate, self.bz = float(b), float(rate), float(bz)

    def __call__(self, t: float) -> np.ndarray:
        phase = self.rate * t
        return np.array([self.b * np.cos(phase), self.b * np.sin(phase), self.bz])

    def describe(self) -> dict:
        return {"kind": "rotating", "b": self.b, "rate": self.rate, "Bz": self.bz}


class TabulatedField(MagneticField):
    """Piecewise-linear interpolation of sampled fields, clamped outside the table."""

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.size < 1 or v.shape != (t.size, 3):
            raise ValueError("tabulated field needs times (N,) and values (N, 3)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated field times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("tabulated field contains non-finite entries")
        self.times, self.values = t, v

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.values[:, j]) for j in range(3)])

    def out_of_domain(self, t0: float, t1: float) -> bool:
        return t0 < self.times[0] or t1 > self.times[-1]

    def describe(self) -> dict:
        return {"kind": "tabulated", "times": self.times.tolist(), "values": self.values.tolist()}


@dataclass(frozen=True)
class Spinor:
    psi_plus: complex
    psi_minus: complex

    @classmethod
    def normalized(cls, psi_plus: complex, psi_minus: complex) -> "Spinor":
        norm = np.hypot(abs(psi_plus), abs(psi_minus))
        if norm == 0:
            raise ValueError("cannot normalize the zero spinor")
        return cls(psi_plus / norm, psi_minus / norm)

    def as_array(self) -> np.ndarray:
        return np.array([self.psi_plus, self.psi_minus], dtype=complex)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))


def _c2(psi) -> np.ndarray:
    if isinstance(psi, Spinor):
        return psi.as_array()
    return np.asarray(psi, dtype=complex)


def spinor_to_r4(psi) -> np.ndarray:
    """``(psi_+, psi_-) -> (chi_+, zeta_+, chi_-, zeta_-)``; also maps ``(N, 2)`` arrays."""
    z = _c2(psi)
    out = np.empty(z.shape[:-1] + (4,))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def r4_to_spinor(xi) -> Spinor:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (4,):
        raise ValueError(f"expected a 4-vector, got shape {xi.shape}")
    return Spinor(complex(xi[0], xi[1]), complex(xi[2], xi[3]))


def r4_to_c2(xi) -> np.ndarray:
    """Array form of :func:`r4_to_spinor`, for ``(..., 4)`` inputs."""
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0::2] + 1j * xi[..., 1::2]


def pauli_operator(B) -> np.ndarray:
    """``M = B . sigma``, the 2x2 hermitian operator."""
    return np.tensordot(np.asarray(B, dtype=float), SIGMA, axes=1)


def pauli_generator(B) -> np.ndarray:
    """Real antisymmetric ``A(B)`` with ``xi' = A xi`` equivalent to the spinor equation."""
    bx, by, bz = np.asarray(B, dtype=float)
    Kh = commutant_triple().generators
    return by * Kh[0] + bx * Kh[1] + bz * Kh[2]


def pauli_chart() -> HyperkahlerChart:
    """Flat chart whose structures are the commutant triple."""
    return HyperkahlerChart.flat(1, commutant_triple())


def pauli_hamiltonians(B) -> HamiltonianTriple:
    """``h = (B_y, B_x, B_z) |xi|^2 / 2``, paired with :func:`pauli_chart`."""
    bx, by, bz = np.asarray(B, dtype=float)
    Q = np.stack([c * np.eye(4) for c in (by, bx, bz)])
    return HamiltonianTriple.quadratic(Q=Q)


def pauli_system(B) -> HyperhamiltonianSystem:
    return HyperhamiltonianSystem(pauli_chart(), pauli_hamiltonians(B))


def _check_finite(B, t):
    if not np.all(np.isfinite(B)):
        raise ValueError(f"magnetic field is not finite at t={t}")
    return B


def evolve_pauli_c2(field: MagneticField, psi0, t0: float, t1: float, dt: float,
                    method: str = "rk4", stride: int = 1) -> Trajectory:
    """Spinor trajectory with complex ``(N, 2)`` states.

    ``method="exact"`` (constant fields only) uses
    ``exp(i t M) = cos(|B| t) I + i sin(|B| t) M / |B|``, sampled every ``dt``.
    """
    psi0 = _c2(psi0)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if method == "rk4":
        def rhs(t, psi):
            return 1j * (pauli_operator(_check_finite(field(t), t)) @ psi)
        return integrate_rk4(rhs, psi0, t0, t1, dt, stride)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    if not field.is_constant:
        raise ValueError("the exact spinor propagator needs a constant field")
    B = _check_finite(field(t0), t0)
    M = pauli_operator(B)
    b = float(np.linalg.norm(B))
    times = sample_times(t0, t1, dt * stride)
    tau = times - t0
    if b == 0.0:
        states = np.tile(psi0, (times.size, 1))
    else:
        Mpsi = M @ psi0
        states = (np.cos(b * tau)[:, None] * psi0
                  + 1j * (np.sin(b * tau) / b)[:, None] * Mpsi)
    return Trajectory(times, states)


def evolve_pauli_r4(field: MagneticField, xi0, t0: float, t1: float, dt: float,
                    method: str = "rk4", stride: int = 1) -> Trajectory:
    """Real evolution ``xi' = A(B(t)) xi``.

    ``method="exact"`` treats a constant field as a quaternionic oscillator with
    ``nu = (B_y, B_x, B_z)`` on the commutant triple, i.e. frequency ``|B|``.
    """
    xi0 = np.asarray(xi0, dtype=float)
    if xi0.shape != (4,):
        raise ValueError(f"pauli state must have 4 components, got shape {xi0.shape}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if method == "rk4":
        def rhs(t, x):
            return pauli_generator(_check_finite(field(t), t)) @ x
        return integrate_rk4(rhs, xi0, t0, t1, dt, stride)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    if not field.is_constant:
        raise ValueError("the exact method needs a constant field")
    bx, by, bz = _check_finite(field(t0), t0)
    osc = CliffordOscillator.constant(commutant_triple(), [by, bx, bz])
    return integrate_exact_blocks(osc, xi0, t0, t1, dt * stride)


def bloch_vector(state) -> np.ndarray:
    """``n_a = Psi^dagger sigma_a Psi``; accepts a spinor, C^2 / R^4 vectors, or stacks of them."""
    if isinstance(state, Spinor):
        z = state.as_array()
    else:
        arr = np.asarray(state)
        if arr.shape[-1] == 4 and not np.iscomplexobj(arr):
            z = r4_to_c2(arr)
        elif arr.shape[-1] == 2:
            z = arr.astype(complex)
        else:
            raise ValueError(f"cannot interpret shape {arr.shape} as a spinor")
    p, m = z[..., 0], z[..., 1]
    cross = np.conj(p) * m
    return np.stack([2 * cross.real, 2 * cross.imag, abs(p) ** 2 - abs(m) ** 2], axis=-1)


def precession_rate(times, bloch, axis) -> float:
    """Signed angular rate of the Bloch vector about ``axis``.

    The transverse part is projected onto an orthonormal pair perpendicular to
    ``axis``; its unwrapped phase is fitted linearly in time.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    trial = np.eye(3)[np.argmin(np.abs(axis))]
    u = np.cross(axis, trial)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    n = np.asarray(bloch, dtype=float)
    phase = np.unwrap(np.arctan2(n @ v, n @ u))
    slope, _ = np.polyfit(np.asarray(times, dtype=float), phase, 1)
    return float(slope)
