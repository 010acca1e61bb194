"""Constant-coefficient quaternion and Clifford generators.

Generator sets are families of real antisymmetric matrices ``K_a`` with
``K_a K_b + K_b K_a = -2 delta_ab I``. For ``m = 4, p = 3`` they represent
the imaginary quaternion units; this module ships that triple, the commuting
second ``su(2)`` factor used by the spin equation, the associated 2-forms and
a conserved quadratic map realizing the Hopf fibration ``S^3 -> S^2``.

All residuals use the max-absolute-entry norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations

import numpy as np

DEFAULT_TOL = 1e-10

# Levi-Civita symbol on three indices (0-based).
LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_a, _b, _c] = 1.0
    LEVI_CIVITA[_b, _a, _c] = -1.0


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


class GeneratorError(ValueError):
    """Raised for malformed generator input (shape or dimension)."""


@dataclass(frozen=True)
class GeneratorSet:
    """Ordered family of ``p`` real ``m x m`` matrices meant to span a Clifford algebra.

    Construction only checks shapes; use :func:`validate_generator_set` for the
    algebraic relations.
    """

    generators: tuple[np.ndarray, ...]

    def __post_init__(self):
        mats = tuple(_frozen(k) for k in self.generators)
        if not mats:
            raise GeneratorError("generator set is empty")
        m = mats[0].shape[0] if mats[0].ndim == 2 else -1
        for i, k in enumerate(mats):
            if k.ndim != 2 or k.shape[0] != k.shape[1]:
                raise GeneratorError(f"generator {i + 1} is not square: shape {k.shape}")
            if k.shape[0] != m:
                raise GeneratorError(
                    f"generator {i + 1} has dimension {k.shape[0]}, expected {m}"
                )
        object.__setattr__(self, "generators", mats)

    @property
    def dim(self) -> int:
        return self.generators[0].shape[0]

    @property
    def p(self) -> int:
        return len(self.generators)

    def __len__(self) -> int:
        return len(self.generators)

    def __getitem__(self, i) -> np.ndarray:
        return self.generators[i]

    def __iter__(self):
        return iter(self.generators)

    def stack(self) -> np.ndarray:
        """Generators as a ``(p, m, m)`` array."""
        return np.stack(self.generators)

    def combine(self, coefficients) -> np.ndarray:
        """``sum_a c_a K_a``."""
        c = np.asarray(coefficients, dtype=float)
        if c.shape != (self.p,):
            raise GeneratorError(f"expected {self.p} coefficients, got shape {c.shape}")
        return np.tensordot(c, self.stack(), axes=1)


@dataclass(frozen=True)
class QuaternionTriple(GeneratorSet):
    """Three ``4 x 4`` generators meant to obey ``K_a K_b = eps_abc K_c - delta_ab I``."""

    def __post_init__(self):
        super().__post_init__()
        if self.p != 3 or self.dim != 4:
            raise GeneratorError(
                f"a quaternion triple needs three 4x4 matrices, got {self.p} of size {self.dim}"
            )


@dataclass(frozen=True)
class TwoForm:
    """Constant 2-form ``(1/2) W_ij dx^i ^ dx^j`` given by its antisymmetric matrix."""

    W: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(self.W))

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    def terms(self, tol: float = 0.0) -> list[tuple[int, int, float]]:
        """Nonzero ``(i, j, coefficient)`` with ``i < j`` and 1-based indices."""
        out = []
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if abs(self.W[i, j]) > tol:
                    out.append((i + 1, j + 1, float(self.W[i, j])))
        return out

    def __str__(self) -> str:
        parts = []
        for i, j, c in self.terms():
            coef = "" if c == 1 else ("-" if c == -1 else f"{c:g}*")
            parts.append(f"{coef}dx{i}^dx{j}")
        return " + ".join(parts).replace("+ -", "- ") or "0"


@dataclass
class ValidationReport:
    """Residuals of a generator-set check; ``valid`` iff every residual is within ``tol``."""

    tol: float
    antisymmetry: dict[int, float] = field(default_factory=dict)
    anticommutation: dict[tuple[int, int], float] = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        vals = list(self.antisymmetry.values()) + list(self.anticommutation.values())
        return max(vals, default=0.0)

    @property
    def valid(self) -> bool:
        return not self.messages and self.max_residual <= self.tol

    def failures(self) -> list[str]:
        out = list(self.messages)
        for a, r in self.antisymmetry.items():
            if r > self.tol:
                out.append(f"antisymmetry K{a}: residual {r:.3e}")
        for (a, b), r in self.anticommutation.items():
            if r > self.tol:
                out.append(f"anticommutator {{K{a},K{b}}}: residual {r:.3e}")
        return out

    def to_text(self) -> str:
        lines = [f"generator set: {'PASS' if self.valid else 'FAIL'} (tol {self.tol:.1e})"]
        lines.append(f"  max residual {self.max_residual:.3e}")
        lines += [f"  {f}" for f in self.failures()]
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {
            "valid": self.valid,
            "tol": self.tol,
            "max_residual": self.max_residual,
            "antisymmetry": {f"K{a}": r for a, r in self.antisymmetry.items()},
            "anticommutation": {f"K{a},K{b}": r for (a, b), r in self.anticommutation.items()},
            "failures": self.failures(),
        }


def standard_symplectic_2d() -> np.ndarray:
    """``J = [[0, 1], [-1, 0]]``, the upper-left block of ``K1``.

    ``xi' = omega J xi`` is the oscillator ``q' = omega p, p' = -omega q``
    when the block is ordered ``xi = (q, p)``.
    """
    return np.array([[0.0, 1.0], [-1.0, 0.0]])


_K1 = ((0, 1, 0, 0), (-1, 0, 0, 0), (0, 0, 0, 1), (0, 0, -1, 0))
_K2 = ((0, 0, 0, 1), (0, 0, 1, 0), (0, -1, 0, 0), (-1, 0, 0, 0))
_K3 = ((0, 0, 1, 0), (0, 0, 0, -1), (-1, 0, 0, 0), (0, 1, 0, 0))


@lru_cache(maxsize=None)
def standard_quaternion_triple() -> QuaternionTriple:
    """Real 4x4 representation of the quaternion units, ``K1 K2 = K3``."""
    return QuaternionTriple((np.array(_K1), np.array(_K2), np.array(_K3)))


@lru_cache(maxsize=None)
def commutant_triple() -> QuaternionTriple:
    """The second ``su(2)`` factor of ``so(4)``, commuting with the standard triple.

    These are the spin generator's matrices at unit field along ``y``, ``x``
    and ``z`` respectively; they obey the same product rule as the standard
    triple.
    """
    kh1 = ((0, 0, 1, 0), (0, 0, 0, 1), (-1, 0, 0, 0), (0, -1, 0, 0))
    kh2 = ((0, 0, 0, -1), (0, 0, 1, 0), (0, -1, 0, 0), (1, 0, 0, 0))
    kh3 = ((0, -1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, -1, 0))
    return QuaternionTriple((np.array(kh1), np.array(kh2), np.array(kh3)))


def symplectic_generators() -> GeneratorSet:
    """The ``m = 2`` Clifford set ``{J}``: the ordinary oscillator."""
    return GeneratorSet((standard_symplectic_2d(),))


def block_diagonal(mat: np.ndarray, n: int) -> np.ndarray:
    """``n`` copies of ``mat`` on the diagonal."""
    return np.kron(np.eye(n), np.asarray(mat, dtype=float))


def validate_generator_set(S: GeneratorSet, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check antisymmetry and ``{K_a, K_b} = -2 delta_ab I`` for every pair."""
    if not isinstance(S, GeneratorSet):
        S = GeneratorSet(tuple(S))
    report = ValidationReport(tol=tol)
    m, p = S.dim, S.p
    eye = np.eye(m)
    for a, k in enumerate(S, start=1):
        report.antisymmetry[a] = max_abs(k.T + k)
    for a in range(p):
        for b in range(a, p):
            ka, kb = S[a], S[b]
            target = -2.0 * eye if a == b else 0.0
            report.anticommutation[(a + 1, b + 1)] = max_abs(ka @ kb + kb @ ka - target)
    if p > m - 1:
        report.messages.append(f"{p} generators exceed the bound m-1 = {m - 1}")
    return report


def quaternion_relation_residual(T: QuaternionTriple) -> float:
    """``max_ab |K_a K_b - eps_abc K_c + delta_ab I|``."""
    K = T.stack()
    eye = np.eye(T.dim)
    worst = 0.0
    for a in range(3):
        for b in range(3):
            rhs = np.tensordot(LEVI_CIVITA[a, b], K, axes=1) - (a == b) * eye
            worst = max(worst, max_abs(K[a] @ K[b] - rhs))
    return worst


def commutation_residual(T1: GeneratorSet, T2: GeneratorSet) -> float:
    """``max_ab |[A_a, B_b]|``."""
    return max(max_abs(a @ b - b @ a) for a in T1 for b in T2)


def kahler_two_form(K, tol: float = DEFAULT_TOL) -> TwoForm:
    """The 2-form whose coefficient matrix is ``K`` itself."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {K.shape}")
    r = max_abs(K + K.T)
    if r > tol:
        raise ValueError(f"matrix is not antisymmetric (residual {r:.3e})")
    return TwoForm(K)


def wedge_square_coefficient(w: TwoForm) -> float:
    """``c`` with ``w ^ w = c dx1^dx2^dx3^dx4``, i.e. twice the Pfaffian."""
    if w.dim != 4:
        raise ValueError(f"wedge square coefficient needs a 4-dimensional form, got {w.dim}")
    W = w.W
    return 2.0 * (W[0, 1] * W[2, 3] - W[0, 2] * W[1, 3] + W[0, 3] * W[1, 2])


def wedge_square_bruteforce(w: TwoForm) -> float:
    """Same quantity as :func:`wedge_square_coefficient` by summing over all of ``S_4``."""
    W = w.W
    total = 0.0
    for perm in permutations(range(4)):
        inversions = sum(perm[i] > perm[j] for i in range(4) for j in range(i + 1, 4))
        total += (-1) ** inversions * W[perm[0], perm[1]] * W[perm[2], perm[3]]
    return total / 4.0


def check_rotation(R, tol: float = DEFAULT_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    orth = max_abs(R.T @ R - np.eye(3))
    if orth > tol:
        raise ValueError(f"matrix is not orthogonal (residual {orth:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise ValueError(f"matrix is not a proper rotation (det {det:+.6f})")
    return R


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed element of SO(3) via QR with sign fixing."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def rotate_triple(R, T: QuaternionTriple, tol: float = DEFAULT_TOL) -> QuaternionTriple:
    """``K'_a = sum_b R_ab K_b`` for ``R`` in SO(3)."""
    R = check_rotation(R, tol)
    K = np.tensordot(R, T.stack(), axes=1)
    return QuaternionTriple(tuple(K))


def hopf_map(xi, A, commutant: GeneratorSet | None = None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Quadratic map ``mu_a(xi) = xi^T (Kh_a A) xi`` onto ``R^3``.

    ``A`` must be a unit complex structure in the span of one quaternion
    triple and ``commutant`` the triple commuting with it (defaults to
    :func:`commutant_triple`, which suits ``A`` built from the standard
    triple). ``|mu(xi)| = |xi|^2`` and ``mu`` is constant along
    ``exp(t A) xi``, so each orbit projects to a single point of ``S^2``.

    ``xi`` may be a single vector or an ``(N, 4)`` array of samples.
    """
    A = np.asarray(A, dtype=float)
    Kh = commutant_triple() if commutant is None else commutant
    r = max_abs(A @ A + np.eye(4))
    if r > tol:
        raise ValueError(f"A is not a complex structure: |A^2 + I| = {r:.3e}")
    c = max(max_abs(k @ A - A @ k) for k in Kh)
    if c > tol:
        raise ValueError(f"A does not commute with the commutant triple (residual {c:.3e})")
    xi = np.asarray(xi, dtype=float)
    S = np.stack([k @ A for k in Kh])
    return np.einsum("...i,aij,...j->...a", xi, S, xi)
