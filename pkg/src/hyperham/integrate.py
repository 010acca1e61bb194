"""Fixed-step RK4, closed-form sampling of oscillators, and conservation diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .hyperkahler import fd_steps
from .oscillator import CliffordOscillator, propagate_blocks


@dataclass
class Trajectory:
    """Sampled states with named per-sample diagnostics.

    ``states`` may be complex (spinor trajectories). ``failed`` is set when an
    integration stopped early on a non-finite state; the samples up to that
    point are kept.
    """

    times: np.ndarray
    states: np.ndarray
    diagnostics: dict[str, np.ndarray] = field(default_factory=dict)
    failed: bool = False
    message: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise ValueError("states must be an (N, d) array matching the times")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def attach(self, name: str, fn: Callable) -> np.ndarray:
        """Evaluate ``fn`` on every state and store it under ``name``."""
        vals = np.array([fn(x) for x in self.states], dtype=float)
        self.diagnostics[name] = vals
        return vals

    def to_csv(self, path, state_names: Sequence[str] | None = None) -> None:
        """Write ``t,x1,...,xm[,d_<name>...]`` with 17 significant digits.

        Vector-valued diagnostics expand to ``d_<name>1, d_<name>2, ...``.
        Names that already carry a prefix (``n_x``) are written as-is.
        """
        d = self.states.shape[1]
        names = list(state_names) if state_names else [f"x{i + 1}" for i in range(d)]
        cols = [self.times[:, None], np.asarray(self.states, dtype=float)]
        for key, vals in self.diagnostics.items():
            vals = np.asarray(vals, dtype=float)
            label = key if key.startswith(("d_", "n_")) else f"d_{key}"
            if vals.ndim == 1:
                names.append(label)
                cols.append(vals[:, None])
            else:
                names += [f"{label}{j + 1}" for j in range(vals.shape[1])]
                cols.append(vals)
        table = np.hstack(cols)
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for row in table:
                fh.write(",".join("%.17g" % v for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> tuple["Trajectory", list[str]]:
        """Read a trajectory CSV; returns the trajectory and its state column names.

        Columns starting with ``d_`` or ``n_`` become diagnostics.
        """
        with open(path, encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != len(header):
            raise ValueError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
        state_idx = [i for i, h in enumerate(header[1:], 1) if not h.startswith(("d_", "n_"))]
        if not state_idx:
            raise ValueError(f"{path}: no state columns")
        diag = {h: data[:, i] for i, h in enumerate(header) if h.startswith(("d_", "n_"))}
        traj = cls(data[:, 0], data[:, state_idx], diag)
        return traj, [header[i] for i in state_idx]


def step_count(t0: float, t1: float, dt: float) -> int:
    """Number of steps of size ``dt`` (last one possibly shorter) covering ``[t0, t1]``."""
    n = (t1 - t0) / dt
    nearest = round(n)
    if nearest >= 1 and abs(n - nearest) <= 1e-9 * max(1.0, n):
        return int(nearest)
    return int(math.ceil(n))


def rk4_step(field: Callable, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = field(t, x)
    k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = field(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_rk4(field: Callable, xi0, t0: float, t1: float, dt: float,
                  stride: int = 1) -> Trajectory:
    """Classical fixed-step Runge-Kutta 4.

    ``field(t, x)`` returns the derivative. Step times are ``t0 + k dt`` (not
    accumulated); the final step is shortened so the last sample is exactly
    ``t1``. Samples are kept every ``stride`` steps, plus the final state.
    Real or complex states are both fine.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t1 > t0:
        raise ValueError(f"t1 must exceed t0 (got t0={t0}, t1={t1})")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    x = np.array(xi0, dtype=np.result_type(np.asarray(xi0).dtype, float))
    n = step_count(t0, t1, dt)
    times, states = [t0], [x.copy()]
    failed, message = False, ""
    for k in range(n):
        t = t0 + k * dt
        t_next = t1 if k == n - 1 else t0 + (k + 1) * dt
        x = rk4_step(field, t, x, t_next - t)
        if not np.all(np.isfinite(x)):
            failed, message = True, f"non-finite state at t={t_next:.17g}"
            break
        if (k + 1) % stride == 0 or k == n - 1:
            times.append(t_next)
            states.append(x.copy())
    return Trajectory(np.array(times), np.array(states), failed=failed, message=message)


def sample_times(t0: float, t1: float, dt: float) -> np.ndarray:
    if t1 == t0:
        return np.array([t0])
    n = step_count(t0, t1, dt)
    t = t0 + dt * np.arange(n + 1)
    t[-1] = t1
    return t


def integrate_exact_blocks(sys: CliffordOscillator, xi0, t0: float, t1: float,
                           dt_sample: float) -> Trajectory:
    """Sample the closed-form flow on ``[t0, t1]`` every ``dt_sample`` (last sample at ``t1``)."""
    if t1 < t0:
        raise ValueError("t1 must not precede t0")
    if t1 > t0 and not dt_sample > 0:
        raise ValueError(f"dt_sample must be positive, got {dt_sample}")
    xi0 = np.asarray(xi0, dtype=float)
    times = sample_times(t0, t1, dt_sample)
    blocks = sys._blocks(xi0)
    states = propagate_blocks(sys.decompositions(xi0), blocks, times - t0)
    states[0] = xi0
    return Trajectory(times, states)


@dataclass
class ConservationReport:
    tol: float
    initial: dict[str, float] = field(default_factory=dict)
    drifts: dict[str, float] = field(default_factory=dict)

    def passed_quantity(self, name: str) -> bool:
        return self.drifts[name] <= self.tol * (1.0 + abs(self.initial[name]))

    @property
    def passed(self) -> bool:
        return all(self.passed_quantity(k) for k in self.drifts)

    def to_text(self) -> str:
        lines = [f"conservation: {'PASS' if self.passed else 'FAIL'} (tol {self.tol:.1e})"]
        for k, d in self.drifts.items():
            flag = "ok" if self.passed_quantity(k) else "FAIL"
            lines.append(f"  {k:<16} drift {d:.3e}  [{flag}]")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {"passed": self.passed, "tol": self.tol,
                "quantities": {k: {"initial": self.initial[k], "drift": d,
                                   "passed": self.passed_quantity(k)}
                               for k, d in self.drifts.items()}}


def conservation_report(traj: Trajectory, quantities: Mapping[str, Callable] | Sequence,
                        tol: float) -> ConservationReport:
    """Max drift ``|Q(x(t)) - Q(x(0))|`` of each named quantity.

    A quantity passes when its drift is at most ``tol (1 + |Q(x(0))|)``.
    """
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    items = quantities.items() if isinstance(quantities, Mapping) else quantities
    report = ConservationReport(tol=tol)
    for name, fn in items:
        vals = np.array([float(fn(x)) for x in traj.states])
        report.initial[name] = float(vals[0])
        report.drifts[name] = float(np.max(np.abs(vals - vals[0])))
    return report


def divergence_residual(field: Callable, x, fd_step: float | None = None) -> float:
    """Central-difference estimate of ``sum_i dX^i/dx_i`` for an autonomous ``field(x)``."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i, h in enumerate(fd_steps(x, fd_step)):
        e = np.zeros_like(x)
        e[i] = h
        total += (field(x + e)[i] - field(x - e)[i]) / (2 * h)
    return float(total)


def empirical_order(dts, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(dt)``."""
    slope, _ = np.polyfit(np.log(np.asarray(dts, float)), np.log(np.asarray(errors, float)), 1)
    return float(slope)
