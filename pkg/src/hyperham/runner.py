"""Validation, simulation and diagnostics for loaded scenarios."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .hyperkahler import (
    HyperhamiltonianSystem,
    verify_closedness,
    verify_structure_at,
    vector_field,
)
from .integrate import (
    ConservationReport,
    Trajectory,
    conservation_report,
    integrate_exact_blocks,
    integrate_rk4,
)
from .oscillator import CliffordOscillator, block_radii, great_circle_residual, oscillator_field
from .pauli import (
    R4_COLUMNS,
    bloch_vector,
    evolve_pauli_r4,
    pauli_generator,
    pauli_system,
    precession_rate,
)
from .quaternion_core import (
    GeneratorSet,
    QuaternionTriple,
    commutant_triple,
    commutation_residual,
    hopf_map,
    max_abs,
    quaternion_relation_residual,
    standard_quaternion_triple,
    validate_generator_set,
)
from .scenario import BUILTIN_GENERATORS, OSCILLATOR_KINDS, Scenario

log = logging.getLogger("hyperham")

PRECESSION_RTOL = 1e-6


@dataclass
class Check:
    """One named pass/fail line of a report; ``passed is None`` means not applicable."""

    name: str
    value: float | None
    tol: float | None
    passed: bool | None
    note: str = ""

    def __post_init__(self):
        self.value = None if self.value is None else float(self.value)
        self.passed = None if self.passed is None else bool(self.passed)

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "n/a "}[self.passed]
        text = f"[{status}] {self.name}"
        if self.value is not None:
            text += f": {self.value:.3e}"
            if self.tol is not None:
                text += f" (tol {self.tol:.1e})"
        if self.note:
            text += f"  {self.note}"
        return text

    def to_record(self) -> dict:
        return {"name": self.name, "value": self.value, "tol": self.tol,
                "passed": self.passed, "note": self.note}


@dataclass
class RunReport:
    title: str
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def to_text(self) -> str:
        head = f"{self.title}: {'PASS' if self.passed else 'FAIL'}"
        return "\n".join([head] + ["  " + c.line() for c in self.checks])

    def to_record(self) -> dict:
        return {"title": self.title, "passed": self.passed,
                "checks": [c.to_record() for c in self.checks]}


def scenario_generators(sc: Scenario) -> GeneratorSet:
    name = sc.system["generators"]
    if isinstance(name, str):
        return BUILTIN_GENERATORS[name]()
    return GeneratorSet(tuple(np.asarray(m, dtype=float) for m in name))


# --- validate -------------------------------------------------------------------------

def validate(sc: Scenario) -> RunReport:
    tol = sc.tolerances["structure"]
    checks: list[Check] = []
    if sc.kind in OSCILLATOR_KINDS:
        gens = scenario_generators(sc)
        rep = validate_generator_set(gens, tol)
        worst_anti = max(rep.antisymmetry.values())
        checks.append(Check("generator antisymmetry", worst_anti, tol, worst_anti <= tol))
        for (a, b), r in rep.anticommutation.items():
            checks.append(Check(f"anticommutator {{K{a},K{b}}} + 2 delta I", r, tol, r <= tol))
        for msg in rep.messages:
            checks.append(Check("generator count", None, None, False, msg))
        if isinstance(gens, QuaternionTriple):
            r = quaternion_relation_residual(gens)
            checks.append(Check("quaternion product relations", r, tol, r <= tol))
    elif sc.kind == "flat_hyperhamiltonian":
        sysobj = sc.build()
        points = [np.zeros(sc.dim)] + list(sc.initial_states)
        for i, x in enumerate(points):
            rep = verify_structure_at(sysobj.chart, x, tol)
            label = "origin" if i == 0 else f"initial state {i}"
            note = "; ".join(rep.failures())
            checks.append(Check(f"structure at {label}", rep.max_residual, tol, rep.passed, note))
        for a in range(3):
            rep = verify_closedness(sysobj.chart, points, a, tol=max(tol, 1e-8))
            checks.append(Check(f"d omega_{a + 1} = 0", rep.max_residual, rep.tol, rep.passed))
    else:
        field = sc.build()
        Kh = commutant_triple()
        r = quaternion_relation_residual(Kh)
        checks.append(Check("spin generator triple relations", r, tol, r <= tol))
        r = commutation_residual(Kh, standard_quaternion_triple())
        checks.append(Check("commutes with standard triple", r, tol, r <= tol))
        ts = np.linspace(sc.time.t0, sc.time.t1, 11)
        finite = all(np.all(np.isfinite(field(t))) for t in ts)
        checks.append(Check("magnetic field finite", None, None, finite))
        worst = max(max_abs(pauli_generator(field(t)) + pauli_generator(field(t)).T) for t in ts)
        checks.append(Check("generator antisymmetry", worst, tol, worst <= tol))
        if field.out_of_domain(sc.time.t0, sc.time.t1):
            checks.append(Check("field table covers time grid", None, None, None,
                                "clamped outside the table"))
    return RunReport(f"validate {sc.name}", checks)


# --- simulate -------------------------------------------------------------------------

def simulate_one(sc: Scenario, xi0: np.ndarray) -> Trajectory:
    g = sc.time
    sysobj = sc.build()
    if sc.kind in OSCILLATOR_KINDS:
        if sc.integrator == "exact":
            return integrate_exact_blocks(sysobj, xi0, g.t0, g.t1, g.dt * g.stride)
        return integrate_rk4(lambda t, x: oscillator_field(sysobj, x), xi0, g.t0, g.t1, g.dt,
                             g.stride)
    if sc.kind == "flat_hyperhamiltonian":
        X = vector_field(sysobj)
        return integrate_rk4(lambda t, x: X(x), xi0, g.t0, g.t1, g.dt, g.stride)
    return evolve_pauli_r4(sysobj, xi0, g.t0, g.t1, g.dt, sc.integrator, g.stride)


def state_names(sc: Scenario) -> list[str] | None:
    return list(R4_COLUMNS) if sc.kind == "pauli" else None


def attach_columns(sc: Scenario, traj: Trajectory) -> None:
    """Per-sample diagnostic columns written alongside the states."""
    if "rho" in sc.diagnostics and sc.kind in OSCILLATOR_KINDS:
        traj.diagnostics["rho"] = block_radii(traj.states, sc.system["m"])
    if "norm" in sc.diagnostics and sc.kind != "flat_hyperhamiltonian":
        traj.diagnostics["norm"] = np.einsum("ij,ij->i", traj.states, traj.states)
    if "hopf" in sc.diagnostics:
        for k, (A, comm) in enumerate(_hopf_generators(sc, traj.states[0])):
            if A is None:
                continue
            key = "hopf" if len(_blocks_of(sc)) == 1 else f"hopf_block{k + 1}_"
            traj.diagnostics[key] = hopf_map(traj.states[:, 4 * k:4 * k + 4], A, comm)
    if "bloch" in sc.diagnostics and sc.kind == "pauli":
        n = bloch_vector(traj.states)
        for j, axis in enumerate("xyz"):
            traj.diagnostics[f"n_{axis}"] = n[:, j]


def _blocks_of(sc: Scenario) -> range:
    if sc.kind in OSCILLATOR_KINDS:
        return range(sc.system["blocks"])
    return range(sc.dim // 4)


def _unit_generators(sc: Scenario, xi0) -> list[np.ndarray | None]:
    """Per block, the unit generator ``A`` of a constant-coefficient orbit (None if none)."""
    if sc.kind in OSCILLATOR_KINDS:
        return [None if fd.degenerate else fd.A for fd in sc.build().decompositions(xi0)]
    if sc.kind == "pauli":
        field = sc.build()
        if not field.is_constant:
            return [None]
        B = field(sc.time.t0)
        b = np.linalg.norm(B)
        return [pauli_generator(B) / b if b > 0 else None]
    return [None] * len(_blocks_of(sc))


def _hopf_generators(sc: Scenario, xi0) -> list[tuple]:
    if sc.kind == "pauli":
        comm = standard_quaternion_triple()
    elif sc.kind in OSCILLATOR_KINDS and sc.system["m"] == 4:
        comm = commutant_triple()
    else:
        return [(None, None)] * len(_blocks_of(sc))
    out = []
    for A in _unit_generators(sc, xi0):
        if A is not None and commutation_residual(GeneratorSet((A,)), comm) > 1e-10:
            A = None
        out.append((A, comm))
    return out


def simulate(sc: Scenario) -> list[Trajectory]:
    trajs = []
    for xi0 in sc.initial_states:
        traj = simulate_one(sc, xi0)
        if not traj.failed:
            attach_columns(sc, traj)
        trajs.append(traj)
    return trajs


def csv_names(sc: Scenario) -> list[str]:
    base = sc.output["csv"]
    if len(sc.initial_states) == 1:
        return [base]
    stem, dot, ext = base.rpartition(".")
    if not dot:
        stem, ext = base, "csv"
    return [f"{stem}_{i}.{ext}" for i in range(len(sc.initial_states))]


def quick_conservation(sc: Scenario, traj: Trajectory) -> ConservationReport:
    """Conservation quantities that need no extra integration (for run summaries)."""
    q = {}
    if sc.kind in OSCILLATOR_KINDS:
        m = sc.system["m"]
        for k in _blocks_of(sc):
            q[f"rho_{k + 1}"] = lambda x, k=k: x[m * k:m * k + m] @ x[m * k:m * k + m]
    if sc.kind != "flat_hyperhamiltonian":
        q["norm"] = lambda x: x @ x
    return conservation_report(traj, q, sc.tolerances["conservation"])


# --- diagnose -------------------------------------------------------------------------

def _na(name: str, reason: str) -> Check:
    return Check(name, None, None, None, reason)


def diagnose_trajectory(sc: Scenario, traj: Trajectory) -> list[Check]:
    tols = sc.tolerances
    checks: list[Check] = []
    xi0 = traj.states[0]
    time_dependent = sc.kind == "pauli" and not sc.build().is_constant
    for diag in sc.diagnostics:
        if diag == "rho":
            if sc.kind not in OSCILLATOR_KINDS:
                checks.append(_na("rho drift", f"no block radii for {sc.kind}"))
                continue
            rep = quick_conservation(sc, traj)
            for k in _blocks_of(sc):
                name = f"rho_{k + 1}"
                checks.append(Check(f"{name} drift", rep.drifts[name], rep.tol,
                                    rep.passed_quantity(name)))
        elif diag == "norm":
            if sc.kind == "flat_hyperhamiltonian":
                checks.append(_na("norm drift", "not conserved by general hamiltonians"))
                continue
            rep = conservation_report(traj, {"norm": lambda x: x @ x}, tols["conservation"])
            checks.append(Check("|xi|^2 drift", rep.drifts["norm"], rep.tol, rep.passed))
        elif diag == "hopf":
            if time_dependent:
                checks.append(_na("hopf map drift", "time-dependent generator"))
                continue
            pairs = _hopf_generators(sc, xi0)
            if all(A is None for A, _ in pairs):
                checks.append(_na("hopf map drift", "no constant quaternionic generator"))
                continue
            for k, (A, comm) in enumerate(pairs):
                if A is None:
                    checks.append(_na(f"hopf map drift block {k + 1}", "degenerate block"))
                    continue
                mu = hopf_map(traj.states[:, 4 * k:4 * k + 4], A, comm)
                drift = float(np.max(np.abs(mu - mu[0])))
                ok = drift <= tols["hopf"] * (1 + float(np.max(np.abs(mu[0]))))
                checks.append(Check(f"hopf map drift block {k + 1}", drift, tols["hopf"], ok))
        elif diag == "great_circle":
            if time_dependent or sc.kind == "flat_hyperhamiltonian":
                checks.append(_na("great circle residual", "orbits are not great circles"))
                continue
            m = sc.system["m"] if sc.kind in OSCILLATOR_KINDS else 4
            for k, A in enumerate(_unit_generators(sc, xi0)):
                name = f"great circle residual block {k + 1}"
                block0 = xi0[m * k:m * k + m]
                if A is None or not np.any(block0):
                    checks.append(_na(name, "block at rest"))
                    continue
                r = great_circle_residual(traj.states[:, m * k:m * k + m], A)
                checks.append(Check(name, r, tols["great_circle"], r <= tols["great_circle"]))
        elif diag == "hamiltonians":
            checks += _component_flow_checks(sc, xi0)
        elif diag == "bloch":
            checks += _bloch_checks(sc, traj)
    return checks


def _component_flow_checks(sc: Scenario, xi0) -> list[Check]:
    """Drift of each ``h^a`` along the flow of its own component field ``X_a``."""
    if sc.kind == "flat_hyperhamiltonian":
        sysobj: HyperhamiltonianSystem = sc.build()
    elif sc.kind == "pauli" and sc.build().is_constant:
        sysobj = pauli_system(sc.build()(sc.time.t0))
    else:
        return [_na("component hamiltonian drift", "needs time-independent hamiltonians")]
    g = sc.time
    h = sysobj.hamiltonians
    tol = sc.tolerances["conservation"]
    checks = []
    for a in range(3):
        name = f"h^{a + 1} drift under X_{a + 1}"
        if not np.any(h.gradient(xi0, a)):
            checks.append(_na(name, "zero gradient at initial state"))
            continue
        X = vector_field(sysobj, a)
        traj = integrate_rk4(lambda t, x: X(x), xi0, g.t0, g.t1, g.dt, g.stride)
        rep = conservation_report(traj, {"h": h.functions[a]}, tol)
        checks.append(Check(name, rep.drifts["h"], tol, rep.passed))
    return checks


def _bloch_checks(sc: Scenario, traj: Trajectory) -> list[Check]:
    if sc.kind != "pauli":
        return [_na("bloch vector", "spin systems only")]
    field = sc.build()
    if not field.is_constant:
        return [_na("bloch precession", "time-dependent field")]
    B = np.asarray(field(sc.time.t0))
    b = float(np.linalg.norm(B))
    if b == 0:
        return [_na("bloch precession", "zero field")]
    axis = B / b
    n = bloch_vector(traj.states)
    axial = n @ axis
    tol = sc.tolerances["conservation"]
    drift = float(np.max(np.abs(axial - axial[0])))
    checks = [Check("bloch axial component drift", drift, tol, drift <= tol * (1 + abs(axial[0])))]
    transverse = np.linalg.norm(n - np.outer(axial, axis), axis=1)
    if transverse.min() < 1e-6 * max(1.0, float(np.linalg.norm(n[0]))):
        checks.append(_na("bloch precession rate", "state aligned with the field"))
        return checks
    rate = abs(precession_rate(traj.times, n, axis))
    rel = abs(rate - 2 * b) / (2 * b)
    checks.append(Check("bloch precession rate vs 2|B| (relative)", rel, PRECESSION_RTOL,
                        rel <= PRECESSION_RTOL, f"measured {rate:.9g}, expected {2 * b:.9g}"))
    return checks


def diagnose(sc: Scenario, trajs: list[Trajectory]) -> RunReport:
    checks = []
    for i, traj in enumerate(trajs):
        prefix = f"[{i}] " if len(trajs) > 1 else ""
        if traj.failed:
            checks.append(Check(f"{prefix}integration", None, None, False, traj.message))
            continue
        for c in diagnose_trajectory(sc, traj):
            c.name = prefix + c.name
            checks.append(c)
    return RunReport(f"diagnose {sc.name}", checks)


def diagnose_csv_only(traj: Trajectory, tol: float) -> RunReport:
    rep = conservation_report(traj, {"norm": lambda x: x @ x}, tol)
    return RunReport("diagnose trajectory",
                     [Check("|xi|^2 drift", rep.drifts["norm"], tol, rep.passed)])
