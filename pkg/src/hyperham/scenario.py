"""JSON scenario files: parsing, validation and defaults.

A scenario describes one system, one or more initial states, a time grid,
an integrator, the diagnostics to evaluate and where outputs go. Every
effective value (defaults included) is available from
:meth:`Scenario.to_record` so a run can be reproduced from its summary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hyperkahler import HamiltonianTriple, HyperhamiltonianSystem, HyperkahlerChart
from .oscillator import CliffordOscillator
from .pauli import ConstantField, MagneticField, RotatingField, TabulatedField, spinor_to_r4
from .quaternion_core import (
    GeneratorError,
    GeneratorSet,
    block_diagonal,
    commutant_triple,
    standard_quaternion_triple,
    symplectic_generators,
)

SCHEMA_VERSION = 1

KINDS = ("clifford_oscillator", "quaternionic_oscillator", "flat_hyperhamiltonian", "pauli")
OSCILLATOR_KINDS = KINDS[:2]
INTEGRATORS = ("rk4", "exact")
DIAGNOSTICS = ("rho", "norm", "hopf", "great_circle", "hamiltonians", "bloch")

DEFAULT_TOLERANCES = {
    "structure": 1e-10,
    "conservation": 1e-9,
    "hopf": 1e-10,
    "great_circle": 1e-8,
}
DEFAULT_OUTPUT = {
    "csv": "trajectory.csv",
    "summary": "summary.json",
    "validation": "validation.json",
    "diagnostics": "diagnostics.json",
}
DEFAULT_DIAGNOSTICS = {
    "clifford_oscillator": ["rho", "norm", "great_circle"],
    "quaternionic_oscillator": ["rho", "norm", "hopf", "great_circle"],
    "flat_hyperhamiltonian": ["hamiltonians"],
    "pauli": ["norm", "bloch", "hopf", "great_circle", "hamiltonians"],
}
BUILTIN_GENERATORS = {
    "symplectic_2d": symplectic_generators,
    "quaternion": standard_quaternion_triple,
    "commutant": commutant_triple,
}

TOP_LEVEL_KEYS = {"schema_version", "name", "system", "initial_state", "initial_states",
                  "initial_spinor", "initial_spinors", "time", "integrator", "diagnostics",
                  "output", "tolerances"}
SYSTEM_KEYS = {
    "clifford_oscillator": {"kind", "generators", "nu", "nu_slope", "blocks"},
    "quaternionic_oscillator": {"kind", "nu", "nu_slope", "blocks"},
    "flat_hyperhamiltonian": {"kind", "blocks", "metric", "structures", "hamiltonians"},
    "pauli": {"kind", "field"},
}


class ScenarioError(ValueError):
    """Invalid scenario content; the message names the offending field."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _matrix(value, where: str, shape: tuple | None = None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(where, "expected a numeric array") from None
    if shape is not None and arr.shape != shape:
        raise ScenarioError(where, f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(where, "entries must be finite")
    return arr


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(where, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise ScenarioError(where, "must be finite")
    return float(value)


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    dt: float
    stride: int = 1


@dataclass
class Scenario:
    name: str
    kind: str
    system: dict
    initial_states: list[np.ndarray]
    time: TimeGrid
    integrator: str
    diagnostics: list[str]
    output: dict
    tolerances: dict
    spinor_input: bool = False
    source: str | None = None
    _built: object = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.initial_states[0].size

    def build(self):
        """The system object: oscillator, hyperhamiltonian system or magnetic field."""
        if self._built is None:
            self._built = _build_system(self.kind, self.system)
        return self._built

    def with_tolerance(self, tol: float) -> "Scenario":
        self.tolerances = {k: float(tol) for k in self.tolerances}
        return self

    def to_record(self) -> dict:
        """Every effective parameter, in a form ``parse_scenario`` accepts again."""
        allowed = SYSTEM_KEYS[self.kind]
        system = {k: v for k, v in self.system.items() if k in allowed and v is not None}
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "system": system,
            "initial_states": [x.tolist() for x in self.initial_states],
            "time": {"t0": self.time.t0, "t1": self.time.t1, "dt": self.time.dt,
                     "stride": self.time.stride},
            "integrator": self.integrator,
            "diagnostics": list(self.diagnostics),
            "output": dict(self.output),
            "tolerances": dict(self.tolerances),
        }


def _parse_generators(value, where: str) -> tuple[GeneratorSet, object]:
    if isinstance(value, str):
        if value not in BUILTIN_GENERATORS:
            raise ScenarioError(where, f"unknown generator set {value!r}; "
                                       f"choose from {sorted(BUILTIN_GENERATORS)}")
        return BUILTIN_GENERATORS[value](), value
    if not isinstance(value, list) or not value:
        raise ScenarioError(where, "expected a built-in name or a list of matrices")
    mats = [_matrix(m, f"{where}[{i}]") for i, m in enumerate(value)]
    try:
        return GeneratorSet(tuple(mats)), [m.tolist() for m in mats]
    except GeneratorError as exc:
        raise ScenarioError(where, str(exc)) from None


def _parse_oscillator(kind: str, spec: dict) -> dict:
    if kind == "quaternionic_oscillator":
        gens, gen_name = standard_quaternion_triple(), "quaternion"
    else:
        gens, gen_name = _parse_generators(spec.get("generators", "quaternion"),
                                           "system.generators")
    if "nu" not in spec:
        raise ScenarioError("system.nu", "required")
    nu = np.atleast_2d(_matrix(spec["nu"], "system.nu"))
    if nu.ndim != 2 or nu.shape[1] != gens.p:
        raise ScenarioError("system.nu", f"each row needs {gens.p} coefficients, got shape "
                                         f"{np.asarray(spec['nu']).shape}")
    n = nu.shape[0]
    if "blocks" in spec and spec["blocks"] != n:
        raise ScenarioError("system.blocks", f"{spec['blocks']} blocks but nu has {n} rows")
    slope = spec.get("nu_slope")
    if slope is not None:
        slope = _matrix(slope, "system.nu_slope", (n, gens.p, n)).tolist()
    return {"kind": kind, "generators": gen_name, "nu": nu.tolist(), "nu_slope": slope,
            "blocks": n, "m": gens.dim}


def _parse_flat(spec: dict) -> dict:
    n = spec.get("blocks", 1)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ScenarioError("system.blocks", "must be a positive integer")
    d = 4 * n
    metric = _matrix(spec.get("metric", np.eye(d).tolist()), "system.metric", (d, d))
    structures = spec.get("structures", "standard")
    if structures == "standard":
        Y = [block_diagonal(k, n) for k in standard_quaternion_triple()]
    elif isinstance(structures, list) and len(structures) == 3:
        Y = [_matrix(y, f"system.structures[{i}]", (d, d)) for i, y in enumerate(structures)]
    else:
        raise ScenarioError("system.structures", "expected 'standard' or three matrices")
    hams = spec.get("hamiltonians")
    if not isinstance(hams, list) or len(hams) != 3:
        raise ScenarioError("system.hamiltonians", "expected a list of three {Q, b, c} objects")
    Q, b, c = [], [], []
    for i, h in enumerate(hams):
        where = f"system.hamiltonians[{i}]"
        if not isinstance(h, dict) or set(h) - {"Q", "b", "c"}:
            raise ScenarioError(where, "expected an object with optional keys Q, b, c")
        Q.append(_matrix(h.get("Q", np.zeros((d, d)).tolist()), f"{where}.Q", (d, d)))
        b.append(_matrix(h.get("b", [0.0] * d), f"{where}.b", (d,)))
        c.append(_number(h.get("c", 0.0), f"{where}.c"))
    return {"kind": "flat_hyperhamiltonian", "blocks": n, "metric": metric.tolist(),
            "structures": [y.tolist() for y in Y],
            "hamiltonians": [{"Q": q.tolist(), "b": bb.tolist(), "c": cc}
                             for q, bb, cc in zip(Q, b, c)]}


def _parse_field(spec) -> dict:
    where = "system.field"
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ScenarioError(where, "expected an object with a 'kind'")
    kind = spec["kind"]
    if kind == "constant":
        return {"kind": "constant", "B": _matrix(spec.get("B"), f"{where}.B", (3,)).tolist()}
    if kind == "rotating":
        return {"kind": "rotating", "b": _number(spec.get("b"), f"{where}.b"),
                "rate": _number(spec.get("rate"), f"{where}.rate"),
                "Bz": _number(spec.get("Bz", 0.0), f"{where}.Bz")}
    if kind == "tabulated":
        t = _matrix(spec.get("times"), f"{where}.times")
        v = _matrix(spec.get("values"), f"{where}.values", (t.size, 3))
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ScenarioError(f"{where}.times", "must be a non-empty increasing list")
        return {"kind": "tabulated", "times": t.tolist(), "values": v.tolist()}
    raise ScenarioError(f"{where}.kind", f"unknown field kind {kind!r}")


def make_field(spec: dict) -> MagneticField:
    if spec["kind"] == "constant":
        return ConstantField(spec["B"])
    if spec["kind"] == "rotating":
        return RotatingField(spec["b"], spec["rate"], spec["Bz"])
    return TabulatedField(spec["times"], spec["values"])


def _build_system(kind: str, spec: dict):
    if kind in OSCILLATOR_KINDS:
        name = spec["generators"]
        gens = (BUILTIN_GENERATORS[name]() if isinstance(name, str)
                else GeneratorSet(tuple(np.asarray(m) for m in name)))
        # Validation is reported by the validate command, not raised here.
        return CliffordOscillator.affine(gens, spec["nu"], spec["nu_slope"], tol=np.inf)
    if kind == "flat_hyperhamiltonian":
        chart = HyperkahlerChart.constant(spec["metric"], spec["structures"])
        h = spec["hamiltonians"]
        triple = HamiltonianTriple.quadratic(Q=[x["Q"] for x in h], b=[x["b"] for x in h],
                                             c=[x["c"] for x in h])
        return HyperhamiltonianSystem(chart, triple)
    return make_field(spec["field"])


def _parse_states(doc: dict, kind: str, dim: int | None) -> tuple[list[np.ndarray], bool]:
    spinor = kind == "pauli" and ("initial_spinor" in doc or "initial_spinors" in doc)
    if spinor:
        key = "initial_spinors" if "initial_spinors" in doc else "initial_spinor"
        raw = doc[key] if key == "initial_spinors" else [doc[key]]
        states = []
        for i, s in enumerate(raw):
            arr = _matrix(s, f"{key}[{i}]" if key == "initial_spinors" else key, (2, 2))
            states.append(spinor_to_r4(arr[:, 0] + 1j * arr[:, 1]))
        return states, True
    if "initial_states" in doc:
        key, raw = "initial_states", doc["initial_states"]
        if not isinstance(raw, list) or not raw:
            raise ScenarioError(key, "expected a non-empty list of states")
    elif "initial_state" in doc:
        key, raw = "initial_state", [doc["initial_state"]]
    else:
        raise ScenarioError("initial_state", "required")
    states = []
    for i, s in enumerate(raw):
        where = f"{key}[{i}]" if key == "initial_states" else key
        x = _matrix(s, where)
        if x.ndim != 1 or (dim is not None and x.size != dim):
            raise ScenarioError(where, f"expected {dim} components for this system, "
                                       f"got shape {x.shape}")
        states.append(x)
    return states, False


def parse_scenario(doc: dict, source: str | None = None) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    unknown = set(doc) - TOP_LEVEL_KEYS
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError("schema_version", f"unsupported version {version!r}")

    sysdoc = doc.get("system")
    if not isinstance(sysdoc, dict):
        raise ScenarioError("system", "required object")
    kind = sysdoc.get("kind")
    if kind not in KINDS:
        raise ScenarioError("system.kind", f"unknown kind {kind!r}; choose from {list(KINDS)}")
    extra = set(sysdoc) - SYSTEM_KEYS[kind]
    if extra:
        raise ScenarioError(f"system.{sorted(extra)[0]}", f"not a parameter of {kind}")

    if kind in OSCILLATOR_KINDS:
        system = _parse_oscillator(kind, sysdoc)
        dim = system["m"] * system["blocks"]
    elif kind == "flat_hyperhamiltonian":
        system = _parse_flat(sysdoc)
        dim = 4 * system["blocks"]
    else:
        system = {"kind": "pauli", "field": _parse_field(sysdoc.get("field"))}
        dim = 4
    states, spinor = _parse_states(doc, kind, dim)

    tdoc = doc.get("time")
    if not isinstance(tdoc, dict):
        raise ScenarioError("time", "required object with t0, t1, dt")
    t0 = _number(tdoc.get("t0", 0.0), "time.t0")
    if "t1" not in tdoc or "dt" not in tdoc:
        raise ScenarioError("time", "t1 and dt are required")
    t1 = _number(tdoc["t1"], "time.t1")
    dt = _number(tdoc["dt"], "time.dt")
    stride = tdoc.get("stride", 1)
    if dt <= 0:
        raise ScenarioError("time.dt", f"must be positive, got {dt}")
    if t1 <= t0:
        raise ScenarioError("time.t1", f"must exceed t0={t0}, got {t1}")
    if isinstance(stride, bool) or not isinstance(stride, int) or stride < 1:
        raise ScenarioError("time.stride", "must be a positive integer")
    extra = set(tdoc) - {"t0", "t1", "dt", "stride"}
    if extra:
        raise ScenarioError(f"time.{sorted(extra)[0]}", "unknown field")

    constant_pauli = kind == "pauli" and system["field"]["kind"] == "constant"
    default_integrator = "exact" if kind in OSCILLATOR_KINDS or constant_pauli else "rk4"
    integrator = doc.get("integrator", default_integrator)
    if integrator not in INTEGRATORS:
        raise ScenarioError("integrator", f"expected one of {list(INTEGRATORS)}, got {integrator!r}")
    if integrator == "exact" and kind == "flat_hyperhamiltonian":
        raise ScenarioError("integrator", "no closed form for flat_hyperhamiltonian; use rk4")
    if integrator == "exact" and kind == "pauli" and not constant_pauli:
        raise ScenarioError("integrator", "exact integration needs a constant magnetic field")

    diagnostics = doc.get("diagnostics", DEFAULT_DIAGNOSTICS[kind])
    if not isinstance(diagnostics, list):
        raise ScenarioError("diagnostics", "expected a list of names")
    for d in diagnostics:
        if d not in DIAGNOSTICS:
            raise ScenarioError("diagnostics", f"unknown diagnostic {d!r}; "
                                               f"choose from {list(DIAGNOSTICS)}")

    output = dict(DEFAULT_OUTPUT)
    odoc = doc.get("output", {})
    if not isinstance(odoc, dict) or set(odoc) - set(DEFAULT_OUTPUT):
        raise ScenarioError("output", f"allowed keys are {sorted(DEFAULT_OUTPUT)}")
    output.update({k: str(v) for k, v in odoc.items()})

    tolerances = dict(DEFAULT_TOLERANCES)
    tol_doc = doc.get("tolerances", {})
    if not isinstance(tol_doc, dict) or set(tol_doc) - set(DEFAULT_TOLERANCES):
        raise ScenarioError("tolerances", f"allowed keys are {sorted(DEFAULT_TOLERANCES)}")
    for k, v in tol_doc.items():
        tolerances[k] = _number(v, f"tolerances.{k}")

    name = str(doc.get("name", Path(source).stem if source else "scenario"))
    return Scenario(name=name, kind=kind, system=system, initial_states=states,
                    time=TimeGrid(t0, t1, dt, stride), integrator=integrator,
                    diagnostics=list(diagnostics), output=output, tolerances=tolerances,
                    spinor_input=spinor, source=source)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises ``OSError`` when the file cannot be read and :class:`ScenarioError`
    for malformed JSON (with line and column) or invalid content.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path.name} line {exc.lineno} column {exc.colno}",
                            exc.msg) from None
    return parse_scenario(doc, source=str(path))
