"""Scenario documents: an INI-style key-value schema.

Example::

    [run]
    schema_version = 1
    id = line-6
    models = chain2n, meanfield
    horizon = 10000

    [topology]
    kind = line
    n = 6

    [virus]
    beta = 0.5
    delta = 0.5

    [initial]
    condition = single

Sections: ``[run]``, exactly one of ``[topology]`` / ``[mobility]``,
``[virus]``, ``[initial]``, and optionally ``[quarantine]`` (mobility
only), ``[noise]`` (required by the ``stochastic`` model), ``[certify]``
and ``[output]``. Unknown sections or keys are rejected. The README
lists every key and its default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .chain2n import DEFAULT_CAP
from .errors import ScenarioError
from .netgraph import ConstantDrift, QuarantinePolicy, ReflectingDrift, static_topology

SCHEMA_VERSION = 1
MODELS = ("chain2n", "meanfield", "aggregate", "stochastic")
INITIAL_CONDITIONS = ("all", "half", "single", "explicit")


@dataclass(frozen=True)
class RunSpec:
    id: str = "scenario"
    schema_version: int = SCHEMA_VERSION
    models: tuple = ("chain2n", "meanfield")
    horizon: float = 10000.0
    seed: int = 0
    derivative_tol: float = 1e-12
    rtol: float = 1e-8
    atol: float = 1e-10
    chain_cap: int = DEFAULT_CAP
    output_points: int = 2


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "line"
    n: int = 2
    matrix: tuple = ()          # rows, for kind = matrix


@dataclass(frozen=True)
class MobilitySpec:
    n: int = 2
    dimension: int = 2
    radius: float = 1.0
    dt: float = 1.0
    steps: int = 50
    positions: tuple = ()       # n rows of d coordinates
    velocities: tuple = ()
    box_center: tuple = ()      # empty -> constant drift
    box_side: float = 0.0


@dataclass(frozen=True)
class QuarantineSpec:
    activation_step: int = 0
    groups: tuple = ()
    regions: tuple = ()         # (label, lower, upper) triples


@dataclass(frozen=True)
class VirusSpec:
    beta: tuple = ()
    delta: tuple = ()


@dataclass(frozen=True)
class InitialSpec:
    condition: str = ""
    values: tuple = ()


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "ito"
    gains: tuple = (0.0,)
    distribution: str = "normal"
    dt_noise: float = 0.0       # 0 -> same as dt
    paths: int = 200
    dt: float = 1e-2
    threshold: float = 1e-3


@dataclass(frozen=True)
class CertifySpec:
    grid_points: int = 1001
    t_start: float = 0.0
    window: float = 0.0         # 0 -> whole horizon
    alpha: float = 0.0


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"


@dataclass(frozen=True)
class Scenario:
    run: RunSpec
    virus: VirusSpec
    initial: InitialSpec
    topology: TopologySpec | None = None
    mobility: MobilitySpec | None = None
    quarantine: QuarantineSpec | None = None
    noise: NoiseConfig | None = None
    certify: CertifySpec = field(default_factory=CertifySpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    @property
    def n(self) -> int:
        return self.topology.n if self.topology is not None else self.mobility.n

    @property
    def beta(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.virus.beta, dtype=float), (self.n,))

    @property
    def delta(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.virus.delta, dtype=float), (self.n,))

    def initial_bits(self) -> np.ndarray:
        """Initial infection vector ``p(0)`` (0/1 except for explicit conditions)."""
        return initial_condition(self.initial.condition, self.n, self.initial.values)

    def weight_matrix(self) -> np.ndarray:
        t = self.topology
        if t.kind == "matrix":
            return np.array(t.matrix, dtype=float)
        return static_topology(t.kind, t.n)

    def mobility_model(self):
        m = self.mobility
        vel = np.array(m.velocities, dtype=float).reshape(m.n, m.dimension)
        if m.box_center:
            return ReflectingDrift(vel, np.array(m.box_center, dtype=float), m.box_side)
        return ConstantDrift(vel)

    def quarantine_policy(self) -> QuarantinePolicy | None:
        q = self.quarantine
        if q is None:
            return None
        regions = {int(lab): (np.array(lo, dtype=float), np.array(hi, dtype=float))
                   for lab, lo, hi in q.regions}
        return QuarantinePolicy(q.activation_step, tuple(q.groups), regions)


def initial_condition(condition: str, n: int, values=()) -> np.ndarray:
    """``all`` / ``half`` (first floor(n/2) agents) / ``single`` (agent 0) / ``explicit``."""
    x = np.zeros(n)
    if condition == "all":
        x[:] = 1.0
    elif condition == "half":
        x[: n // 2] = 1.0
    elif condition == "single":
        x[0] = 1.0
    elif condition == "explicit":
        x = np.array(values, dtype=float)
        if x.shape != (n,):
            raise ScenarioError(f"explicit initial condition has {x.size} entries, expected {n}")
        if np.any(x < 0) or np.any(x > 1):
            raise ScenarioError("explicit initial probabilities must lie in [0, 1]")
    else:
        raise ScenarioError(f"unknown initial condition {condition!r}")
    return x


# --- parsing ------------------------------------------------------------------


def _floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _rows(text: str) -> tuple:
    return tuple(_floats(row) for row in text.split(";") if row.strip())


def _words(text: str) -> tuple:
    return tuple(tok for tok in text.replace(",", " ").split())


_CONVERTERS = {
    int: int, float: float, str: str,
    "floats": _floats, "ints": _ints, "rows": _rows, "words": _words,
}

# per-section field -> converter kind
_FIELD_KINDS = {
    RunSpec: {"id": str, "schema_version": int, "models": "words", "horizon": float,
              "seed": int, "derivative_tol": float, "rtol": float, "atol": float,
              "chain_cap": int, "output_points": int},
    TopologySpec: {"kind": str, "n": int, "matrix": "rows"},
    MobilitySpec: {"n": int, "dimension": int, "radius": float, "dt": float, "steps": int,
                   "positions": "rows", "velocities": "rows", "box_center": "floats",
                   "box_side": float},
    QuarantineSpec: {"activation_step": int, "groups": "ints"},
    VirusSpec: {"beta": "floats", "delta": "floats"},
    InitialSpec: {"condition": str, "values": "floats"},
    NoiseConfig: {"kind": str, "gains": "floats", "distribution": str, "dt_noise": float,
                  "paths": int, "dt": float, "threshold": float},
    CertifySpec: {"grid_points": int, "t_start": float, "window": float, "alpha": float},
    OutputSpec: {"directory": str},
}

_SECTIONS = {
    "run": RunSpec, "topology": TopologySpec, "mobility": MobilitySpec,
    "quarantine": QuarantineSpec, "virus": VirusSpec, "initial": InitialSpec,
    "noise": NoiseConfig, "certify": CertifySpec, "output": OutputSpec,
}

_REQUIRED = {
    RunSpec: (), TopologySpec: ("kind", "n"), MobilitySpec: ("n", "radius", "positions", "velocities"),
    QuarantineSpec: ("activation_step", "groups"), VirusSpec: ("beta", "delta"),
    InitialSpec: ("condition",), NoiseConfig: ("kind", "gains"), CertifySpec: (), OutputSpec: (),
}


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    in_section = False
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("["):
            in_section = s.strip("[]").strip() == section
            if in_section and key is None:
                return no
        elif in_section and key is not None and s.split("=", 1)[0].strip() == key:
            return no
    return None


def _err(text, section, key, msg) -> ScenarioError:
    line = _line_of(text, section, key)
    where = f"[{section}]" + (f" {key}" if key else "")
    if line is not None:
        where += f" (line {line})"
    return ScenarioError(f"{where}: {msg}")


def _parse_section(text, name, body) -> object:
    cls = _SECTIONS[name]
    kinds = _FIELD_KINDS[cls]
    values = {}
    regions = []
    for key, raw in body.items():
        if cls is QuarantineSpec and key.startswith("region."):
            label = key.split(".", 1)[1]
            try:
                lo, hi = _rows(raw)
                regions.append((int(label), lo, hi))
            except ValueError as exc:
                raise _err(text, name, key, "expected 'lower coords ; upper coords'") from exc
            continue
        if key not in kinds:
            raise _err(text, name, key, "unknown key")
        try:
            values[key] = _CONVERTERS[kinds[key]](raw)
        except ValueError as exc:
            raise _err(text, name, key, f"cannot parse {raw!r}: {exc}") from exc
    for key in _REQUIRED[cls]:
        if key not in values:
            raise _err(text, name, None, f"missing required key {key!r}")
    if regions:
        values["regions"] = tuple(sorted(regions))
    return cls(**values)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",),
                                   default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc
    for name in cp.sections():
        if name not in _SECTIONS:
            raise _err(text, name, None, "unknown section")
    parts = {name: _parse_section(text, name, dict(cp[name])) for name in cp.sections()}
    for name in ("run", "virus", "initial"):
        if name not in parts:
            raise ScenarioError(f"missing required section [{name}]")
    scenario = Scenario(
        run=parts["run"], virus=parts["virus"], initial=parts["initial"],
        topology=parts.get("topology"), mobility=parts.get("mobility"),
        quarantine=parts.get("quarantine"), noise=parts.get("noise"),
        certify=parts.get("certify", CertifySpec()), output=parts.get("output", OutputSpec()),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(s: Scenario) -> None:
    run = s.run
    if run.schema_version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {run.schema_version}")
    if not run.models:
        raise ScenarioError("[run] models: select at least one model")
    for m in run.models:
        if m not in MODELS:
            raise ScenarioError(f"[run] models: unknown model {m!r}")
    if not run.horizon > 0:
        raise ScenarioError("[run] horizon must be positive")
    if run.output_points < 2:
        raise ScenarioError("[run] output_points must be at least 2")
    if (s.topology is None) == (s.mobility is None):
        raise ScenarioError("exactly one of [topology] or [mobility] is required")
    if s.topology is not None:
        t = s.topology
        if t.kind not in ("line", "star", "complete", "matrix"):
            raise ScenarioError(f"[topology] kind: unknown kind {t.kind!r}")
        if t.n < 2:
            raise ScenarioError("[topology] n must be at least 2")
        if t.kind == "matrix":
            A = np.array(t.matrix, dtype=float)
            if A.shape != (t.n, t.n):
                raise ScenarioError(f"[topology] matrix must be {t.n}x{t.n}")
    if s.mobility is not None:
        m = s.mobility
        for name, rows in (("positions", m.positions), ("velocities", m.velocities)):
            if len(rows) != m.n or any(len(r) != m.dimension for r in rows):
                raise ScenarioError(f"[mobility] {name} must give {m.n} rows of {m.dimension} values")
        if not m.radius > 0:
            raise ScenarioError("[mobility] radius must be positive")
        if m.box_center and (len(m.box_center) != m.dimension or not (0 < m.box_side < np.inf)):
            raise ScenarioError("[mobility] box needs a center of matching dimension and finite side > 0")
    if s.quarantine is not None:
        if s.mobility is None:
            raise ScenarioError("[quarantine] requires [mobility]")
        if len(s.quarantine.groups) != s.n:
            raise ScenarioError(f"[quarantine] groups must label all {s.n} agents")
    n = s.n
    for name, vals in (("beta", s.virus.beta), ("delta", s.virus.delta)):
        if len(vals) not in (1, n):
            raise ScenarioError(f"[virus] {name} needs 1 or {n} values")
        if any(v < 0 for v in vals):
            raise ScenarioError(f"[virus] {name} must be nonnegative")
    if s.initial.condition not in INITIAL_CONDITIONS:
        raise ScenarioError(f"[initial] condition must be one of {', '.join(INITIAL_CONDITIONS)}")
    initial_condition(s.initial.condition, n, s.initial.values)
    if "chain2n" in run.models:
        if n > run.chain_cap:
            raise ScenarioError(f"chain2n limited to n <= {run.chain_cap}, scenario has n = {n}")
        x = s.initial_bits()
        if np.any((x != 0) & (x != 1)):
            raise ScenarioError("chain2n needs a 0/1 initial condition")
    if "aggregate" in run.models and s.topology is None:
        raise ScenarioError("aggregate model needs a static topology")
    if "stochastic" in run.models:
        if s.noise is None:
            raise ScenarioError("stochastic model needs a [noise] section")
        if s.noise.kind not in ("generic", "ito"):
            raise ScenarioError("[noise] kind must be generic or ito")
        if len(s.noise.gains) not in (1, n):
            raise ScenarioError(f"[noise] gains needs 1 or {n} values")


# --- serialisation ------------------------------------------------------------


def _fmt(value, kind) -> str:
    if kind == "rows":
        return " ; ".join(", ".join(repr(float(x)) for x in row) for row in value)
    if kind in ("floats",):
        return ", ".join(repr(float(x)) for x in value)
    if kind in ("ints", "words"):
        return ", ".join(str(x) for x in value)
    if kind is float:
        return repr(float(value))
    return str(value)


def dump_scenario(s: Scenario) -> str:
    """Serialise with every default spelled out; ``parse_scenario`` inverts it."""
    lines = []
    for name, cls in _SECTIONS.items():
        part = getattr(s, name)
        if part is None:
            continue
        lines.append(f"[{name}]")
        for f in fields(cls):
            if f.name == "regions":
                for label, lo, hi in part.regions:
                    lines.append(f"region.{label} = {_fmt((lo, hi), 'rows')}")
                continue
            lines.append(f"{f.name} = {_fmt(getattr(part, f.name), _FIELD_KINDS[cls][f.name])}")
        lines.append("")
    return "\n".join(lines)


def with_overrides(s: Scenario, **run_fields) -> Scenario:
    """Copy of ``s`` with ``[run]`` fields replaced (``None`` values ignored)."""
    changes = {k: v for k, v in run_fields.items() if v is not None}
    if not changes:
        return s
    out = replace(s, run=replace(s.run, **changes))
    validate_scenario(out)
    return out
