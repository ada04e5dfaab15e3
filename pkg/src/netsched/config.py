"""JSON run configuration: plants, schedule parameters, certificates, options.

Matrices are row-major nested arrays written at full precision; probabilities
and the grid step are strings holding exact rationals ("1/2", "0.25").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .certify import DEFAULT_KAPPA, StabilityCertificate
from .model import ModelError, NcsConfig, PlantModel
from .params import ScheduleParameters

RATIONAL = r"^\s*[0-9]+(\.[0-9]+)?(\s*/\s*[0-9]+)?\s*$"

_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
_rational = {"type": "string", "pattern": RATIONAL}

SCHEMA = {
    "type": "object",
    "required": ["M", "plants"],
    "additionalProperties": False,
    "properties": {
        "M": {"type": "integer"},
        "plants": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["index", "A", "B"],
                "additionalProperties": False,
                "properties": {"index": {"type": "integer"}, "A": _matrix, "B": _matrix, "K": _matrix},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["partition", "probabilities"],
            "additionalProperties": False,
            "properties": {
                "partition": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
                "probabilities": {"type": "array", "items": _rational},
            },
        },
        "certificates": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["plant", "p", "P_s", "P_u"],
                "additionalProperties": False,
                "properties": {
                    "plant": {"type": "integer"},
                    "p": _rational,
                    "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "P_s": _matrix,
                    "P_u": _matrix,
                    "Y": _matrix,
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kappa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "h": _rational,
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "trials": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "output": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    kappa: float = DEFAULT_KAPPA
    h: Fraction = Fraction(1, 10)


@dataclass(frozen=True)
class SimulationOptions:
    horizon: int = 1000
    trials: int = 1000
    seed: int = 0


@dataclass(frozen=True, eq=False)
class RunConfig:
    ncs: NcsConfig
    params: Optional[ScheduleParameters] = None
    certificates: dict = field(default_factory=dict)
    Y: dict = field(default_factory=dict)
    solver: SolverOptions = field(default_factory=SolverOptions)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    output: Optional[str] = None

    def replace(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return to_dict(self) == to_dict(other)


def parse_rational(text: str, where: str = "value") -> Fraction:
    if not isinstance(text, str):
        raise ConfigError(f"{where}: expected a rational string like '1/2', got {text!r}")
    try:
        return Fraction(text.replace(" ", ""))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: not a rational number: {text!r}") from None


def _mat(a) -> list:
    return [[float(x) for x in row] for row in np.atleast_2d(np.asarray(a, dtype=float))]


def to_dict(run: RunConfig) -> dict:
    """Canonical JSON-ready form."""
    out = {
        "M": run.ncs.M,
        "plants": [],
    }
    for p in run.ncs.plants:
        entry = {"index": p.index, "A": _mat(p.A), "B": _mat(p.B)}
        if p.K is not None:
            entry["K"] = _mat(p.K)
        out["plants"].append(entry)
    if run.params is not None:
        out["schedule"] = {
            "partition": run.params.partition.as_lists(),
            "probabilities": run.params.probabilities.as_strings(),
        }
    if run.certificates:
        certs = []
        for i in sorted(run.certificates):
            c = run.certificates[i]
            entry = {"plant": i, "p": str(c.p), "kappa": float(c.kappa), "P_s": _mat(c.P_s), "P_u": _mat(c.P_u)}
            if i in run.Y:
                entry["Y"] = _mat(run.Y[i])
            certs.append(entry)
        out["certificates"] = certs
    out["solver"] = {"kappa": float(run.solver.kappa), "h": str(run.solver.h)}
    out["simulation"] = {
        "horizon": run.simulation.horizon,
        "trials": run.simulation.trials,
        "seed": run.simulation.seed,
    }
    if run.output is not None:
        out["output"] = run.output
    return out


def dumps(run: RunConfig) -> str:
    return json.dumps(to_dict(run), indent=2) + "\n"


def from_dict(data: dict, source: str = "<config>") -> RunConfig:
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = "/".join(str(x) for x in e.absolute_path) or "<root>"
            msg = e.message
            if e.validator == "pattern":
                msg = f"not a rational string: {e.instance!r}"
            lines.append(f"{source}: field {path}: {msg}")
        raise ConfigError("\n".join(lines))

    try:
        plants = [PlantModel(p["index"], p["A"], p["B"], p.get("K")) for p in data["plants"]]
        ncs = NcsConfig(plants=tuple(plants), M=data["M"])
    except ModelError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    params = None
    if "schedule" in data:
        sched = data["schedule"]
        probs = [parse_rational(s, f"schedule/probabilities/{k}") for k, s in enumerate(sched["probabilities"])]
        try:
            params = ScheduleParameters.from_lists(sched["partition"], probs)
        except ValueError as exc:
            raise ConfigError(f"{source}: field schedule: {exc}") from None
        if params.partition.N != ncs.N or params.partition.M != ncs.M:
            raise ConfigError(f"{source}: field schedule/partition: does not split {ncs.N} plants into blocks of {ncs.M}")

    certs, Ys = {}, {}
    for k, c in enumerate(data.get("certificates", [])):
        i = c["plant"]
        try:
            certs[i] = StabilityCertificate(
                parse_rational(c["p"], f"certificates/{k}/p"), c["P_s"], c["P_u"], c.get("kappa", DEFAULT_KAPPA)
            )
        except (ModelError, ValueError) as exc:
            raise ConfigError(f"{source}: field certificates/{k}: {exc}") from None
        if "Y" in c:
            Ys[i] = np.array(c["Y"], dtype=float)

    solver = data.get("solver", {})
    sim = data.get("simulation", {})
    return RunConfig(
        ncs=ncs,
        params=params,
        certificates=certs,
        Y=Ys,
        solver=SolverOptions(
            kappa=float(solver.get("kappa", DEFAULT_KAPPA)),
            h=parse_rational(solver.get("h", "1/10"), "solver/h"),
        ),
        simulation=SimulationOptions(**sim),
        output=data.get("output"),
    )


def loads(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(data, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, str(path))


def save_config(run: RunConfig, path) -> None:
    Path(path).write_text(dumps(run))
