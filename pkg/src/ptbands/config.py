"""Run configuration: JSON schema, strict parsing, and canonical serialisation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import jsonschema

from .errors import ConfigError
from .experiment import InstrumentProfile
from .model import BlochModel, build_paper_model

_NUMBER = {"type": "number"}
_COEFFICIENT = {
    "oneOf": [
        _NUMBER,
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "const": _NUMBER,
                "params": {"type": "object", "additionalProperties": _NUMBER},
            },
        },
    ]
}
_TERM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["m", "n", "kind"],
    "properties": {
        "m": {"type": "integer"},
        "n": {"type": "integer"},
        "kind": {"enum": ["cos", "sin"]},
        "coefficient": _COEFFICIENT,
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ptbands run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "minProperties": 1,
            "maxProperties": 1,
            "additionalProperties": False,
            "properties": {
                "paper": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "lambda": _NUMBER,
                        "eta": _NUMBER,
                        "epsilon": _NUMBER,
                        "omega": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "custom": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "omega": {"type": "number", "exclusiveMinimum": 0},
                        "parameters": {"type": "object", "additionalProperties": _NUMBER},
                        "g1": {"type": "array", "items": _TERM},
                        "g2": {"type": "array", "items": _TERM},
                        "g3": {"type": "array", "items": _TERM},
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"nx": {"type": "integer", "minimum": 2}, "ny": {"type": "integer", "minimum": 2}},
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "required": ["parameter", "from", "to", "steps"],
            "properties": {
                "parameter": {"type": "string"},
                "from": _NUMBER,
                "to": _NUMBER,
                "steps": {"type": "integer", "minimum": 1},
            },
        },
        "spectroscopy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega21_over_2pi": {"type": "number", "exclusiveMinimum": 0},
                "omega10_over_2pi": {"type": "number", "exclusiveMinimum": 0},
                "t1": {"type": "number", "exclusiveMinimum": 0},
                "t2_star": {"type": "number", "exclusiveMinimum": 0},
                "noise_sigma": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "freq_start": {"type": "number"},
                "freq_stop": {"type": "number"},
                "freq_step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed_grid_n": {"type": "integer", "minimum": 32},
                "node_tol": {"type": "number", "exclusiveMinimum": 0},
                "loop_radius": {"type": "number", "exclusiveMinimum": 0},
                "symmetry_grid_n": {"type": "integer", "minimum": 8},
                "symmetry_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": ["string", "null"]},
                "save_traces": {"type": "boolean"},
            },
        },
    },
}


@dataclass(frozen=True)
class GridSpec:
    nx: int = 81
    ny: int = 81


@dataclass(frozen=True)
class ScanSpec:
    parameter: str
    start: float
    stop: float
    steps: int

    def values(self) -> list[float]:
        if self.steps == 1:
            return [self.start]
        width = (self.stop - self.start) / (self.steps - 1)
        return [self.start + width * i for i in range(self.steps)]

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "from": self.start, "to": self.stop, "steps": self.steps}


@dataclass(frozen=True)
class SpectroscopySpec:
    omega21_over_2pi: float = 6.8310
    omega10_over_2pi: float = 7.17155
    t1: float = 15.0
    t2_star: float = 4.3
    noise_sigma: float = 0.05
    seed: int = 0
    freq_start: float | None = None
    freq_stop: float | None = None
    freq_step: float | None = None

    def profile(self) -> InstrumentProfile:
        return InstrumentProfile(self.omega21_over_2pi, self.omega10_over_2pi, self.t1, self.t2_star, self.noise_sigma, self.seed)


@dataclass(frozen=True)
class AnalysisSpec:
    seed_grid_n: int = 64
    node_tol: float = 1e-8
    loop_radius: float = 0.3
    symmetry_grid_n: int = 64
    symmetry_tol: float = 1e-10


@dataclass(frozen=True)
class OutputSpec:
    directory: str | None = None
    save_traces: bool = False


@dataclass(frozen=True)
class RunConfig:
    model_source: str
    model: BlochModel
    grid: GridSpec = field(default_factory=GridSpec)
    scan: ScanSpec | None = None
    spectroscopy: SpectroscopySpec = field(default_factory=SpectroscopySpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        if self.model_source == "paper":
            t = self.model.parameter_table
            model = {"paper": {"lambda": t["lambda"], "eta": t["eta"], "epsilon": t["epsilon"], "omega": self.model.omega}}
        else:
            d = self.model.to_dict()
            model = {"custom": {k: d[k] for k in ("omega", "parameters", "g1", "g2", "g3")}}
        out = {
            "model": model,
            "grid": asdict(self.grid),
            "spectroscopy": {k: v for k, v in asdict(self.spectroscopy).items() if v is not None},
            "analysis": asdict(self.analysis),
            "output": asdict(self.output),
        }
        if self.scan is not None:
            out["scan"] = self.scan.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> RunConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return RunConfig(**values)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate(data) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if error is not None:
        raise ConfigError(error.message, _pointer(error.absolute_path))


def _build_model(model_data: dict) -> tuple[str, BlochModel]:
    (source, body), = model_data.items()
    if source == "paper":
        return source, build_paper_model(
            body.get("lambda", 0.0), body.get("eta", 0.0), body.get("epsilon", 0.0), body.get("omega", 10.0)
        )
    try:
        return source, BlochModel.from_dict(dict(body, name="custom"))
    except ValueError as exc:
        raise ConfigError(str(exc), "/model/custom") from exc


def from_dict(data) -> RunConfig:
    validate(data)
    source, model = _build_model(data["model"])
    missing = sorted(model.referenced_parameters() - set(model.parameter_table))
    if missing:
        raise ConfigError(f"parameter {missing[0]!r} has no value in 'parameters'", "/model/custom/parameters")

    scan = None
    if "scan" in data:
        s = data["scan"]
        if s["parameter"] not in model.parameter_table:
            raise ConfigError(f"scan parameter {s['parameter']!r} is not a parameter of the model", "/scan/parameter")
        scan = ScanSpec(s["parameter"], float(s["from"]), float(s["to"]), int(s["steps"]))

    def build(cls, key):
        body = data.get(key, {})
        return cls(**{k: (float(v) if isinstance(v, float) else v) for k, v in body.items()})

    spectroscopy = build(SpectroscopySpec, "spectroscopy")
    if spectroscopy.freq_start is not None and spectroscopy.freq_stop is not None and spectroscopy.freq_stop <= spectroscopy.freq_start:
        raise ConfigError("freq_stop must exceed freq_start", "/spectroscopy/freq_stop")
    return RunConfig(
        model_source=source,
        model=model,
        grid=build(GridSpec, "grid"),
        scan=scan,
        spectroscopy=spectroscopy,
        analysis=build(AnalysisSpec, "analysis"),
        output=build(OutputSpec, "output"),
    )


def parse_config(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return from_dict(data)
