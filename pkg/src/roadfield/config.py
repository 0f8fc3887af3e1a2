"""Run configuration: strict JSON schema, defaults, invariants and round-trip serialization."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from typing import List

import jsonschema

from .analysis import METHODS, Numerics
from .errors import ConfigError, RoadfieldError
from .model import KINDS, ModelParams, ReactionSpec

_POS = {"type": "number", "exclusiveMinimum": 0}
_NUM = {"type": "number"}
_POS_LIST = {"type": "array", "items": _POS, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "reaction"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["D", "d", "nu", "mu"],
            "properties": {"D": _POS, "d": _POS, "nu": _POS, "mu": _POS,
                           "c": {"type": "number", "minimum": 0}, "ell": _POS},
        },
        "reaction": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "a0": _NUM, "a1": _NUM, "alpha": _POS, "M": _POS,
                "a_samples": {"type": "array", "items": _NUM, "minItems": 2},
                "expr": {"type": "string", "minLength": 1},
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hx": _POS, "hy": _POS, "dt": _POS, "tol": _POS,
                "maxiter": {"type": "integer", "minimum": 1},
                "sizes": _POS_LIST, "alphas": _POS_LIST, "t_max": _POS,
                "delta_sign": {"type": "number", "minimum": 0},
                "dyn_height": _POS,
                "periods_k": {"type": "integer", "minimum": 1},
                "lambda1_method": {"enum": list(METHODS) + [None]},
                "eigen_size": _POS,
                "stride": {"type": "integer", "minimum": 1},
                "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "emit_snapshots": {"type": "boolean"},
                "emit_matrices": {"type": "boolean"},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


@dataclass
class Outputs:
    directory: str = "roadfield-out"
    emit_snapshots: bool = False
    emit_matrices: bool = False


@dataclass
class RunConfig:
    """Everything one CLI invocation needs.

    ``eigen_size`` (default: last of ``sizes``), ``stride`` and
    ``snapshot_times`` extend the numerics block for the ``eigen`` and
    ``evolve`` subcommands.
    """

    model: ModelParams
    reaction: ReactionSpec
    numerics: Numerics
    outputs: Outputs = field(default_factory=Outputs)
    eigen_size: float = None
    stride: int = 100
    snapshot_times: List[float] = field(default_factory=list)

    def to_dict(self):
        num = self.numerics.to_dict()
        num.update(eigen_size=self.eigen_size, stride=self.stride, snapshot_times=list(self.snapshot_times))
        rx = self.reaction.to_dict()
        rx.pop("ell", None)
        return {
            "model": self.model.to_dict(),
            "reaction": rx,
            "numerics": num,
            "outputs": {f.name: getattr(self.outputs, f.name) for f in fields(Outputs)},
        }


def _pointer(err):
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        parts.append(missing[0] if missing else "")
    elif err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        parts.append(extra[0] if extra else "")
    return "/" + "/".join(parts)


def _increasing(name, values):
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} strictly increasing required", f"/numerics/{name}")


def parse_config(text: str) -> RunConfig:
    """Validate a JSON document and fill defaults.

    Defaults that depend on the period scale with ``ell`` (see
    ``Numerics.for_period``). Raises ``ConfigError`` carrying a JSON
    pointer for malformed JSON, schema violations and invariant failures.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", "") from exc
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.validator))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _pointer(err))

    try:
        model = ModelParams(**doc["model"])
    except RoadfieldError as exc:
        raise ConfigError(str(exc), "/model") from exc
    rx = dict(doc["reaction"])
    if "a_samples" in rx:
        rx["a_samples"] = tuple(float(s) for s in rx["a_samples"])
    try:
        reaction = ReactionSpec(ell=model.ell, **rx)
    except RoadfieldError as exc:
        raise ConfigError(str(exc), "/reaction") from exc

    num = dict(doc.get("numerics", {}))
    eigen_size = num.pop("eigen_size", None)
    stride = num.pop("stride", 100)
    snaps = [float(t) for t in num.pop("snapshot_times", [])]
    for key in ("sizes", "alphas"):
        if key in num:
            num[key] = [float(s) for s in num[key]]
            _increasing(key, num[key])
    for key in ("hx", "hy", "dt", "tol", "t_max", "delta_sign", "dyn_height", "eigen_size"):
        if key in num:
            num[key] = float(num[key])
    numerics = Numerics.for_period(model.ell, **num)
    if len(numerics.sizes) < 3:
        raise ConfigError("at least three sizes are needed for a sweep", "/numerics/sizes")
    _increasing("snapshot_times", snaps)

    outputs = Outputs(**doc.get("outputs", {}))
    return RunConfig(model, reaction, numerics, outputs,
                     None if eigen_size is None else float(eigen_size), int(stride), snaps)


def serialize(config: RunConfig) -> str:
    """Canonical JSON text; ``parse_config(serialize(c)) == c``."""
    doc = config.to_dict()
    if doc["numerics"]["eigen_size"] is None:
        del doc["numerics"]["eigen_size"]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical config, ignoring the output directory."""
    doc = json.loads(serialize(config))
    doc["outputs"].pop("directory")
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def check_writable(directory: str) -> None:
    """Create ``directory`` if needed and confirm it accepts files."""
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}", "/outputs/directory") from exc
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"output directory {directory!r} is not writable", "/outputs/directory")
