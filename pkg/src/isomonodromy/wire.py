"""JSON and CSV wire formats.

Complex numbers travel as ``[re, im]``, matrices as row-major nested lists
and paths as lists of points of C^N. Every document carries
``"schema": "1"`` and unknown keys are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable

import jsonschema
import numpy as np

from .errors import InputError

SCHEMA_VERSION = "1"

_COMPLEX = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_VECTOR = {"type": "array", "items": _COMPLEX, "minItems": 1}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _COMPLEX, "minItems": 1},
           "minItems": 1}
_MATRICES = {"type": "array", "items": _MATRIX, "minItems": 1}
_PATH = {"type": "array", "items": _VECTOR, "minItems": 1}


def _obj(properties: dict, required: Iterable[str] = (), **extra) -> dict:
    out = {"type": "object", "properties": properties, "required": list(required),
           "additionalProperties": False}
    out.update(extra)
    return out


_SYSTEM = _obj({"poles": _VECTOR, "residues": _MATRICES}, ["poles", "residues"])
_SPECIAL_INIT = _obj({"G": _MATRIX, "e": _VECTOR, "theta": _MATRIX, "projectors": _MATRICES,
                      "D": _COMPLEX}, ["G", "e", "theta", "projectors"])
_RANDOM_INIT = _obj({"N": {"type": "integer", "minimum": 1, "maximum": 8}, "D": _COMPLEX},
                    ["N"])
_VERSION = {"const": SCHEMA_VERSION}
_STEP_CTRL = _obj({"rtol": {"type": "number", "exclusiveMinimum": 0},
                   "atol": {"type": "number", "exclusiveMinimum": 0},
                   "max_step": {"type": "number", "exclusiveMinimum": 0}})
_INIT_CHOICE = [{"required": ["special_init"]}, {"required": ["random_special_init"]}]

SCHEMAS = {
    "validate": _obj({"schema": _VERSION, "special_init": _SPECIAL_INIT,
                      "random_special_init": _RANDOM_INIT}, ["schema"], oneOf=_INIT_CHOICE),
    "evolve": _obj({"schema": _VERSION, "system": _SYSTEM, "path": _PATH},
                   ["schema", "system", "path"]),
    "monodromy": _obj({"schema": _VERSION, "system": _SYSTEM, "base": _COMPLEX,
                       "loop": {"type": "array", "items": _COMPLEX, "minItems": 3}},
                      ["schema", "system"],
                      dependentRequired={"loop": ["base"], "base": ["loop"]}),
    "frobenius": _obj({"schema": _VERSION, "special_init": _SPECIAL_INIT,
                       "random_special_init": _RANDOM_INIT, "base": _VECTOR, "path": _PATH,
                       "n": {"type": "integer"},
                       "checks": {"type": "boolean"}},
                      ["schema", "base"], oneOf=_INIT_CHOICE),
    "tau": _obj({"schema": _VERSION, "system": _SYSTEM, "special_init": _SPECIAL_INIT,
                 "path": _PATH, "n": {"type": "integer"}},
                ["schema", "path"],
                oneOf=[{"required": ["system"]}, {"required": ["special_init"]}]),
    "scan-poles": _obj({"schema": _VERSION, "system": _SYSTEM, "path": _PATH,
                        "samples": {"type": "integer", "minimum": 2},
                        "detour_radius": {"type": "number", "exclusiveMinimum": 0}},
                       ["schema", "system", "path", "samples"]),
    "birkhoff": _obj({"schema": _VERSION,
                      "series": _obj({"min_degree": {"type": "integer"}, "coeffs": _MATRICES},
                                     ["min_degree", "coeffs"]),
                      "base": _COMPLEX,
                      "method": {"enum": ["column_reduction", "near_identity"]}},
                     ["schema", "series"]),
    "levelt": _obj({"schema": _VERSION, "b00_series": _MATRICES,
                    "order": {"type": "integer", "minimum": 0, "maximum": 64}},
                   ["schema", "b00_series", "order"]),
}


for _schema in SCHEMAS.values():
    _schema["properties"]["step_ctrl"] = _STEP_CTRL


def validate_document(doc, subcommand: str) -> None:
    """Check ``doc`` against the schema of ``subcommand``; raise InputError."""
    try:
        schema = SCHEMAS[subcommand]
    except KeyError:
        raise InputError(f"unknown subcommand {subcommand!r}") from None
    validator = jsonschema.Draft202012Validator(schema)
    # unknown keys first: they usually explain the other errors
    errors = sorted(validator.iter_errors(doc),
                    key=lambda e: (e.validator != "additionalProperties",
                                   [str(p) for p in e.absolute_path]))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InputError(f"{subcommand} input at {where}: {err.message}")


def load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"input file {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"input file {path!r} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# complex arrays
# ---------------------------------------------------------------------------

def decode(obj) -> np.ndarray:
    """Nested lists ending in ``[re, im]`` pairs to a complex array."""
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1:] != (2,):
        raise InputError("complex values must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def decode_complex(obj) -> complex:
    return complex(obj[0], obj[1])


def encode(arr) -> list:
    """Complex array (any rank) to nested lists of ``[re, im]``."""
    a = np.asarray(arr, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def encode_complex(z: complex) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _strict(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _strict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_strict(v) for v in obj]
    if isinstance(obj, np.generic):
        return _strict(obj.item())
    return obj


def dumps(doc) -> str:
    """Deterministic JSON text; floats use the shortest round-trip repr and
    non-finite values become ``null``."""
    return json.dumps(_strict(doc), indent=2, allow_nan=False) + "\n"


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def format_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def csv_text(columns: Iterable[str], rows: Iterable[Iterable]) -> str:
    """CSV with ',' separators, LF endings and 17 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(columns))
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()
