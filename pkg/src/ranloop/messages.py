"""Canonical JSON message format shared by all loop components.

Every inter-component message is an envelope
{schema_version, msg_type, run_id, iteration, payload} with snake_case
fields.  Serialization is canonical (sorted keys, minimal separators) so
hashes of equal values are stable across processes and runs.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

SCHEMA_VERSION = "1"

MSG_TYPES = (
    "scenario",
    "solve_request",
    "plan",
    "kpi_report",
    "reflection",
    "decision",
)

ENVELOPE_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "msg_type", "run_id", "iteration", "payload"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "msg_type": {"enum": list(MSG_TYPES)},
        "run_id": {"type": "string", "minLength": 1},
        "iteration": {"type": "integer", "minimum": 0},
        "payload": {"type": "object"},
    },
    "additionalProperties": False,
}


class MessageError(ValueError):
    """Malformed or schema-violating message."""


def canonical_json(obj) -> str:
    """Canonical serialization: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def hash64(obj) -> str:
    """Stable 64-bit hash (hex) of an object's canonical serialization."""
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:16]


def make_message(msg_type: str, run_id: str, iteration: int, payload: dict) -> dict:
    msg = {
        "schema_version": SCHEMA_VERSION,
        "msg_type": msg_type,
        "run_id": run_id,
        "iteration": iteration,
        "payload": payload,
    }
    validate_message(msg)
    return msg


def validate_message(msg: dict) -> None:
    try:
        jsonschema.validate(msg, ENVELOPE_SCHEMA)
    except jsonschema.ValidationError as e:
        raise MessageError(f"invalid message: {e.message}") from None


def serialize_message(msg: dict) -> str:
    validate_message(msg)
    return canonical_json(msg)


def parse_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise MessageError(f"malformed message line: {e}") from None
    validate_message(msg)
    return msg
