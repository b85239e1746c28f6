"""Optional external advisor over HTTP.

The advisor is strictly advisory: its reply passes through the same
validation gate as the rule engine, bad entries are dropped with a log
line, and any transport failure falls back to the built-in policies.
"""

from __future__ import annotations

import logging

import httpx

from .reflector import (
    MAX_SUGGESTIONS,
    ReflectionContext,
    ReflectionSuggestion,
    _effect_priority,
    reflect,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 30.0


def context_payload(context: ReflectionContext) -> dict:
    return {
        "schema_version": "1",
        "context": {
            "scenario": context.spec.to_dict(),
            "history": [
                {"constraints": c.to_dict(), "kpis": k.to_dict()}
                for c, k in context.history
            ],
            "qos_floor_mode": context.qos_floor_mode,
            "load_level": context.load_level,
        },
    }


def external_advise(
    context: ReflectionContext,
    endpoint: str,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> list[ReflectionSuggestion]:
    """Ask an external endpoint for suggestions; fall back to reflect().

    Wire contract: POST {schema_version, context} -> {suggestions: [...]}.
    """
    try:
        resp = httpx.post(endpoint, json=context_payload(context), timeout=timeout_s)
        resp.raise_for_status()
        body = resp.json()
    except Exception as e:  # network failure, timeout, bad JSON: all non-fatal
        log.warning("external advisor unavailable (%s); using rule engine", e)
        return reflect(context)

    accepted: list[ReflectionSuggestion] = []
    for raw in body.get("suggestions", []) if isinstance(body, dict) else []:
        try:
            s = ReflectionSuggestion.from_dict({**raw, "policy_source": "external"})
            accepted.append(s)
        except Exception as e:
            log.warning("dropped invalid advisor suggestion %r: %s", raw, e)
    if not accepted:
        log.warning("external advisor returned no usable suggestions; using rule engine")
        return reflect(context)

    merged = accepted + reflect(context)
    seen = set()
    unique = []
    for s in merged:
        key = (s.kind, s.target_ue, s.target_cell, s.value)
        if key in seen:
            continue
        seen.add(key)
        unique.append(s)
    order = {e: i for i, e in enumerate(_effect_priority(context))}
    unique.sort(key=lambda s: (order[s.expected_effect], s.policy_source != "external"))
    return unique[:MAX_SUGGESTIONS]
