"""Closed-loop self-optimizing multi-cell RAN resource controller.

A seedable desk-scale downlink simulator, a constraint-aware two-stage
resource solver, a KPI-driven reflection engine, and an iteration loop
with an optional human-in-the-loop gate, glued together by a canonical
JSON message format.
"""

__version__ = "0.1.0"
