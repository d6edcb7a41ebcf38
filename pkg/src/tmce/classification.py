"""Per-node verdicts for capped solutions."""

from enum import Enum


class NodeClass(str, Enum):
    FINITE = "FINITE"
    PLUS_INF = "PLUS_INF"
    MINUS_INF = "MINUS_INF"


INCONCLUSIVE = "INCONCLUSIVE"


def count_classes(labels) -> dict:
    """Counts per class; INCONCLUSIVE is always listed."""
    out = {c.value: 0 for c in NodeClass}
    out[INCONCLUSIVE] = 0
    for lab in labels:
        key = INCONCLUSIVE if lab == INCONCLUSIVE else NodeClass(lab).value
        out[key] += 1
    return out
