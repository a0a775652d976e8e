"""Multi-scale coarse graining: pluggable per-box event families, the
deterministic segment-descent interface builder, separation certificates,
and desk-scale verification of the combinatorial lemmas."""

from .events import (
    AdmissibleEvents,
    CoarseContext,
    audit_admissibility,
    dense_clusters,
    diam_threshold,
    psi_bad,
    psi_very_bad,
    subcritical_events,
    supercritical_events,
    xi_bad,
)
from .interface import (
    Interface,
    Schedule,
    build_interface,
    interface_at_scale,
    separating_check,
)
from .local import (
    GRADIENT_CONSTANT,
    column_capacity_check,
    conf_check,
    connected_columns_check,
    nslu_check,
    psi_to_phi_audit,
)

__all__ = [
    "AdmissibleEvents",
    "CoarseContext",
    "GRADIENT_CONSTANT",
    "Interface",
    "Schedule",
    "audit_admissibility",
    "build_interface",
    "column_capacity_check",
    "conf_check",
    "connected_columns_check",
    "dense_clusters",
    "diam_threshold",
    "interface_at_scale",
    "nslu_check",
    "psi_bad",
    "psi_to_phi_audit",
    "psi_very_bad",
    "separating_check",
    "subcritical_events",
    "supercritical_events",
    "xi_bad",
]
