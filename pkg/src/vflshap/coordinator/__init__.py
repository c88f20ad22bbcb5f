from vflshap.coordinator.psi import IdIndex, build_id_index, compute_common_ids, count_permutation
from vflshap.coordinator.session import (
    Coordinator,
    PartySpec,
    Phase,
    SessionConfig,
    SessionState,
)

__all__ = [
    "Coordinator",
    "IdIndex",
    "PartySpec",
    "Phase",
    "SessionConfig",
    "SessionState",
    "build_id_index",
    "compute_common_ids",
    "count_permutation",
]
