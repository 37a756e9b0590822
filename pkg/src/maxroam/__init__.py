"""Multi-task parameter partitioning with roaming channel masks."""

from maxroam.partition import (
    COMPLETE,
    InvariantViolation,
    LayerPartition,
    PartitionError,
    PartitionSet,
    RoamingSchedule,
    UpdateOutcome,
    apply_update_step,
    init_partition,
    overlap_matrix,
    plan_duration,
    update_ratio,
    visit_probability,
)
from maxroam.selection import (
    CosineSelector,
    SelectionError,
    UniformSelector,
    cosine_select,
    cosine_similarity,
    make_selector,
    uniform_select,
)

__version__ = "0.1.0"
