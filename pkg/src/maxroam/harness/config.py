from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from maxroam.selection import SELECTION_KINDS
from maxroam.synth import TaskFamilySpec

MODES = ("mr", "fixed", "full_share", "disjoint", "stl")


class ExperimentConfig(BaseModel):
    """One experiment: data, network, partitioning and training settings.

    ``mode`` selects the baseline: ``fixed`` freezes the initial partitions,
    ``full_share`` trains the unmasked network, ``disjoint`` freezes partitions
    drawn with ``p = 0``, ``stl`` trains one unmasked network per task.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: str = "mr"
    p: float = Field(0.5, ge=0.0, le=1.0)
    delta: float = Field(0.2, gt=0.0)
    target_r: float = Field(1.0, ge=0.0, le=1.0)
    selection: str = "uniform"
    init_mode: str = "bernoulli"
    widths: list[int] = Field(default_factory=lambda: [64, 64])
    activation: str = "relu"
    epochs: int = Field(20, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-4, ge=0.0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seeds: list[int] = Field(default_factory=lambda: [0])
    checks: str = "release"
    dataset: TaskFamilySpec = Field(default_factory=TaskFamilySpec)

    @field_validator("mode")
    @classmethod
    def _mode(cls, v):
        if v not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        return v

    @field_validator("selection")
    @classmethod
    def _selection(cls, v):
        if v not in SELECTION_KINDS:
            raise ValueError(f"selection must be one of {SELECTION_KINDS}")
        return v

    @field_validator("checks")
    @classmethod
    def _checks(cls, v):
        if v not in ("release", "debug"):
            raise ValueError("checks must be 'release' or 'debug'")
        return v

    @field_validator("widths")
    @classmethod
    def _widths(cls, v):
        if not v or min(v) < 1:
            raise ValueError("widths must be a nonempty list of positive layer sizes")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v:
            raise ValueError("at least one seed is required")
        return v

    @property
    def n_tasks(self) -> int:
        return self.dataset.n_tasks

    @property
    def effective_p(self) -> float:
        return {"full_share": 1.0, "disjoint": 0.0}.get(self.mode, self.p)

    @property
    def roaming(self) -> bool:
        return self.mode == "mr"


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig(**json.loads(Path(path).read_text()))
