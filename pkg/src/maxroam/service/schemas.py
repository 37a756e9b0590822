"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field

from maxroam.harness.config import ExperimentConfig


class LayerSnapshot(BaseModel):
    layer: int = 0
    S: int = Field(..., ge=1)
    T: int = Field(..., ge=1)
    mask: list[list[int]]
    visited: list[list[int]]
    steps_done: int = 0
    task_steps: Optional[list[int]] = None


class PartitionSnapshot(BaseModel):
    p: float = Field(..., ge=0.0, le=1.0)
    layers: list[LayerSnapshot]
    initial_sizes: list[list[int]] = Field(default_factory=list)


class PartitionInitRequest(BaseModel):
    widths: list[int]
    n_tasks: int = Field(..., ge=1)
    p: float = Field(..., ge=0.0, le=1.0)
    seed: int = 0
    mode: str = "bernoulli"


class PartitionStepRequest(BaseModel):
    snapshot: PartitionSnapshot
    selection: str = "uniform"
    seed: int = 0
    target_r: float = Field(1.0, ge=0.0, le=1.0)
    weights: Optional[list[list[list[float]]]] = None


class SwapOut(BaseModel):
    layer: int
    task: int
    i_minus: Optional[int]
    i_plus: Optional[int]
    complete: bool


class PartitionStepResponse(BaseModel):
    snapshot: PartitionSnapshot
    swaps: list[SwapOut]
    update_ratios: list[float]
    overlap: list[list[list[int]]]


class RunRequest(BaseModel):
    config: ExperimentConfig
    seed: Optional[int] = None


class RunResponse(BaseModel):
    metrics_csv: str
    summary: dict[str, Any]


class SweepRequest(BaseModel):
    config: ExperimentConfig
    grid: dict[str, list[Any]]
    workers: int = Field(1, ge=1)


class SweepResponse(BaseModel):
    sweep_csv: str
    aggregate: list[dict[str, Any]]
    failed: bool


class VerifyRequest(BaseModel):
    S: int = Field(20, ge=1)
    T: int = Field(3, ge=1)
    p_list: list[float] = Field(default_factory=lambda: [0.3, 0.5, 0.7])
    runs: int = Field(10_000, ge=1000)
    seed: int = 0
    tol: float = Field(0.02, gt=0.0)


class CheckOut(BaseModel):
    property: str
    params: dict[str, Any]
    measured: float
    tolerance: float
    passed: bool
    verdict: str
    detail: str = ""


class VerifyResponse(BaseModel):
    passed: bool
    checks: list[CheckOut]


class PlotRequest(BaseModel):
    csv: str
    kind: str


class MessageResponse(BaseModel):
    message: str
    version: str
