from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response

from maxroam import __version__
from maxroam.harness.experiment import run_experiment, sweep
from maxroam.harness.plot import render
from maxroam.harness.verify import verify
from maxroam.partition import PartitionSet, overlap_matrix
from maxroam.selection import make_selector
from maxroam.service.schemas import (
    MessageResponse,
    PartitionInitRequest,
    PartitionSnapshot,
    PartitionStepRequest,
    PartitionStepResponse,
    PlotRequest,
    RunRequest,
    RunResponse,
    SwapOut,
    SweepRequest,
    SweepResponse,
    VerifyRequest,
    VerifyResponse,
)

app = FastAPI(title="maxroam", version=__version__)


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=400, detail=f"{type(exc).__name__}: {exc}")


@app.get("/health", response_model=MessageResponse)
def health():
    return MessageResponse(message="ok", version=__version__)


@app.post("/partitions/init", response_model=PartitionSnapshot)
def partitions_init(req: PartitionInitRequest):
    try:
        parts = PartitionSet.init(req.widths, req.n_tasks, req.p, np.random.default_rng(req.seed), req.mode)
    except ValueError as exc:
        raise _bad_request(exc)
    return parts.to_dict()


@app.post("/partitions/step", response_model=PartitionStepResponse)
def partitions_step(req: PartitionStepRequest):
    try:
        parts = PartitionSet.from_dict(req.snapshot.model_dump())
        selector = make_selector(req.selection, np.random.default_rng(req.seed))
        weights = None if req.weights is None else [np.asarray(w) for w in req.weights]
        outcomes = parts.step(selector, req.target_r, weights)
        parts.check_invariants()
    except (ValueError, IndexError) as exc:
        raise _bad_request(exc)
    swaps = [
        SwapOut(layer=d, task=t, i_minus=o.i_minus, i_plus=o.i_plus, complete=o.complete)
        for d, row in enumerate(outcomes)
        for t, o in enumerate(row)
    ]
    return PartitionStepResponse(
        snapshot=parts.to_dict(),
        swaps=swaps,
        update_ratios=parts.update_ratios(),
        overlap=[overlap_matrix(layer).tolist() for layer in parts.layers],
    )


@app.post("/run", response_model=RunResponse)
def run(req: RunRequest):
    try:
        result = run_experiment(req.config, seeds=None if req.seed is None else [req.seed])
    except ValueError as exc:
        raise _bad_request(exc)
    return RunResponse(metrics_csv=result.metrics_csv, summary=result.summary)


@app.post("/sweep", response_model=SweepResponse)
def run_sweep(req: SweepRequest):
    try:
        result = sweep(req.config, req.grid, workers=req.workers)
    except ValueError as exc:
        raise _bad_request(exc)
    return SweepResponse(sweep_csv=result.csv, aggregate=result.aggregate(), failed=result.failed)


@app.post("/verify", response_model=VerifyResponse)
def run_verify(req: VerifyRequest):
    try:
        report = verify(req.S, req.T, tuple(req.p_list), req.runs, req.seed, req.tol)
    except ValueError as exc:
        raise _bad_request(exc)
    return report.to_dict()


@app.post("/plot")
def run_plot(req: PlotRequest):
    try:
        svg = render(req.csv, req.kind)
    except ValueError as exc:
        raise _bad_request(exc)
    return Response(content=svg, media_type="image/svg+xml")
