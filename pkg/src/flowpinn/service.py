"""HTTP service exposing runs, evaluation, comparison, and diagnostics.

The CLI talks to this app in-process by default; pointing it at a remote
server changes nothing but the transport. Requests and responses are
pydantic models so payload validation errors surface as 422s, while
domain errors (bad config, missing artifacts) map to 400 and training
failures to 500.
"""

from __future__ import annotations

import math
import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import driver
from .config import PRESETS, load_config
from .errors import ConfigError, ContractViolation, TrainingError

app = FastAPI(title="flowpinn", version="0.1.0")


class RunRequest(BaseModel):
    config_path: str | None = None
    preset: str | None = None
    strategy: str | None = None
    seeds: list[int] | None = None
    overrides: list[str] = Field(default_factory=list)
    out: str


class RunSummary(BaseModel):
    seed: int
    run_dir: str
    final_loss: float
    grid_error: float | None = None
    rel_error: float | None = None
    last_r_k: float | None = None


class RunResponse(BaseModel):
    strategy: str
    runs: list[RunSummary]


class EvaluateRequest(BaseModel):
    run_dir: str


class EvaluateResponse(BaseModel):
    strategy: str
    seed: int
    problem: str
    dim: int
    grid_error: float | None = None
    rel_error: float | None = None
    residual_variance: float | None = None
    final_loss: float | None = None


class CompareRequest(BaseModel):
    run_dirs: list[str]
    out_csv: str | None = None


class CompareRow(BaseModel):
    strategy: str
    stage: int
    epoch: int
    n_interior: int
    loss: float | None = None
    grid_error: float | None = None
    rel_error: float | None = None
    residual_variance: float | None = None
    R_k: float | None = None


class CompareResponse(BaseModel):
    rows: list[CompareRow]


class DiagRequest(BaseModel):
    run_dir: str
    quad_grid: int = 100


class DiagResponse(BaseModel):
    kl: float | None
    c_hat: float | None
    tau1: float | None
    tau2: float | None
    defined: bool


def _nan_to_none(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok"}


@app.get("/presets")
def presets() -> dict:
    return {"presets": sorted(PRESETS)}


@app.post("/runs", response_model=RunResponse)
def runs(req: RunRequest) -> RunResponse:
    try:
        cfg = load_config(req.config_path, preset=req.preset, overrides=req.overrides,
                          strategy=req.strategy, seeds=req.seeds)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    summaries: list[RunSummary] = []
    for seed in cfg.seeds:
        run_dir = os.path.join(req.out, f"{cfg.strategy}_seed{seed}")
        try:
            record, _, _ = driver.run_one(cfg, seed, run_dir)
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except (TrainingError, ContractViolation) as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        last_epoch = record.epoch_rows[-1] if record.epoch_rows else {}
        last_stage = record.stage_rows[-1] if record.stage_rows else {}
        summaries.append(RunSummary(
            seed=seed,
            run_dir=run_dir,
            final_loss=last_epoch.get("loss", math.nan),
            grid_error=last_epoch.get("grid_error"),
            rel_error=last_epoch.get("rel_error"),
            last_r_k=last_stage.get("R_k"),
        ))
    return RunResponse(strategy=cfg.strategy, runs=summaries)


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(req: EvaluateRequest) -> EvaluateResponse:
    try:
        out = driver.evaluate_run(req.run_dir)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    except ContractViolation as exc:
        raise HTTPException(status_code=500, detail=str(exc))
    return EvaluateResponse(**out)


@app.post("/compare", response_model=CompareResponse)
def compare(req: CompareRequest) -> CompareResponse:
    try:
        rows = driver.compare(req.run_dirs, req.out_csv)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return CompareResponse(rows=[CompareRow(**row) for row in rows])


@app.post("/diag", response_model=DiagResponse)
def diag(req: DiagRequest) -> DiagResponse:
    try:
        d = driver.diag_run(req.run_dir, req.quad_grid)
    except ConfigError as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return DiagResponse(kl=_nan_to_none(d.kl), c_hat=_nan_to_none(d.c_hat),
                        tau1=_nan_to_none(d.tau1), tau2=_nan_to_none(d.tau2),
                        defined=d.defined)
