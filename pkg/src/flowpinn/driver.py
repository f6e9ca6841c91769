"""Adaptive-sampling outer loops, evaluation metrics, and run artifacts.

Strategies:
  uniform  one training phase on a fixed uniform set, epoch budget
           matched to the adaptive runs (stages * N_e)
  das_r    per stage: train surrogate (importance-weighted from stage 1),
           fit the flow to the squared residual by importance-sampled
           cross entropy, replace the interior set with flow samples
  das_g    per stage: train surrogate on the plain loss, fit the flow
           (cross entropy first, reverse KL on later stages when
           flow_objective=auto), append flow samples to the interior set
  rar      per stage: append the top-|r| points from a uniform candidate
           pool of 10x the appended count

Per-epoch and per-stage metrics are collected in a RunRecord and written
to a fixed-format metrics.csv. R_k is the importance-weighted interior
loss mean(r^2/q) over the stage's final training set, with q the stored
proposal density (the uniform density when the set was drawn uniformly),
so values are comparable across stages within a run.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig, stage_sizes, write_config_doc
from .errors import ConfigError, ContractViolation, TrainingError
from .flows import CutoffFn, FlowModel, init_flow, partition_samples, sample_with_density
from .nets import SurrogateNet, eval_batch, init_net, save_net
from .problems import PdeProblem, make_problem, residual_batch, sample_boundary, sample_interior
from .training import OptimizerState, TrainingSet, init_adam, train_flow, train_surrogate

_EVAL_CHUNK = 4096

METRIC_COLUMNS = ("stage", "epoch", "loss", "grid_error", "rel_error",
                  "residual_variance", "R_k", "kl", "tau1", "tau2", "c_hat")


# ---------------------------------------------------------------------------
# metrics


def _chunked_eval(net: SurrogateNet, X: np.ndarray) -> np.ndarray:
    if hasattr(net, "exact"):  # analytic stand-in accepted, as in residual_batch
        return np.asarray(net.exact(X), dtype=np.float64)
    parts = [eval_batch(net, X[i : i + _EVAL_CHUNK]) for i in range(0, X.shape[0], _EVAL_CHUNK)]
    return np.concatenate(parts)


def residual_on_points(problem: PdeProblem, net: SurrogateNet, X: np.ndarray,
                       chunk: int = _EVAL_CHUNK) -> np.ndarray:
    parts = [np.asarray(residual_batch(problem, net, X[i : i + chunk]))
             for i in range(0, X.shape[0], chunk)]
    return np.concatenate(parts)


def tensor_grid(bounds: np.ndarray, n_per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def origin_grid(problem: PdeProblem, n_t: int, halfwidth: float = 0.1) -> np.ndarray:
    bounds = np.array([[-halfwidth, halfwidth]] * problem.dim)
    return tensor_grid(bounds, n_t)


def grid_mse(net: SurrogateNet, problem: PdeProblem, grid_spec: int = 256) -> float:
    """Mean squared error on a full-domain tensor grid (small d only)."""
    if problem.dim > 3:
        raise ConfigError(f"full-domain grid not supported for d={problem.dim}")
    if grid_spec ** problem.dim > 20_000_000:
        raise ConfigError("grid too large")
    X = tensor_grid(problem.box, grid_spec)
    diff = _chunked_eval(net, X) - np.asarray(problem.exact(X))
    return float(np.mean(diff * diff))


def relative_error(net: SurrogateNet, problem: PdeProblem, n_t: int = 9,
                   halfwidth: float = 0.1) -> float:
    """||u_net - u||_2 / ||u||_2 over a tensor grid around the origin."""
    if n_t ** problem.dim > 20_000_000:
        raise ConfigError("grid too large")
    X = origin_grid(problem, n_t, halfwidth)
    u = np.asarray(problem.exact(X))
    denom = np.linalg.norm(u)
    if denom == 0.0:
        raise ContractViolation("exact solution vanishes on the evaluation grid")
    return float(np.linalg.norm(_chunked_eval(net, X) - u) / denom)


def residual_variance(net: SurrogateNet, problem: PdeProblem, eval_points) -> float:
    X = np.asarray(eval_points, dtype=np.float64)
    if X.shape[0] < 2:
        raise ContractViolation("need at least two evaluation points")
    r = residual_on_points(problem, net, X)
    return float(np.var(r, ddof=1))


@dataclass
class KlDiagnostic:
    kl: float
    c_hat: float
    tau1: float
    tau2: float
    defined: bool = True


def kl_diagnostic(flow: FlowModel, net: SurrogateNet, problem: PdeProblem,
                  quad_grid: int = 100) -> KlDiagnostic:
    """Quadrature KL(p* || p_hat) on the padded box, plus c_hat and the
    min/max of the importance weights r^2/p_hat (d <= 2 only)."""
    if problem.dim > 2:
        raise ConfigError("quadrature diagnostic supports d <= 2 only")
    bb = flow.bm.b_bounds()
    # cell midpoints keep every node strictly inside B
    axes = [lo + (hi - lo) * (np.arange(quad_grid) + 0.5) / quad_grid for lo, hi in bb]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    cell = float(np.prod((bb[:, 1] - bb[:, 0]) / quad_grid))
    r = residual_on_points(problem, net, X)
    h = np.asarray(CutoffFn(flow.bm)(X))
    logq = np.asarray(flow.log_density(X))
    r2h = r * r * h
    mass = float(np.sum(r2h) * cell)
    if mass <= 0.0:
        return KlDiagnostic(math.nan, math.nan, math.nan, math.nan, defined=False)
    p_star = r2h / mass
    pos = p_star > 0.0
    kl = float(np.sum(p_star[pos] * (np.log(p_star[pos]) - logq[pos])) * cell)
    c_hat = 1.0 / float(np.sum(r * r) * cell)
    # the flow density can underflow to 0 at nodes far outside its mass;
    # tau2 = inf there is the honest value, not an error
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        w = r * r / np.exp(logq)
    return KlDiagnostic(kl, c_hat, float(w.min()), float(w.max()))


# ---------------------------------------------------------------------------
# run records


@dataclass
class RunRecord:
    strategy: str
    seed: int
    epoch_rows: list = field(default_factory=list)  # dicts keyed by METRIC_COLUMNS
    stage_rows: list = field(default_factory=list)
    n_interior_by_stage: list = field(default_factory=list)

    def rows(self) -> list[dict]:
        merged = self.epoch_rows + self.stage_rows
        merged.sort(key=lambda row: (row["epoch"], 1 if row.get("R_k") is not None else 0,
                                     row["stage"]))
        return merged


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{float(x):.17g}"


def write_metrics_csv(record: RunRecord, path) -> None:
    lines = [",".join(METRIC_COLUMNS)]
    for row in record.rows():
        lines.append(",".join(_fmt(row.get(col)) for col in METRIC_COLUMNS))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_samples_csv(points: np.ndarray, path) -> None:
    d = points.shape[1]
    lines = [",".join(f"x{i}" for i in range(d))]
    for row in points:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# shared run plumbing


class _RunContext:
    """Problem, models, RNG streams, and metric recording for one run."""

    def __init__(self, cfg: RunConfig, seed: int, out_dir=None) -> None:
        self.cfg = cfg
        self.seed = int(seed)
        self.out_dir = out_dir
        p = cfg.problem
        self.problem = make_problem(p.name, dim=p.dim, r_c=p.r_c, box=p.box)
        ss = np.random.SeedSequence(self.seed)
        (s_net, s_flow, s_points, s_train, s_ftrain, s_draw) = ss.spawn(6)
        self.rng_points = np.random.default_rng(s_points)
        self.rng_train = np.random.default_rng(s_train)
        self.rng_ftrain = np.random.default_rng(s_ftrain)
        self.rng_draw = np.random.default_rng(s_draw)
        sizes = [self.problem.dim] + [cfg.net.width] * cfg.net.hidden + [1]
        self.net = init_net(sizes, _seed_int(s_net))
        self.flow: FlowModel | None = None
        self._flow_seed = _seed_int(s_flow)
        self.cutoff = None
        self.record = RunRecord(cfg.strategy, self.seed)
        self.global_epoch = 0
        self.uniform_density = 1.0 / self.problem.volume

    # -- models ---------------------------------------------------------------

    def make_flow(self) -> FlowModel:
        f = self.cfg.flow
        self.flow = init_flow(self.problem.box, f.layers, f.width, self._flow_seed,
                              K=f.blocks, delta=f.delta, scale=f.scale, clamp=f.clamp)
        self.cutoff = CutoffFn(self.flow.bm)
        return self.flow

    def initial_sets(self, n_interior: int, tag_density: bool) -> TrainingSet:
        Xi = sample_interior(self.problem, n_interior, self.rng_points)
        Xb = sample_boundary(self.problem, self.cfg.train.n_boundary, self.rng_points)
        q = np.full(n_interior, self.uniform_density) if tag_density else None
        return TrainingSet(Xi, Xb, stage=0, proposal_density=q)

    # -- metric recording -------------------------------------------------------

    def _error_snapshot(self, net: SurrogateNet) -> dict:
        ev = self.cfg.eval
        out: dict = {"grid_error": None, "rel_error": None}
        if ev.kind == "grid":
            out["grid_error"] = grid_mse(net, self.problem, ev.grid_n)
        else:
            out["rel_error"] = relative_error(net, self.problem, ev.origin_n, ev.origin_halfwidth)
        return out

    def epoch_callback(self, stage: int, epochs_in_stage: int):
        ev_every = max(1, self.cfg.eval.every)

        def cb(epoch_in_stage: int, net: SurrogateNet, mean_loss: float) -> None:
            row = {"stage": stage, "epoch": self.global_epoch, "loss": mean_loss,
                   "grid_error": None, "rel_error": None}
            last = epoch_in_stage == epochs_in_stage - 1
            if self.global_epoch % ev_every == 0 or last:
                row.update(self._error_snapshot(net))
            self.record.epoch_rows.append(row)
            self.global_epoch += 1

        return cb

    def stage_summary(self, stage: int, tset: TrainingSet, with_flow: bool) -> None:
        q = tset.proposal_density
        if q is None:
            q = np.full(tset.interior.shape[0], self.uniform_density)
        r = residual_on_points(self.problem, self.net, tset.interior)
        r_k = float(np.mean(r * r / q))
        ev = self.cfg.eval
        if ev.kind == "grid":
            var_points = tensor_grid(self.problem.box, min(ev.grid_n, 128))
        else:
            var_points = origin_grid(self.problem, ev.origin_n, ev.origin_halfwidth)
        row = {"stage": stage, "epoch": self.global_epoch - 1,
               "residual_variance": residual_variance(self.net, self.problem, var_points),
               "R_k": r_k, "kl": None, "tau1": None, "tau2": None, "c_hat": None}
        if with_flow and self.flow is not None and self.problem.dim <= 2 and ev.kl_grid > 0:
            diag = kl_diagnostic(self.flow, self.net, self.problem, ev.kl_grid)
            if diag.defined:
                row.update(kl=diag.kl, tau1=diag.tau1, tau2=diag.tau2, c_hat=diag.c_hat)
        self.record.stage_rows.append(row)
        self.record.n_interior_by_stage.append(tset.interior.shape[0])

    def dump_stage_samples(self, stage: int, points: np.ndarray) -> None:
        if self.out_dir is not None:
            write_samples_csv(points, os.path.join(self.out_dir, f"samples_stage_{stage}.csv"))


def _seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _train_stage(ctx: _RunContext, tset: TrainingSet, stage: int, mode: str) -> None:
    cfg = ctx.cfg.train
    lr = cfg.lr * cfg.lr_stage_decay**stage
    try:
        train_surrogate(ctx.net, ctx.problem, tset, cfg.epochs, cfg.batch, mode=mode,
                        state=init_adam(ctx.net.n_params, lr), lr=lr,
                        gamma_hat=cfg.gamma_hat, rng=ctx.rng_train,
                        epoch_callback=ctx.epoch_callback(stage, cfg.epochs))
    except TrainingError as exc:
        raise TrainingError(f"stage {stage}: {exc}") from exc


def _fit_flow(ctx: _RunContext, stage: int, tset: TrainingSet, objective: str) -> None:
    """Train the flow on the current squared residual; proposal per Remark-2
    semantics: uniform pool at the first fit, the flow itself afterwards."""
    cfg = ctx.cfg.train
    epochs = cfg.flow_epochs or cfg.epochs
    batch = cfg.flow_batch or cfg.batch
    lr = cfg.flow_lr or cfg.lr
    pool_n = cfg.flow_pool or tset.interior.shape[0]
    try:
        if objective == "ce_is":
            if stage == 0:
                X = sample_interior(ctx.problem, pool_n, ctx.rng_draw)
                q = np.full(pool_n, ctx.uniform_density)
            else:
                X, q = sample_with_density(ctx.flow, pool_n, ctx.rng_draw)
            train_flow(ctx.flow, ctx.net, ctx.problem, ctx.cutoff, (X, q), epochs, batch,
                       "ce_is", state=init_adam(ctx.flow.n_params, lr), lr=lr,
                       rng=ctx.rng_ftrain)
        else:
            train_flow(ctx.flow, ctx.net, ctx.problem, ctx.cutoff, pool_n, epochs, batch,
                       "reverse_kl", state=init_adam(ctx.flow.n_params, lr), lr=lr,
                       rng=ctx.rng_ftrain)
    except TrainingError as exc:
        raise TrainingError(f"stage {stage} flow fit: {exc}") from exc


def _draw_interior(ctx: _RunContext, n: int):
    """Exactly n in-domain flow samples with densities, plus projected points."""
    box = ctx.problem.box
    kept: list[np.ndarray] = []
    kept_q: list[np.ndarray] = []
    projected: list[np.ndarray] = []
    total = 0
    for _ in range(64):
        chunk = max(n - total + 16, 64)
        X, q = sample_with_density(ctx.flow, chunk, ctx.rng_draw)
        if not np.all(np.isfinite(X)):
            raise TrainingError("flow produced non-finite samples")
        inside = np.all((X >= box[:, 0]) & (X <= box[:, 1]), axis=1)
        need = n - total
        good = np.flatnonzero(inside)
        take = good[:need]
        kept.append(X[take])
        kept_q.append(q[take])
        # projected points that precede the last kept interior point; when the
        # chunk cannot satisfy the request the whole chunk is consumed
        limit = take[-1] + 1 if take.size == need else X.shape[0]
        bad = np.flatnonzero(~inside)
        projected.append(np.clip(X[bad[bad < limit]], box[:, 0], box[:, 1]))
        total += take.size
        if total >= n:
            break
    if total < n:
        raise TrainingError("flow keeps sampling outside the domain box")
    return np.concatenate(kept), np.concatenate(kept_q), np.concatenate(projected)


# ---------------------------------------------------------------------------
# strategies


def run_uniform(cfg: RunConfig, seed: int, out_dir=None):
    ctx = _RunContext(cfg, seed, out_dir)
    stages = cfg.train.adaptive_stages
    tset = ctx.initial_sets(cfg.train.n_interior, tag_density=False)
    tset.check_against(ctx.problem)
    ctx.dump_stage_samples(0, tset.interior)
    total = cfg.train.epochs * stages
    cb = ctx.epoch_callback(0, total)
    decay = cfg.train.lr_stage_decay
    if decay == 1.0:
        train_surrogate(ctx.net, ctx.problem, tset, total, cfg.train.batch, mode="plain",
                        state=init_adam(ctx.net.n_params, cfg.train.lr), lr=cfg.train.lr,
                        gamma_hat=cfg.train.gamma_hat, rng=ctx.rng_train,
                        epoch_callback=cb)
    else:
        # same restart-and-decay schedule as the staged strategies, so the
        # baseline differs only in where its collocation points come from
        for k in range(stages):
            lr = cfg.train.lr * decay**k
            off = k * cfg.train.epochs
            train_surrogate(ctx.net, ctx.problem, tset, cfg.train.epochs, cfg.train.batch,
                            mode="plain", state=init_adam(ctx.net.n_params, lr), lr=lr,
                            gamma_hat=cfg.train.gamma_hat, rng=ctx.rng_train,
                            epoch_callback=lambda e, net, ml, off=off: cb(off + e, net, ml))
    ctx.stage_summary(0, tset, with_flow=False)
    _finalize(ctx)
    return ctx.record, ctx.net


def run_das_r(cfg: RunConfig, seed: int, out_dir=None):
    ctx = _RunContext(cfg, seed, out_dir)
    stages = cfg.train.adaptive_stages
    ctx.make_flow()
    n_r = cfg.train.n_interior
    tset = ctx.initial_sets(n_r, tag_density=True)
    tset.check_against(ctx.problem)
    boundary0 = tset.boundary.copy()
    objective = "ce_is" if cfg.train.flow_objective in ("auto", "ce_is") else "reverse_kl"
    for k in range(stages):
        ctx.dump_stage_samples(k, tset.interior)
        _train_stage(ctx, tset, k, mode="plain" if k == 0 else "importance")
        _fit_flow(ctx, k, tset, objective)
        ctx.stage_summary(k, tset, with_flow=True)
        if k + 1 < stages:
            Xi, q, proj = _draw_interior(ctx, n_r)
            boundary = np.concatenate([boundary0, proj]) if proj.size else boundary0
            tset = TrainingSet(Xi, boundary, stage=k + 1, proposal_density=q)
    _finalize(ctx)
    return ctx.record, ctx.net, ctx.flow


def _das_g_objective(cfg: RunConfig, stage: int) -> str:
    mode = cfg.train.flow_objective
    if mode == "auto":
        return "ce_is" if stage == 0 else "reverse_kl"
    return mode


def run_das_g(cfg: RunConfig, seed: int, out_dir=None):
    ctx = _RunContext(cfg, seed, out_dir)
    stages = cfg.train.adaptive_stages
    ctx.make_flow()
    additions = stage_sizes(cfg)
    tset = ctx.initial_sets(additions[0], tag_density=True)
    tset.check_against(ctx.problem)
    boundary0 = tset.boundary.copy()
    ctx.dump_stage_samples(0, tset.interior)
    for k in range(stages):
        _train_stage(ctx, tset, k, mode="plain")
        _fit_flow(ctx, k, tset, _das_g_objective(cfg, k))
        ctx.stage_summary(k, tset, with_flow=True)
        if k + 1 < stages:
            Xi, q, proj = _draw_interior(ctx, additions[k + 1])
            ctx.dump_stage_samples(k + 1, Xi)
            boundary = np.concatenate([boundary0, proj]) if proj.size else boundary0
            # the union keeps each point's own draw density so the stage
            # statistic stays a stratified estimate of the residual integral
            tset = TrainingSet(np.concatenate([tset.interior, Xi]), boundary, stage=k + 1,
                               proposal_density=np.concatenate([tset.proposal_density, q]))
    _finalize(ctx)
    return ctx.record, ctx.net, ctx.flow


def top_residual_points(problem: PdeProblem, net: SurrogateNet, pool: np.ndarray,
                        n_add: int) -> np.ndarray:
    """Indices of the n_add largest-|r| pool points; ties keep pool order."""
    r = np.abs(residual_on_points(problem, net, pool))
    return np.argsort(-r, kind="stable")[:n_add]


def run_rar(cfg: RunConfig, seed: int, out_dir=None):
    ctx = _RunContext(cfg, seed, out_dir)
    stages = cfg.train.adaptive_stages
    additions = stage_sizes(cfg)
    tset = ctx.initial_sets(additions[0], tag_density=False)
    tset.check_against(ctx.problem)
    ctx.dump_stage_samples(0, tset.interior)
    for k in range(stages):
        _train_stage(ctx, tset, k, mode="plain")
        ctx.stage_summary(k, tset, with_flow=False)
        if k + 1 < stages:
            n_add = additions[k + 1]
            pool = sample_interior(ctx.problem, cfg.train.rar_pool_factor * n_add, ctx.rng_draw)
            top = top_residual_points(ctx.problem, ctx.net, pool, n_add)
            ctx.dump_stage_samples(k + 1, pool[top])
            tset = TrainingSet(np.concatenate([tset.interior, pool[top]]), tset.boundary,
                               stage=k + 1)
    _finalize(ctx)
    return ctx.record, ctx.net


STRATEGY_RUNNERS = {
    "uniform": run_uniform,
    "das_r": run_das_r,
    "das_g": run_das_g,
    "rar": run_rar,
}


def _finalize(ctx: _RunContext) -> None:
    if ctx.out_dir is None:
        return
    write_metrics_csv(ctx.record, os.path.join(ctx.out_dir, "metrics.csv"))
    save_net(ctx.net, os.path.join(ctx.out_dir, "net.json"))
    if ctx.flow is not None:
        from .flows import save_flow

        save_flow(ctx.flow, os.path.join(ctx.out_dir, "flow.json"))


def run_one(cfg: RunConfig, seed: int, out_dir=None):
    """Run one strategy for one seed; returns (record, net, flow_or_none)."""
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if os.listdir(out_dir):
            raise ConfigError(f"output directory {out_dir} is not empty; refusing to overwrite")
        write_config_doc(cfg, seed, os.path.join(out_dir, "config.json"))
    out = STRATEGY_RUNNERS[cfg.strategy](cfg, seed, out_dir)
    record, net = out[0], out[1]
    flow = out[2] if len(out) > 2 else None
    return record, net, flow


# ---------------------------------------------------------------------------
# run-directory readers


def _load_run(run_dir):
    cfg_path = os.path.join(run_dir, "config.json")
    net_path = os.path.join(run_dir, "net.json")
    if not os.path.exists(cfg_path) or not os.path.exists(net_path):
        raise ConfigError(f"run directory {run_dir} is missing config.json or net.json")
    with open(cfg_path) as fh:
        cfg = RunConfig.model_validate(json.load(fh))
    from .nets import load_net

    net = load_net(net_path)
    p = cfg.problem
    problem = make_problem(p.name, dim=p.dim, r_c=p.r_c, box=p.box)
    return cfg, problem, net


def evaluate_run(run_dir) -> dict:
    """Recompute final-model errors for a finished run directory."""
    cfg, problem, net = _load_run(run_dir)
    out: dict = {"strategy": cfg.strategy, "seed": cfg.seeds[0], "problem": problem.name,
                 "dim": problem.dim}
    ev = cfg.eval
    if ev.kind == "grid":
        out["grid_error"] = grid_mse(net, problem, ev.grid_n)
        var_points = tensor_grid(problem.box, min(ev.grid_n, 128))
    else:
        out["rel_error"] = relative_error(net, problem, ev.origin_n, ev.origin_halfwidth)
        var_points = origin_grid(problem, ev.origin_n, ev.origin_halfwidth)
    out["residual_variance"] = residual_variance(net, problem, var_points)
    metrics_path = os.path.join(run_dir, "metrics.csv")
    if os.path.exists(metrics_path):
        loss_rows = [r for r in read_metrics_csv(metrics_path) if r["loss"] is not None]
        if loss_rows:
            out["final_loss"] = loss_rows[-1]["loss"]
    return out


def diag_run(run_dir, quad_grid: int = 100) -> KlDiagnostic:
    """KL diagnostic for the stored flow and surrogate of a run directory."""
    cfg, problem, net = _load_run(run_dir)
    flow_path = os.path.join(run_dir, "flow.json")
    if not os.path.exists(flow_path):
        raise ConfigError(f"run directory {run_dir} has no flow checkpoint")
    from .flows import load_flow

    flow = load_flow(flow_path)
    return kl_diagnostic(flow, net, problem, quad_grid)


# ---------------------------------------------------------------------------
# comparisons


def read_metrics_csv(path) -> list[dict]:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    if list(header) != list(METRIC_COLUMNS):
        raise ConfigError(f"unexpected metrics columns in {path}: {header}")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row = {}
        for col, cell in zip(header, cells):
            if cell == "":
                row[col] = None
            elif col in ("stage", "epoch"):
                row[col] = int(cell)
            else:
                row[col] = float(cell)
        rows.append(row)
    return rows


COMPARE_COLUMNS = ("strategy", "stage", "epoch", "n_interior", "loss", "grid_error",
                   "rel_error", "residual_variance", "R_k")


def compare(run_dirs, out_csv=None) -> list[dict]:
    """Seed-averaged per-epoch table joined over runs, keyed by (strategy, epoch)."""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    by_strategy: dict[str, list[tuple[dict, list[dict]]]] = {}
    for d in run_dirs:
        cfg_path = os.path.join(d, "config.json")
        metrics_path = os.path.join(d, "metrics.csv")
        if not os.path.exists(cfg_path) or not os.path.exists(metrics_path):
            raise ConfigError(f"run directory {d} is missing config.json or metrics.csv")
        with open(cfg_path) as fh:
            cfg_doc = json.load(fh)
        try:
            rows = read_metrics_csv(metrics_path)
        except ConfigError as exc:
            raise ConfigError(f"{d}: {exc}") from exc
        by_strategy.setdefault(cfg_doc["strategy"], []).append((cfg_doc, rows))
    out_rows: list[dict] = []
    for strategy in sorted(by_strategy):
        runs = by_strategy[strategy]
        sizes = _sizes_from_doc(runs[0][0])
        keyed: dict[tuple, list[dict]] = {}
        for _, rows in runs:
            for row in rows:
                kind = 1 if row["R_k"] is not None else 0
                keyed.setdefault((row["epoch"], kind, row["stage"]), []).append(row)
        for (epoch, kind, stage) in sorted(keyed):
            group = keyed[(epoch, kind, stage)]
            if len(group) != len(runs):
                raise ConfigError(
                    f"inconsistent metrics rows across seeds for strategy {strategy}")
            merged = {"strategy": strategy, "stage": stage, "epoch": epoch,
                      "n_interior": sizes[min(stage, len(sizes) - 1)]}
            for col in ("loss", "grid_error", "rel_error", "residual_variance", "R_k"):
                vals = [g[col] for g in group]
                if any(v is None for v in vals):
                    merged[col] = None
                else:
                    merged[col] = float(np.mean(vals))
            out_rows.append(merged)
    if out_csv is not None:
        lines = [",".join(COMPARE_COLUMNS)]
        for row in out_rows:
            cells = []
            for col in COMPARE_COLUMNS:
                v = row[col]
                if col == "strategy":
                    cells.append(str(v))
                else:
                    cells.append(_fmt(v))
            lines.append(",".join(cells))
        with open(out_csv, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    return out_rows


def _sizes_from_doc(cfg_doc: dict) -> list[int]:
    cfg = RunConfig.model_validate(cfg_doc)
    if cfg.strategy in ("uniform", "das_r"):
        return [cfg.train.n_interior] * cfg.train.adaptive_stages
    adds = stage_sizes(cfg)
    return list(np.cumsum(adds))
