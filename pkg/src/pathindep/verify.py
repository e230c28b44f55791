"""Monte Carlo experiments: path-wise identity, martingale property, refinement studies.

Paths are processed in fixed blocks of ``simulate.BLOCK`` paths; workers
only change which thread runs a block, so every payload is a pure
function of the configuration and seed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import characterize as C
from . import fields as F
from ._io import config_hash, write_rows
from .errors import ConfigurationError, ValidationError
from .girsanov import ledger_batch, moment_probe_arrays
from .model import ModelSpec, builtin
from .simulate import BLOCK, TimeGrid, simulate_batch

log = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.75, 0.95)
EXACT_FLOOR = 1e-12  # medians below this are rounding noise


@dataclass(frozen=True)
class Tolerances:
    identity_max: Optional[float] = 1e-10
    martingale_sigmas: float = 3.0
    convergence_ratio: float = 0.6
    slope_range: tuple = (0.4, 1.1)
    exclusion_fraction: float = 0.01
    negative_factor: float = 10.0
    negative_max_decrease: float = 0.2


@dataclass
class ExperimentConfig:
    model: ModelSpec
    grid: TimeGrid
    n_paths: int
    seed: int = 0
    field: Optional[F.ScalarField] = None  # defaults to the model's reference field
    transform: Optional[F.FTransform] = None
    x0: Optional[np.ndarray] = None
    tolerances: Tolerances = dc_field(default_factory=Tolerances)
    workers: int = 1
    jumps: Optional[bool] = None

    def __post_init__(self):
        if isinstance(self.n_paths, bool) or int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValidationError(f"n_paths must be >= 1, got {self.n_paths}")
        self.n_paths = int(self.n_paths)
        if self.field is None:
            if self.model.reference_field is None:
                raise ConfigurationError(f"model {self.model.name} ships no reference field; supply one")
            self.field = self.model.reference_field
        self.x0 = self.model.x0() if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.model.d,):
            raise ConfigurationError(f"x0 has shape {self.x0.shape}, model has d={self.model.d}")
        v0 = float(self.field.value(self.grid.start, self.x0))
        if not np.isfinite(v0) or not self.outer.contains(v0):
            raise ValidationError(f"{self.outer.label}(v) undefined at the initial point (v = {v0})")

    @property
    def outer(self) -> F.FTransform:
        return self.transform or F.identity()

    def describe(self) -> dict:
        return {
            "model": {"name": self.model.name, "params": self.model.params},
            "field": {"name": self.field.name, "params": self.field.params},
            "transform": None if self.transform is None else {"name": self.transform.name, "params": self.transform.params},
            "x0": self.x0.tolist(),
            "grid": {"T": self.grid.t_final, "steps": self.grid.steps},
            "paths": self.n_paths,
            "seed": self.seed,
            "jumps": self.jumps,
            "tolerances": self.tolerances.__dict__,
        }

    def with_steps(self, steps: int) -> "ExperimentConfig":
        kw = dict(self.__dict__)
        kw["grid"] = TimeGrid(self.grid.t_final, steps, self.grid.start)
        return ExperimentConfig(**kw)


@dataclass
class ExperimentResult:
    kind: str
    errors: np.ndarray  # nan where excluded
    z_T: np.ndarray
    jump_counts: np.ndarray
    excluded: np.ndarray
    stats: dict
    martingale: dict
    passed: bool
    checks: dict
    stamp: dict
    convergence: list = dc_field(default_factory=list)
    slope: Optional[float] = None
    warnings: list = dc_field(default_factory=list)

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "passed": self.passed,
            "checks": self.checks,
            "statistics": self.stats,
            "martingale": self.martingale,
            "stamp": self.stamp,
            "warnings": self.warnings,
        }
        if self.convergence:
            out["convergence"] = self.convergence
            out["slope"] = self.slope if self.slope is not None else "exact"
        return out

    def write_paths_csv(self, path) -> None:
        write_rows(
            path,
            ["path_index", "e_i", "Z_T", "jump_count", "excluded"],
            ((i, e, z, j, x) for i, (e, z, j, x) in enumerate(zip(self.errors, self.z_T, self.jump_counts, self.excluded))),
        )

    def write_convergence_csv(self, path) -> None:
        slope = self.slope if self.slope is not None else "exact"
        write_rows(
            path,
            ["steps", "dt", "median_error", "max_error", "slope"],
            ((r["steps"], r["dt"], r["median_error"], r["max_error"], slope) for r in self.convergence),
        )


def _block(cfg: ExperimentConfig, indices, base_steps):
    grid = cfg.grid
    batch = simulate_batch(cfg.model, cfg.x0, grid, cfg.seed, indices, jumps=cfg.jumps, base_steps=base_steps)
    ledgers = ledger_batch(batch, cfg.model, jumps=cfg.jumps)
    v, outer = cfg.field, cfg.outer
    excluded = batch.failed_step >= 0
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for k in range(grid.steps + 1):
            vals = np.asarray(v.value(grid.time(k), batch.states[:, k]), dtype=float)
            excluded |= ~outer.contains(vals)
        lhs = ledgers.Y[:, -1]
        rhs = outer.f(np.asarray(v.value(grid.end, batch.states[:, -1]), dtype=float)) - outer.f(float(v.value(grid.start, cfg.x0)))
        err = np.abs(lhs - rhs)
    err[excluded] = np.nan
    return {
        "errors": err,
        "z_T": ledgers.Z[:, -1],
        "quad": ledgers.quad_term[:, -1],
        "jump_qv": ledgers.jump_qv_term[:, -1],
        "jump_counts": batch.jump_counts,
        "excluded": excluded,
    }


def _run(cfg: ExperimentConfig, base_steps: Optional[int] = None) -> dict:
    indices = np.arange(cfg.n_paths)
    blocks = [indices[i : i + BLOCK] for i in range(0, cfg.n_paths, BLOCK)]
    if cfg.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(lambda b: _block(cfg, b, base_steps), blocks))
    else:
        parts = [_block(cfg, b, base_steps) for b in blocks]
    out = {k: np.concatenate([p[k] for p in parts]) for k in ("errors", "z_T", "quad", "jump_qv", "jump_counts", "excluded")}
    return out


def _stats(errors: np.ndarray, excluded: np.ndarray) -> dict:
    e = errors[~excluded]
    if e.size == 0:
        return {"count": 0, "excluded": int(excluded.sum())}
    q = np.quantile(e, QUANTILES)
    return {
        "count": int(e.size),
        "excluded": int(excluded.sum()),
        "max": float(e.max()),
        "mean": float(e.mean()),
        "median": float(np.median(e)),
        **{f"q{int(round(100 * p)):02d}": float(v) for p, v in zip(QUANTILES, q)},
    }


def _martingale(z: np.ndarray, excluded: np.ndarray, sigmas: float) -> dict:
    z = z[~excluded]
    n = z.size
    mean = float(z.mean()) if n else math.nan
    stderr = float(z.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {
        "mean_Z_T": mean,
        "stderr": stderr,
        "deviation": abs(mean - 1.0),
        "passed": bool(abs(mean - 1.0) <= sigmas * stderr),
    }


def _stamp(cfg: ExperimentConfig, extra=None) -> dict:
    desc = cfg.describe()
    if extra:
        desc.update(extra)
    return {"seed": cfg.seed, "config_hash": config_hash(desc)}


def _result(kind, cfg, run, checks_extra=None, stamp_extra=None) -> ExperimentResult:
    tol = cfg.tolerances
    stats = _stats(run["errors"], run["excluded"])
    frac = stats["excluded"] / cfg.n_paths
    checks = {"exclusion_fraction": frac, "exclusions_ok": frac <= tol.exclusion_fraction}
    warnings = []
    if stats["excluded"]:
        warnings.append(f"{stats['excluded']} path(s) excluded: non-finite state or field outside the transform domain")
    checks.update(checks_extra or {})
    return ExperimentResult(
        kind=kind,
        errors=run["errors"],
        z_T=run["z_T"],
        jump_counts=run["jump_counts"],
        excluded=run["excluded"],
        stats=stats,
        martingale=_martingale(run["z_T"], run["excluded"], tol.martingale_sigmas),
        passed=False,
        checks=checks,
        stamp=_stamp(cfg, stamp_extra),
        warnings=warnings,
    )


def identity_experiment(cfg: ExperimentConfig, base_steps: Optional[int] = None) -> ExperimentResult:
    """Per-path error |Y_T - (F(v(T, X_T)) - F(v(0, x0)))| with F the transform (identity if none).

    Passes when exclusions stay within policy and, if ``identity_max`` is
    set, the largest error is within it.
    """
    run = _run(cfg, base_steps)
    res = _result("identity", cfg, run)
    limit = cfg.tolerances.identity_max
    ok = res.checks["exclusions_ok"] and res.stats["count"] > 0
    if limit is not None:
        res.checks["max_error_ok"] = res.stats.get("max", math.inf) <= limit
        ok = ok and res.checks["max_error_ok"]
    res.passed = bool(ok)
    return res


def martingale_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Checks |mean Z_T - 1| <= k * stderr after probing exponential integrability."""
    run = _run(cfg)
    probe = moment_probe_arrays(run["quad"], run["jump_qv"])
    res = _result("martingale", cfg, run, {"moment_probe": probe.to_dict()})
    res.warnings += probe.warnings
    res.passed = bool(res.martingale["passed"] and probe.finite_verdict and res.checks["exclusions_ok"])
    return res


def _validate_levels(levels) -> list:
    levels = [int(n) for n in levels]
    if len(levels) < 2:
        raise ValidationError("a convergence study needs at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValidationError(f"levels must be strictly increasing, got {levels}")
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise ValidationError(f"every level must divide the finest level {finest} for nested increments: {levels}")
    return levels


def _fit_slope(rows) -> Optional[float]:
    dts = np.array([r["dt"] for r in rows])
    med = np.array([r["median_error"] for r in rows])
    keep = med > EXACT_FLOOR
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(dts[keep]), np.log(med[keep]), 1)[0])


def convergence_study(cfg: ExperimentConfig, levels) -> ExperimentResult:
    """Identity errors over nested refinements of one set of Brownian paths.

    The result carries the finest level's per-path values and one row per
    level; ``slope`` is None when every median is at rounding level.
    """
    levels = _validate_levels(levels)
    finest = levels[-1]
    rows, run = [], None
    for n in levels:
        run = _run(cfg.with_steps(n), base_steps=finest)
        st = _stats(run["errors"], run["excluded"])
        rows.append({
            "steps": n,
            "dt": cfg.grid.t_final / n,
            "median_error": st.get("median", math.nan),
            "max_error": st.get("max", math.nan),
            "excluded": st["excluded"],
        })
    slope = _fit_slope(rows)
    tol = cfg.tolerances
    exact = all(r["median_error"] <= EXACT_FLOOR for r in rows)
    prev, last = rows[-2]["median_error"], rows[-1]["median_error"]
    ratio = last / prev if prev > 0 else (0.0 if last == 0 else math.inf)
    checks = {
        "exact": exact,
        "ratio_last_two": ratio,
        "ratio_ok": exact or ratio <= tol.convergence_ratio,
        "slope_ok": exact or (slope is not None and tol.slope_range[0] <= slope <= tol.slope_range[1]),
    }
    res = _result("convergence", cfg.with_steps(finest), run, checks, {"levels": levels})
    res.convergence = rows
    res.slope = slope
    res.passed = bool(checks["ratio_ok"] and checks["slope_ok"] and res.checks["exclusions_ok"])
    return res


def obstruction_diagnostics(cfg: ExperimentConfig, states: Optional[np.ndarray], t_final: float, max_points: int = 200) -> dict:
    """Curl and intensity-consistency defects on visited states, explaining a failed identity."""
    model = cfg.model
    pts = []
    if states is not None:
        P, n1, _ = states.shape
        stride = max(1, (P * n1) // max_points)
        flat = states.reshape(-1, model.d)
        ks = np.tile(np.arange(n1), P)
        for idx in range(0, flat.shape[0], stride):
            if np.all(np.isfinite(flat[idx])):
                pts.append((cfg.grid.start + ks[idx] * t_final / (n1 - 1), flat[idx]))
    out: dict = {}
    if not pts:
        return out
    domain = C.EvaluationDomain(pts[:max_points])
    if model.d == model.m and model.d > 1:
        curl = C.gamma_integrability_check(model, domain)
        out["curl"] = curl.summary()
    if model.jump is not None:
        sup = 0.0
        for t, x in domain.points:
            try:
                sup = max(sup, float(np.max(np.abs(C.lambda_consistency(cfg.field, model, t, x)))))
            except ArithmeticError:
                continue
        out["lambda_consistency_sup"] = sup
    return out


def negative_experiment(cfg: ExperimentConfig, levels, baseline: Optional[float] = None) -> ExperimentResult:
    """Confirms that the identity error does NOT converge under refinement.

    Passes when the finest-level median exceeds ``negative_factor`` times the
    closed-form heat-kernel baseline and shrank by at most
    ``negative_max_decrease`` across the last two levels.
    """
    levels = _validate_levels(levels)
    res = convergence_study(cfg, levels)
    if baseline is None:
        heat = builtin("heat_kernel")
        base_cfg = ExperimentConfig(heat, TimeGrid(cfg.grid.t_final, levels[-1]), min(cfg.n_paths, 100), cfg.seed)
        baseline = identity_experiment(base_cfg).stats["median"]
    prev, last = res.convergence[-2]["median_error"], res.convergence[-1]["median_error"]
    tol = cfg.tolerances
    above = bool(last > tol.negative_factor * baseline)
    plateau = bool(last >= (1.0 - tol.negative_max_decrease) * prev)
    res.kind = "negative"
    coarse = TimeGrid(cfg.grid.t_final, levels[0], cfg.grid.start)
    sample = simulate_batch(cfg.model, cfg.x0, coarse, cfg.seed, range(min(cfg.n_paths, 32)), jumps=cfg.jumps)
    res.checks.update({
        "baseline_median": baseline,
        "above_baseline": above,
        "plateau": plateau,
        "obstruction": obstruction_diagnostics(cfg, sample.states, cfg.grid.t_final),
    })
    res.passed = above and plateau
    if not res.passed:
        log.info("negative experiment: identity error converges (median %.3g -> %.3g)", prev, last)
    return res
