"""Girsanov exponent Y_t, density Z_t = exp(-Y_t) and integrability probes along paths.

All stochastic integrals are left-endpoint Ito sums on the simulation grid.
The quadratic term carries the factor 1/2 throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .model import ModelSpec
from .simulate import PathBatch, PathBundle


@dataclass
class GirsanovLedger:
    t: np.ndarray
    stoch_integral: np.ndarray
    quad_term: np.ndarray
    jump_log_term: np.ndarray
    compensator_term: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    jump_qv_term: np.ndarray  # int int ((1 - lam) / lam)^2 lam nu du ds, for the moment probe

    @property
    def Y_T(self) -> float:
        return float(self.Y[-1])

    @property
    def Z_T(self) -> float:
        return float(self.Z[-1])

    def write_csv(self, path) -> None:
        cols = ["t", "stoch_integral", "quad_term", "jump_log_term", "compensator_term", "Y", "Z"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in zip(*(getattr(self, c) for c in cols)):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class LedgerBatch:
    """Ledger series for a batch of paths; every array has shape (P, n+1)."""

    t: np.ndarray
    stoch_integral: np.ndarray
    quad_term: np.ndarray
    jump_log_term: np.ndarray
    compensator_term: np.ndarray
    jump_ratio_term: np.ndarray  # sum over accepted jumps of (1 - lam) / lam
    jump_qv_term: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return self.stoch_integral + self.quad_term + self.jump_log_term + self.compensator_term

    @property
    def Z(self) -> np.ndarray:
        return np.exp(-self.Y)

    @property
    def M(self) -> np.ndarray:
        return -self.stoch_integral + self.jump_ratio_term - self.compensator_term

    def __len__(self):
        return self.stoch_integral.shape[0]

    def ledger(self, i: int) -> GirsanovLedger:
        return GirsanovLedger(
            t=self.t, stoch_integral=self.stoch_integral[i], quad_term=self.quad_term[i],
            jump_log_term=self.jump_log_term[i], compensator_term=self.compensator_term[i],
            Y=self.Y[i], Z=self.Z[i], M=self.M[i], jump_qv_term=self.jump_qv_term[i],
        )

    def terminal(self) -> dict:
        return {
            "Y": self.Y[:, -1],
            "Z": self.Z[:, -1],
            "quad": self.quad_term[:, -1],
            "jump_qv": self.jump_qv_term[:, -1],
        }


def _cumulate(increments: np.ndarray) -> np.ndarray:
    out = np.zeros(increments.shape[:-1] + (increments.shape[-1] + 1,))
    np.cumsum(increments, axis=-1, out=out[..., 1:])
    return out


def ledger_batch(batch: PathBatch, model: ModelSpec, *, jumps: Optional[bool] = None) -> LedgerBatch:
    """Accumulate the four exponent terms for every path of ``batch``."""
    grid = batch.grid
    P, n = len(batch), grid.steps
    dt = grid.dt
    with_jumps = model.jump is not None if jumps is None else bool(jumps)
    if with_jumps and model.jump is None:
        raise ConfigurationError(f"model {model.name} has no jump specification")
    if batch.bm_increments.shape[-1] != model.m:
        raise ConfigurationError(f"path has {batch.bm_increments.shape[-1]} noise components, model m={model.m}")
    stoch = np.empty((P, n))
    quad = np.empty((P, n))
    for k in range(n):
        g = np.asarray(model.gamma(grid.time(k), batch.states[:, k]), dtype=float)
        if g.shape[-1] != model.m:
            raise ConfigurationError(f"gamma returned {g.shape[-1]} components, model m={model.m}")
        stoch[:, k] = np.sum(g * batch.bm_increments[:, k], axis=-1)
        quad[:, k] = 0.5 * np.sum(g * g, axis=-1) * dt
    jlog = np.zeros((P, n + 1))
    jratio = np.zeros((P, n + 1))
    comp = np.zeros(n)
    qv = np.zeros(n)
    if with_jumps:
        jump = model.jump
        for k in range(n):
            lam = jump.check_intensity(grid.time(k))
            comp[k] = float(np.sum((1.0 - lam) * jump.weights)) * dt
            qv[k] = float(np.sum((1.0 - lam) ** 2 / lam * jump.weights)) * dt
        for j, events in enumerate(batch.jumps):
            for e in events:
                if not e.accepted:
                    continue
                lam = float(jump.lam(e.time, jump.atoms[e.atom_index]))
                if not lam > 0:
                    raise DomainError(f"accepted jump at t={e.time} with lambda={lam}: log undefined")
                jlog[j, e.step_index + 1] += math.log(lam)
                jratio[j, e.step_index + 1] += (1.0 - lam) / lam
        np.cumsum(jlog, axis=1, out=jlog)
        np.cumsum(jratio, axis=1, out=jratio)
    comp_series = np.broadcast_to(_cumulate(comp), (P, n + 1)).copy()
    qv_series = np.broadcast_to(_cumulate(qv), (P, n + 1)).copy()
    return LedgerBatch(grid.times, _cumulate(stoch), _cumulate(quad), jlog, comp_series, jratio, qv_series)


def _as_batch(path: PathBundle) -> PathBatch:
    return PathBatch(path.grid, path.states[None], path.bm_increments[None], [path.jumps],
                     np.array([path.seed_info[1]]), path.seed_info[0], np.array([-1]))


def exponent_continuous(path: PathBundle, model: ModelSpec, *, ignore_jumps: bool = False) -> GirsanovLedger:
    """Ledger with only the Brownian terms."""
    if path.accepted_jumps and not ignore_jumps:
        raise ValidationError("path carries jump events; pass ignore_jumps=True to drop them")
    return ledger_batch(_as_batch(path), model, jumps=False).ledger(0)


def exponent_jump(path: PathBundle, model: ModelSpec) -> GirsanovLedger:
    """Ledger including the log-intensity sum over accepted jumps and the compensator."""
    if model.jump is None:
        raise ConfigurationError(f"model {model.name} has no jump specification")
    return ledger_batch(_as_batch(path), model, jumps=True).ledger(0)


@dataclass
class MomentProbe:
    continuous_moment_est: float
    jump_moment_est: float
    finite_verdict: bool
    heavy_tail: bool
    warnings: list

    def to_dict(self):
        return dict(self.__dict__)


def _moment(exponents: np.ndarray, label: str, warnings: list):
    top = float(np.max(exponents))
    if not np.isfinite(top) or top > 700.0:
        warnings.append(f"{label}: exponent {top} overflows")
        return math.inf, False
    vals = np.exp(exponents)
    tail = max(1, math.ceil(0.01 * vals.size))
    heavy = vals.size >= 2 and float(np.sort(vals)[-tail:].sum()) > 0.5 * float(vals.sum())
    if heavy:
        warnings.append(f"{label}: more than half of the estimate comes from the top {tail} path(s)")
    return float(vals.mean()), heavy


def moment_probe_arrays(quad, jump_qv) -> MomentProbe:
    """Moment probe from per-path terminal values of the quadratic and jump-variation terms."""
    quad = np.asarray(quad, dtype=float)
    qv = np.asarray(jump_qv, dtype=float)
    if quad.size == 0:
        raise ValidationError("exponential_moment_probe needs at least one ledger")
    warnings: list = []
    cont, heavy_c = _moment(quad, "continuous", warnings)
    jmp, heavy_j = _moment(quad + qv, "jump", warnings)
    return MomentProbe(cont, jmp, bool(np.isfinite(cont) and np.isfinite(jmp)), heavy_c or heavy_j, warnings)


def exponential_moment_probe(ledgers: Union[LedgerBatch, Sequence[GirsanovLedger]]) -> MomentProbe:
    """Monte Carlo estimates of E exp(1/2 int |gamma|^2) and of the jump-augmented moment.

    The verdict is not finite when an exponent overflows; ``heavy_tail`` is
    set when the top 1% of paths carry more than half of an estimate.
    """
    if isinstance(ledgers, LedgerBatch):
        return moment_probe_arrays(ledgers.quad_term[:, -1], ledgers.jump_qv_term[:, -1])
    ledgers = list(ledgers)
    return moment_probe_arrays([lg.quad_term[-1] for lg in ledgers], [lg.jump_qv_term[-1] for lg in ledgers])
