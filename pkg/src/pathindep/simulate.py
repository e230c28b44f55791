"""Euler-Maruyama simulation of continuous and jump SDEs with per-path random streams.

Paths are simulated in blocks of a fixed size (``BLOCK``) so that results
never depend on how blocks are distributed over workers. Each path draws
its Brownian increments and its Poisson candidates from separate streams
derived from ``(seed, path_index)``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericError, ValidationError
from .model import ModelSpec

BLOCK = 256

_STREAM_TAGS = {"brownian": 0, "jumps": 1, "probe": 2}


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    steps: int
    start: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.t_final) and self.t_final > 0):
            raise ConfigurationError(f"t_final must be positive, got {self.t_final}")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"steps must be a positive integer, got {self.steps}")
        if self.start < 0:
            raise ConfigurationError(f"grid start must be >= 0, got {self.start}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.t_final / self.steps

    def time(self, k: int) -> float:
        return self.start + k * (self.t_final / self.steps)

    @property
    def times(self) -> np.ndarray:
        return self.start + np.arange(self.steps + 1) * (self.t_final / self.steps)

    @property
    def end(self) -> float:
        return self.start + self.t_final


@dataclass(frozen=True)
class JumpEvent:
    time: float
    step_index: int
    atom_index: int
    pre_state: np.ndarray
    accepted: bool


@dataclass
class PathBundle:
    grid: TimeGrid
    states: np.ndarray  # (n+1, d)
    bm_increments: np.ndarray  # (n, m)
    jumps: list = field(default_factory=list)
    seed_info: tuple = (0, 0)

    @property
    def accepted_jumps(self) -> list:
        return [e for e in self.jumps if e.accepted]

    def segment(self, k0: int, k1: int) -> "PathBundle":
        """Sub-path on grid nodes k0..k1 with the time origin shifted accordingly."""
        if not 0 <= k0 < k1 <= self.grid.steps:
            raise ValidationError(f"bad segment [{k0}, {k1}] of a {self.grid.steps}-step path")
        grid = TimeGrid(self.grid.dt * (k1 - k0), k1 - k0, start=self.grid.time(k0))
        jumps = [
            JumpEvent(e.time, e.step_index - k0, e.atom_index, e.pre_state, e.accepted)
            for e in self.jumps
            if k0 <= e.step_index < k1
        ]
        return PathBundle(grid, self.states[k0 : k1 + 1], self.bm_increments[k0:k1], jumps, self.seed_info)

    def write_trace(self, path, jump_path=None) -> None:
        d = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"X_{i + 1}" for i in range(d)])
            for t, x in zip(self.grid.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
        if jump_path is not None:
            with open(jump_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["time", "atom_index", "accepted"] + [f"pre_{i + 1}" for i in range(d)])
                for e in self.jumps:
                    w.writerow([repr(float(e.time)), e.atom_index, int(e.accepted)] + [repr(float(v)) for v in e.pre_state])


@dataclass
class PathBatch:
    """Several paths on a common grid, stored as stacked arrays."""

    grid: TimeGrid
    states: np.ndarray  # (P, n+1, d)
    bm_increments: np.ndarray  # (P, n, m)
    jumps: list  # per path list of JumpEvent
    path_indices: np.ndarray
    seed: int
    failed_step: np.ndarray  # (P,), -1 when the path stayed finite

    def __len__(self):
        return self.states.shape[0]

    def path(self, i: int) -> PathBundle:
        return PathBundle(self.grid, self.states[i], self.bm_increments[i], self.jumps[i], (self.seed, int(self.path_indices[i])))

    @property
    def jump_counts(self) -> np.ndarray:
        return np.array([sum(e.accepted for e in ev) for ev in self.jumps], dtype=int)


def derive_stream(seed: int, path_index: int, stream: str = "brownian") -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, path_index, stream)``."""
    mask = (1 << 64) - 1
    ss = np.random.SeedSequence([int(seed) & mask, int(path_index) & mask, _STREAM_TAGS[stream]])
    return np.random.Generator(np.random.Philox(ss))


def brownian_increments(seed: int, path_index: int, grid: TimeGrid, m: int, base_steps: Optional[int] = None) -> np.ndarray:
    """Increments on ``grid``, drawn at ``base_steps`` resolution and summed in groups.

    Grids that divide a common ``base_steps`` therefore see nested increments
    of one and the same Brownian path.
    """
    base = grid.steps if base_steps is None else int(base_steps)
    if base % grid.steps:
        raise ValidationError(f"base resolution {base} is not a multiple of {grid.steps} steps")
    fine = derive_stream(seed, path_index).standard_normal((base, m)) * math.sqrt(grid.t_final / base)
    r = base // grid.steps
    if r == 1:
        return fine
    return fine.reshape(grid.steps, r, m).sum(axis=1)


def _candidates(model: ModelSpec, grid: TimeGrid, seed: int, path_index: int):
    """Poisson candidates at rate nu(U_0) on (start, end], thinned by lambda."""
    jump = model.jump
    rng = derive_stream(seed, path_index, "jumps")
    total = jump.total_mass
    count = rng.poisson(total * grid.t_final)
    times = grid.start + np.sort(rng.uniform(0.0, grid.t_final, size=count))
    # uniform(0, T) can return 0 exactly, the event must sit in (start, end]
    times = np.where(times <= grid.start, np.nextafter(grid.start, np.inf), times)
    atoms = rng.choice(jump.weights.size, size=count, p=jump.weights / total)
    coins = rng.uniform(size=count)
    out = []
    for tau, i, c in zip(times, atoms, coins):
        lam = jump.check_intensity(tau, float(jump.lam(tau, jump.atoms[i])))[0]
        k = min(max(int(math.ceil((tau - grid.start) / grid.dt)) - 1, 0), grid.steps - 1)
        out.append((k, float(tau), int(i), bool(c < lam)))
    return out


def _simulate_block(model, x0, grid, seed, indices, base_steps, with_jumps):
    P = len(indices)
    n, d, m, dt = grid.steps, model.d, model.m, grid.dt
    dW = np.stack([brownian_increments(seed, p, grid, m, base_steps) for p in indices])
    X = np.empty((P, n + 1, d))
    X[:, 0] = x0
    failed = np.full(P, -1)
    events = [[] for _ in range(P)]
    by_step: dict[int, list] = {}
    if with_jumps:
        for j, p in enumerate(indices):
            for k, tau, i, acc in _candidates(model, grid, seed, p):
                by_step.setdefault(k, []).append((j, tau, i, acc))
        jump = model.jump
    for k in range(n):
        t = grid.time(k)
        xk = X[:, k]
        inc = model.drift(t, xk) * dt + np.sum(model.diffusion(t, xk) * dW[:, k, None, :], axis=-1)
        if with_jumps:
            lam = jump.check_intensity(t)
            comp = sum(jump.coeff(t, xk, u) * (lam[i] * jump.weights[i]) for i, u in enumerate(jump.atoms))
            inc = inc - comp * dt
            pre = xk.copy()
            for j, tau, i, acc in by_step.get(k, ()):
                events[j].append(JumpEvent(tau, k, i, pre[j].copy(), acc))
                if acc:
                    pre[j] = pre[j] + jump.coeff(tau, pre[j], jump.atoms[i])
            X[:, k + 1] = pre + inc
        else:
            X[:, k + 1] = xk + inc
        bad = ~np.all(np.isfinite(X[:, k + 1]), axis=-1) & (failed < 0)
        if bad.any():
            failed[bad] = k
    return X, dW, events, failed


def simulate_batch(
    model: ModelSpec,
    x0,
    grid: TimeGrid,
    seed: int,
    path_indices,
    *,
    jumps: Optional[bool] = None,
    base_steps: Optional[int] = None,
    workers: int = 1,
) -> PathBatch:
    """Simulate many paths; ``jumps=None`` follows whether the model has a JumpSpec.

    Paths whose state turns non-finite are kept, flagged in ``failed_step``.
    """
    x0 = np.asarray(model.x0() if x0 is None else x0, dtype=float)
    if x0.shape != (model.d,):
        raise ConfigurationError(f"x0 has shape {x0.shape}, model {model.name} has d={model.d}")
    model.check_shapes(grid.start, x0)
    with_jumps = model.jump is not None if jumps is None else bool(jumps)
    if with_jumps and model.jump is None:
        raise ConfigurationError(f"model {model.name} has no jump specification")
    indices = np.asarray(list(path_indices), dtype=np.int64)
    blocks = [indices[i : i + BLOCK] for i in range(0, len(indices), BLOCK)]

    def run(block):
        with np.errstate(over="ignore", invalid="ignore"):
            return _simulate_block(model, x0, grid, seed, block, base_steps, with_jumps)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return PathBatch(
        grid=grid,
        states=np.concatenate([p[0] for p in parts]),
        bm_increments=np.concatenate([p[1] for p in parts]),
        jumps=[ev for p in parts for ev in p[2]],
        path_indices=indices,
        seed=seed,
        failed_step=np.concatenate([p[3] for p in parts]),
    )


def _single(model, x0, grid, seed, path_index, jumps):
    batch = simulate_batch(model, x0, grid, seed, [path_index], jumps=jumps)
    k = int(batch.failed_step[0])
    if k >= 0:
        raise NumericError(f"non-finite state at step {k} (t={grid.time(k + 1)}) of path {path_index}")
    return batch.path(0)


def simulate_diffusion(model: ModelSpec, x0, grid: TimeGrid, seed: int, path_index: int = 0) -> PathBundle:
    """Euler-Maruyama path of dX = b dt + sigma dW, ignoring any jump part."""
    return _single(model, x0, grid, seed, path_index, jumps=False)


def simulate_jump_diffusion(model: ModelSpec, x0, grid: TimeGrid, seed: int, path_index: int = 0) -> PathBundle:
    """Euler path of the compensated jump SDE; jumps are placed at their exact Poisson times.

    Within a step the continuous increment uses coefficients frozen at the
    left node, and a jump at time tau acts on the left-node state plus any
    earlier jumps of the same step.
    """
    if model.jump is None:
        raise ConfigurationError(f"model {model.name} has no jump specification")
    return _single(model, x0, grid, seed, path_index, jumps=True)
