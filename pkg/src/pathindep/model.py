"""Coefficient specifications for (jump-)diffusions and the built-in catalog.

Coefficient maps are vectorized over leading axes of the state:
``drift(t, x)`` takes ``x`` of shape ``(..., d)`` and returns ``(..., d)``,
``diffusion`` returns ``(..., d, m)``, ``gamma`` returns ``(..., m)`` and
``jump.coeff(t, x, u)`` returns ``(..., d)``. Time is always a scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import fields
from .errors import ConfigurationError, NotFoundError, ValidationError


@dataclass(frozen=True)
class JumpSpec:
    atoms: np.ndarray  # (K, dim_U) marks u_i
    weights: np.ndarray  # (K,) masses nu_i
    coeff: Callable  # (t, x, u) -> (..., d)
    lam: Callable  # (t, u) -> (0, 1]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != weights.shape[0]:
            raise ConfigurationError(f"{atoms.shape[0]} atoms but {weights.shape[0]} weights")
        if np.any(~(weights > 0)) or not np.isfinite(weights.sum()):
            raise ValidationError(f"atom weights must be positive and finite, got {weights}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def intensities(self, t: float) -> np.ndarray:
        return np.array([float(self.lam(t, u)) for u in self.atoms])

    def check_intensity(self, t: float, lam=None):
        lam = self.intensities(t) if lam is None else np.atleast_1d(lam)
        if np.any(~((lam > 0) & (lam <= 1))):
            raise ValidationError(f"jump intensity outside (0, 1] at t={t}: {lam}")
        return lam


@dataclass(frozen=True)
class ModelSpec:
    d: int
    m: int
    drift: Callable
    diffusion: Callable
    gamma: Callable
    jump: Optional[JumpSpec] = None
    name: str = "custom"
    notes: str = ""
    params: dict = field(default_factory=dict)
    drift_in_image: bool = True
    image_tol: float = 1e-12
    reference_field: Optional[fields.ScalarField] = None
    default_x0: Optional[tuple] = None

    def x0(self) -> np.ndarray:
        if self.default_x0 is None:
            return np.zeros(self.d)
        return np.array(self.default_x0, dtype=float)

    def check_shapes(self, t: float, x) -> None:
        x = np.asarray(x, dtype=float)
        sig = np.asarray(self.diffusion(t, x))
        if sig.shape[-2:] != (self.d, self.m):
            raise ConfigurationError(f"{self.name}: diffusion has shape {sig.shape[-2:]}, expected {(self.d, self.m)}")
        if np.shape(self.drift(t, x))[-1] != self.d:
            raise ConfigurationError(f"{self.name}: drift dimension differs from d={self.d}")
        if np.shape(self.gamma(t, x))[-1] != self.m:
            raise ConfigurationError(f"{self.name}: gamma dimension differs from m={self.m}")


def drift_image_residual(model: ModelSpec, t: float, x) -> np.ndarray:
    """b(t, x) - sigma(t, x) gamma(t, x); zero where the drift lies in Im(sigma)."""
    x = np.asarray(x, dtype=float)
    sig = np.asarray(model.diffusion(t, x), dtype=float)
    gam = np.asarray(model.gamma(t, x), dtype=float)
    if sig.shape[-1] != gam.shape[-1]:
        raise ConfigurationError(f"sigma has {sig.shape[-1]} columns but gamma has {gam.shape[-1]} entries")
    return np.asarray(model.drift(t, x), dtype=float) - np.einsum("...ij,...j->...i", sig, gam)


# ---------------------------------------------------------------------------
# built-in catalog


def _stack(*cols):
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def _diag2(a, b):
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    out = np.zeros(a.shape + (2, 2))
    out[..., 0, 0] = a
    out[..., 1, 1] = b
    return out


def _positive_int(params, key, default):
    k = params.get(key, default)
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k <= 0:
        raise ValidationError(f"parameter {key} must be a positive integer, got {k!r}")
    return int(k)


def _gruschin(params):
    k = _positive_int(params, "k", 1)

    def drift(t, z):
        x, y = z[..., 0], z[..., 1]
        return _stack(-x * t, -(x**k) * y * t)

    def gamma(t, z):
        x, y = z[..., 0], z[..., 1]
        return _stack(-x * t, -y * t)

    return ModelSpec(
        2, 2, drift, lambda t, z: _diag2(1.0, z[..., 0] ** k), gamma,
        name="gruschin", params={"k": k}, default_x0=(1.0, 1.0),
        notes="printed Gruschin coefficients; gamma is not sigma^* of any gradient (curl obstruction)",
    )


def _kohn_sigma(t, u):
    x, y = u[..., 0], u[..., 1]
    out = np.zeros(np.shape(x) + (3, 3))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 2, 0] = -y / 2
    out[..., 2, 1] = x / 2
    return out


def _kohn_gamma(t, u):
    return u * t


def _kohn(params):
    def drift(t, u):
        x, y, z = u[..., 0], u[..., 1], u[..., 2]
        return _stack(x * t, y * t, z * (x - y) * t / 2)

    return ModelSpec(
        3, 3, drift, _kohn_sigma, _kohn_gamma, name="kohn", default_x0=(1.0, 1.0, 1.0),
        drift_in_image=False,
        notes="printed Heisenberg drift; third component z(x-y)t/2 is not in Im(sigma), use kohn_corrected",
    )


def _kohn_corrected(params):
    def drift(t, u):
        x, y = u[..., 0], u[..., 1]
        return _stack(x * t, y * t, np.zeros_like(x))

    return ModelSpec(
        3, 3, drift, _kohn_sigma, _kohn_gamma, name="kohn_corrected", default_x0=(1.0, 1.0, 1.0),
        notes="corrected drift (x t, y t, 0) so that b = sigma gamma",
    )


def _degenerate_exp(params):
    def drift(t, z):
        y = np.maximum(z[..., 1], 0.0)
        return _stack(np.zeros_like(y), 0.5 * y)

    def gamma(t, z):
        y = z[..., 1]
        return _stack(np.zeros_like(y), np.where(y > 0, 0.5, 0.0))

    return ModelSpec(
        2, 2, drift, lambda t, z: _diag2(1.0, np.maximum(z[..., 1], 0.0)), gamma,
        name="degenerate_exp", default_x0=(0.0, 1.0),
        reference_field=fields.half_log_field(1),
        notes="gamma = (0, 1/2) on {y > 0}: the solution of sigma gamma = b forced by the printed b, sigma",
    )


def _heat_kernel(params):
    a = np.asarray(params.get("a", (1.0, 0.0)), dtype=float).reshape(-1)
    if a.size == 0 or not np.all(np.isfinite(a)):
        raise ValidationError(f"parameter a must be a finite non-empty vector, got {a}")
    d = a.size

    def const(t, x):
        return np.broadcast_to(a, np.shape(x)[:-1] + (d,)).copy()

    return ModelSpec(
        d, d, const, lambda t, x: np.broadcast_to(np.eye(d), np.shape(x)[:-1] + (d, d)).copy(), const,
        name="heat_kernel", params={"a": a.tolist()},
        reference_field=fields.linear_field(a, 0.5 * float(a @ a)),
    )


def _two_exponential(params):
    k = _positive_int(params, "k", 1)
    rates = np.asarray(params.get("rates", (1.0, 2.0)), dtype=float)
    v = fields.two_exponential_field(rates)

    def slope(t, z):
        e = z[..., 0][..., None] * rates - 0.5 * rates * rates * t
        w = np.exp(e - e.max(axis=-1, keepdims=True))
        return (w @ rates) / w.sum(axis=-1)

    def drift(t, z):
        s = slope(t, z)
        return _stack(s, np.zeros_like(s))

    return ModelSpec(
        2, 2, drift, lambda t, z: _diag2(1.0, z[..., 0] ** k), drift,
        name="two_exponential", params={"k": k, "rates": rates.tolist()},
        reference_field=v, default_x0=(0.0, 1.0),
        notes="Gruschin diffusion with b = gamma = sigma sigma^* grad v for the Hopf-Cole field v",
    )


def _atoms(params):
    atoms = params.get("atoms", [[-1.0, 1.0]])
    try:
        arr = np.asarray(atoms, dtype=float).reshape(-1, 2)
    except ValueError:
        raise ValidationError(f"atoms must be a list of [mark, weight] pairs, got {atoms!r}") from None
    if arr.shape[0] == 0:
        raise ValidationError("at least one atom is required")
    return arr[:, :1], arr[:, 1]


def _exponential_jump(params):
    beta = float(params.get("beta", 1.0))
    scale = float(params.get("lambda_scale", 1.0))
    marks, weights = _atoms(params)
    lam_atoms = scale * np.exp(beta * marks[:, 0])
    if np.any(~((lam_atoms > 0) & (lam_atoms <= 1))):
        raise ValidationError(f"lambda = {scale} exp(beta u) leaves (0, 1] at the atoms: {lam_atoms}")

    def coeff(t, x, u):
        return np.broadcast_to(u[:1], np.shape(x)).copy()

    def lam(t, u):
        return scale * math.exp(beta * float(u[0]))

    jump = JumpSpec(marks, weights, coeff, lam)
    # c from substituting v = beta x - c t into the PIDE: sum nu (e^{bu} - 1 - b u e^{bu})
    integral = float(np.sum(weights * (np.exp(beta * marks[:, 0]) * (1.0 - beta * marks[:, 0]) - 1.0)))
    return beta, scale, jump, integral, {"beta": beta, "atoms": np.column_stack([marks[:, 0], weights]).tolist(), "lambda_scale": scale}


def _manufactured_jump(params):
    beta, scale, jump, integral, p = _exponential_jump(params)
    c = 0.5 * beta * beta + integral

    def const(t, x):
        return np.full(np.shape(x), beta)

    return ModelSpec(
        1, 1, const, lambda t, x: np.ones(np.shape(x) + (1,)), const, jump=jump,
        name="manufactured_jump", params=p,
        reference_field=fields.linear_field([beta], c),
        notes="sigma = 1, jump coefficient u, lambda = exp(beta u)" + ("" if scale == 1.0 else f" scaled by {scale} (inconsistent)"),
    )


def _pure_jump(params):
    beta, scale, jump, integral, p = _exponential_jump(params)

    def zero(t, x):
        return np.zeros(np.shape(x))

    return ModelSpec(
        1, 1, zero, lambda t, x: np.zeros(np.shape(x) + (1,)), zero, jump=jump,
        name="pure_jump", params=p,
        reference_field=fields.linear_field([beta], integral),
        notes="sigma = 0, b = 0: fully degenerate pure-jump model" + ("" if scale == 1.0 else f", lambda scaled by {scale}"),
    )


_CATALOG = {
    "gruschin": _gruschin,
    "kohn": _kohn,
    "kohn_corrected": _kohn_corrected,
    "degenerate_exp": _degenerate_exp,
    "heat_kernel": _heat_kernel,
    "two_exponential": _two_exponential,
    "manufactured_jump": _manufactured_jump,
    "pure_jump": _pure_jump,
}

_ALLOWED_PARAMS = {
    "gruschin": {"k"},
    "kohn": set(),
    "kohn_corrected": set(),
    "degenerate_exp": set(),
    "heat_kernel": {"a"},
    "two_exponential": {"k", "rates"},
    "manufactured_jump": {"beta", "atoms", "lambda_scale"},
    "pure_jump": {"beta", "atoms", "lambda_scale"},
}


def model_names() -> list[str]:
    return list(_CATALOG)


def builtin(name: str, params: Optional[dict] = None, **kw) -> ModelSpec:
    """Construct a catalog model; parameters may be passed as a dict or keywords."""
    params = {**(params or {}), **kw}
    if name not in _CATALOG:
        raise NotFoundError(f"unknown model {name!r}; known: {model_names()}")
    unknown = set(params) - _ALLOWED_PARAMS[name]
    if unknown:
        raise ValidationError(f"model {name!r} does not take parameters {sorted(unknown)}")
    return _CATALOG[name](params)


# ---------------------------------------------------------------------------
# hypothesis probes


def default_kappa(r):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(r < 1, np.maximum(1.0, np.log(1.0 / np.maximum(r, 1e-300))), 1.0)


@dataclass
class HypothesisProbeReport:
    lambda0_est: float
    lambda1_est: float
    kappa_profile: list  # (distance, kappa) pairs
    hf_q2: Optional[float]
    hf_q4: Optional[float]
    hf_lip: Optional[float]
    sample_count: int
    verdicts: dict

    def to_dict(self):
        return {
            "lambda0_est": self.lambda0_est,
            "lambda1_est": self.lambda1_est,
            "hf_q2": self.hf_q2,
            "hf_q4": self.hf_q4,
            "hf_lip": self.hf_lip,
            "sample_count": self.sample_count,
            "verdicts": self.verdicts,
            "kappa_profile": self.kappa_profile,
        }


def _verdict(value, count, bound):
    if value is None or count == 0:
        return "inconclusive"
    if not np.isfinite(value) or value > bound:
        return "fail"
    return "pass"


def hypothesis_probe(model: ModelSpec, probe_points, kappa=default_kappa, bound: float = 1e6) -> HypothesisProbeReport:
    """Suprema of the monotonicity, growth and jump-growth quotients over probe triples (t, x, y).

    Pairs with x = y are skipped for the difference quotients. A hypothesis
    passes when its estimated constant is finite and at most ``bound``.
    """
    probe_points = list(probe_points)
    if not probe_points:
        raise ValidationError("empty probe set")
    lam0 = lam1 = -np.inf
    q2 = q4 = lip = -np.inf
    pairs = 0
    profile = []
    jump = model.jump
    for t, x, y in probe_points:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        for z in (x, y):
            growth = (np.sum(model.drift(t, z) ** 2) + np.sum(np.asarray(model.diffusion(t, z)) ** 2)) / (1 + np.linalg.norm(z)) ** 2
            lam1 = max(lam1, float(growth))
            if jump is not None:
                fz = np.stack([model.jump.coeff(t, z, u) for u in jump.atoms])
                nz = np.linalg.norm(fz, axis=-1)
                base = 1 + np.linalg.norm(z)
                q2 = max(q2, float(jump.weights @ nz**2 / base**2))
                q4 = max(q4, float(jump.weights @ nz**4 / base**4))
        r = float(np.linalg.norm(x - y))
        if r == 0.0:
            continue
        pairs += 1
        k = float(kappa(r))
        profile.append([r, k])
        num = 2 * float((x - y) @ (model.drift(t, x) - model.drift(t, y)))
        num += float(np.sum((np.asarray(model.diffusion(t, x)) - np.asarray(model.diffusion(t, y))) ** 2))
        lam0 = max(lam0, num / (r * r * k))
        if jump is not None:
            diff = np.stack([jump.coeff(t, x, u) - jump.coeff(t, y, u) for u in jump.atoms])
            lip = max(lip, float(jump.weights @ np.sum(diff**2, axis=-1)) / (r * r * k))
    none = lambda v: None if v == -np.inf else float(v)  # noqa: E731
    lam0_v = none(lam0)
    verdicts = {
        "H1": _verdict(lam0_v, pairs, bound),
        "H2": _verdict(none(lam1), len(probe_points), bound),
    }
    if jump is not None:
        hf_ok = [_verdict(none(v), n, bound) for v, n in ((q2, 1), (q4, 1), (lip, pairs))]
        verdicts["Hf"] = "fail" if "fail" in hf_ok else ("inconclusive" if "inconclusive" in hf_ok else "pass")
    profile.sort()
    return HypothesisProbeReport(
        lambda0_est=lam0_v, lambda1_est=none(lam1), kappa_profile=profile,
        hf_q2=none(q2), hf_q4=none(q4), hf_lip=none(lip),
        sample_count=pairs, verdicts=verdicts,
    )
