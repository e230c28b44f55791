"""Scalar fields v(t, x), their derivatives, and C^2 transforms f(v).

Every ``value`` map is vectorized over leading axes: ``value(t, x)`` accepts
``x`` of shape ``(..., d)`` and returns shape ``(...)``. Analytic derivative
maps only need to handle a single point ``x`` of shape ``(d,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DegenerateTransformError, DomainError, NotFoundError, NumericError

_EPS = np.finfo(float).eps

DEFAULT_STEP_T = 1e-5


@dataclass(frozen=True)
class ScalarField:
    value: Callable
    dt: Optional[Callable] = None
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    fd_step_t: float = DEFAULT_STEP_T
    fd_step_x: Optional[float] = None  # None: per-coordinate default, see _space_steps
    name: str = "custom"
    params: dict = dc_field(default_factory=dict)
    increment: Optional[Callable] = None  # (t, x, dx) -> v(t, x + dx) - v(t, x) without cancellation

    def __call__(self, t, x):
        return self.value(t, np.asarray(x, dtype=float))

    @property
    def analytic(self) -> bool:
        return self.dt is not None and self.grad is not None and self.hess is not None

    def with_steps(self, fd_step_t=None, fd_step_x=None, numeric=False) -> "ScalarField":
        """Copy with new finite-difference steps; ``numeric=True`` drops analytic derivatives."""
        kw = dict(self.__dict__)
        if fd_step_t is not None:
            kw["fd_step_t"] = fd_step_t
        if fd_step_x is not None:
            kw["fd_step_x"] = fd_step_x
        if numeric:
            kw.update(dt=None, grad=None, hess=None)
        return ScalarField(**kw)


def _space_steps(field: ScalarField, x: np.ndarray, order: int = 1) -> np.ndarray:
    """Per-coordinate steps; second differences default to a larger, eps^(1/4)-scaled step."""
    if field.fd_step_x is None:
        base = 1e-5 if order == 1 else 1e-4
        h = np.maximum(base, base * np.abs(x))
    else:
        h = np.full(x.shape, float(field.fd_step_x))
    if np.any(~(h > 16 * _EPS * np.maximum(1.0, np.abs(x)))):
        raise ConfigurationError(f"finite-difference step {h} underflows at x={x}")
    return h


def _fd_dt(field: ScalarField, t: float, x: np.ndarray) -> float:
    h = float(field.fd_step_t)
    if not h > 16 * _EPS * max(1.0, abs(t)):
        raise ConfigurationError(f"time step {h} underflows at t={t}")
    v = field.value
    if t - h < 0.0:
        # one-sided second-order stencil, t < 0 is inadmissible
        return float((-3.0 * v(t, x) + 4.0 * v(t + h, x) - v(t + 2 * h, x)) / (2 * h))
    return float((v(t + h, x) - v(t - h, x)) / (2 * h))


def _fd_grad(field: ScalarField, t: float, x: np.ndarray) -> np.ndarray:
    h = _space_steps(field, x)
    shifts = np.diag(h)
    up = field.value(t, x + shifts)
    down = field.value(t, x - shifts)
    return np.asarray((up - down) / (2 * h), dtype=float)


def _fd_hess(field: ScalarField, t: float, x: np.ndarray) -> np.ndarray:
    d = x.shape[0]
    h = _space_steps(field, x, order=2)
    e = np.diag(h)
    v0 = field.value(t, x)
    H = np.empty((d, d))
    for i in range(d):
        H[i, i] = (field.value(t, x + e[i]) - 2.0 * v0 + field.value(t, x - e[i])) / h[i] ** 2
        for j in range(i + 1, d):
            stencil = np.stack([x + e[i] + e[j], x + e[i] - e[j], x - e[i] + e[j], x - e[i] - e[j]])
            pp, pm, mp, mm = field.value(t, stencil)
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h[i] * h[j])
    return 0.5 * (H + H.T)


def derivatives(field: ScalarField, t: float, x) -> tuple[float, np.ndarray, np.ndarray]:
    """Return ``(dv/dt, grad v, hess v)`` at a single point.

    Analytic maps are used when the field carries them, otherwise central
    finite differences with the field's step sizes.
    """
    x = np.asarray(x, dtype=float)
    t = float(t)
    if not (np.isfinite(t) and np.all(np.isfinite(x))):
        raise NumericError(f"derivative requested at non-finite point t={t}, x={x}")
    if t < 0:
        raise DomainError(f"negative time t={t}")
    dt = float(field.dt(t, x)) if field.dt is not None else _fd_dt(field, t, x)
    g = np.asarray(field.grad(t, x), dtype=float) if field.grad is not None else _fd_grad(field, t, x)
    H = np.asarray(field.hess(t, x), dtype=float) if field.hess is not None else _fd_hess(field, t, x)
    if not (np.isfinite(dt) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise NumericError(f"non-finite derivative of field {field.name!r} at t={t}, x={x}")
    return dt, g, H


# ---------------------------------------------------------------------------
# transforms


@dataclass(frozen=True)
class FTransform:
    """A C^2 map f with its first two derivatives and an open domain (lo, hi)."""

    name: str
    f: Callable
    f1: Callable
    f2: Callable
    domain: tuple = (-np.inf, np.inf)
    params: dict = dc_field(default_factory=dict)
    exclude_zero: bool = False

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.domain
        ok = np.isfinite(y) & (y > lo) & (y < hi)
        if self.exclude_zero:
            ok &= y != 0
        return ok

    def check(self, y, where=""):
        if not np.all(self.contains(y)):
            raise DomainError(f"{self.label} undefined at argument {y}{where}")

    @property
    def label(self) -> str:
        if self.name == "odd_power":
            return f"odd_power(k={self.params['k']})"
        return self.name

    def __call__(self, y):
        self.check(y)
        return self.f(y)


def identity() -> FTransform:
    return FTransform("identity", lambda y: y, lambda y: np.ones_like(y, dtype=float), lambda y: np.zeros_like(y, dtype=float))


def log() -> FTransform:
    return FTransform("log", np.log, lambda y: 1.0 / y, lambda y: -1.0 / (y * y), domain=(0.0, np.inf))


def odd_power(k: int) -> FTransform:
    """f(y) = y^(2k+1); negative k requires y != 0."""
    if int(k) != k:
        raise ConfigurationError(f"odd_power needs an integer k, got {k}")
    k = int(k)
    p = 2 * k + 1
    return FTransform(
        "odd_power",
        lambda y: y**p,
        lambda y: p * y ** (p - 1),
        lambda y: p * (p - 1) * y ** (p - 2) if p != 1 else np.zeros_like(y, dtype=float),
        params={"k": k},
        exclude_zero=k < 0,
    )


def tan() -> FTransform:
    def sec2(y):
        return 1.0 / np.cos(y) ** 2

    return FTransform("tan", np.tan, sec2, lambda y: 2.0 * np.tan(y) * sec2(y), domain=(-np.pi / 2, np.pi / 2))


def exp() -> FTransform:
    return custom(np.exp, np.exp, np.exp, label="exp")


def custom(f, f1, f2, domain=(-np.inf, np.inf), label="custom") -> FTransform:
    return FTransform("custom", f, f1, f2, domain=tuple(domain), params={"label": label})


_TRANSFORMS = {"identity": identity, "log": log, "odd_power": odd_power, "tan": tan, "exp": exp}


def transform(name: str, **params) -> FTransform:
    try:
        factory = _TRANSFORMS[name]
    except KeyError:
        raise NotFoundError(f"unknown transform {name!r}; known: {sorted(_TRANSFORMS)}") from None
    return factory(**params)


def compose(f: FTransform, field: ScalarField) -> ScalarField:
    """The field f∘v with analytic chain-rule derivatives."""

    def value(t, x):
        y = field.value(t, x)
        if not np.all(f.contains(y)):
            raise DomainError(f"{f.label}∘{field.name}: value {y} outside transform domain at t={t}, x={x}")
        return f.f(y)

    def _parts(t, x):
        y = field.value(t, x)
        f.check(y, where=f" (point t={t}, x={x})")
        return f.f1(y), f.f2(y), derivatives(field, t, x)

    def dt(t, x):
        f1, _, (vt, _, _) = _parts(t, x)
        return f1 * vt

    def grad(t, x):
        f1, _, (_, g, _) = _parts(t, x)
        return f1 * g

    def hess(t, x):
        f1, f2, (_, g, H) = _parts(t, x)
        M = f1 * H + f2 * np.outer(g, g)
        return 0.5 * (M + M.T)

    return ScalarField(
        value, dt, grad, hess,
        fd_step_t=field.fd_step_t, fd_step_x=field.fd_step_x,
        name=f"{f.label}({field.name})", params={"inner": field.params},
    )


# ---------------------------------------------------------------------------
# reference fields


def linear_field(a, c: float = 0.0) -> ScalarField:
    """v(t, x) = <a, x> - c t."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    return ScalarField(
        value=lambda t, x: np.asarray(x, dtype=float) @ a - c * t,
        dt=lambda t, x: -c,
        grad=lambda t, x: a.copy(),
        hess=lambda t, x: np.zeros((d, d)),
        name="linear",
        params={"a": a.tolist(), "c": float(c)},
        increment=lambda t, x, dx: np.asarray(dx, dtype=float) @ a,
    )


def constant_field(c: float = 0.0) -> ScalarField:
    return ScalarField(
        value=lambda t, x: np.full(np.shape(x)[:-1], float(c)),
        dt=lambda t, x: 0.0,
        grad=lambda t, x: np.zeros(np.shape(x)[-1]),
        hess=lambda t, x: np.zeros((np.shape(x)[-1],) * 2),
        increment=lambda t, x, dx: np.zeros(np.shape(dx)[:-1]),
        name="constant",
        params={"c": float(c)},
    )


def quadratic_field() -> ScalarField:
    return ScalarField(
        value=lambda t, x: 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1),
        dt=lambda t, x: 0.0,
        grad=lambda t, x: np.array(x, dtype=float),
        hess=lambda t, x: np.eye(np.shape(x)[-1]),
        name="quadratic",
    )


def two_exponential_field(rates=(1.0, 2.0)) -> ScalarField:
    """v = log sum_i exp(r_i x_1 - r_i^2 t / 2).

    e^v solves the backward heat equation in x_1, so v solves the
    HJB system whenever sigma sigma^* has a unit (1, 1) entry and no
    coupling of x_1 to the other coordinates.
    """
    r = np.asarray(rates, dtype=float)

    def exponents(t, x):
        x1 = np.asarray(x, dtype=float)[..., 0]
        return x1[..., None] * r - 0.5 * r * r * t

    def weights(t, x):
        e = exponents(t, x)
        w = np.exp(e - e.max(axis=-1, keepdims=True))
        return w / w.sum(axis=-1, keepdims=True)

    def value(t, x):
        e = exponents(t, x)
        top = e.max(axis=-1)
        return top + np.log(np.exp(e - top[..., None]).sum(axis=-1))

    def dt(t, x):
        return float(-0.5 * weights(t, x) @ (r * r))

    def grad(t, x):
        g = np.zeros(np.shape(x)[-1])
        g[0] = weights(t, x) @ r
        return g

    def hess(t, x):
        p = weights(t, x)
        m1 = p @ r
        H = np.zeros((np.shape(x)[-1],) * 2)
        H[0, 0] = p @ (r * r) - m1 * m1
        return H

    return ScalarField(value, dt, grad, hess, name="two_exponential", params={"rates": r.tolist()})


def half_log_field(coordinate: int = 1) -> ScalarField:
    """v = log(x_j) / 2 + t / 8, undefined (nan) for x_j <= 0."""

    def value(t, x):
        xj = np.asarray(x, dtype=float)[..., coordinate]
        with np.errstate(invalid="ignore", divide="ignore"):
            out = 0.5 * np.log(np.where(xj > 0, xj, np.nan)) + t / 8.0
        return out

    def grad(t, x):
        g = np.zeros(np.shape(x)[-1])
        g[coordinate] = 0.5 / x[coordinate]
        return g

    def hess(t, x):
        H = np.zeros((np.shape(x)[-1],) * 2)
        H[coordinate, coordinate] = -0.5 / x[coordinate] ** 2
        return H

    return ScalarField(value, lambda t, x: 0.125, grad, hess, name="half_log", params={"coordinate": coordinate})


_FIELDS = {
    "linear": linear_field,
    "constant": constant_field,
    "quadratic": quadratic_field,
    "two_exponential": two_exponential_field,
    "half_log": half_log_field,
}


def builtin_field(name: str, **params) -> ScalarField:
    try:
        factory = _FIELDS[name]
    except KeyError:
        raise NotFoundError(f"unknown field {name!r}; known: {sorted(_FIELDS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for field {name!r}: {exc}") from None


def field_names() -> list[str]:
    return sorted(_FIELDS)
