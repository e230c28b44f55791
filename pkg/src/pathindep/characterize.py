"""Point-wise residuals of the characterizing equations, plus consistency diagnostics.

A residual is zero exactly where the corresponding equation holds. All
operators evaluate one point ``(t, x)``; :func:`evaluate_on_domain` maps
them over an :class:`EvaluationDomain`.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import fields as F
from .errors import DegenerateTransformError, DomainError, NumericError, PathIndepError, ValidationError
from .model import ModelSpec


def _pieces(v: F.ScalarField, model: ModelSpec, t, x):
    x = np.asarray(x, dtype=float)
    sig = np.asarray(model.diffusion(t, x), dtype=float)
    vt, g, H = F.derivatives(v, t, x)
    a = sig @ sig.T
    s = sig.T @ g
    return x, sig, a, vt, g, H, s


def hjb_residual(v: F.ScalarField, model: ModelSpec, t: float, x) -> tuple[np.ndarray, float]:
    """(sigma sigma^* grad v - b, dv/dt + 1/2 {Tr[sigma sigma^* hess v] + |sigma^* grad v|^2})."""
    x, sig, a, vt, g, H, s = _pieces(v, model, t, x)
    r_grad = a @ g - np.asarray(model.drift(t, x), dtype=float)
    r_time = vt + 0.5 * (float(np.sum(a * H)) + float(s @ s))
    return r_grad, float(r_time)


def ftransform_residual(f: F.FTransform, v: F.ScalarField, model: ModelSpec, t: float, x) -> tuple[np.ndarray, float]:
    """Residuals of the system for path-independence with f(v) in place of v."""
    x, sig, a, vt, g, H, s = _pieces(v, model, t, x)
    y = float(v.value(t, x))
    f.check(y, where=f" (point t={t}, x={x})")
    f1, f2 = float(f.f1(y)), float(f.f2(y))
    if f1 == 0.0:
        raise DegenerateTransformError(f"f'(v) = 0 at t={t}, x={x}: the gradient condition cannot determine b")
    s2 = float(s @ s)
    r_grad = f1 * (a @ g) - np.asarray(model.drift(t, x), dtype=float)
    r_time = f1 * vt + 0.5 * (f1 * float(np.sum(a * H)) + f2 * s2 + f1 * f1 * s2)
    return r_grad, float(r_time)


NAMED_TRANSFORMS = {"a": "identity", "b": "log", "c": "odd_power", "d": "tan"}


def named_transform(case: str, params: Optional[dict] = None) -> F.FTransform:
    if case not in NAMED_TRANSFORMS:
        raise ValidationError(f"unknown case {case!r}, expected one of a, b, c, d")
    if case == "c":
        return F.odd_power(int((params or {}).get("k", 0)))
    return F.transform(NAMED_TRANSFORMS[case])


def named_scale(case: str, y: float, params: Optional[dict] = None) -> tuple[float, float]:
    """Factors (grad, time) with named_residual = factor * ftransform_residual.

    The printed special cases divide the time equation by f'(v); the
    gradient equation is divided by f'(v) for cases b and d only.
    """
    f1 = float(named_transform(case, params).f1(y))
    return {
        "a": (1.0, 1.0),
        "b": (1.0 / f1, 1.0 / f1),
        "c": (1.0, 1.0 / f1),
        "d": (1.0 / f1, 1.0 / f1),
    }[case]


def named_residual(case: str, v: F.ScalarField, model: ModelSpec, t: float, x, params: Optional[dict] = None,
                   printed: bool = True):
    """The special-case systems for f = identity, log, y^(2k+1) and tan.

    With ``printed=True`` the residuals are in their customary normalized
    form; with ``printed=False`` the normalization (see :func:`named_scale`)
    is undone so the result is directly comparable with ftransform_residual.
    """
    params = params or {}
    r_grad, r_time = _named_printed(case, v, model, t, x, params)
    if printed:
        return r_grad, r_time
    sg, st = named_scale(case, float(v.value(t, x)), params)
    return r_grad / sg, r_time / st


def _named_printed(case, v, model, t, x, params):
    tf = named_transform(case, params)
    x, sig, a, vt, g, H, s = _pieces(v, model, t, x)
    y = float(v.value(t, x))
    tf.check(y, where=f" (point t={t}, x={x})")
    b = np.asarray(model.drift(t, x), dtype=float)
    tr = float(np.sum(a * H))
    s2 = float(s @ s)
    ag = a @ g
    if case == "a":
        return ag - b, float(vt + 0.5 * (tr + s2))
    if case == "b":
        # with sigma = Id this is grad v = v b and the backward heat equation
        return ag - y * b, float(vt + 0.5 * tr)
    if case == "c":
        k = int(params.get("k", 0))
        p = 2 * k + 1
        if k == 0:
            coef = 1.0
        else:
            if y == 0.0:
                raise DomainError(f"case c with k={k} needs v != 0 at t={t}, x={x}")
            coef = (p * y**p + 2 * k) / y
        return p * y ** (2 * k) * ag - b, float(vt + 0.5 * (tr + coef * s2))
    c = math.cos(y)
    return ag - c * c * b, float(vt + 0.5 * (tr + (c + math.sin(y)) ** 2 / (c * c) * s2))


def _jump_increments(v: F.ScalarField, model: ModelSpec, t, x):
    jump = model.jump
    if jump is None:
        return np.zeros((0, x.shape[0])), np.zeros(0)
    f = np.stack([np.asarray(jump.coeff(t, x, u), dtype=float) for u in jump.atoms])
    if v.increment is not None:
        dv = np.asarray(v.increment(t, x, f), dtype=float)
    else:
        dv = np.asarray(v.value(t, x + f), dtype=float) - float(v.value(t, x))
    if not np.all(np.isfinite(dv)):
        raise NumericError(f"field undefined after a jump from t={t}, x={x}")
    return f, dv


def pide_residual(v: F.ScalarField, model: ModelSpec, t: float, x) -> float:
    """dv/dt + 1/2 Tr[sigma sigma^* hess v] + 1/2 |sigma^* grad v|^2 + exact atom sum of the jump integrand."""
    x, sig, a, vt, g, H, s = _pieces(v, model, t, x)
    r = vt + 0.5 * (float(np.sum(a * H)) + float(s @ s))
    if model.jump is None:
        return float(r)
    f, dv = _jump_increments(v, model, t, x)
    for i, (fi, di) in enumerate(zip(f, dv)):
        if di > 709.0:
            raise NumericError(f"exp overflow in jump integrand at atom {i} (increment {di}) at t={t}, x={x}")
        e = math.exp(di)
        r += model.jump.weights[i] * (e - 1.0 - float(fi @ g) * e)
    return float(r)


def lambda_consistency(v: F.ScalarField, model: ModelSpec, t: float, x) -> np.ndarray:
    """Per atom, lambda(t, u_i) - exp{v(t, x + f(t, x, u_i)) - v(t, x)}."""
    x = np.asarray(x, dtype=float)
    if model.jump is None:
        return np.zeros(0)
    _, dv = _jump_increments(v, model, t, x)
    implied = np.exp(dv)
    if np.any(implied > 1.0):
        warnings.warn(f"implied intensity {implied} exceeds 1 at t={t}, x={x}", stacklevel=2)
    return model.jump.intensities(t) - implied


def gamma_consistency(v: F.ScalarField, model: ModelSpec, t: float, x) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """(gamma - sigma^* grad v, gamma - sigma sigma^* grad v); the second only when d = m."""
    x, sig, a, vt, g, H, s = _pieces(v, model, t, x)
    gam = np.asarray(model.gamma(t, x), dtype=float)
    r_ss = gam - a @ g if model.d == model.m else None
    return gam - s, r_ss


# ---------------------------------------------------------------------------
# domains and reports


@dataclass
class EvaluationDomain:
    points: list  # (t, x) pairs

    def __post_init__(self):
        if not self.points:
            raise ValidationError("evaluation domain is empty")
        self.points = [(float(t), np.asarray(x, dtype=float)) for t, x in self.points]

    def __len__(self):
        return len(self.points)

    @classmethod
    def grid(cls, t_spec, x_specs) -> "EvaluationDomain":
        """Tensor grid; each spec is ``(lo, hi, count)`` or an explicit list of values."""

        def axis(spec):
            if isinstance(spec, (list, tuple)) and len(spec) == 3 and isinstance(spec[2], int) and not isinstance(spec[2], bool):
                lo, hi, n = spec
                return np.linspace(float(lo), float(hi), n)
            return np.asarray(spec, dtype=float).reshape(-1)

        ts = axis(t_spec)
        axes = [axis(s) for s in x_specs]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        return cls([(t, x) for t in ts for x in mesh])

    @classmethod
    def from_paths(cls, batch, stride: int = 1, max_points: Optional[int] = None) -> "EvaluationDomain":
        """Visited (t_k, X_k) pairs: an empirical stand-in for the support of (t, X_t)."""
        pts = []
        for i in range(len(batch)):
            if batch.failed_step[i] >= 0:
                continue
            for k in range(0, batch.grid.steps + 1, stride):
                pts.append((batch.grid.time(k), batch.states[i, k]))
        if max_points is not None:
            pts = pts[:max_points]
        return cls(pts)

    def __add__(self, other: "EvaluationDomain") -> "EvaluationDomain":
        return EvaluationDomain(self.points + other.points)


@dataclass
class PointRecord:
    t: float
    x: np.ndarray
    residuals: dict = field(default_factory=dict)  # family -> 1-D array
    error: Optional[str] = None

    def magnitude(self) -> float:
        mags = [float(np.max(np.abs(r))) for r in self.residuals.values() if np.size(r)]
        return max(mags, default=0.0)


FAMILIES = ("r_grad", "r_time", "r_jump", "r_lambda", "r_gamma")


@dataclass
class ResidualReport:
    system: str
    records: list
    sup: dict
    tol: float
    passed: bool
    worst_index: Optional[int]
    error_count: int

    @property
    def worst_point(self):
        if self.worst_index is None:
            return None
        r = self.records[self.worst_index]
        return {"index": self.worst_index, "t": r.t, "x": r.x.tolist(), "magnitude": r.magnitude()}

    def summary(self) -> dict:
        return {
            "system": self.system,
            "points": len(self.records),
            "sup": self.sup,
            "tol": self.tol,
            "passed": self.passed,
            "errors": self.error_count,
            "worst_point": self.worst_point,
        }

    def columns(self) -> list:
        d = self.records[0].x.shape[0]
        cols = ["t"] + [f"x_{i + 1}" for i in range(d)]
        widths = {}
        for r in self.records:
            for fam, val in r.residuals.items():
                widths[fam] = max(widths.get(fam, 0), np.size(val))
        for fam in FAMILIES:
            if fam in widths:
                if fam == "r_time" or fam == "r_jump":
                    cols.append(fam)
                else:
                    cols += [f"{fam}_{i + 1}" for i in range(widths[fam])]
        return cols + ["error"]

    def write_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                row = {"t": repr(r.t), "error": r.error or ""}
                row.update({f"x_{i + 1}": repr(float(v)) for i, v in enumerate(r.x)})
                for fam, val in r.residuals.items():
                    val = np.atleast_1d(val)
                    if fam in ("r_time", "r_jump"):
                        row[fam] = repr(float(val[0]))
                    else:
                        row.update({f"{fam}_{i + 1}": repr(float(c)) for i, c in enumerate(val)})
                w.writerow([row.get(c, "") for c in cols])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def hjb_system(v, model, t, x, **_):
    r_grad, r_time = hjb_residual(v, model, t, x)
    r_gamma, _ = gamma_consistency(v, model, t, x)
    return {"r_grad": r_grad, "r_time": np.array([r_time]), "r_gamma": r_gamma}


def ftransform_system(v, model, t, x, transform: F.FTransform = None, **_):
    r_grad, r_time = ftransform_residual(transform or F.identity(), v, model, t, x)
    return {"r_grad": r_grad, "r_time": np.array([r_time])}


def named_system(v, model, t, x, case: str = "a", params=None, **_):
    r_grad, r_time = named_residual(case, v, model, t, x, params)
    return {"r_grad": r_grad, "r_time": np.array([r_time])}


def pide_system(v, model, t, x, **_):
    r_grad, _ = hjb_residual(v, model, t, x)
    r_gamma, _ = gamma_consistency(v, model, t, x)
    return {
        "r_grad": r_grad,
        "r_jump": np.array([pide_residual(v, model, t, x)]),
        "r_lambda": lambda_consistency(v, model, t, x),
        "r_gamma": r_gamma,
    }


SYSTEMS = {"hjb": hjb_system, "ftransform": ftransform_system, "named": named_system, "pide": pide_system}


def default_tolerance(v: F.ScalarField, fd_bound: float = 0.0) -> float:
    return 1e-10 if v.analytic else 1e-6 * (1.0 + fd_bound)


def evaluate_on_domain(
    op: Union[str, Callable],
    v: F.ScalarField,
    model: ModelSpec,
    domain: EvaluationDomain,
    tol: Optional[float] = None,
    **op_kwargs,
) -> ResidualReport:
    """Apply a residual system at every domain point; point failures are recorded, not raised."""
    if domain is None or len(domain) == 0:
        raise ValidationError("evaluation domain is empty")
    name = op if isinstance(op, str) else getattr(op, "__name__", "custom")
    fn = SYSTEMS[op] if isinstance(op, str) else op
    tol = default_tolerance(v) if tol is None else float(tol)
    records = []
    for t, x in domain.points:
        rec = PointRecord(t, x)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rec.residuals = {k: np.atleast_1d(np.asarray(r, dtype=float)) for k, r in fn(v, model, t, x, **op_kwargs).items()}
        except (PathIndepError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
        records.append(rec)
    sup: dict = {}
    for r in records:
        for fam, val in r.residuals.items():
            if np.size(val):
                sup[fam] = max(sup.get(fam, 0.0), float(np.max(np.abs(val))))
    ok = [i for i, r in enumerate(records) if r.error is None]
    worst = max(ok, key=lambda i: records[i].magnitude()) if ok else None
    errors = len(records) - len(ok)
    passed = errors == 0 and all(s <= tol for s in sup.values())
    return ResidualReport(name, records, sup, tol, passed, worst, errors)


# ---------------------------------------------------------------------------
# integrability of gamma


@dataclass
class CurlReport:
    points: list  # dicts: t, x, defect (max |c_ij|), error_bound, matrix
    sup_defect: float
    sup_error_bound: float
    skipped: list  # (t, x, reason)

    @property
    def certified(self) -> bool:
        """A defect clearly above the finite-difference noise rules out any scalar potential."""
        return self.sup_defect > 10.0 * self.sup_error_bound and self.sup_defect > 1e-8

    def summary(self) -> dict:
        worst = max(self.points, key=lambda p: p["defect"], default=None)
        return {
            "points": len(self.points),
            "skipped": len(self.skipped),
            "sup_defect": self.sup_defect,
            "sup_error_bound": self.sup_error_bound,
            "obstruction": self.certified,
            "worst_point": None if worst is None else {"t": worst["t"], "x": worst["x"], "defect": worst["defect"]},
        }

    def write_csv(self, path) -> None:
        d = len(self.points[0]["x"]) if self.points else 0
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)] + [f"c_{i + 1}{j + 1}" for i, j in pairs] + ["defect", "error_bound"])
            for p in self.points:
                c = p["matrix"]
                w.writerow([repr(p["t"])] + [repr(v) for v in p["x"]] + [repr(float(c[i][j])) for i, j in pairs]
                           + [repr(p["defect"]), repr(p["error_bound"])])


def _candidate_gradient(model: ModelSpec, t, x, cond_max=1e12):
    sig = np.asarray(model.diffusion(t, x), dtype=float)
    st = sig.T
    if np.linalg.cond(st) > cond_max:
        raise np.linalg.LinAlgError("sigma^* is singular")
    return np.linalg.solve(st, np.asarray(model.gamma(t, x), dtype=float))


def _curl(model, t, x, h):
    d = x.shape[0]
    J = np.empty((d, d))  # J[i, j] = d_i g_j
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        J[i] = (_candidate_gradient(model, t, x + e) - _candidate_gradient(model, t, x - e)) / (2 * h)
    return J - J.T


def gamma_integrability_check(model: ModelSpec, domain: EvaluationDomain, h: float = 1e-5) -> CurlReport:
    """Antisymmetric part of the Jacobian of g = (sigma^*)^{-1} gamma.

    A nonzero defect means no C^2 scalar v satisfies gamma = sigma^* grad v.
    The error bound is the change in the defect when the step is doubled.
    """
    if model.d != model.m:
        raise ValidationError(f"curl check needs d = m, model {model.name} has d={model.d}, m={model.m}")
    points, skipped = [], []
    for t, x in domain.points:
        try:
            C = _curl(model, t, x, h)
            C2 = _curl(model, t, x, 2 * h)
        except np.linalg.LinAlgError as exc:
            skipped.append((t, x.tolist(), str(exc)))
            continue
        points.append({
            "t": t, "x": x.tolist(), "matrix": C.tolist(),
            "defect": float(np.max(np.abs(C), initial=0.0)),
            "error_bound": float(np.max(np.abs(C2 - C), initial=0.0)),
        })
    return CurlReport(
        points,
        max((p["defect"] for p in points), default=0.0),
        max((p["error_bound"] for p in points), default=0.0),
        skipped,
    )
