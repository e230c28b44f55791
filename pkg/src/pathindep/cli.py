"""Command-line front end.

    pathindep COMMAND [--config PATH] [--set key=value ...] [--out DIR] [--seed N] [--workers N]

Exit status: 0 pass, 1 failed check or numeric failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import characterize as C
from . import fields as F
from . import model as M
from . import verify as V
from ._io import jsonable, write_json
from .errors import ConfigurationError, NotFoundError, NumericError, PathIndepError, ValidationError
from .girsanov import ledger_batch
from .simulate import TimeGrid, derive_stream, simulate_batch

log = logging.getLogger("pathindep")

COMMANDS = (
    "list-models",
    "check-residuals",
    "run-identity",
    "run-martingale",
    "run-convergence",
    "curl-check",
    "probe-hypotheses",
)

_num = {"type": "number"}
_int = {"type": "integer"}
_range_spec = {
    "anyOf": [
        {"type": "array", "prefixItems": [_num, _num, {"type": "integer", "minimum": 1}], "minItems": 3, "maxItems": 3},
        {"type": "array", "items": _num, "minItems": 1},
    ]
}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


SCHEMA = _obj({
    "model": _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"]),
    "field": _obj({
        "name": {"type": "string"},
        "params": {"type": "object"},
        "fd_step_t": {"type": "number", "exclusiveMinimum": 0},
        "fd_step_x": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "numeric": {"type": "boolean"},
    }),
    "transform": {"oneOf": [{"type": "null"}, _obj({"name": {"type": "string"}, "params": {"type": "object"}}, ["name"])]},
    "x0": {"type": ["array", "null"], "items": _num},
    "jumps": {"type": ["boolean", "null"]},
    "grid": _obj({"T": {"type": "number", "exclusiveMinimum": 0}, "steps": {"type": "integer", "minimum": 1}}),
    "monte_carlo": _obj({"paths": {"type": "integer", "minimum": 1}, "seed": {"type": "integer", "minimum": 0}}),
    "convergence": _obj({
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "expect": {"enum": ["converge", "diverge"]},
    }),
    "domain": _obj({
        "t": _range_spec,
        "x": {"type": ["array", "null"], "items": _range_spec},
        "visited_paths": {"type": "integer", "minimum": 0},
        "visited_stride": {"type": "integer", "minimum": 1},
    }),
    "residual": _obj({
        "system": {"enum": ["auto", "hjb", "ftransform", "named", "pide"]},
        "case": {"enum": ["a", "b", "c", "d"]},
        "k": _int,
        "tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
    }),
    "probe": _obj({"points": {"type": "integer", "minimum": 1}, "bound": {"type": "number", "exclusiveMinimum": 0}}),
    "output": _obj({
        "dir": {"type": "string"},
        "ledger_path": {"type": ["integer", "null"], "minimum": 0},
        "trace_path": {"type": ["integer", "null"], "minimum": 0},
    }),
    "tolerances": _obj({
        "identity_max": {"type": ["number", "null"]},
        "martingale_sigmas": _num,
        "convergence_ratio": _num,
        "slope_range": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        "exclusion_fraction": _num,
        "negative_factor": _num,
        "negative_max_decrease": _num,
    }),
})

DEFAULTS = {
    "model": {"name": "heat_kernel", "params": {}},
    "field": {"name": "reference", "params": {}, "fd_step_t": 1e-5, "fd_step_x": None, "numeric": False},
    "transform": None,
    "x0": None,
    "jumps": None,
    "grid": {"T": 1.0, "steps": 16},
    "monte_carlo": {"paths": 100, "seed": 0},
    "convergence": {"levels": [256, 1024, 4096], "expect": "converge"},
    "domain": {"t": [0.0, 1.0, 5], "x": None, "visited_paths": 0, "visited_stride": 64},
    "residual": {"system": "auto", "case": "a", "k": 1, "tol": None},
    "probe": {"points": 200, "bound": 1e6},
    "output": {"dir": "out", "ledger_path": None, "trace_path": None},
    "tolerances": {
        "identity_max": 1e-10,
        "martingale_sigmas": 3.0,
        "convergence_ratio": 0.6,
        "slope_range": [0.4, 1.1],
        "exclusion_fraction": 0.01,
        "negative_factor": 10.0,
        "negative_max_decrease": 0.2,
    },
}


class ConfigError(PathIndepError):
    def __init__(self, message, key_path=""):
        super().__init__(message)
        self.key_path = key_path


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("params",):
            out[k] = _merge(out[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value", assignment)
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if node.get(p) is None:
            node[p] = {}
        if not isinstance(node[p], dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section", key)
        node = node[p]
    node[parts[-1]] = _parse_value(raw)


def resolve_config(path=None, overrides=(), seed=None, out=None) -> dict:
    """Merge defaults, the config file and overrides, then validate the result."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
    for a in overrides:
        apply_override(user, a)
    if seed is not None:
        user.setdefault("monte_carlo", {})["seed"] = seed
    if out is not None:
        user.setdefault("output", {})["dir"] = out
    try:
        jsonschema.validate(user, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}", where) from None
    return _merge(DEFAULTS, user)


# ---------------------------------------------------------------------------
# builders


def build_model(cfg) -> M.ModelSpec:
    return M.builtin(cfg["model"]["name"], cfg["model"].get("params") or {})


def build_field(cfg, model) -> F.ScalarField:
    spec = cfg["field"]
    if spec["name"] == "reference":
        if model.reference_field is None:
            raise ConfigError(f"model {model.name} has no reference field; set field.name", "field.name")
        v = model.reference_field
    else:
        v = F.builtin_field(spec["name"], **(spec.get("params") or {}))
    return v.with_steps(fd_step_t=spec["fd_step_t"], fd_step_x=spec["fd_step_x"], numeric=spec["numeric"])


def build_transform(cfg):
    spec = cfg["transform"]
    if spec is None:
        return None
    return F.transform(spec["name"], **(spec.get("params") or {}))


def build_experiment(cfg, workers=1) -> V.ExperimentConfig:
    model = build_model(cfg)
    tol = dict(cfg["tolerances"])
    tol["slope_range"] = tuple(tol["slope_range"])
    return V.ExperimentConfig(
        model=model,
        grid=TimeGrid(cfg["grid"]["T"], cfg["grid"]["steps"]),
        n_paths=cfg["monte_carlo"]["paths"],
        seed=cfg["monte_carlo"]["seed"],
        field=build_field(cfg, model),
        transform=build_transform(cfg),
        x0=cfg["x0"],
        tolerances=V.Tolerances(**tol),
        workers=workers,
        jumps=cfg["jumps"],
    )


def build_domain(cfg, model, workers=1) -> C.EvaluationDomain:
    spec = cfg["domain"]
    x0 = model.x0() if cfg["x0"] is None else np.asarray(cfg["x0"], dtype=float)
    xs = spec["x"]
    if xs is None:
        xs = [[float(c) - 1.0, float(c) + 1.0, 5] for c in x0]
    if len(xs) != model.d:
        raise ConfigError(f"domain.x has {len(xs)} axes, model {model.name} has d={model.d}", "domain.x")
    domain = C.EvaluationDomain.grid(spec["t"], xs)
    if spec["visited_paths"]:
        batch = simulate_batch(model, x0, TimeGrid(cfg["grid"]["T"], cfg["grid"]["steps"]), cfg["monte_carlo"]["seed"],
                               range(spec["visited_paths"]), jumps=cfg["jumps"], workers=workers)
        domain = domain + C.EvaluationDomain.from_paths(batch, stride=spec["visited_stride"])
    return domain


# ---------------------------------------------------------------------------
# commands


def _embedded(cfg):
    """The config echoed into artifacts; the output directory is run location, not configuration."""
    out = copy.deepcopy(cfg)
    out["output"].pop("dir", None)
    return out


def _summary(command, cfg, body) -> dict:
    return {"command": command, "seed": cfg["monte_carlo"]["seed"], "config": _embedded(cfg), **body}


def cmd_check_residuals(cfg, out: Path, workers: int) -> bool:
    model = build_model(cfg)
    v = build_field(cfg, model)
    domain = build_domain(cfg, model, workers)
    spec = cfg["residual"]
    system = spec["system"]
    kwargs = {}
    if system == "auto":
        if cfg["transform"] is not None:
            system = "ftransform"
        else:
            system = "pide" if model.jump is not None else "hjb"
    if system == "ftransform":
        kwargs["transform"] = build_transform(cfg) or F.identity()
    if system == "named":
        kwargs.update(case=spec["case"], params={"k": spec["k"]})
    report = C.evaluate_on_domain(system, v, model, domain, tol=spec["tol"], **kwargs)
    report.write_csv(out / "residuals.csv")
    image = max(float(np.max(np.abs(M.drift_image_residual(model, t, x)))) for t, x in domain.points)
    body = {"residuals": report.summary(), "drift_image_residual_sup": image, "model_notes": model.notes}
    write_json(out / "summary.json", _summary("check-residuals", cfg, body))
    if report.error_count:
        failed = [{"t": r.t, "x": r.x.tolist(), "error": r.error} for r in report.records if r.error]
        write_json(out / "diagnostics.json", {"command": "check-residuals", "failed_points": failed, "config": _embedded(cfg)})
    _print_lines([
        f"model {model.name}, field {v.name}, system {report.system}, {len(domain)} points",
        *(f"  sup |{k}| = {s:.3e}" for k, s in report.sup.items()),
        f"  drift image residual sup = {image:.3e}",
        f"  worst point: {report.worst_point}",
        f"  {'PASS' if report.passed else 'FAIL'} at tol {report.tol:g}",
    ])
    return report.passed


def _write_path_artifacts(cfg, exp: V.ExperimentConfig, out: Path):
    lp, tp = cfg["output"]["ledger_path"], cfg["output"]["trace_path"]
    for idx, kind in ((lp, "ledger"), (tp, "trace")):
        if idx is None:
            continue
        batch = simulate_batch(exp.model, exp.x0, exp.grid, exp.seed, [idx], jumps=exp.jumps)
        if kind == "ledger":
            ledger_batch(batch, exp.model, jumps=exp.jumps).ledger(0).write_csv(out / "ledger.csv")
        else:
            batch.path(0).write_trace(out / "trace.csv", out / "jumps.csv")


def _experiment_lines(res: V.ExperimentResult):
    st = res.stats
    lines = [f"{res.kind}: {'PASS' if res.passed else 'FAIL'}"]
    if st.get("count"):
        lines.append(f"  paths {st['count']} (+{st['excluded']} excluded), max error {st['max']:.3e}, median {st['median']:.3e}")
    mg = res.martingale
    lines.append(f"  mean Z_T {mg['mean_Z_T']:.6f} +- {mg['stderr']:.2e}")
    for row in res.convergence:
        lines.append(f"  n={row['steps']:>6}  dt={row['dt']:.3e}  median={row['median_error']:.3e}")
    if res.convergence:
        lines.append(f"  slope {res.slope if res.slope is not None else 'exact'}")
    lines += [f"  warning: {w}" for w in res.warnings]
    return lines


def cmd_run_identity(cfg, out, workers) -> bool:
    exp = build_experiment(cfg, workers)
    res = V.identity_experiment(exp)
    res.write_paths_csv(out / "paths.csv")
    _write_path_artifacts(cfg, exp, out)
    write_json(out / "summary.json", _summary("run-identity", cfg, {"result": res.summary()}))
    _print_lines(_experiment_lines(res))
    return res.passed


def cmd_run_martingale(cfg, out, workers) -> bool:
    exp = build_experiment(cfg, workers)
    res = V.martingale_experiment(exp)
    res.write_paths_csv(out / "paths.csv")
    _write_path_artifacts(cfg, exp, out)
    write_json(out / "summary.json", _summary("run-martingale", cfg, {"result": res.summary()}))
    _print_lines(_experiment_lines(res))
    return res.passed


def cmd_run_convergence(cfg, out, workers) -> bool:
    exp = build_experiment(cfg, workers)
    levels = cfg["convergence"]["levels"]
    if cfg["convergence"]["expect"] == "diverge":
        res = V.negative_experiment(exp, levels)
    else:
        res = V.convergence_study(exp, levels)
    res.write_paths_csv(out / "paths.csv")
    res.write_convergence_csv(out / "convergence.csv")
    write_json(out / "summary.json", _summary("run-convergence", cfg, {"result": res.summary()}))
    _print_lines(_experiment_lines(res))
    return res.passed


def cmd_curl_check(cfg, out, workers) -> bool:
    model = build_model(cfg)
    if model.d != model.m:
        raise ConfigError(f"curl-check needs d = m; model {model.name} has d={model.d}, m={model.m}", "model.name")
    report = C.gamma_integrability_check(model, build_domain(cfg, model, workers))
    report.write_csv(out / "residuals.csv")
    summary = report.summary()
    write_json(out / "summary.json", _summary("curl-check", cfg, {"curl": summary}))
    _print_lines([
        f"model {model.name}: {summary['points']} points, {summary['skipped']} skipped (singular sigma^*)",
        f"  sup defect {summary['sup_defect']:.6g}, FD error bound {summary['sup_error_bound']:.2e}",
        f"  {'obstruction: no scalar potential exists' if report.certified else 'no obstruction detected'}",
    ])
    return not report.certified


def cmd_probe_hypotheses(cfg, out, workers) -> bool:
    model = build_model(cfg)
    domain = build_domain(cfg, model, workers)
    pts = np.array([x for _, x in domain.points])
    ts = np.array([t for t, _ in domain.points])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    rng = derive_stream(cfg["monte_carlo"]["seed"], 0, "probe")
    n = cfg["probe"]["points"]
    triples = [
        (float(rng.uniform(ts.min(), ts.max())), rng.uniform(lo, hi), rng.uniform(lo, hi))
        for _ in range(n)
    ]
    report = M.hypothesis_probe(model, triples, bound=cfg["probe"]["bound"])
    write_json(out / "summary.json", _summary("probe-hypotheses", cfg, {"probe": report.to_dict()}))
    _print_lines([f"model {model.name}: {report.sample_count} pairs",
                  f"  lambda0 ~ {report.lambda0_est}, lambda1 ~ {report.lambda1_est}, Hf q2 {report.hf_q2}, q4 {report.hf_q4}",
                  f"  verdicts {report.verdicts}"])
    return "fail" not in report.verdicts.values()


HANDLERS = {
    "check-residuals": cmd_check_residuals,
    "run-identity": cmd_run_identity,
    "run-martingale": cmd_run_martingale,
    "run-convergence": cmd_run_convergence,
    "curl-check": cmd_curl_check,
    "probe-hypotheses": cmd_probe_hypotheses,
}


def _print_lines(lines):
    for line in lines:
        print(line)


def _sidecar_logger(out: Path):
    handler = logging.FileHandler(out / "run.log", mode="a")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("pathindep")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pathindep", description="Path-independence experiments for Girsanov exponents.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, value parsed as JSON when possible (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="parallel blocks; never changes results")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        for name in M.model_names():
            print(name)
        return 0
    try:
        cfg = resolve_config(args.config, args.overrides, args.seed, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    handler = _sidecar_logger(out)
    log.info("command %s, workers %d, config %s", args.command, args.workers, json.dumps(jsonable(_embedded(cfg)), sort_keys=True))
    try:
        ok = HANDLERS[args.command](cfg, out, max(1, args.workers))
    except ConfigError as exc:
        print(f"configuration error at {exc.key_path or '<root>'}: {exc}", file=sys.stderr)
        return 2
    except (ConfigurationError, ValidationError, NotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ArithmeticError, PathIndepError) as exc:
        write_json(out / "diagnostics.json", {"command": args.command, "error": f"{type(exc).__name__}: {exc}",
                                              "config": _embedded(cfg)})
        print(f"numeric failure: {exc} (see {out / 'diagnostics.json'})", file=sys.stderr)
        return 1
    finally:
        log.info("command %s finished", args.command)
        logging.getLogger("pathindep").removeHandler(handler)
        handler.close()
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
