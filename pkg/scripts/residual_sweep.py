"""Residual report of every built-in model against its reference field (or a stand-in), written as CSV."""

import argparse
from pathlib import Path

import numpy as np

from pathindep import characterize as C
from pathindep import fields as F
from pathindep import model as M

STAND_IN = {"gruschin": F.two_exponential_field(), "kohn": F.quadratic_field(), "kohn_corrected": F.quadratic_field()}


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="out/residual_sweep")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in M.model_names():
        m = M.builtin(name)
        v = m.reference_field or STAND_IN[name]
        x0 = m.x0()
        axes = [(c - 1.0, c + 1.0, 5) for c in x0]
        if name == "degenerate_exp":
            axes[1] = (0.25, 2.0, 5)
        dom = C.EvaluationDomain.grid((0.0, 1.0, 5), axes)
        rep = C.evaluate_on_domain("pide" if m.jump is not None else "hjb", v, m, dom)
        rep.write_csv(out / f"{name}.csv")
        image = max(float(np.max(np.abs(M.drift_image_residual(m, t, x)))) for t, x in dom.points)
        sups = "  ".join(f"{k} {s:.2e}" for k, s in rep.sup.items())
        print(f"{name:>18} [{v.name}]: {sups}  image {image:.2e}  {'PASS' if rep.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
