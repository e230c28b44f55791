"""Curl map of the printed Gruschin gamma and the matching non-convergence of the identity error.

Writes curl.csv (defect on a grid) and negative.csv (median error per level).
"""

import argparse
from pathlib import Path

from pathindep import characterize as C
from pathindep import fields as F
from pathindep import model as M
from pathindep import verify as V
from pathindep.simulate import TimeGrid


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--paths", type=int, default=200)
    p.add_argument("--out", default="out/gruschin_obstruction")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    g = M.builtin("gruschin", k=args.k)
    curl = C.gamma_integrability_check(g, C.EvaluationDomain.grid((0.25, 1.0, 4), [(0.25, 3.0, 12), (-3.0, 3.0, 13)]))
    curl.write_csv(out / "curl.csv")
    print(f"curl: sup defect {curl.sup_defect:.4g}, FD bound {curl.sup_error_bound:.2e}, skipped {len(curl.skipped)}")

    for name, field in [("two_exponential", F.two_exponential_field()), ("quadratic", F.quadratic_field())]:
        cfg = V.ExperimentConfig(g, TimeGrid(1.0, 16), args.paths, field=field)
        res = V.negative_experiment(cfg, [64, 256, 1024, 4096])
        res.write_convergence_csv(out / f"negative_{name}.csv")
        meds = ", ".join(f"{r['median_error']:.3f}" for r in res.convergence)
        print(f"{name}: medians {meds} -> {'plateau confirmed' if res.passed else 'converges'}")


if __name__ == "__main__":
    main()
