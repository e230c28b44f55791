"""Refinement study of the path-wise identity error on nested Brownian increments.

    python3 scripts/convergence_study.py --model two_exponential --levels 64 256 1024 4096 --out out/conv
"""

import argparse
from pathlib import Path

from pathindep import model as M
from pathindep import verify as V
from pathindep.simulate import TimeGrid


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--model", default="two_exponential")
    p.add_argument("--levels", type=int, nargs="+", default=[64, 256, 1024, 4096])
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out/convergence_study")
    args = p.parse_args()

    cfg = V.ExperimentConfig(M.builtin(args.model), TimeGrid(1.0, args.levels[-1]), args.paths, args.seed, workers=args.workers)
    res = V.convergence_study(cfg, args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.write_convergence_csv(out / "convergence.csv")
    res.write_paths_csv(out / "paths.csv")
    for row in res.convergence:
        print(f"n={row['steps']:>6}  dt={row['dt']:.3e}  median={row['median_error']:.4e}  max={row['max_error']:.4e}")
    print(f"slope {res.slope}  ratio {res.checks['ratio_last_two']:.3f}  {'PASS' if res.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
