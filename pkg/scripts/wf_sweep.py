"""Sweep the saturation factor w_f on the self-fit and cross cells of a size class.

Prints median F_init, median F_opt per method and the Deep/Shallow ratios for
each w_f. Used to pick the default w_f (small enough that F_init stays well below
one, large enough that the four methods remain clearly separated).

    python3 scripts/wf_sweep.py --wf 1 1.5 2 3 --seeds 5
"""
import argparse

from deepshallow.experiment import MatrixConfig, default_workers, run_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="A")
    ap.add_argument("--wf", type=float, nargs="+", default=[1.0, 1.5, 2.0, 3.0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=default_workers())
    args = ap.parse_args()

    for wf in args.wf:
        cfg = MatrixConfig(size_class=args.size, seeds=range(args.seeds), budget=args.budget,
                           saturation_factor=wf)
        table = run_matrix(cfg, workers=args.workers)
        print(f"\nw_f = {wf}")
        for r in table.rows:
            ds = "" if r.deep_shallow_ratio is None else f"  deep/shallow {r.deep_shallow_ratio:8.1f}"
            print(f"  {r.network} on {r.data_source} {r.method:>8}  F_init {r.f_init_agg:.3e}"
                  f"  F_opt {r.f_opt_agg:.3e}{ds}")


if __name__ == "__main__":
    main()
