"""Run the cross-check matrix for one size class and write the tables.

    python3 scripts/run_crosscheck.py --size A --out results/A

Thin wrapper around the library API; ``deepshallow crosscheck`` does the same
with config-file support.
"""
import argparse
import time
from pathlib import Path

from deepshallow.experiment import MatrixConfig, default_workers, persist, run_matrix
from deepshallow.report import render


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="A")
    ap.add_argument("--seeds", type=int, default=15)
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--wf", type=float, default=MatrixConfig.saturation_factor)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg = MatrixConfig(size_class=args.size, seeds=range(args.seeds), budget=args.budget,
                       saturation_factor=args.wf)
    t0 = time.perf_counter()
    table = run_matrix(cfg, workers=args.workers)
    out = Path(args.out)
    persist(table, out / "results.jsonl")
    for kind, rows in (("detail", table.rows), ("summary", table.summary)):
        (out / f"{kind}.md").write_text(render(rows, kind, "md"))
        print(render(rows, kind, "txt"))
    print(f"{table.total_runs} runs in {time.perf_counter() - t0:.0f} s -> {out}")


if __name__ == "__main__":
    main()
