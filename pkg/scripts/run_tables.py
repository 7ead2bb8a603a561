"""Run bundled MSE-ratio studies and collect one CSV of results.

    python scripts/run_tables.py table2_row_bell_031_035 table4_row_bell_005_006
    python scripts/run_tables.py --prefix table3_ --K 100 --out results/

Worker processes default to SHRINKCOUNT_THREADS (or the cpu count).
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from shrinkcount.io import write_rows
from shrinkcount.simulation import bundled_configs, load_config, mse_ratio_study


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("configs", nargs="*", help="bundled config names or config file paths")
    ap.add_argument("--prefix", help="run every bundled config whose name starts with this")
    ap.add_argument("--K", type=int, help="override replicate count")
    ap.add_argument("--seed", type=int, help="override master seed")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    names = list(args.configs)
    if args.prefix:
        names += [n for n in bundled_configs() if n.startswith(args.prefix)]
    if not names:
        ap.error("no configs given")

    out = Path(args.out)
    rows, meta = [], {}
    for name in names:
        cfg = load_config(name)
        if args.K is not None:
            cfg = replace(cfg, K=args.K)
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        t0 = time.perf_counter()
        rep = mse_ratio_study(cfg, workers=args.workers)
        secs = time.perf_counter() - t0
        rows += rep.rows()
        meta[cfg.name] = {"K": cfg.K, "seed": cfg.master_seed, "excluded": rep.excluded,
                          "valid": rep.valid, "mincv_choices": rep.mincv_choices, "seconds": round(secs, 1)}
        ratios = "  ".join(f"{e}={rep.ratio(e):.3f}" for e in rep.estimators if e != "mle")
        print(f"{cfg.name:<32} E={rep.mean_count:7.3f} S={rep.sd_count:6.3f}  {ratios}  ({secs:.0f}s)", flush=True)

    write_rows(rows, out / "mse_ratios.csv")
    (out / "runs.json").write_text(json.dumps(meta, indent=2) + "\n")


if __name__ == "__main__":
    main()
