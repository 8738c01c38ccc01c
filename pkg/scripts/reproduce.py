"""Run the experiments with the configurations in scripts/configs.

    python scripts/reproduce.py                 # all four, outputs in results/
    python scripts/reproduce.py exp3 --out /tmp/r
"""
import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from sedlab.config import load_config
from sedlab.experiments import run_experiment

CONFIGS = Path(__file__).resolve().parent / "configs"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("ids", nargs="*", default=["exp1", "exp2", "exp3", "exp4"])
    p.add_argument("--out", default="results")
    args = p.parse_args(argv)
    status = 0
    for exp_id in args.ids:
        cfg = dataclasses.replace(load_config(CONFIGS / f"{exp_id}.cfg"), out=str(Path(args.out) / exp_id))
        t0 = time.perf_counter()
        rep = run_experiment(cfg)
        summary = {k: v for k, v in rep.items() if k not in ("cases", "config")}
        print(f"{exp_id}: {'PASS' if rep['passed'] else 'FAIL'} in {time.perf_counter() - t0:.0f}s")
        print(json.dumps({k: summary[k] for k in summary if k not in ("version",)}, default=str, indent=1))
        status |= 0 if rep["passed"] else 1
    return status


if __name__ == "__main__":
    sys.exit(main())
