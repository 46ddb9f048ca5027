"""Train one config over several seeds and summarise the worst-case curves.

    python scripts/sweep.py configs/balanced_stac.ini --seeds 0 1 2 3 4 --threshold 45
    python scripts/sweep.py configs/imbalanced_stac.ini --set episodes=100000 --set buffer_capacity=5000

Each seed prints one line: wall time, first episode count at which the
threshold was reached, the longest streak above it, and the curve itself.
"""

import argparse
import json
import sys
from pathlib import Path

from stac import config
from stac.experiments import first_reaching, longest_streak_above, run_seed


def parse_overrides(items):
    out = {}
    for item in items:
        k, _, v = item.partition("=")
        try:
            v = json.loads(v)
        except json.JSONDecodeError:
            pass
        out[k] = tuple(v) if isinstance(v, list) else v
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("config")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a [train] field; values are JSON-decoded when possible")
    p.add_argument("--out", help="keep run directories under this path")
    args = p.parse_args(argv)

    cfg = config.load(args.config)
    overrides = parse_overrides(args.set)
    hits = 0
    for seed in args.seeds:
        out = Path(args.out) / f"seed{seed}" if args.out else None
        run = run_seed(cfg, seed, out=out, **overrides)
        curve = " ".join("%.1f" % v for v in run.worst_case)
        line = f"seed {seed} wall {run.wall:.0f}s"
        if args.threshold is not None:
            first = first_reaching(run, args.threshold)
            hits += first is not None
            line += f" reached {first} streak {longest_streak_above(run.worst_case, args.threshold)}"
        print(line, "|", curve, flush=True)
    if args.threshold is not None:
        print(f"{hits}/{len(args.seeds)} seeds reached {args.threshold}")


if __name__ == "__main__":
    sys.exit(main())
