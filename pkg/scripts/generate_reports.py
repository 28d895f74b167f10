"""Write JSON reports for every dimension covered by the command-line tools.

Usage: python scripts/generate_reports.py [OUTDIR] [--seed S] [--count K]
"""

import argparse
from pathlib import Path

from rankone.cli import main

JOBS = [
    ("stabilizer", range(2, 8)),
    ("brackets", range(2, 7)),
    ("prolong", range(2, 6)),
    ("obstruct", range(5, 8)),
    ("normalize", range(2, 7)),
]


def run(outdir: Path, seed: int, count: int) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    worst = 0
    for cmd, dims in JOBS:
        for n in dims:
            path = outdir / f"{cmd}-n{n}.json"
            argv = [cmd, "--dimension", str(n), "--format", "json", "--output", str(path)]
            if cmd == "normalize":
                argv += ["--seed", str(seed), "--order", str(n + 5)]
            code = main(argv)
            worst = max(worst, code)
            print(f"{cmd:<10} n={n}  exit {code}  -> {path.name}")
    path = outdir / "sweep.json"
    code = main(["sweep", "--seed", str(seed), "--count", str(count), "--format", "json",
                 "--output", str(path)])
    print(f"{'sweep':<10} n=5..7  exit {code}  -> {path.name}")
    return max(worst, code)


if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("outdir", nargs="?", default="reports")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    a = p.parse_args()
    raise SystemExit(run(Path(a.outdir), a.seed, a.count))
