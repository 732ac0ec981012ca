"""Run every demo config through the CLI and check the exit codes.

    python3 demos/run_all.py [--only NAME ...] [--out DIR]

Outputs land in ``demos/out/<config name>/``. Configs named ``bad_*`` are
malformed on purpose and must be rejected with exit code 2.
"""
import argparse
import sys
import time
from pathlib import Path

from liplab.cli import main

HERE = Path(__file__).resolve().parent

# config name -> (subcommand, expected exit code)
DEMOS = {
    "approximate_linf": ("approximate", 0),
    "approximate_affine": ("approximate", 0),
    "sobolev_abs": ("sobolev", 0),
    "sobolev_affine": ("sobolev", 0),
    "bv_interval": ("bv", 0),
    "bv_square": ("bv", 0),
    "bad_n0": ("approximate", 2),
    "bad_eps": ("approximate", 2),
    "bad_weight": ("sobolev", 2),
}


def run(names, out_root):
    failed = []
    for name in names:
        command, expected = DEMOS[name]
        cfg = HERE / "configs" / f"{name}.json"
        t0 = time.perf_counter()
        code = main([command, "--config", str(cfg), "--out", str(out_root / name), "--quiet"])
        status = "ok" if code == expected else "UNEXPECTED"
        print(f"{name:<20} {command:<12} exit {code} (expected {expected})  {time.perf_counter() - t0:6.1f} s  {status}")
        if code != expected:
            failed.append(name)
    return failed


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--only", nargs="+", choices=sorted(DEMOS), help="run a subset")
    ap.add_argument("--out", default=str(HERE / "out"), help="output root")
    args = ap.parse_args()
    failed = run(args.only or list(DEMOS), Path(args.out))
    sys.exit(1 if failed else 0)
