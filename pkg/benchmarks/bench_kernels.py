"""Compare the numba and numpy kernel backends.

Two measurements:

* per-kernel timings of the ``nb_*`` and ``np_*`` implementations on the
  same inputs (outputs are checked to agree first);
* an end-to-end dropout chain run once per backend, each in a subprocess
  with ``SSGMCMC_DISABLE_NUMBA`` set accordingly, since the flag is read at
  import time.

Usage::

    python benchmarks/bench_kernels.py --P 2802 --M 1000 --rows 2000
    python benchmarks/bench_kernels.py --json bench.json
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ssgmcmc import kernels
from ssgmcmc._accel import HAVE_NUMBA

CHAIN_SNIPPET = """
import json
from ssgmcmc.data import make_two_class
from ssgmcmc.model import MLP
from ssgmcmc.partition import partition_modulo
from ssgmcmc.sampler import RunConfig, StepSchedule, run_chain
model, data = MLP((2, 50, 50, 2)), make_two_class(1000, seed=0)
part = partition_modulo(model.n_params, {M})
cfg = RunConfig(model, data, sampler="psgld", variant="dropout", partition=part, K=4,
                batch_size=100, steps={steps}, schedule=StepSchedule(1e-3))
run_chain(RunConfig(model, data, sampler="psgld", variant="dropout", partition=part,
                    K=4, batch_size=100, steps=20))
_, report = run_chain(cfg)
print(json.dumps({{"backend": report.backend, "sec_per_step": report.wall_clock_per_step}}))
"""


def make_inputs(P: int, M: int, rows: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    group_of = (np.arange(P) % M).astype(np.int64)
    r = (rng.random(M) < 0.5).astype(np.float64)
    r[0] = 0.3  # one fractional entry exercises the arithmetic branch
    return {
        "theta": rng.standard_normal(P),
        "tilde": rng.standard_normal(P),
        "buf": rng.standard_normal((rows, P)),
        "idx": rng.integers(rows, size=M),
        "r": r,
        "group_of": group_of,
        "rho": np.exp(-np.arange(rows)[:, None] / (5.0 + np.arange(16))),
    }


def kernel_calls(x: dict) -> dict:
    """name -> argument tuple for every kernel pair."""
    return {
        "gather_groupwise": (x["buf"], x["idx"], x["group_of"]),
        "mix": (x["theta"], x["tilde"], x["r"], x["group_of"]),
        "mix_from_store": (x["theta"], x["buf"], x["idx"], x["r"], x["group_of"]),
        "scale_by_mask": (x["theta"], x["r"], x["group_of"]),
        "sokal_window": (x["rho"], 5.0),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def bench_kernels(x: dict, repeats: int, number: int) -> list[dict]:
    out = []
    for name, args in kernel_calls(x).items():
        np_fn = getattr(kernels, f"np_{name}")
        nb_fn = getattr(kernels, f"nb_{name}")
        nb_fn(*args)  # compile outside the timed region
        if not _same(np_fn(*args), nb_fn(*args)):
            raise AssertionError(f"{name}: backends disagree")
        t_np = min(timeit.repeat(lambda: np_fn(*args), repeat=repeats, number=number)) / number
        t_nb = min(timeit.repeat(lambda: nb_fn(*args), repeat=repeats, number=number)) / number
        out.append({"kernel": name, "numpy_us": 1e6 * t_np, "numba_us": 1e6 * t_nb,
                    "speedup": t_np / t_nb})
    return out


def bench_chain(M: int, steps: int) -> list[dict]:
    out = []
    for disable in ("1", "0"):
        env = {**os.environ, "SSGMCMC_DISABLE_NUMBA": disable}
        proc = subprocess.run([sys.executable, "-c", CHAIN_SNIPPET.format(M=M, steps=steps)],
                              env=env, capture_output=True, text=True, check=True)
        out.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--P", type=int, default=2802, help="number of parameters")
    parser.add_argument("--M", type=int, default=1000, help="number of groups")
    parser.add_argument("--rows", type=int, default=2000, help="rows in the chain store")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    parser.add_argument("--chain-steps", type=int, default=500,
                        help="steps for the end-to-end run (0 skips it)")
    parser.add_argument("--json", help="also write results to this file")
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    x = make_inputs(args.P, args.M, args.rows)
    rows = bench_kernels(x, args.repeats, args.number)
    print(f"P={args.P} M={args.M} rows={args.rows}")
    print(f"{'kernel':<18}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for row in rows:
        print(f"{row['kernel']:<18}{row['numpy_us']:>12.2f}{row['numba_us']:>12.2f}{row['speedup']:>10.2f}")

    chain = []
    if args.chain_steps > 0:
        chain = bench_chain(args.M, args.chain_steps)
        for row in chain:
            print(f"chain {row['backend']:<6} {1e3 * row['sec_per_step']:.3f} ms/step")

    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"P": args.P, "M": args.M, "rows": args.rows, "kernels": rows,
                       "chain": chain}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
