"""Cone-duality census over random rational divisor classes.

On each built-in surface lattice, samples rational classes with bounded
numerators and denominators and tallies how often the pairing witness
(a nef class pairing strictly positively against the divisor) agrees with
the cohomological test (-L not pseudoeffective).  On dual cone pairs the
two characterisations must coincide class by class; any mismatch is listed
and turns the exit code nonzero.

Rational arithmetic throughout: verdicts are exact, not floating point.

Example:
    python3 scripts/surface_duality_experiment.py --samples 2000 --seed 7
"""

import argparse
import json
import time
from fractions import Fraction

import numpy as np

from qposlab import (
    DivisorClass,
    abelian_diag_lattice,
    hirzebruch_f1_lattice,
    is_cohomologically_1ample,
    p1xp1_lattice,
    positive_pairing_witness,
)

LATTICES = {
    "p1xp1": p1xp1_lattice,
    "hirzebruch_f1": hirzebruch_f1_lattice,
    "abelian_diag": abelian_diag_lattice,
}


def random_divisor(rng: np.random.Generator, rank: int) -> DivisorClass:
    nums = rng.integers(-12, 13, size=rank)
    dens = rng.integers(1, 9, size=rank)
    return DivisorClass(tuple(Fraction(int(a), int(b)) for a, b in zip(nums, dens)))


def census(name: str, samples: int, rng: np.random.Generator) -> dict:
    lattice = LATTICES[name]()
    t0 = time.perf_counter()
    n_ample = 0
    n_witness = 0
    mismatches = []
    for _ in range(samples):
        divisor = random_divisor(rng, lattice.rank)
        one_ample = is_cohomologically_1ample(divisor, lattice)
        witness = positive_pairing_witness(divisor, lattice)
        n_ample += one_ample
        n_witness += witness is not None
        if one_ample != (witness is not None):
            mismatches.append([str(c) for c in divisor.coefficients])
    return {
        "lattice": name,
        "samples": samples,
        "one_ample": n_ample,
        "witnessed": n_witness,
        "mismatches": mismatches,
        "seconds": time.perf_counter() - t0,
    }


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=1000, help="random classes per lattice")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument(
        "--lattices",
        default=",".join(LATTICES),
        help=f"comma-separated subset of {sorted(LATTICES)}",
    )
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    reports = [census(name, args.samples, rng) for name in args.lattices.split(",")]
    print(json.dumps(reports, indent=2, sort_keys=True))
    return 1 if any(r["mismatches"] for r in reports) else 0


if __name__ == "__main__":
    raise SystemExit(main())
