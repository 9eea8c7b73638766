"""Meta-experiment: is the A/A machinery calibrated when nothing is wrong?

Audits a normal-outcome population under many master seeds and reports how
often the empirical Type-I rate and the KS uniformity test stay in bounds.

    python scripts/null_calibration.py --seeds 100 --users 100000 --iterations 2000
"""

import argparse
import math
import time

import numpy as np

from aa_guard.resampler import ResamplePlan, run_aa_audit
from aa_guard.stats_core import ks_uniform_test
from aa_guard.synthetic import EventSpec, PopulationSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--users", type=int, default=100_000)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--alpha", type=float, default=0.05)
    args = ap.parse_args()

    band = 3 * math.sqrt(args.alpha * (1 - args.alpha) / args.iterations)
    event = EventSpec("y", "normal", {"mu": 0.0, "sigma": 1.0})
    rates, ks_ps, ok = [], [], 0
    t0 = time.perf_counter()
    for s in range(args.seeds):
        m = generate(PopulationSpec(args.users, (event,), seed=10_000 + s))
        p = run_aa_audit(m, ResamplePlan(iterations=args.iterations, master_seed=s, alpha=args.alpha))["y"].pvalues
        rate, ks_p = float(np.mean(p < args.alpha)), ks_uniform_test(p).p
        rates.append(rate)
        ks_ps.append(ks_p)
        good = abs(rate - args.alpha) <= band and ks_p > 0.01
        ok += good
        print(f"seed {s:>3}: type-I {rate:.4f}  KS p {ks_p:.3f}{'' if good else '  <-- out of bounds'}")
    print(f"{ok}/{args.seeds} seeds within alpha +/- {band:.4f} and KS p > 0.01 "
          f"({time.perf_counter() - t0:.0f}s)")
    print(f"mean type-I rate {np.mean(rates):.4f}; share of KS p < 0.05: {np.mean(np.array(ks_ps) < 0.05):.2f}")


if __name__ == "__main__":
    main()
