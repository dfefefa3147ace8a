"""Validate the first-passage recursion against the closed-form law.

For a constant drift the first-passage time of a Wiener process through a
fixed barrier has the inverse-Gaussian distribution, so the kernel
recursion can be checked exactly.  This script sweeps a few drift/noise
settings and reports the sup-norm error of the cumulative probability on
the 0.1 s grid, plus the effect of sub-stepping the grid.
"""

import numpy as np
from scipy.stats import norm

from driftlane import first_passage_mu


def inverse_gaussian_cdf(t, mu, sigma, barrier):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    st = sigma * np.sqrt(t[pos])
    out[pos] = (norm.cdf((mu * t[pos] - barrier) / st)
                + np.exp(2.0 * mu * barrier / sigma ** 2)
                * norm.cdf((-mu * t[pos] - barrier) / st))
    return out


def main():
    dt, horizon = 0.1, 60.0
    n = int(round(horizon / dt)) + 1
    t = np.arange(n) * dt

    print("first-passage recursion vs closed-form constant-drift law")
    print(f"barrier gap 10 evidence units, horizon {horizon:.0f} s, dt {dt} s\n")
    print(f"{'mu':>6} {'sigma':>6} {'F(60s)':>8} {'sup err':>10} "
          f"{'sup err (substeps=4)':>22}")
    for mu, sigma in [(0.5, 1.0), (0.2, 1.9147), (-0.1, 1.5), (1.0, 3.0)]:
        ref = inverse_gaussian_cdf(t, mu, sigma, 10.0)
        res1 = first_passage_mu(10.0, np.full(n, mu), sigma, 20.0, dt)
        res4 = first_passage_mu(10.0, np.full(n, mu), sigma, 20.0, dt,
                                substeps=4)
        e1 = np.max(np.abs(res1.F - ref))
        e4 = np.max(np.abs(res4.F - ref))
        print(f"{mu:>6.2f} {sigma:>6.2f} {ref[-1]:>8.4f} {e1:>10.2e} "
              f"{e4:>22.2e}")
    print("\nthe recursion tracks the closed form to a few parts in a "
          "thousand at the data grid,\nand tighter under grid refinement.")


if __name__ == "__main__":
    main()
