"""Derive Lanczos coefficients by interpolating the exact Lanczos sum at integers.

Run once; the printed constants are pasted into ``fracroot.specfun``.
"""

import sys

import mpmath as mp

mp.mp.dps = 60


def lanczos_sum_exact(z, g):
    t = z + g + mp.mpf("0.5")
    return mp.gamma(z + 1) / (mp.sqrt(2 * mp.pi) * t ** (z + mp.mpf("0.5")) * mp.exp(-t))


def coefficients(g, n):
    g = mp.mpf(g)
    nodes = [mp.mpf(j) for j in range(n)]
    rows = []
    rhs = []
    for z in nodes:
        rows.append([mp.mpf(1)] + [1 / (z + k) for k in range(1, n)])
        rhs.append(lanczos_sum_exact(z, g))
    return mp.lu_solve(mp.matrix(rows), mp.matrix(rhs))


if __name__ == "__main__":
    g = float(sys.argv[1]) if len(sys.argv) > 1 else 7.0
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 15
    for c in coefficients(g, n):
        print(mp.nstr(c, 20))
