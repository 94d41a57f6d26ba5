"""Deterministic sample-field and probe-point generators.

Verification suites need two kinds of inputs: smooth random grid fields (for
norm and inequality checks, where "smooth" keeps discretization error well
below the inequality margins) and low-discrepancy point sets (for scanning
growth/boundedness assumptions over the domain and a ball of states).  Both
generators are deterministic given their seed so failing samples can be
replayed exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .grid import Grid, GridField


def random_smooth_field(grid: Grid, n: int, rng: np.random.Generator) -> GridField:
    """A smooth O(1)-scale random field: constant plus low trig modes.

    Each component is c₀ + Σ_{k=1..3} (a_k sin(kπx + φ_k) + b_k cos(kπy + ψ_k)
    + d_k sin(kπx) sin(kπy)) with amplitudes shrinking like 1/k², so first and
    second derivatives stay moderate and quadrature error stays O(h²) with a
    small constant.
    """
    X, Y = grid.meshgrid()
    vals = np.empty((grid.npoints, grid.npoints, n))
    for c in range(n):
        comp = rng.uniform(-1.0, 1.0) * np.ones_like(X)
        for k in range(1, 4):
            a, b, d = rng.uniform(-1.0, 1.0, 3) / k**2
            phi, psi = rng.uniform(0.0, 2.0 * np.pi, 2)
            comp += a * np.sin(k * np.pi * X + phi)
            comp += b * np.cos(k * np.pi * Y + psi)
            comp += d * np.sin(k * np.pi * X) * np.sin(k * np.pi * Y)
        vals[:, :, c] = comp
    return GridField(grid, vals)


def halton_points(count: int, dim: int, seed: int) -> np.ndarray:
    """``count`` scrambled-Halton points in [0, 1)^dim, shape (count, dim).

    Scrambling is seeded, so the sequence is reproducible for a given
    (count, dim, seed).
    """
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    return sampler.random(count)
