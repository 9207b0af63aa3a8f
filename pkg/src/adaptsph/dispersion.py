"""Dispersion of plane-wave perturbations on a uniform pre-stressed 1D lattice.

For the parametrised cubic kernel with knot ``a`` the semi-discrete
equations linearised about density ``rho_bar`` give

    omega^2 = 2 (sigma/rho_bar) dp sum_j (1 - cos k r_j) W''(r_j)
              + (K/rho_bar) (2 - rho_bar/rho0) (dp sum_j sin(k r_j) W'(r_j))^2

with ``sigma = K (rho_bar/rho0 - 1)`` and ``r_j`` running over signed lattice
offsets inside the support.  Negative ``omega^2`` marks a growing mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import KernelFamily, KernelSpec, norm_factor, shape_derivatives


@dataclass(frozen=True)
class DispersionSetup:
    dp: float = 1.0
    h: float = 1.5
    a: float = 1.0
    b: float = 2.0
    rho_ratio: float = 1.0
    K: float = 1.0
    rho0: float = 1.0
    family: KernelFamily = KernelFamily.CUBIC

    def __post_init__(self):
        KernelSpec(self.family, self.a, self.b, self.h, 1)  # validates the knots
        if self.dp <= 0 or self.K <= 0 or self.rho0 <= 0 or self.rho_ratio <= 0:
            raise ValueError("dp, K, rho0 and rho_ratio must be positive")

    @property
    def rho_bar(self) -> float:
        return self.rho_ratio * self.rho0

    @property
    def sigma_bar(self) -> float:
        return self.K * (self.rho_ratio - 1.0)

    @property
    def neighbor_extent(self) -> int:
        """Lattice neighbours on each side strictly inside ``b*h``."""
        return int(math.floor(self.b * self.h / self.dp - 1e-12))

    def offsets(self) -> np.ndarray:
        n = self.neighbor_extent
        return np.concatenate([-np.arange(n, 0, -1), np.arange(1, n + 1)]) * self.dp

    def kernel_derivatives(self):
        """``(dW/dr, d2W/dr2)`` at the signed lattice offsets (1D normalisation)."""
        r = self.offsets()
        _, dw, d2w = shape_derivatives(self.family, self.a, self.b, np.abs(r) / self.h)
        alpha = norm_factor(self.family, self.a, self.b, self.h, 1)
        return alpha * dw / self.h * np.sign(r), alpha * d2w / self.h ** 2


def omega_squared(k, setup: DispersionSetup):
    """``omega^2`` at wavenumber(s) ``k``; vectorised over ``k``."""
    k_arr = np.asarray(k, dtype=float)
    r = setup.offsets()
    g1, g2 = setup.kernel_derivatives()
    kr = np.multiply.outer(k_arr, r)
    stress = 2.0 * setup.sigma_bar / setup.rho_bar * setup.dp * np.sum((1.0 - np.cos(kr)) * g2, axis=-1)
    coupling = setup.dp * np.sum(np.sin(kr) * g1, axis=-1)
    bulk = setup.K / setup.rho_bar * (2.0 - setup.rho_ratio) * coupling ** 2
    out = stress + bulk
    return float(out) if out.ndim == 0 else out


def wavenumbers(dp: float, n: int = 1000) -> np.ndarray:
    """``n`` uniform wavenumbers on ``(0, pi/dp]``, ending exactly at ``pi/dp``."""
    return np.pi / dp * np.arange(1, n + 1) / n


def is_stable(setup: DispersionSetup, n_k: int = 1000, rel_tol: float = 1e-12) -> bool:
    w2 = omega_squared(wavenumbers(setup.dp, n_k), setup)
    scale = float(np.max(np.abs(w2))) if w2.size else 0.0
    return bool(np.min(w2) >= -rel_tol * scale)


def _intervals(grid: np.ndarray, ok: np.ndarray) -> list[tuple[float, float]]:
    out = []
    start = None
    for idx, flag in enumerate(ok):
        if flag and start is None:
            start = idx
        if start is not None and (not flag or idx == len(ok) - 1):
            stop = idx if flag else idx - 1
            out.append((float(grid[start]), float(grid[stop])))
            start = None
    return out


def stable_knot_range(rho_ratios, a_grid, dp: float = 1.0, h: float = 1.5, b: float = 2.0,
                      n_k: int = 1000, rel_tol: float = 1e-12):
    """Stable knot intervals for each density ratio.

    Returns ``[(rho_ratio, [(a_min, a_max), ...]), ...]``; an empty list of
    intervals means no knot on the grid is stable.
    """
    a_grid = np.asarray(a_grid, dtype=float)
    table = []
    for ratio in np.atleast_1d(rho_ratios):
        ok = np.array([is_stable(DispersionSetup(dp, h, a, b, float(ratio)), n_k, rel_tol)
                       for a in a_grid])
        table.append((float(ratio), _intervals(a_grid, ok)))
    return table


def dispersion_curve(a: float, rho_ratio: float, dp: float = 1.0, h: float = 1.5,
                     b: float = 2.0, n_k: int = 200):
    setup = DispersionSetup(dp, h, a, b, rho_ratio)
    k = wavenumbers(dp, n_k)
    return k, omega_squared(k, setup)
