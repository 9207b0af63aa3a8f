"""Per-particle intermediate-knot selection.

Each particle picks its knot ``a_i`` from its density ratio: a knot close to
the centre under compression and a knot pushed beyond the immediate
neighbours under tension.  A pair interacts through the kernel built on the
mean of the two knots, which keeps the pair kernel symmetric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .neighbors import NeighborTable


@dataclass(frozen=True)
class AdaptivityParams:
    b: float = 2.0
    tension_factor: float = 1.1
    compression_a: float = 0.2
    knot_floor: float = 0.05
    knot_ceiling: float | None = None
    immediate_radius_factor: float = 1.5

    def __post_init__(self):
        if self.knot_ceiling is None:
            object.__setattr__(self, "knot_ceiling", self.b - 0.05)
        if not 0.0 < self.knot_floor < self.knot_ceiling < self.b:
            raise ValueError(
                f"need 0 < knot_floor < knot_ceiling < b, got "
                f"{self.knot_floor}, {self.knot_ceiling}, {self.b}"
            )
        if self.immediate_radius_factor <= 0:
            raise ValueError("immediate_radius_factor must be positive")


def immediate_neighbors(i: int, table: NeighborTable, dp: float, factor: float = 1.5):
    """Immediate neighbours of ``i`` and their largest distance ``r_d``.

    Immediate neighbours are those within ``factor * dp`` in the configuration
    the table was built for.  An isolated particle gets ``r_d = dp``.
    """
    nbrs = table.neighbors(i)
    dist = table.neighbor_distances(i)
    close = dist <= factor * dp
    if not np.any(close):
        return nbrs[close], float(dp)
    return nbrs[close], float(dist[close].max())


def immediate_radius(table: NeighborTable, dp: float, factor: float = 1.5) -> np.ndarray:
    """``r_d`` for every particle (vectorised :func:`immediate_neighbors`)."""
    owner = table.row_index()
    close = table.distances <= factor * dp
    r_d = np.zeros(table.n)
    np.maximum.at(r_d, owner[close], table.distances[close])
    r_d[r_d == 0.0] = dp
    return r_d


def knot_for_particle(rho_i, rho0, r_d, h, params: AdaptivityParams):
    """Intermediate knot from the density ratio.

    Tension (``rho_i < rho0``): ``tension_factor * r_d / h``; otherwise
    ``compression_a``.  Clamped to ``[knot_floor, knot_ceiling]``.  Works on
    scalars and arrays alike.
    """
    rho_i = np.asarray(rho_i, dtype=float)
    raw = np.where(rho_i / rho0 < 1.0, params.tension_factor * np.asarray(r_d) / h, params.compression_a)
    a = np.clip(raw, params.knot_floor, params.knot_ceiling)
    return float(a) if a.ndim == 0 else a


def pair_knot(a_i, a_j):
    return 0.5 * (a_i + a_j)


def _threshold_cubic(dp_over_h: float, b: float) -> float:
    if b <= dp_over_h:
        raise ValueError(f"b={b} must exceed dp/h={dp_over_h}")
    return dp_over_h / (b - dp_over_h)


def _strict_side(chi: float, thr: float, in_tension: bool) -> bool:
    # a knot on the threshold (to rounding) satisfies neither branch
    if math.isclose(chi, thr, rel_tol=1e-12):
        return False
    return chi > thr if in_tension else chi < thr


def stability_condition_cubic(chi: float, dp_over_h: float, b: float, in_tension: bool) -> bool:
    """True if the immediate neighbour sits on the stable side of the |W'| peak."""
    return _strict_side(chi, _threshold_cubic(dp_over_h, b), in_tension)


def stability_condition_quadratic(chi: float, dp_over_h: float, b: float, in_tension: bool) -> bool:
    return _strict_side(chi, dp_over_h / b, in_tension)


class FixedKnots:
    """Same knot for every particle (non-adaptive B-spline run)."""

    def __init__(self, a: float):
        self.a = float(a)

    def __call__(self, rho, rho0, table, dp, h, fixed=None):
        return np.full(len(rho), self.a)


def inherit_boundary_knots(knots, fixed, table: NeighborTable) -> np.ndarray:
    """Give each fixed particle the mean knot of its free neighbours.

    Fixed particles keep their initial density, so the density rule would
    always assign them the compression knot even where the adjacent material
    is in tension.  Fixed particles without free neighbours keep their knot.
    """
    knots = np.array(knots, dtype=float)
    fixed = np.asarray(fixed, dtype=bool)
    if not fixed.any():
        return knots
    owner = table.row_index()
    use = fixed[owner] & ~fixed[table.indices]
    total = np.bincount(owner[use], weights=knots[table.indices[use]], minlength=table.n)
    count = np.bincount(owner[use], minlength=table.n)
    hit = fixed & (count > 0)
    knots[hit] = total[hit] / count[hit]
    return knots


class AdaptiveKnots:
    """Knot rule evaluated from step-start density and the current table.

    With ``inherit_boundary`` (default) fixed particles take the knots of the
    free material next to them, see :func:`inherit_boundary_knots`.
    """

    def __init__(self, params: AdaptivityParams | None = None, inherit_boundary: bool = True):
        self.params = params or AdaptivityParams()
        self.inherit_boundary = inherit_boundary

    def __call__(self, rho, rho0, table, dp, h, fixed=None):
        r_d = immediate_radius(table, dp, self.params.immediate_radius_factor)
        table.immediate_radius = r_d
        knots = np.atleast_1d(knot_for_particle(rho, rho0, r_d, h, self.params))
        if self.inherit_boundary and fixed is not None:
            knots = inherit_boundary_knots(knots, fixed, table)
        return knots
