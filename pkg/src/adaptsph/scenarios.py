"""Benchmark set-ups, analytic references and instability metrics.

All 2D scenarios use a square lattice with unit out-of-plane thickness, so
particle mass is ``rho0 * dp**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import neighbors
from .sph import Kind, MaterialModel, Particles, ViscosityParams

#: First root of ``cos(kL) cosh(kL) = -1``.
KL_FIRST_MODE = 1.875

#: Depth of the clamped support in particle layers (covers the 3*dp support).
SUPPORT_LAYERS = 3


class InsufficientData(ValueError):
    """A time series is too short to measure what was asked for."""


@dataclass
class Scenario:
    name: str
    particles: Particles
    material: MaterialModel
    dp: float
    dt: float
    t_end: float
    viscosity: ViscosityParams
    probes: dict[str, Callable] = field(default_factory=dict)
    oracle: Callable | None = None
    meta: dict = field(default_factory=dict)


def _lattice(nx: int, ny: int, dp: float, x0: float = 0.0, y0: float = 0.0) -> np.ndarray:
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    return np.column_stack([x0 + ix.ravel() * dp, y0 + iy.ravel() * dp])


def _count(length: float, dp: float) -> int:
    n = length / dp
    if abs(n - round(n)) > 1e-6 * max(1.0, n):
        raise ValueError(f"length {length} is not a multiple of dp={dp}")
    return int(round(n))


# ---------------------------------------------------------------------------
# 2D stability patch

STABILITY_MATERIAL = MaterialModel(rho0=7850.0, E=200e9, nu=0.3)


def build_stability2d(dp: float = 1e-3, n_interior: int = 21, rho_ratio: float = 0.96,
                      perturbation: float = 1e-7, dt: float | None = None,
                      t_end: float = 1e-3) -> Scenario:
    """Square patch under uniform pre-stress with one perturbed particle.

    ``n_interior**2`` free particles surrounded by a fixed frame
    ``SUPPORT_LAYERS`` deep.  Every particle starts at ``rho_ratio * rho0``;
    the centre particle moves at ``perturbation`` m/s along x.  No artificial
    viscosity.
    """
    if n_interior < 1 or n_interior % 2 == 0:
        raise ValueError("n_interior must be a positive odd number")
    mat = STABILITY_MATERIAL
    n = n_interior + 2 * SUPPORT_LAYERS
    half = (n - 1) / 2
    pos = _lattice(n, n, dp, -half * dp, -half * dp)
    ij = np.rint(pos / dp + half).astype(int)
    edge = SUPPORT_LAYERS
    inner = np.all((ij >= edge) & (ij < n - edge), axis=1)
    kind = np.where(inner, Kind.INTERIOR, Kind.FIXED).astype(np.uint8)
    centre = int(np.argmin(np.sum(pos * pos, axis=1)))
    v = np.zeros_like(pos)
    v[centre, 0] = perturbation
    p = Particles.create(pos, rho=rho_ratio * mat.rho0, m=mat.rho0 * dp * dp, v=v, kind=kind)
    if dt is None:
        dt = 5e-8 * dp / 1e-3
    return Scenario("stability2d", p, mat, dp, dt, t_end, ViscosityParams(0.0, 0.0),
                    probes={"centre_vx": lambda s, c=centre: s.v[c, 0]},
                    meta={"centre": centre, "rho_ratio": rho_ratio})


# ---------------------------------------------------------------------------
# clamped strips (bar and plate)

def _clamped_strip(L: float, B: float, dp: float):
    """Strip ``x in (0, L]`` with a clamped support at and behind ``x = 0``.

    Returns positions, kinds, the column index of every particle and the
    indices of the free-end column.
    """
    nx = _count(L, dp)
    ny = _count(B, dp)
    cols = np.arange(-(SUPPORT_LAYERS - 1), nx + 1)
    ix, iy = np.meshgrid(cols, np.arange(ny), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    pos = np.column_stack([ix * dp, (iy + 0.5) * dp - 0.5 * B])
    kind = np.where(ix <= 0, Kind.FIXED, Kind.INTERIOR).astype(np.uint8)
    tip = np.flatnonzero(ix == nx)
    return pos, kind, ix, tip


BAR_MATERIAL = MaterialModel(rho0=2000.0, E=10e6, nu=0.0)


def build_bar(dp: float = 0.5e-3, L: float = 0.2, B: float = 0.01, v0: float = 1.0,
              dt: float = 2e-6, t_end: float | None = None) -> Scenario:
    """Axial bar clamped at ``x = 0`` and moving toward the clamp at ``v0``."""
    mat = BAR_MATERIAL
    pos, kind, _, tip = _clamped_strip(L, B, dp)
    v = np.zeros_like(pos)
    v[kind == Kind.INTERIOR, 0] = -v0
    p = Particles.create(pos, rho=mat.rho0, m=mat.rho0 * dp * dp, v=v, kind=kind)
    c = mat.sound_speed
    x_tip0 = float(pos[tip, 0].mean())
    period = 4.0 * L / c
    if t_end is None:
        t_end = period
    # the series is written with x measured from the free end
    oracle = lambda t: bar_analytic_displacement(0.0, t, -v0, L, c, 200)  # noqa: E731
    return Scenario("bar", p, mat, dp, dt, t_end, ViscosityParams(1.0, 1.0),
                    probes={"tip_u": lambda s: float(s.x[tip, 0].mean()) - x_tip0},
                    oracle=oracle, meta={"tip": tip, "L": L, "B": B, "c": c, "period": period})


def bar_analytic_displacement(x, t, v0: float, L: float, c: float, n_terms: int = 200):
    """Longitudinal displacement of a clamped-free bar released at velocity ``v0``.

    ``x`` is measured from the free end (``u = 0`` at ``x = L``, the clamp).
    Truncated after ``n_terms`` terms; vectorised over ``x`` and ``t``.
    """
    if n_terms < 1:
        raise ValueError("n_terms must be at least 1")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(x, t).shape)
    for k in range(1, n_terms + 1):
        m = 2 * k - 1
        amp = 8.0 * (-1) ** (k + 1) * v0 * L / (math.pi ** 2 * m * m * c)
        out = out + amp * np.sin(m * c * math.pi * t / (2 * L)) * np.cos(m * math.pi * x / (2 * L))
    return float(out) if out.ndim == 0 else out


PLATE_MATERIAL = MaterialModel(rho0=7850.0, E=210e9, nu=0.3)


def mode_constants(kL: float = KL_FIRST_MODE):
    """``(M, N, Q)`` of the cantilever mode shape."""
    M = math.sin(kL) + math.sinh(kL)
    N = math.cos(kL) + math.cosh(kL)
    Q = 2.0 * (math.cos(kL) * math.sinh(kL) - math.sin(kL) * math.cosh(kL))
    return M, N, Q


def plate_mode_velocity(x, L: float, V_f: float, c: float, kL: float = KL_FIRST_MODE):
    """Initial transverse velocity ``v_y(x) = c V_f (M[..] - N[..]) / Q``."""
    k = kL / L
    M, N, Q = mode_constants(kL)
    kx = k * np.asarray(x, dtype=float)
    shape = M * (np.cos(kx) - np.cosh(kx)) - N * (np.sin(kx) - np.sinh(kx))
    return c * V_f * shape / Q


def plate_theoretical_period(L: float, B: float, mat: MaterialModel, kL: float = KL_FIRST_MODE) -> float:
    k = kL / L
    omega2 = mat.E * B * B * k ** 4 / (12.0 * mat.rho0 * (1.0 - mat.nu ** 2))
    return 2.0 * math.pi / math.sqrt(omega2)


def build_plate(dp: float = 2e-3, L: float = 0.2, B: float = 0.02, V_f: float = 0.02,
                dt: float | None = None, t_end: float | None = None) -> Scenario:
    """Cantilever plate released in its first bending mode."""
    mat = PLATE_MATERIAL
    pos, kind, _, tip = _clamped_strip(L, B, dp)
    v = np.zeros_like(pos)
    inner = kind == Kind.INTERIOR
    v[inner, 1] = plate_mode_velocity(pos[inner, 0], L, V_f, mat.sound_speed)
    p = Particles.create(pos, rho=mat.rho0, m=mat.rho0 * dp * dp, v=v, kind=kind)
    period = plate_theoretical_period(L, B, mat)
    if dt is None:
        dt = 1e-4 * dp
    if t_end is None:
        t_end = 2.0 * period
    y_tip0 = float(pos[tip, 1].mean())
    return Scenario("plate", p, mat, dp, dt, t_end, ViscosityParams(1.0, 1.0),
                    probes={"tip_y": lambda s: float(s.x[tip, 1].mean()) - y_tip0},
                    meta={"tip": tip, "L": L, "B": B, "V_f": V_f, "period_theory": period})


# ---------------------------------------------------------------------------
# ring collision

RING_MATERIAL = MaterialModel(rho0=1010.0, E=0.73e9, nu=0.4)


def _annulus(r_in: float, r_out: float, dp: float) -> np.ndarray:
    n = int(math.ceil(r_out / dp)) + 1
    g = (np.arange(-n, n) + 0.5) * dp
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    r = np.hypot(pts[:, 0], pts[:, 1])
    return pts[(r >= r_in) & (r < r_out)]


def build_ring_collision(dp: float = 0.5e-3, r_in: float = 0.015, r_out: float = 0.02,
                         speed: float = 25.0, gap: float | None = None,
                         dt: float | None = None, t_end: float = 600e-6) -> Scenario:
    """Two rings approaching along x, each at ``speed`` (closing speed ``2*speed``).

    ``gap`` is the distance between the outer surfaces (default ``2*dp``).  The
    left ring is the mirror image of the right ring, so total momentum is zero.
    """
    mat = RING_MATERIAL
    if gap is None:
        gap = 2.0 * dp
    ring = _annulus(r_in, r_out, dp)
    shift = r_out + 0.5 * gap
    right = ring + np.array([shift, 0.0])
    left = right * np.array([-1.0, 1.0])
    pos = np.vstack([left, right])
    nr = len(ring)
    v = np.zeros_like(pos)
    v[:nr, 0] = speed
    v[nr:, 0] = -speed
    p = Particles.create(pos, rho=mat.rho0, m=mat.rho0 * dp * dp, v=v)
    if dt is None:
        dt = 2.5e-8 * dp / 0.5e-3
    ring_momentum = nr * mat.rho0 * dp * dp * speed
    return Scenario("rings", p, mat, dp, dt, t_end, ViscosityParams(1.0, 1.0),
                    meta={"n_ring": nr, "ring_momentum": ring_momentum, "gap": gap})


# ---------------------------------------------------------------------------
# measurement

def zero_crossings(t, s) -> tuple[np.ndarray, np.ndarray]:
    """Upward and downward zero-crossing times by linear interpolation."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    a, b = s[:-1], s[1:]
    up = np.flatnonzero((a <= 0.0) & (b > 0.0))
    down = np.flatnonzero((a >= 0.0) & (b < 0.0))

    def interp(k):
        frac = a[k] / (a[k] - b[k])
        return t[k] + frac * (t[k + 1] - t[k])

    return interp(up), interp(down)


def measure_period(t, s) -> float:
    """Mean oscillation period from same-direction zero crossings.

    Intervals between successive upward crossings and between successive
    downward crossings are pooled and averaged.
    """
    up, down = zero_crossings(t, s)
    gaps = np.concatenate([np.diff(up), np.diff(down)])
    if gaps.size == 0:
        raise InsufficientData("need at least two same-direction zero crossings")
    return float(gaps.mean())


@dataclass(frozen=True)
class InstabilityReport:
    min_pair_distance: float
    max_density_deviation: float
    max_displacement: float
    fractured: bool

    def unstable(self, clump: float = 0.6) -> bool:
        return self.fractured or self.min_pair_distance < clump


class BondTracker:
    """Initially close particle pairs, used to detect numerical fracture.

    A bond joins two particles no more than ``bond_factor * dp`` apart at
    construction, at least one of them free.  The strip is fractured once any
    bond stretches beyond ``break_factor * dp``.
    """

    def __init__(self, particles: Particles, dp: float, bond_factor: float = 1.1,
                 break_factor: float = 2.0):
        table = neighbors.build(particles.x, bond_factor * dp * (1 + 1e-9))
        i = table.row_index()
        j = table.indices
        keep = (i < j) & ~(particles.fixed[i] & particles.fixed[j])
        self.i, self.j = i[keep], j[keep]
        self.dp = dp
        self.break_length = break_factor * dp
        self.x0 = particles.x.copy()

    def broken(self, particles: Particles) -> np.ndarray:
        d = np.linalg.norm(particles.x[self.i] - particles.x[self.j], axis=1)
        return d > self.break_length

    def fractured(self, particles: Particles) -> bool:
        return bool(np.any(self.broken(particles)))


def min_pair_distance(particles: Particles, dp: float, cap: float = 2.0) -> float:
    """Smallest pair distance in units of ``dp`` (``cap`` if none closer)."""
    if particles.n < 2:
        return cap
    table = neighbors.build(particles.x, cap * dp)
    if table.n_pairs == 0:
        return cap
    return float(table.distances.min() / dp)


def instability_metrics(particles: Particles, dp: float, rho0: float,
                        bonds: BondTracker | None = None) -> InstabilityReport:
    """Clumping and fracture indicators for one snapshot.

    Without ``bonds`` there is no reference configuration: displacement is
    reported as zero and ``fractured`` as false.
    """
    if particles.n < 2:
        raise ValueError("need at least two particles")
    free = ~particles.fixed
    dev = float(np.max(np.abs(particles.rho[free] / rho0 - 1.0))) if free.any() else 0.0
    if bonds is None:
        disp, frac = 0.0, False
    else:
        disp = float(np.max(np.linalg.norm(particles.x - bonds.x0, axis=1)))
        frac = bonds.fractured(particles)
    return InstabilityReport(min_pair_distance(particles, dp), dev, disp, frac)


BUILDERS = {
    "stability2d": build_stability2d,
    "bar": build_bar,
    "plate": build_plate,
    "rings": build_ring_collision,
}
