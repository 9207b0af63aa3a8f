"""Explicit midpoint predictor-corrector at constant time step."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import neighbors
from .adaptivity import AdaptiveKnots, AdaptivityParams, FixedKnots
from .kernel import KernelFamily
from .sph import (BOUNDARY_STATES, KernelSetup, MaterialModel, NonFiniteRate, Particles, RateVector,
                  ViscosityParams, compute_rates)

log = logging.getLogger(__name__)

#: Kernel choices accepted in configuration files and on the command line.
KERNELS = {
    "standard-cubic": (KernelFamily.STANDARD_CUBIC, False),
    "cubic-bspline": (KernelFamily.CUBIC, False),
    "quadratic-bspline": (KernelFamily.QUADRATIC, False),
    "adaptive-cubic": (KernelFamily.CUBIC, True),
    "adaptive-quadratic": (KernelFamily.QUADRATIC, True),
}


def steps_to(t_end: float, dt: float) -> int:
    """Constant-size steps needed to reach ``t_end`` (the last one may overshoot)."""
    return int(math.ceil(t_end / dt - 1e-9))


class StepError(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass
class SimConfig:
    dp: float
    dt: float
    t_end: float
    kernel: str = "adaptive-cubic"
    adaptivity: AdaptivityParams = field(default_factory=AdaptivityParams)
    fixed_knot: float = 1.0
    viscosity: ViscosityParams = field(default_factory=ViscosityParams)
    eps_xsph: float = 0.5
    output_every: int = 100
    deterministic: bool = True
    h_factor: float = 1.5
    renormalize: bool = True
    backend: str | None = None
    boundary_state: str = "evolving"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if self.dp <= 0 or self.dt <= 0 or self.t_end < 0:
            raise ValueError("need dp > 0, dt > 0 and t_end >= 0")
        if self.output_every < 1:
            raise ValueError("output_every must be at least 1")
        if not 0.0 <= self.eps_xsph <= 1.0:
            raise ValueError("eps_xsph must lie in [0, 1]")
        if self.boundary_state not in BOUNDARY_STATES:
            raise ValueError(f"boundary_state must be one of {BOUNDARY_STATES}")

    @property
    def h(self) -> float:
        return self.h_factor * self.dp

    @property
    def family(self) -> KernelFamily:
        return KERNELS[self.kernel][0]

    @property
    def adaptive(self) -> bool:
        return KERNELS[self.kernel][1]

    @property
    def n_steps(self) -> int:
        # reach t_end; tolerate t_end/dt landing a hair above an integer
        return steps_to(self.t_end, self.dt)

    def kernel_setup(self) -> KernelSetup:
        return KernelSetup(self.family, self.h, self.adaptivity.b)

    def knot_rule(self):
        if self.adaptive:
            return AdaptiveKnots(self.adaptivity)
        return FixedKnots(self.fixed_knot)


def midpoint_step(rhs: Callable, y, t: float, dt: float):
    """One explicit midpoint step for ``dy/dt = rhs(t, y)`` on an array ``y``."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    return y + dt * k2


def _advance(p: Particles, r: RateVector, dt: float) -> Particles:
    return Particles(
        x=p.x + dt * r.dx,
        v=p.v + dt * r.dv,
        rho=p.rho + dt * r.drho,
        m=p.m,
        S=p.S + dt * r.dS,
        e=p.e + dt * r.de,
        a_knot=p.a_knot,
        kind=p.kind,
    )


class Simulation:
    """Particle state plus everything needed to advance it.

    ``accel`` is an optional hook ``accel(t, particles) -> (n, dim)`` adding a
    prescribed body acceleration to interior particles.
    """

    def __init__(self, particles: Particles, material: MaterialModel, config: SimConfig,
                 accel: Callable | None = None):
        self.particles = particles
        self.material = material
        self.config = config
        self.kernel = config.kernel_setup()
        self.knot_rule = config.knot_rule()
        self.accel = accel
        self.t = 0.0
        self.step_count = 0
        self.table: neighbors.NeighborTable | None = None
        self.renorm_fallbacks = 0
        self._check_cfl()

    def _check_cfl(self) -> None:
        rho_min = float(np.min(self.particles.rho)) if self.particles.n else self.material.rho0
        c = math.sqrt(self.material.E / rho_min)
        limit = 0.3 * self.config.h / c
        if self.config.dt > limit:
            log.warning("dt=%.3g exceeds 0.3*h/C=%.3g; the run may be unstable", self.config.dt, limit)

    def refresh(self) -> None:
        """Rebuild the neighbour table and the per-particle knots."""
        p = self.particles
        self.table = neighbors.build(p.x, self.kernel.radius, step=self.step_count,
                                     backend=self.config.backend)
        p.a_knot = np.ascontiguousarray(
            self.knot_rule(p.rho, self.material.rho0, self.table, self.config.dp, self.config.h,
                           p.fixed),
            dtype=float)

    def rates(self, p: Particles, t: float) -> RateVector:
        self.table.check_current(self.step_count)
        cfg = self.config
        r = compute_rates(p, self.table, self.material, cfg.viscosity, self.kernel,
                          cfg.eps_xsph, cfg.renormalize, cfg.backend, cfg.boundary_state)
        if self.accel is not None:
            g = np.asarray(self.accel(t, p), dtype=float).reshape(p.n, p.dim)
            r.dv = r.dv + np.where(p.fixed[:, None], 0.0, g)
        self.renorm_fallbacks += r.renorm_fallbacks
        return r

    def step(self) -> None:
        dt = self.config.dt
        try:
            self.refresh()
        except ValueError as exc:  # non-finite or runaway positions
            raise StepError(self.step_count, str(exc)) from exc
        p0 = self.particles
        try:
            k1 = self.rates(p0, self.t)
            mid = _advance(p0, k1, 0.5 * dt)
            k2 = self.rates(mid, self.t + 0.5 * dt)
        except NonFiniteRate as exc:
            raise StepError(self.step_count, str(exc)) from exc
        new = _advance(p0, k2, dt)
        self._validate(new)
        self.particles = new
        self.step_count += 1
        self.t = self.step_count * dt

    def _validate(self, p: Particles) -> None:
        for name in ("x", "v", "rho", "S", "e"):
            arr = getattr(p, name).reshape(p.n, -1)
            ok = np.all(np.isfinite(arr), axis=1)
            if not ok.all():
                raise StepError(self.step_count, f"non-finite {name} at particle {int(np.argmin(ok))}")
        if np.any(p.rho <= 0.0):
            raise StepError(self.step_count, f"non-positive density at particle {int(np.argmin(p.rho))}")


def energy_proxy(p: Particles) -> float:
    """``sum m (|v|^2 / 2 + e)`` over interior particles."""
    inner = ~p.fixed
    return float(np.sum(p.m[inner] * (0.5 * np.sum(p.v[inner] ** 2, axis=1) + p.e[inner])))


def momentum(p: Particles) -> np.ndarray:
    inner = ~p.fixed
    return np.sum(p.m[inner, None] * p.v[inner], axis=0)


@dataclass
class RunResult:
    times: np.ndarray
    series: dict[str, np.ndarray]
    final: Particles
    steps: int
    failed: bool = False
    error: str | None = None
    wall_time: float = 0.0
    renorm_fallbacks: int = 0

    @property
    def completed(self) -> bool:
        return not self.failed


def run(sim: Simulation, probes: dict[str, Callable] | None = None,
        on_snapshot: Callable | None = None, t_end: float | None = None,
        stop_when: Callable | None = None) -> RunResult:
    """Advance ``sim`` to ``t_end`` (default: the configured end time).

    Probe functions ``f(particles) -> float`` are sampled every step, together
    with the energy proxy and the interior momentum.  ``on_snapshot(t, step,
    particles)`` is called at step 0 and every ``output_every`` steps.  If
    ``stop_when(sim)`` returns true the run ends early (not a failure).  A
    failing step ends the run with ``failed=True`` and the data gathered so
    far.
    """
    cfg = sim.config
    probes = dict(probes or {})
    n_steps = cfg.n_steps if t_end is None else steps_to(t_end, cfg.dt)
    dim = sim.particles.dim
    names = list(probes) + ["energy"] + [f"momentum_{c}" for c in "xyz"[:dim]]
    rows: list[list[float]] = []
    times: list[float] = []

    def sample():
        p = sim.particles
        row = [float(f(p)) for f in probes.values()]
        row.append(energy_proxy(p))
        row.extend(momentum(p).tolist())
        rows.append(row)
        times.append(sim.t)

    start = time.perf_counter()
    failed, error = False, None
    sample()
    if on_snapshot is not None:
        on_snapshot(sim.t, sim.step_count, sim.particles)
    for _ in range(n_steps):
        try:
            sim.step()
        except StepError as exc:
            failed, error = True, str(exc)
            log.error("run aborted: %s", exc)
            break
        sample()
        if on_snapshot is not None and sim.step_count % cfg.output_every == 0:
            on_snapshot(sim.t, sim.step_count, sim.particles)
        if stop_when is not None and stop_when(sim):
            break
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return RunResult(
        times=np.asarray(times),
        series={k: data[:, c] for c, k in enumerate(names)},
        final=sim.particles,
        steps=sim.step_count,
        failed=failed,
        error=error,
        wall_time=time.perf_counter() - start,
        renorm_fallbacks=sim.renorm_fallbacks,
    )
