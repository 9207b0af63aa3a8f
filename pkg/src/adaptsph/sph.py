"""Discretised conservation laws for a hypoelastic solid.

Particles carry position, velocity, density, mass, the in-plane deviatoric
stress, specific energy and the intermediate knot.  The deviator is that of
the full 3x3 tensor (plane strain in 2D, uniaxial strain in 1D); its
out-of-plane normal components follow from tracelessness and are not stored.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .kernel import KernelFamily, KernelSpec, eval_grad
from .neighbors import NeighborTable

#: Renormalisation matrices with a larger condition number fall back to I.
COND_MAX = 1e8


class Kind(enum.IntEnum):
    INTERIOR = 0
    FIXED = 1


class NonFiniteRate(FloatingPointError):
    def __init__(self, index: int, term: str):
        super().__init__(f"non-finite {term} rate at particle {index}")
        self.index = index
        self.term = term


@dataclass(frozen=True)
class MaterialModel:
    rho0: float
    E: float
    nu: float

    def __post_init__(self):
        if self.rho0 <= 0 or self.E <= 0:
            raise ValueError("rho0 and E must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio must be in [0, 0.5), got {self.nu}")

    @property
    def K(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def sound_speed(self) -> float:
        """Bar wave speed ``sqrt(E / rho0)``."""
        return math.sqrt(self.E / self.rho0)

    @property
    def p_wave_speed(self) -> float:
        return math.sqrt((self.K + 4.0 * self.G / 3.0) / self.rho0)


@dataclass(frozen=True)
class ViscosityParams:
    gamma1: float = 1.0
    gamma2: float = 1.0
    eta: float = 0.01

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0 or self.eta <= 0:
            raise ValueError("need gamma1, gamma2 >= 0 and eta > 0")


@dataclass(frozen=True)
class KernelSetup:
    """Kernel family and geometry shared by every pair in a run."""

    family: KernelFamily
    h: float
    b: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is KernelFamily.STANDARD_CUBIC:
            object.__setattr__(self, "b", 2.0)

    @property
    def radius(self) -> float:
        return self.b * self.h

    def pair_spec(self, a: float, dim: int) -> KernelSpec:
        return KernelSpec(self.family, a=a if self.family is not KernelFamily.STANDARD_CUBIC else 1.0,
                          b=self.b, h=self.h, dim=dim)


@dataclass
class Particles:
    """Struct-of-arrays particle state."""

    x: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    m: np.ndarray
    S: np.ndarray
    e: np.ndarray
    a_knot: np.ndarray
    kind: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        n, dim = self.x.shape
        self.v = np.ascontiguousarray(np.reshape(self.v, (n, dim)), dtype=float)
        self.rho = np.ascontiguousarray(self.rho, dtype=float).reshape(n)
        self.m = np.ascontiguousarray(self.m, dtype=float).reshape(n)
        self.S = np.ascontiguousarray(np.reshape(self.S, (n, dim, dim)), dtype=float)
        self.e = np.ascontiguousarray(self.e, dtype=float).reshape(n)
        self.a_knot = np.ascontiguousarray(self.a_knot, dtype=float).reshape(n)
        self.kind = np.ascontiguousarray(self.kind, dtype=np.uint8).reshape(n)

    @classmethod
    def create(cls, x, rho, m, v=None, kind=None, a_knot=1.0):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n, dim = x.shape
        return cls(
            x=x,
            v=np.zeros((n, dim)) if v is None else v,
            rho=np.broadcast_to(np.asarray(rho, dtype=float), (n,)).copy(),
            m=np.broadcast_to(np.asarray(m, dtype=float), (n,)).copy(),
            S=np.zeros((n, dim, dim)),
            e=np.zeros(n),
            a_knot=np.full(n, float(a_knot)),
            kind=np.zeros(n, np.uint8) if kind is None else kind,
        )

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def fixed(self) -> np.ndarray:
        return self.kind == Kind.FIXED

    def copy(self) -> "Particles":
        return Particles(*(np.array(getattr(self, f)) for f in
                           ("x", "v", "rho", "m", "S", "e", "a_knot", "kind")))

    def subset(self, mask) -> "Particles":
        return Particles(*(np.array(getattr(self, f)[mask]) for f in
                           ("x", "v", "rho", "m", "S", "e", "a_knot", "kind")))


@dataclass
class RateVector:
    drho: np.ndarray
    dv: np.ndarray
    de: np.ndarray
    dS: np.ndarray
    dx: np.ndarray
    dS_out: np.ndarray = field(repr=False)
    renorm_fallbacks: int = 0

    def full_trace(self) -> np.ndarray:
        """Trace of the 3x3 deviatoric stress rate (zero by construction)."""
        dim = self.dS.shape[1]
        return np.trace(self.dS, axis1=1, axis2=2) + (3 - dim) * self.dS_out


def pressure(rho, mat: MaterialModel):
    return mat.K * (np.asarray(rho) / mat.rho0 - 1.0)


def cauchy_stress(p, S):
    S = np.asarray(S, dtype=float)
    return S - np.asarray(p, dtype=float)[..., None, None] * np.eye(S.shape[-1])


def artificial_viscosity(xi, xj, vi, vj, rho_i, rho_j, mat: MaterialModel,
                         visc: ViscosityParams, h: float) -> float:
    """Pairwise viscous pressure; non-zero only for approaching particles."""
    xij = np.asarray(xi, float) - np.asarray(xj, float)
    vij = np.asarray(vi, float) - np.asarray(vj, float)
    vx = float(np.dot(vij, xij))
    if vx >= 0.0:
        return 0.0
    mu = h * vx / (float(np.dot(xij, xij)) + visc.eta * h * h)
    cbar = 0.5 * (math.sqrt(mat.E / rho_i) + math.sqrt(mat.E / rho_j))
    rbar = 0.5 * (rho_i + rho_j)
    return (-visc.gamma1 * cbar * mu + visc.gamma2 * mu * mu) / rbar


def renormalization_matrix(i: int, particles: Particles, table: NeighborTable,
                           kernel: KernelSetup, cond_max: float = COND_MAX):
    """Correction matrix ``B_i`` for particle ``i``.

    Returns ``(B, fell_back)``; a singular or badly conditioned moment matrix
    yields the identity and ``fell_back=True``.
    """
    dim = particles.dim
    binv = np.zeros((dim, dim))
    for j in table.neighbors(i):
        xij = particles.x[i] - particles.x[j]
        a = 0.5 * (particles.a_knot[i] + particles.a_knot[j])
        grad = eval_grad(kernel.pair_spec(a, dim), xij)
        binv -= particles.m[j] / particles.rho[j] * np.outer(xij, grad)
    try:
        if np.linalg.cond(binv) > cond_max:
            return np.eye(dim), True
        return np.linalg.inv(binv), False
    except np.linalg.LinAlgError:
        return np.eye(dim), True


BOUNDARY_STATES = ("evolving", "frozen")


def compute_rates(particles: Particles, table: NeighborTable, mat: MaterialModel,
                  visc: ViscosityParams, kernel: KernelSetup, eps_xsph: float = 0.5,
                  renormalize: bool = True, backend: str | None = None,
                  boundary_state: str = "evolving") -> RateVector:
    """Right-hand sides of the continuity, momentum, energy, stress and XSPH equations.

    The per-particle knots in ``particles.a_knot`` must already be current;
    pairs use the mean knot.  Fixed particles never move.  With
    ``boundary_state="evolving"`` their density, stress and energy still
    follow the material around them; with ``"frozen"`` every rate of a fixed
    particle is zero and it keeps its initial state.
    """
    if table.n != particles.n:
        raise ValueError("neighbour table does not match particle count")
    if boundary_state not in BOUNDARY_STATES:
        raise ValueError(f"boundary_state must be one of {BOUNDARY_STATES}, got {boundary_state!r}")
    core = _backend.get(backend)
    fixed = particles.fixed
    frozen = particles.kind if boundary_state == "frozen" else np.zeros_like(particles.kind)
    drho, dv, de, dS, dS_out, dx, nbad = core.compute_rates(
        particles.x, particles.v, particles.rho, particles.m, particles.S,
        particles.a_knot, frozen, table.offsets, table.indices,
        kernel.family.code, kernel.b, kernel.h, mat.K, mat.G, mat.E, mat.rho0,
        visc.gamma1, visc.gamma2, visc.eta, eps_xsph, bool(renormalize), COND_MAX,
    )
    dv[fixed] = 0.0
    dx[fixed] = 0.0
    rates = RateVector(drho, dv, de, dS, dx, dS_out, nbad)
    _check_finite(rates)
    return rates


def _check_finite(rates: RateVector) -> None:
    for term in ("drho", "dv", "de", "dS", "dx"):
        arr = getattr(rates, term)
        flat = arr.reshape(arr.shape[0], -1)
        ok = np.all(np.isfinite(flat), axis=1)
        if not ok.all():
            raise NonFiniteRate(int(np.argmin(ok)), term)


def with_knots(particles: Particles, knots) -> Particles:
    return replace(particles, a_knot=np.ascontiguousarray(knots, dtype=float))
