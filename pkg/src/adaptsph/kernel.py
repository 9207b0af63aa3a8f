"""B-spline smoothing kernels with a movable intermediate knot.

Three families are provided:

* ``standard-cubic``  -- the classical cubic spline, support ``2h``.
* ``quadratic-bspline`` -- ``N_{1,2}`` over the knots ``{-b, -a, a, b}``.
* ``cubic-bspline`` -- ``N_{1,3}`` over the knots ``{-b, -a, 0, a, b}``.

The parametrised shapes are unnormalised B-spline basis functions; the
normalisation constant is computed in closed form for 1, 2 and 3 dimensions
(radially symmetric extension ``W(|x|/h)``).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

#: Minimum distance (in units of q) between the intermediate knot and the
#: centre / support boundary.  Prevents repeated knots.
KNOT_EPS = 0.05


class KernelError(ValueError):
    """Invalid kernel parameters or a failed kernel computation."""


class KernelFamily(str, enum.Enum):
    STANDARD_CUBIC = "standard-cubic"
    QUADRATIC = "quadratic-bspline"
    CUBIC = "cubic-bspline"

    @property
    def code(self) -> int:
        # integer tag shared with the compiled core
        return _FAMILY_CODES[self]


_FAMILY_CODES = {
    KernelFamily.STANDARD_CUBIC: 0,
    KernelFamily.QUADRATIC: 1,
    KernelFamily.CUBIC: 2,
}


@dataclass(frozen=True)
class KnotVector:
    knots: tuple[float, ...]

    def __post_init__(self):
        k = tuple(float(v) for v in self.knots)
        if any(k[i] > k[i + 1] for i in range(len(k) - 1)):
            raise KernelError(f"knot vector must be non-decreasing: {k}")
        object.__setattr__(self, "knots", k)

    @classmethod
    def symmetric(cls, a: float, b: float, degree: int) -> "KnotVector":
        """Knots ``{-b, -a, 0, a, b}`` (cubic) or ``{-b, -a, a, b}`` (quadratic)."""
        if degree == 3:
            return cls((-b, -a, 0.0, a, b))
        if degree == 2:
            return cls((-b, -a, a, b))
        raise KernelError(f"symmetric knot vector defined for degree 2 or 3, got {degree}")

    def __len__(self):
        return len(self.knots)

    def __getitem__(self, i):
        return self.knots[i]


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily
    a: float = 1.0
    b: float = 2.0
    h: float = 1.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.h <= 0:
            raise KernelError(f"smoothing length must be positive, got {self.h}")
        if self.dim not in (1, 2, 3):
            raise KernelError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.family is KernelFamily.STANDARD_CUBIC:
            return
        if not 0.0 < self.a < self.b:
            raise KernelError(f"need 0 < a < b, got a={self.a}, b={self.b}")
        if self.a < KNOT_EPS or self.a > self.b - KNOT_EPS:
            raise KernelError(
                f"intermediate knot a={self.a} closer than {KNOT_EPS} to 0 or b={self.b}"
            )

    @property
    def support(self) -> float:
        """Support half-width in units of q."""
        return 2.0 if self.family is KernelFamily.STANDARD_CUBIC else self.b

    @property
    def radius(self) -> float:
        """Support radius in physical units."""
        return self.support * self.h

    @property
    def chi(self) -> float:
        return self.a / self.b

    @property
    def degree(self) -> int:
        return 2 if self.family is KernelFamily.QUADRATIC else 3

    def knot_vector(self) -> KnotVector:
        if self.family is KernelFamily.STANDARD_CUBIC:
            return KnotVector((-2.0, -1.0, 0.0, 1.0, 2.0))
        return KnotVector.symmetric(self.a, self.b, self.degree)


def bspline_basis(knots: KnotVector | Sequence[float], i: int, p: int, zeta):
    """Cox-de Boor recursion for ``N_{i,p}(zeta)``.

    Degree-0 functions use half-open intervals ``[zeta_i, zeta_{i+1})`` so that
    the basis functions of higher degree are single-valued at interior knots.
    Terms with a zero-length denominator are dropped (0/0 -> 0).
    """
    t = knots.knots if isinstance(knots, KnotVector) else tuple(float(v) for v in knots)
    if p < 0:
        raise KernelError(f"degree must be non-negative, got {p}")
    if i < 0 or i + p + 1 >= len(t):
        raise KernelError(f"basis index i={i}, p={p} out of range for {len(t)} knots")
    z = np.asarray(zeta, dtype=float)
    out = _cox_de_boor(t, i, p, z)
    return float(out) if out.ndim == 0 else out


def _cox_de_boor(t, i, p, z):
    if p == 0:
        return np.where((t[i] <= z) & (z < t[i + 1]), 1.0, 0.0)
    left = 0.0
    den = t[i + p] - t[i]
    if den != 0.0:
        left = (z - t[i]) / den * _cox_de_boor(t, i, p - 1, z)
    right = 0.0
    den = t[i + p + 1] - t[i + 1]
    if den != 0.0:
        right = (t[i + p + 1] - z) / den * _cox_de_boor(t, i + 1, p - 1, z)
    return left + right


# ---------------------------------------------------------------------------
# closed-form shapes

def shape_derivatives(family, a, b, q):
    """Unnormalised shape ``W(q)`` and its first two q-derivatives.

    ``a`` may be an array broadcastable against ``q`` (per-pair knots).
    Returns a tuple ``(w, dw, d2w)``; all are zero for ``q >= support``.
    """
    family = KernelFamily(family)
    q = np.abs(np.asarray(q, dtype=float))
    if family is KernelFamily.STANDARD_CUBIC:
        inner = q < 1.0
        outer = (q >= 1.0) & (q < 2.0)
        w = np.where(inner, 1.0 - 1.5 * q**2 + 0.75 * q**3, np.where(outer, 0.25 * (2.0 - q) ** 3, 0.0))
        dw = np.where(inner, -3.0 * q + 2.25 * q**2, np.where(outer, -0.75 * (2.0 - q) ** 2, 0.0))
        d2w = np.where(inner, -3.0 + 4.5 * q, np.where(outer, 1.5 * (2.0 - q), 0.0))
        return w, dw, d2w

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    inner = q < a
    outer = (q >= a) & (q < b)
    if family is KernelFamily.CUBIC:
        c_in = a * a * b * (a + b)
        c_out = b * (b * b - a * a)
        w_in = ((a + b) * q**3 - 3.0 * a * b * q**2 + a * a * b * b) / c_in
        dw_in = (3.0 * (a + b) * q**2 - 6.0 * a * b * q) / c_in
        d2w_in = (6.0 * (a + b) * q - 6.0 * a * b) / c_in
        s = b - q
        w_out = s**3 / c_out
        dw_out = -3.0 * s**2 / c_out
        d2w_out = 6.0 * s / c_out
    else:
        c_in = a * (a + b)
        c_out = b * b - a * a
        w_in = (a * b - q**2) / c_in
        dw_in = -2.0 * q / c_in
        d2w_in = -2.0 / c_in + 0.0 * q
        s = b - q
        w_out = s**2 / c_out
        dw_out = -2.0 * s / c_out
        d2w_out = 2.0 / c_out + 0.0 * q
    w = np.where(inner, w_in, np.where(outer, w_out, 0.0))
    dw = np.where(inner, dw_in, np.where(outer, dw_out, 0.0))
    d2w = np.where(inner, d2w_in, np.where(outer, d2w_out, 0.0))
    return w, dw, d2w


def eval_unnormalized(spec: KernelSpec, q):
    """Table value of the kernel shape at ``q = r/h`` (no normalisation)."""
    w = shape_derivatives(spec.family, spec.a, spec.b, q)[0]
    return float(w) if np.ndim(w) == 0 else w


def shape_integrals(family, a, b, dim):
    """Integral of the unnormalised shape over R^dim in units of q.

    Closed forms for the radially symmetric extension; ``a`` may be an array.
    """
    family = KernelFamily(family)
    if family is KernelFamily.STANDARD_CUBIC:
        return {1: 1.5, 2: 0.7 * math.pi, 3: math.pi}[dim]
    a = np.asarray(a, dtype=float)
    if family is KernelFamily.CUBIC:
        if dim == 1:
            return 0.5 * b + 0.0 * a
        if dim == 2:
            return math.pi * b * (a * a + a * b + b * b) / (10.0 * (a + b))
        return math.pi * b * (a * a + b * b) / 15.0
    if dim == 1:
        return 2.0 * b / 3.0 + 0.0 * a
    if dim == 2:
        return math.pi * b * (a * a + a * b + b * b) / (6.0 * (a + b))
    return 2.0 * math.pi * b * (a * a + b * b) / 15.0


def norm_factor(family, a, b, h, dim):
    """Vectorised normalisation constant ``alpha`` (``a`` may be an array)."""
    return 1.0 / (shape_integrals(family, a, b, dim) * h**dim)


def normalization_constant(spec: KernelSpec) -> float:
    """``alpha`` such that ``alpha * W(|x|/h)`` integrates to one over R^dim."""
    return float(norm_factor(spec.family, spec.a, spec.b, spec.h, spec.dim))


def quadrature_normalization(spec: KernelSpec, tol: float = 1e-12) -> float:
    """Normalisation constant by adaptive radial quadrature.

    Independent of the closed forms in :func:`shape_integrals`; used to
    cross-check them.  Raises :class:`KernelError` if quadrature does not
    reach ``tol``.
    """
    breaks = [0.0, 1.0, 2.0] if spec.family is KernelFamily.STANDARD_CUBIC else [0.0, spec.a, spec.b]
    shell = {1: lambda q: 2.0, 2: lambda q: 2.0 * math.pi * q, 3: lambda q: 4.0 * math.pi * q * q}[spec.dim]
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        val, err = integrate.quad(lambda q: shell(q) * eval_unnormalized(spec, q), lo, hi, epsabs=0.0, epsrel=tol)
        if not math.isfinite(val) or err > max(tol * abs(val), 1e-14):
            raise KernelError(
                f"quadrature did not converge on [{lo}, {hi}] for {spec}: value={val}, error={err}"
            )
        total += val
    return 1.0 / (total * spec.h**spec.dim)


# ---------------------------------------------------------------------------
# normalised kernel

def radial_profile(family, a, b, h, dim, r):
    """Normalised ``W(r)`` and ``dW/dr`` for distances ``r`` (vectorised)."""
    q = np.asarray(r, dtype=float) / h
    w, dw, _ = shape_derivatives(family, a, b, q)
    alpha = norm_factor(family, a, b, h, dim)
    return alpha * w, alpha * dw / h


def eval(spec: KernelSpec, r):
    """Normalised kernel value at distance ``r``."""
    w, _ = radial_profile(spec.family, spec.a, spec.b, spec.h, spec.dim, r)
    return float(w) if np.ndim(w) == 0 else w


def eval_grad(spec: KernelSpec, r_vec) -> np.ndarray:
    """Kernel gradient with respect to ``r_vec`` (radial, zero at the origin)."""
    r_vec = np.asarray(r_vec, dtype=float)
    r = np.linalg.norm(r_vec, axis=-1, keepdims=True)
    _, dwdr = radial_profile(spec.family, spec.a, spec.b, spec.h, spec.dim, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(r > 0.0, r_vec / np.where(r > 0.0, r, 1.0), 0.0)
    return dwdr * unit


def grad_peak_location(spec: KernelSpec) -> float:
    """Distance ``q*`` at which ``|dW/dq|`` is largest."""
    if spec.family is KernelFamily.CUBIC:
        return spec.chi / (1.0 + spec.chi) * spec.b
    if spec.family is KernelFamily.QUADRATIC:
        return spec.a
    raise KernelError("gradient peak location is defined for the parametrised families only")
