"""Product kernels on [-1, 1]^d with cached norms and moment functionals.

Conventions used throughout the package:

  * every kernel component lives on [-1, 1], is symmetric, nonnegative,
    integrates to one, and is positive at the origin;
  * a kernel in d dimensions is the product of its per-axis components;
  * rescaling by a bandwidth vector divides by the bandwidth product, so
    the rescaled kernel again integrates to one;
  * smoothness-indexed kernels use the polynomial profile
    ``scale * (1 - |u|^power)+`` whose normalizing constant has the closed
    form ``(power + 1) / (2 * power)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

__all__ = [
    "PolyComponent",
    "KernelSpec",
    "poly_component",
    "make_kernel",
    "triangular_kernel",
    "epanechnikov_kernel",
    "holder_kernel",
    "eval_kernel",
    "eval_rescaled",
    "abs_moment",
    "sq_moment",
    "sandwich_scale",
]

#: absolute tolerance for the quadrature used on non-polynomial components
QUAD_TOL = 1e-12


@dataclass(frozen=True)
class PolyComponent:
    """Kernel component ``u -> scale * (1 - |u|^power)+``.

    The whole estimation pipeline special-cases this family: its norms and
    moments have closed forms, and the compiled summation core evaluates it
    without callbacks.
    """

    scale: float
    power: float

    def __call__(self, u):
        vals = self.scale * np.clip(1.0 - np.abs(np.asarray(u, dtype=float)) ** self.power, 0.0, None)
        return float(vals) if vals.ndim == 0 else vals


Component = Union[PolyComponent, Callable[[np.ndarray], np.ndarray]]


def poly_component(power: float) -> PolyComponent:
    """Normalized component with the ``(1 - |u|^power)+`` profile."""
    if power <= 0:
        raise ValueError(f"profile power must be positive, got {power}")
    return PolyComponent(scale=(power + 1.0) / (2.0 * power), power=float(power))


def _axis_integral(comp: Component, order: float, squared: bool) -> float:
    """Integral of |u|^order * comp(u)^(2 if squared else 1) over [-1, 1]."""
    if isinstance(comp, PolyComponent):
        a, b, m = comp.scale, comp.power, order
        if squared:
            return 2.0 * a * a * (1.0 / (m + 1.0) - 2.0 / (m + b + 1.0) + 1.0 / (m + 2.0 * b + 1.0))
        return 2.0 * a * b / ((m + 1.0) * (m + b + 1.0))
    kinks = sorted(set(getattr(comp, "quad_points", ())) | {0.0})

    def integrand(u):
        k = comp(np.asarray(u))
        return abs(u) ** order * (k * k if squared else k)

    val, _ = integrate.quad(integrand, -1.0, 1.0, points=kinks, limit=200, epsabs=QUAD_TOL, epsrel=1e-11)
    return val


def _component_sup(comp: Component) -> float:
    if isinstance(comp, PolyComponent):
        return comp.scale
    mesh = np.linspace(-1.0, 1.0, 4097)
    return float(np.max(comp(mesh)))


@dataclass(frozen=True)
class KernelSpec:
    """A product kernel together with its cached norms and moments.

    Attributes
    ----------
    components:
        One component per axis (`PolyComponent` or a plain callable that is
        symmetric, nonnegative and supported on [-1, 1]).
    dims:
        Number of axes d.
    sup_norm:
        Supremum of the product kernel (attained at the origin for the
        built-in profiles).
    l2_norm_sq:
        Integral of the squared kernel over [-1, 1]^d.
    axis_l2:
        Per-axis factors of ``l2_norm_sq`` (their product equals it).
    holder_smoothness, holder_const:
        For kernels built by :func:`holder_kernel`: the smoothness index and
        the recorded modulus constant of the component.
    """

    components: tuple
    dims: int
    sup_norm: float
    l2_norm_sq: float
    axis_l2: tuple
    holder_smoothness: float | None = None
    holder_const: float | None = None
    _moments: dict = field(default_factory=dict, compare=False, repr=False)


def make_kernel(
    components: Sequence[Component],
    holder_smoothness: float | None = None,
    holder_const: float | None = None,
) -> KernelSpec:
    """Build a :class:`KernelSpec`, validating the component contract.

    Each component must integrate to one over [-1, 1] (within 1e-9) and be
    positive at the origin; violations raise ``ValueError``.
    """
    components = tuple(components)
    if not components:
        raise ValueError("kernel needs at least one component")
    axis_l2 = []
    for i, comp in enumerate(components):
        total = _axis_integral(comp, 0.0, squared=False)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component {i} integrates to {total!r}, not 1")
        origin = comp(0.0) if isinstance(comp, PolyComponent) else float(np.asarray(comp(np.array(0.0))))
        if not origin > 0.0:
            raise ValueError(f"component {i} must be positive at 0, got {origin!r}")
        axis_l2.append(_axis_integral(comp, 0.0, squared=True))
    sup = math.prod(_component_sup(c) for c in components)
    return KernelSpec(
        components=components,
        dims=len(components),
        sup_norm=sup,
        l2_norm_sq=math.prod(axis_l2),
        axis_l2=tuple(axis_l2),
        holder_smoothness=holder_smoothness,
        holder_const=holder_const,
    )


def triangular_kernel(dims: int = 1) -> KernelSpec:
    """Product of triangular components (1 - |u|)+ — peak 1, L2² = (2/3)^d."""
    return make_kernel([poly_component(1.0)] * dims, holder_smoothness=1.0, holder_const=1.0)


def epanechnikov_kernel(dims: int = 1) -> KernelSpec:
    """Product of parabolic components 0.75 * (1 - u²)+."""
    return make_kernel([poly_component(2.0)] * dims, holder_smoothness=2.0, holder_const=1.5)


def holder_kernel(beta: float) -> KernelSpec:
    """Univariate kernel matched to a smoothness index ``beta`` in (0, 2].

    For ``beta <= 1`` the profile is ``c * (1 - |u|^beta)+`` with
    ``c = (beta + 1) / (2 beta)``, which satisfies the beta-Hölder modulus
    with constant ``c`` (so beta=1 is the triangular kernel and beta=0.5 has
    normalizer 1.5). For ``beta`` in (1, 2] the C¹ parabolic profile
    ``0.75 * (1 - u²)+`` is used; its Lipschitz constant on [-1, 1] is 1.5.
    """
    if not 0.0 < beta <= 2.0:
        raise ValueError(f"smoothness index must lie in (0, 2], got {beta}")
    if beta <= 1.0:
        comp = poly_component(beta)
        return make_kernel([comp], holder_smoothness=beta, holder_const=comp.scale)
    return make_kernel([poly_component(2.0)], holder_smoothness=beta, holder_const=1.5)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _as_points(spec: KernelSpec, x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1)
    if pts.ndim == 1:
        if pts.shape[0] != spec.dims:
            raise ValueError(f"point has {pts.shape[0]} coordinates, kernel has {spec.dims} axes")
        return pts.reshape(1, -1), True
    if pts.ndim == 2:
        if pts.shape[1] != spec.dims:
            raise ValueError(f"points have {pts.shape[1]} coordinates, kernel has {spec.dims} axes")
        return pts, False
    raise ValueError("expected a d-vector or an (m, d) array of points")


def eval_kernel(spec: KernelSpec, x):
    """Product kernel value at ``x`` (a d-vector, or an (m, d) batch).

    Returns 0 whenever any coordinate falls outside [-1, 1].
    """
    pts, single = _as_points(spec, x)
    vals = np.ones(pts.shape[0])
    for i, comp in enumerate(spec.components):
        xi = pts[:, i]
        # clip before evaluating: callables need not be defined off [-1, 1]
        vals *= np.where(np.abs(xi) <= 1.0, comp(np.clip(xi, -1.0, 1.0)), 0.0)
    return float(vals[0]) if single else vals


def eval_rescaled(spec: KernelSpec, h, x):
    """Bandwidth-rescaled kernel: K(x/h) divided by the bandwidth product.

    Parameters
    ----------
    spec:
        The kernel.
    h:
        Bandwidth vector (one positive entry per axis; a scalar is accepted
        for one axis).
    x:
        Evaluation point(s), same shapes as accepted by :func:`eval_kernel`.
    """
    hv = np.asarray(h, dtype=float).reshape(-1)
    if hv.shape[0] != spec.dims:
        raise ValueError(f"bandwidth has {hv.shape[0]} components, kernel has {spec.dims} axes")
    if np.any(hv <= 0.0):
        raise ValueError(f"bandwidth components must be positive, got {hv.tolist()}")
    pts, single = _as_points(spec, x)
    scaled = eval_kernel(spec, pts / hv) / math.prod(hv.tolist())
    return float(scaled[0]) if single else scaled


def abs_moment(spec: KernelSpec, axis: int, order: float) -> float:
    """Moment ∫ |x_axis|^order |K(x)| dx of the product kernel.

    Because every other component integrates to one, this reduces to the
    per-axis moment of the chosen component; values are memoized on the spec.
    """
    if order <= 0:
        raise ValueError(f"moment order must be positive, got {order}")
    key = ("abs", axis, float(order))
    if key not in spec._moments:
        spec._moments[key] = _axis_integral(spec.components[axis], float(order), squared=False)
    return spec._moments[key]


def sq_moment(spec: KernelSpec, axis: int, order: float) -> float:
    """Moment ∫ |x_axis|^order K²(x) dx of the squared product kernel."""
    if order <= 0:
        raise ValueError(f"moment order must be positive, got {order}")
    key = ("sq", axis, float(order))
    if key not in spec._moments:
        other = math.prod(spec.axis_l2[k] for k in range(spec.dims) if k != axis)
        spec._moments[key] = _axis_integral(spec.components[axis], float(order), squared=True) * other
    return spec._moments[key]


def sandwich_scale(spec: KernelSpec, beta, L: float) -> float:
    """Bandwidth scale below which the variance sandwich holds.

    This is the largest constant ``c`` such that for all bandwidths with
    ``h_i <= c * p(t)^(1/beta_i)`` the convolution variance stays within
    [1/2, 3/2] of its flat-density approximation:
    ``min_i (2 d L / ||K||₂² * ∫|x_i|^{beta_i} K²)^{-1/beta_i}``.

    For the triangular kernel with beta = L = 1 this equals 2.
    """
    bv = np.asarray(beta, dtype=float).reshape(-1)
    if bv.shape[0] != spec.dims:
        raise ValueError("smoothness vector length must match kernel axes")
    vals = [
        (2.0 * spec.dims * L / spec.l2_norm_sq * sq_moment(spec, i, bv[i])) ** (-1.0 / bv[i])
        for i in range(spec.dims)
    ]
    return min(vals)
