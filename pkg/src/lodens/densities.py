"""Reference densities with exact samplers and quadrature oracles.

Every density carries its own metadata: the support hull, per-axis
smoothness index and modulus constant, the supremum, and (when the family
is built for boundary experiments) exact margin statistics.  One-dimensional
families also expose an analytic CDF; sampling inverts it by vectorized
bisection, so draws are deterministic functions of the generator state.

The oracles at the bottom (`oracle_bias`, `oracle_variance`, ...) integrate
against the true density with QUADPACK, splitting at recorded kinks.  They
exist so that estimator behaviour can be checked against ground truth that
was computed by an independent route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate

from .kernels import KernelSpec, PolyComponent, abs_moment, holder_kernel

__all__ = [
    "DensityModel",
    "MarginInfo",
    "SuperefficiencyPair",
    "uniform_density",
    "triangular_density",
    "margin_family",
    "product_density",
    "superefficiency_pair",
    "pdf_at",
    "cdf_at",
    "draw_sample",
    "oracle_bias",
    "bias_bound",
    "oracle_variance",
    "oracle_floored_variance",
    "margin_volume",
]


@dataclass(frozen=True)
class MarginInfo:
    """Exact margin statistics: volume{0 < p <= eps} <= coeff * eps^exponent
    for all eps <= eps_max."""

    exponent: float
    eps_max: float
    coeff: float


@dataclass(frozen=True)
class DensityModel:
    """A density together with its sampler and recorded analytic facts.

    Attributes
    ----------
    name:
        Human-readable identifier, echoed into experiment outputs.
    dims:
        Dimension d.
    pdf:
        Vectorized density over an (m, d) array of points -> (m,) values.
    sampler:
        ``sampler(n, rng) -> (n, d)`` draws; exact inverse-CDF for the 1-d
        families, rejection for the radial ones.
    support_box:
        Axis-aligned hull ((lo, hi), ...) of the support.
    smoothness:
        Per-axis Hölder index of the density.
    holder_const:
        Modulus constant matching `smoothness` (numerical estimate unless
        noted in the family docstring).
    sup_density:
        Supremum of the density.
    cdf:
        Analytic CDF for 1-d models, else None.
    factors:
        Per-axis 1-d models when the density is a product, else None.
    margin:
        Exact margin statistics for boundary families, else None.
    kinks:
        Interior breakpoints used to split oracle quadrature (1-d; for
        products, per-axis kinks live on the factors).
    """

    name: str
    dims: int
    pdf: Callable
    sampler: Callable
    support_box: tuple
    smoothness: tuple
    holder_const: float
    sup_density: float
    cdf: Callable | None = None
    factors: tuple | None = None
    margin: MarginInfo | None = None
    kinks: tuple = ()


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def _as_batch(model: DensityModel, x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if model.dims == 1:
        if pts.ndim == 0:
            return pts.reshape(1, 1), True
        if pts.ndim == 1:
            return pts.reshape(-1, 1), False
        if pts.ndim == 2 and pts.shape[1] == 1:
            return pts, False
    else:
        if pts.ndim == 1 and pts.shape[0] == model.dims:
            return pts.reshape(1, -1), True
        if pts.ndim == 2 and pts.shape[1] == model.dims:
            return pts, False
    raise ValueError(f"cannot interpret points of shape {pts.shape} for a {model.dims}-d density")


def pdf_at(model: DensityModel, x):
    """Density value(s) at ``x``; scalar in -> float out, batch in -> array."""
    pts, single = _as_batch(model, x)
    vals = model.pdf(pts)
    return float(vals[0]) if single else vals


def cdf_at(model: DensityModel, x):
    """Analytic CDF for one-dimensional models."""
    if model.cdf is None:
        raise ValueError(f"density {model.name!r} does not expose an analytic CDF")
    pts, single = _as_batch(model, x)
    vals = model.cdf(pts[:, 0])
    return float(vals[0]) if single else vals


def draw_sample(model: DensityModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` observations as an (n, d) array."""
    if n < 0:
        raise ValueError(f"sample size must be nonnegative, got {n}")
    if n == 0:
        return np.empty((0, model.dims))
    out = np.asarray(model.sampler(n, rng), dtype=float).reshape(n, model.dims)
    return out


def _invert_cdf(cdf, lo: float, hi: float, u: np.ndarray, iters: int = 80) -> np.ndarray:
    """Vectorized bisection inverse of a monotone CDF (exact to double width)."""
    lo_arr = np.full(u.shape, lo)
    hi_arr = np.full(u.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (lo_arr + hi_arr)
        below = cdf(mid) < u
        lo_arr = np.where(below, mid, lo_arr)
        hi_arr = np.where(below, hi_arr, mid)
    return 0.5 * (lo_arr + hi_arr)


def _modulus_estimate(fn, lo: float, hi: float, beta: float, mesh: int = 8193) -> float:
    """Numerical Hölder modulus of a 1-d function over [lo, hi].

    Scans dyadic lags on a uniform mesh and inflates by 5% to absorb.
    the discretization.
    """
    xs = np.linspace(lo, hi, mesh)
    vals = fn(xs)
    step = (hi - lo) / (mesh - 1)
    best = 0.0
    lag = 1
    while lag < mesh:
        gap = (lag * step) ** beta
        best = max(best, float(np.max(np.abs(vals[lag:] - vals[:-lag]))) / gap)
        lag *= 2
    return 1.05 * best


# ---------------------------------------------------------------------------
# basic 1-d families
# ---------------------------------------------------------------------------

def uniform_density(lo: float = -1.0, hi: float = 1.0) -> DensityModel:
    """Uniform density on [lo, hi] (oracle plumbing; no margin metadata)."""
    if not hi > lo:
        raise ValueError(f"need hi > lo, got [{lo}, {hi}]")
    width = hi - lo
    level = 1.0 / width

    def pdf(pts):
        x = pts[:, 0]
        return np.where((x >= lo) & (x <= hi), level, 0.0)

    def cdf(x):
        return np.clip((x - lo) / width, 0.0, 1.0)

    def sampler(n, rng):
        return rng.uniform(lo, hi, size=(n, 1))

    return DensityModel(
        name=f"uniform[{lo:g},{hi:g}]",
        dims=1,
        pdf=pdf,
        sampler=sampler,
        support_box=((lo, hi),),
        smoothness=(1.0,),
        holder_const=0.0,
        sup_density=level,
        cdf=cdf,
        kinks=(lo, hi),
    )


def triangular_density(center: float = 0.0, halfwidth: float = 1.0) -> DensityModel:
    """Triangular density (1 - |x - center| / halfwidth)+ / halfwidth.

    Lipschitz with exact constant 1/halfwidth²; margin statistics are exact:
    volume{0 < p <= eps} = 2 halfwidth² eps for eps <= 1/halfwidth.
    """
    if halfwidth <= 0:
        raise ValueError(f"halfwidth must be positive, got {halfwidth}")
    c, w = center, halfwidth

    def pdf(pts):
        s = 1.0 - np.abs(pts[:, 0] - c) / w
        return np.clip(s, 0.0, None) / w

    def cdf(x):
        s = np.clip((np.asarray(x, dtype=float) - c) / w, -1.0, 1.0)
        return np.where(s <= 0.0, 0.5 * (1.0 + s) ** 2, 1.0 - 0.5 * (1.0 - s) ** 2)

    def sampler(n, rng):
        u = rng.random(n)
        s = np.where(u <= 0.5, np.sqrt(2.0 * u) - 1.0, 1.0 - np.sqrt(2.0 * (1.0 - u)))
        return (c + w * s).reshape(n, 1)

    return DensityModel(
        name=f"triangular(center={c:g},halfwidth={w:g})",
        dims=1,
        pdf=pdf,
        sampler=sampler,
        support_box=((c - w, c + w),),
        smoothness=(1.0,),
        holder_const=1.0 / w**2,
        sup_density=1.0 / w,
        cdf=cdf,
        margin=MarginInfo(exponent=1.0, eps_max=1.0 / w, coeff=2.0 * w**2),
        kinks=(c - w, c, c + w),
    )


# ---------------------------------------------------------------------------
# boundary (margin) family
# ---------------------------------------------------------------------------

def _margin_profile(gamma: float, blend_width: float = 0.25):
    """One-sided profile phi(s) of the boundary family, s = distance to the
    support edge: a pure power s^(1/gamma) near the edge, a monotone C¹
    Hermite blend, then a flat plateau.  Returns (phi, Phi, pieces) where
    Phi is the antiderivative with Phi(0) = 0.
    """
    q = 1.0 / gamma
    w = blend_width
    v0, m0 = w**q, q * w ** (q - 1.0)
    v1 = (1.0 + q / 2.0) * w**q  # plateau level, keeps the Hermite blend monotone
    # cubic Hermite on tau = (s - w)/w in [0, 1] with end slopes (w*m0, 0)
    hermite = (
        v0 * Polynomial([1.0, 0.0, -3.0, 2.0])
        + (w * m0) * Polynomial([0.0, 1.0, -2.0, 1.0])
        + v1 * Polynomial([0.0, 0.0, 3.0, -2.0])
    )
    hermite_int = hermite.integ()
    mass_power = w ** (q + 1.0) / (q + 1.0)
    mass_blend = w * float(hermite_int(1.0))

    def phi(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        inner = (s > 0.0) & (s <= w)
        mid = (s > w) & (s <= 2.0 * w)
        out[inner] = s[inner] ** q
        out[mid] = hermite((s[mid] - w) / w)
        out[s > 2.0 * w] = v1
        return out

    def phi_int(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        inner = (s > 0.0) & (s <= w)
        mid = (s > w) & (s <= 2.0 * w)
        high = s > 2.0 * w
        out[inner] = s[inner] ** (q + 1.0) / (q + 1.0)
        out[mid] = mass_power + w * hermite_int((s[mid] - w) / w)
        out[high] = mass_power + mass_blend + v1 * (s[high] - 2.0 * w)
        return out

    return phi, phi_int, (q, w, v1, mass_power + mass_blend + v1 * (1.0 - 2.0 * w))


def _power_profile(gamma: float):
    """Globally pure-power one-sided profile phi(s) = s^(1/gamma).

    Valid whenever the class tolerates a kink at the center (beta <= 1):
    s^q with q = 1/gamma >= beta is beta-Hölder on [0, 1].  With gamma = 1
    this makes the one-dimensional family coincide with the triangular
    density.  Same return shape as :func:`_margin_profile` with the blend
    width degenerated to the full radius.
    """
    q = 1.0 / gamma

    def phi(s):
        return np.clip(s, 0.0, 1.0) ** q

    def phi_int(s):
        return np.clip(s, 0.0, 1.0) ** (q + 1.0) / (q + 1.0)

    return phi, phi_int, (q, 1.0, 1.0, 1.0 / (q + 1.0))


def margin_family(beta: float, gamma: float, dims: int = 1) -> DensityModel:
    """Density on the unit ball whose low-density volume has exact exponent
    ``gamma``: volume{0 < p <= eps} = coeff * eps^gamma for small eps.

    The profile rises from the support boundary like distance^(1/gamma),
    which is beta-Hölder exactly when ``beta * gamma <= 1`` — no such
    density exists otherwise and a ValueError says so.  Margin statistics
    (`eps_max`, `coeff`) are exact by construction; the recorded modulus
    constant is a numerical estimate.
    """
    if not 0.0 < beta <= 2.0:
        raise ValueError(f"smoothness index must lie in (0, 2], got {beta}")
    if gamma <= 0.0:
        raise ValueError(f"margin exponent must be positive, got {gamma}")
    if beta * gamma > 1.0 + 1e-12:
        raise ValueError(
            f"no beta-Hölder density has margin exponent gamma with beta * gamma > 1 "
            f"(got beta={beta:g}, gamma={gamma:g}): near the boundary the density would "
            f"have to rise like distance^(1/gamma), which is rougher than the class allows"
        )
    # beta <= 1 admits the pure power everywhere (gamma = 1 is then exactly
    # the triangular density); beta > 1 needs a C¹ interior, so the power
    # tail is blended into a flat plateau away from the boundary.
    if beta <= 1.0:
        phi, phi_int, (q, w, _v1, one_sided_mass) = _power_profile(gamma)
    else:
        phi, phi_int, (q, w, _v1, one_sided_mass) = _margin_profile(gamma)

    if dims == 1:
        norm = 1.0 / (2.0 * one_sided_mass)

        def pdf(pts):
            return norm * phi(1.0 - np.abs(pts[:, 0]))

        def cdf(x):
            x = np.asarray(x, dtype=float)
            half = one_sided_mass - phi_int(1.0 - np.clip(np.abs(x), 0.0, 1.0))
            return 0.5 + np.sign(x) * norm * half

        def sampler(n, rng):
            u = rng.random(n)
            return _invert_cdf(cdf, -1.0, 1.0, u).reshape(n, 1)

        margin = MarginInfo(exponent=gamma, eps_max=norm * w**q, coeff=2.0 * norm ** (-gamma))
        model = DensityModel(
            name=f"margin_family(beta={beta:g},gamma={gamma:g},d=1)",
            dims=1,
            pdf=pdf,
            sampler=sampler,
            support_box=((-1.0, 1.0),),
            smoothness=(beta,),
            holder_const=_modulus_estimate(lambda x: pdf(x.reshape(-1, 1)), -1.0, 1.0, beta),
            sup_density=norm * phi(np.array([1.0]))[0],
            cdf=cdf,
            margin=margin,
            kinks=tuple(
                sorted(
                    {-1.0, 0.0, 1.0}
                    | {
                        s * (1.0 - k * w)
                        for s in (-1.0, 1.0)
                        for k in (1.0, 2.0)
                        if 0.0 < 1.0 - k * w < 1.0
                    }
                )
            ),
        )
        return model

    # radial construction on the unit ball
    ball_vol = math.pi ** (dims / 2.0) / math.gamma(dims / 2.0 + 1.0)
    surface = dims * ball_vol
    radial_kinks = [1.0 - k * w for k in (1.0, 2.0) if 0.0 < 1.0 - k * w < 1.0]
    radial_mass, _ = integrate.quad(
        lambda r: r ** (dims - 1.0) * float(phi(np.array([1.0 - r]))[0]),
        0.0, 1.0, points=radial_kinks, limit=200,
    )
    norm = 1.0 / (surface * radial_mass)

    def pdf(pts):
        radius = np.sqrt(np.sum(pts**2, axis=1))
        return norm * phi(np.clip(1.0 - radius, 0.0, None))

    sup = norm * float(phi(np.array([1.0]))[0])

    def sampler(n, rng):
        out = np.empty((n, dims))
        filled = 0
        while filled < n:
            m = max(2 * (n - filled), 64)
            pts = rng.uniform(-1.0, 1.0, size=(m, dims))
            keep = rng.uniform(0.0, sup, size=m) < pdf(pts)
            take = pts[keep][: n - filled]
            out[filled : filled + take.shape[0]] = take
            filled += take.shape[0]
        return out

    # volume{0 < p <= eps} = ball_vol * (1 - (1 - s_eps)^d) with
    # s_eps = (eps / norm)^gamma in the pure-power region
    margin = MarginInfo(
        exponent=gamma,
        eps_max=norm * w**q,
        coeff=surface * norm ** (-gamma),
    )
    profile_L = _modulus_estimate(lambda x: norm * phi(1.0 - np.abs(x)), -1.0, 1.0, beta)
    return DensityModel(
        name=f"margin_family(beta={beta:g},gamma={gamma:g},d={dims})",
        dims=dims,
        pdf=pdf,
        sampler=sampler,
        support_box=((-1.0, 1.0),) * dims,
        smoothness=(beta,) * dims,
        holder_const=profile_L,
        sup_density=sup,
        margin=margin,
    )


def product_density(factors: Sequence[DensityModel]) -> DensityModel:
    """Product of independent 1-d densities (axis-by-axis)."""
    factors = tuple(factors)
    if any(f.dims != 1 for f in factors):
        raise ValueError("product factors must all be one-dimensional")
    dims = len(factors)
    sups = [f.sup_density for f in factors]

    def pdf(pts):
        vals = np.ones(pts.shape[0])
        for i, f in enumerate(factors):
            vals *= f.pdf(pts[:, i : i + 1])
        return vals

    def sampler(n, rng):
        cols = [draw_sample(f, n, rng)[:, 0] for f in factors]
        return np.column_stack(cols)

    lips = max(
        f.holder_const * math.prod(s for k, s in enumerate(sups) if k != i)
        for i, f in enumerate(factors)
    )
    return DensityModel(
        name="*".join(f.name for f in factors),
        dims=dims,
        pdf=pdf,
        sampler=sampler,
        support_box=tuple(f.support_box[0] for f in factors),
        smoothness=tuple(f.smoothness[0] for f in factors),
        holder_const=lips,
        sup_density=math.prod(sups),
        factors=factors,
    )


# ---------------------------------------------------------------------------
# two-point (superefficiency) construction
# ---------------------------------------------------------------------------

def _bump_pdf(x, center: float, width: float, beta: float) -> np.ndarray:
    """Smoothness-matched bump width^beta * K((x - center)/width; beta).

    Peak value width^beta * K(0; beta); total mass width^(beta + 1).
    """
    comp: PolyComponent = holder_kernel(beta).components[0]
    v = (np.asarray(x, dtype=float) - center) / width
    return width**beta * comp.scale * np.clip(1.0 - np.abs(v) ** comp.power, 0.0, None)


def _bump_cdf(x, center: float, width: float, beta: float) -> np.ndarray:
    comp: PolyComponent = holder_kernel(beta).components[0]
    a, b = comp.scale, comp.power
    v = np.clip((np.asarray(x, dtype=float) - center) / width, -1.0, 1.0)
    tail = a * ((1.0 - np.abs(v)) - (1.0 - np.abs(v) ** (b + 1.0)) / (b + 1.0))
    base = np.where(v <= 0.0, tail, 1.0 - tail)
    return width ** (beta + 1.0) * base


@dataclass(frozen=True)
class SuperefficiencyPair:
    """Two densities that coincide except near the probe point.

    ``base`` has value ``peak_p`` at ``point``; ``perturbed`` dips to the
    smaller value ``peak_q`` there while staying in the rougher smoothness
    class.  Any estimator that beats the adaptive risk at ``point`` under
    ``base`` must pay for it under ``perturbed``.
    """

    base: DensityModel
    perturbed: DensityModel
    point: float
    n: int
    smooth_index: float    # class of the base density
    rough_index: float     # class the perturbation drops to
    peak_p: float          # base density at the probe point
    peak_q: float          # perturbed density at the probe point
    width_main: float      # main bump width
    width_fill: float      # mass-filling bump width
    width_perturb: float   # perturbing bump width


def superefficiency_pair(
    n: int,
    smooth_index: float,
    rough_index: float,
    point: float = 0.0,
    dip_const: float = 0.01,
) -> SuperefficiencyPair:
    """Construct the two-density pair at sample size ``n``.

    Parameters
    ----------
    n:
        Sample size the pair is tuned to.
    smooth_index, rough_index:
        Hölder classes of the base and the perturbed density; the
        perturbation must be rougher (``rough_index < smooth_index``),
        otherwise the dip would be statistically visible.
    point:
        Probe location (the main bump is centred there).
    dip_const:
        Scale of the dip below the base value; small values keep the
        construction valid at desk-scale n.

    Raises
    ------
    ValueError
        If the geometry degenerates at this ``n`` — the failed inequality is
        named in the message.
    """
    if not 0.0 < rough_index < smooth_index <= 2.0:
        raise ValueError(
            f"need 0 < rough_index < smooth_index <= 2, got rough={rough_index!r} smooth={smooth_index!r}"
        )
    if n < 3:
        raise ValueError(f"sample size must be at least 3, got {n}")
    b1, b2 = smooth_index, rough_index
    log_n = math.log(n)
    peak_p = n ** (-b2 / (b2 + 1.0))
    peak_q = 4.0 * dip_const * (peak_p / n) ** (b1 / (2.0 * b1 + 1.0)) * log_n**1.5
    k1_origin = holder_kernel(b1).components[0].scale
    k2_origin = holder_kernel(b2).components[0].scale
    if peak_q >= peak_p:
        raise ValueError(
            f"dip level must stay below the base value (peak_q={peak_q:.4g} >= peak_p={peak_p:.4g}); "
            f"increase n or decrease dip_const"
        )
    width_main = (peak_p / k1_origin) ** (1.0 / b1)
    residual = 1.0 - width_main ** (b1 + 1.0)
    if residual <= 0.0:
        raise ValueError(
            f"main bump already exceeds unit mass (1 - width_main^(smooth+1) = {residual:.4g} <= 0)"
        )
    width_fill = residual ** (1.0 / (b1 + 1.0))
    width_perturb = ((peak_p - peak_q) / k2_origin) ** (1.0 / b2)
    if not 3.0 * width_perturb <= width_main:
        raise ValueError(
            f"perturbation must fit inside the main bump "
            f"(3 * width_perturb = {3.0 * width_perturb:.4g} > width_main = {width_main:.4g})"
        )

    t, g1, g2, hn = point, width_main, width_fill, width_perturb
    fill_center = t + g1 + g2
    hull = (t - g1, t + g1 + 2.0 * g2)

    def base_pdf(pts):
        x = pts[:, 0]
        return _bump_pdf(x, t, g1, b1) + _bump_pdf(x, fill_center, g2, b1)

    def base_cdf(x):
        return _bump_cdf(x, t, g1, b1) + _bump_cdf(x, fill_center, g2, b1)

    def pert_pdf(pts):
        x = pts[:, 0]
        return base_pdf(pts) - _bump_pdf(x, t, hn, b2) + _bump_pdf(x, t + 2.0 * hn, hn, b2)

    def pert_cdf(x):
        return base_cdf(x) - _bump_cdf(x, t, hn, b2) + _bump_cdf(x, t + 2.0 * hn, hn, b2)

    # the dip must not push the density negative anywhere
    probe = np.linspace(t - 1.5 * hn, t + 3.5 * hn, 8193).reshape(-1, 1)
    low = float(np.min(pert_pdf(probe)))
    if low < -1e-12:
        raise ValueError(
            f"perturbed construction dips negative (min {low:.4g}) at n={n}; "
            f"the dip level is too deep for this sample size"
        )

    def make_sampler(cdf):
        def sampler(n_draw, rng):
            u = rng.random(n_draw)
            return _invert_cdf(cdf, hull[0], hull[1], u).reshape(n_draw, 1)

        return sampler

    mesh = np.linspace(hull[0], hull[1], 1 << 15)
    step = min((hull[1] - hull[0]) / 8192.0, hn / 16.0)
    mesh_fine_n = min(int((hull[1] - hull[0]) / step) + 2, 1 << 21)
    fine = np.linspace(hull[0], hull[1], mesh_fine_n)

    base_kinks = (t - g1, t, t + g1, fill_center, t + g1 + 2.0 * g2)
    pert_kinks = base_kinks + (t - hn, t + hn, t + 2.0 * hn, t + 3.0 * hn)

    base = DensityModel(
        name=f"supereff_base(n={n},smooth={b1:g},rough={b2:g})",
        dims=1,
        pdf=base_pdf,
        sampler=make_sampler(base_cdf),
        support_box=(hull,),
        smoothness=(b1,),
        holder_const=_modulus_estimate(lambda x: base_pdf(x.reshape(-1, 1)), hull[0], hull[1], b1),
        sup_density=float(np.max(base_pdf(mesh.reshape(-1, 1)))),
        cdf=base_cdf,
        kinks=base_kinks,
    )
    perturbed = DensityModel(
        name=f"supereff_perturbed(n={n},smooth={b1:g},rough={b2:g})",
        dims=1,
        pdf=pert_pdf,
        sampler=make_sampler(pert_cdf),
        support_box=(hull,),
        smoothness=(b2,),
        holder_const=_modulus_estimate(
            lambda x: pert_pdf(x.reshape(-1, 1)), hull[0], hull[1], b2, mesh=mesh_fine_n
        ),
        sup_density=float(np.max(pert_pdf(fine.reshape(-1, 1)))),
        cdf=pert_cdf,
        kinks=pert_kinks,
    )
    return SuperefficiencyPair(
        base=base,
        perturbed=perturbed,
        point=t,
        n=n,
        smooth_index=b1,
        rough_index=b2,
        peak_p=peak_p,
        peak_q=peak_q,
        width_main=g1,
        width_fill=g2,
        width_perturb=hn,
    )


# ---------------------------------------------------------------------------
# quadrature oracles
# ---------------------------------------------------------------------------

def _axis_kinks(model: DensityModel, axis: int) -> tuple:
    if model.factors is not None:
        return model.factors[axis].kinks
    return model.kinks if model.dims == 1 else ()


def _scaled_points(kinks, t: float, h: float):
    pts = sorted({(k - t) / h for k in kinks if abs((k - t) / h) < 1.0} | {0.0})
    return pts


def _axis_convolution(comp, pdf_1d, kinks, t: float, h: float, squared: bool) -> float:
    """∫ comp(u)^(1 or 2) * pdf_1d(t + h u) du over [-1, 1]."""

    def integrand(u):
        k = float(np.asarray(comp(np.array(u))))
        val = k * k if squared else k
        return val * float(pdf_1d(np.array([[t + h * u]]))[0])

    val, _ = integrate.quad(
        integrand, -1.0, 1.0, points=_scaled_points(kinks, t, h), limit=200
    )
    return val


def _vector_args(model: DensityModel, spec: KernelSpec, t, h):
    if spec.dims != model.dims:
        raise ValueError(f"kernel is {spec.dims}-d but density is {model.dims}-d")
    tv = np.asarray(t, dtype=float).reshape(-1)
    hv = np.asarray(h, dtype=float).reshape(-1)
    if tv.shape[0] != model.dims or hv.shape[0] != model.dims:
        raise ValueError("point and bandwidth must have one entry per axis")
    if np.any(hv <= 0):
        raise ValueError(f"bandwidths must be positive, got {hv.tolist()}")
    return tv, hv


def oracle_bias(model: DensityModel, spec: KernelSpec, t, h) -> float:
    """Exact smoothing bias p(t) - ∫ K(x) p(t + h·x) dx by quadrature."""
    tv, hv = _vector_args(model, spec, t, h)
    if model.dims == 1:
        smoothed = _axis_convolution(
            spec.components[0], model.pdf, model.kinks, tv[0], hv[0], squared=False
        )
    elif model.factors is not None:
        smoothed = math.prod(
            _axis_convolution(
                spec.components[i], model.factors[i].pdf, _axis_kinks(model, i), tv[i], hv[i], squared=False
            )
            for i in range(model.dims)
        )
    else:
        def integrand(*u):
            pt = tv + hv * np.asarray(u)
            kval = math.prod(float(np.asarray(spec.components[i](np.array(u[i])))) for i in range(model.dims))
            return kval * float(model.pdf(pt.reshape(1, -1))[0])

        smoothed, _ = integrate.nquad(integrand, [(-1.0, 1.0)] * model.dims)
    return pdf_at(model, tv if model.dims > 1 else tv[0]) - smoothed


def bias_bound(spec: KernelSpec, beta, L: float, h) -> float:
    """Smoothing-bias envelope L * Σ_i (∫|x_i|^beta_i |K|) * h_i^beta_i."""
    bv = np.asarray(beta, dtype=float).reshape(-1)
    hv = np.asarray(h, dtype=float).reshape(-1)
    if bv.shape[0] != spec.dims or hv.shape[0] != spec.dims:
        raise ValueError("smoothness and bandwidth must have one entry per kernel axis")
    return L * sum(abs_moment(spec, i, bv[i]) * hv[i] ** bv[i] for i in range(spec.dims))


def oracle_variance(model: DensityModel, spec: KernelSpec, t, h, n: int) -> float:
    """Exact convolution variance proxy (1/(n Πh)) ∫ K²(u) p(t + h·u) du."""
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    tv, hv = _vector_args(model, spec, t, h)
    if model.dims == 1:
        conv = _axis_convolution(
            spec.components[0], model.pdf, model.kinks, tv[0], hv[0], squared=True
        )
    elif model.factors is not None:
        conv = math.prod(
            _axis_convolution(
                spec.components[i], model.factors[i].pdf, _axis_kinks(model, i), tv[i], hv[i], squared=True
            )
            for i in range(model.dims)
        )
    else:
        def integrand(*u):
            pt = tv + hv * np.asarray(u)
            kval = math.prod(float(np.asarray(spec.components[i](np.array(u[i])))) for i in range(model.dims))
            return kval * kval * float(model.pdf(pt.reshape(1, -1))[0])

        conv, _ = integrate.nquad(integrand, [(-1.0, 1.0)] * model.dims)
    return conv / (n * math.prod(hv.tolist()))


def oracle_floored_variance(model: DensityModel, spec: KernelSpec, t, h, n: int) -> float:
    """Convolution variance with the deterministic floor ln²n / (n Πh)²."""
    _, hv = _vector_args(model, spec, t, h)
    floor = math.log(n) ** 2 / (n * math.prod(hv.tolist())) ** 2
    return max(floor, oracle_variance(model, spec, t, h, n))


def margin_volume(model: DensityModel, eps: float, resolution: int | None = None) -> float:
    """Volume of {0 < p <= eps} by midpoint counting on a fine grid.

    The grid is chosen so the cell diameter is at most 1e-3 of the support
    box diameter (resolution 2000 per axis in one dimension).
    """
    if eps <= 0:
        raise ValueError(f"threshold must be positive, got {eps}")
    if resolution is None:
        resolution = 2000 if model.dims == 1 else 1200
    axes = [
        lo + (hi - lo) * (np.arange(resolution) + 0.5) / resolution
        for lo, hi in model.support_box
    ]
    if model.dims == 1:
        pts = axes[0].reshape(-1, 1)
    else:
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
    vals = model.pdf(pts)
    cell = math.prod((hi - lo) / resolution for lo, hi in model.support_box)
    return float(np.count_nonzero((vals > 0.0) & (vals <= eps))) * cell
