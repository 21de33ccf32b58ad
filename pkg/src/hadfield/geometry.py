"""Single-chart Lorentzian geometry.

Everything here lives in one coordinate chart on a box, signature (-,+,...,+)
with axis 0 timelike.  Points and vectors are numpy arrays whose last axis has
length d; all operations broadcast over leading axes, so a (N, d) array of
points is processed in one vectorized pass.

The squared Lorentz distance ("world function") is Gamma(p, q) = -g_p(v, v)
with v = exp_p^{-1}(q), positive for timelike separation.  The wave operator
sign convention is the one with flat Box Gamma_p = 2d; see box_gamma.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np


class GeometryError(RuntimeError):
    pass


class OutsideDomain(GeometryError):
    """Point or geodesic left the chart box (or the declared convex radius)."""


class ConvergenceFailure(GeometryError):
    """Iterative solve (Newton shooting) did not reach tolerance."""


class ConjugatePoint(GeometryError):
    """Distortion determinant collapsed; domain is not starshaped enough."""


@dataclasses.dataclass(frozen=True)
class Chart:
    """A coordinate box with a metric evaluator.

    metric(x) maps (..., d) to (..., d, d), symmetric with g_00 < 0.
    christoffel_fn, when given, is used instead of finite differences.
    convex_radius is a user-declared coordinate-norm bound within which
    log_map is trusted to converge (the construction assumes starshaped
    domains, so this is an input contract, not something we compute).
    """

    d: int
    box: np.ndarray  # (d, 2) per-axis min/max
    metric: Callable[[np.ndarray], np.ndarray]
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    h_geo: float = 1e-3
    convex_radius: float = np.inf
    is_flat: bool = False
    name: str = "custom"

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        if box.shape != (self.d, 2):
            raise ValueError(f"box must be ({self.d}, 2), got {box.shape}")
        object.__setattr__(self, "box", box)

    def inside(self, x, margin=0.0):
        x = np.asarray(x, dtype=float)
        lo = self.box[:, 0] + margin
        hi = self.box[:, 1] - margin
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def require_inside(self, x, margin=0.0, what="point"):
        ok = self.inside(x, margin)
        if not np.all(ok):
            bad = np.asarray(x, dtype=float)[~np.asarray(ok, bool)]
            raise OutsideDomain(f"{what} outside box (margin {margin}): {bad[:3]}")


@dataclasses.dataclass(frozen=True)
class BundleModel:
    """Bundle data for sections the operator P = Box^nabla + B acts on.

    theta(x): (..., r, r) fiber metric (iso E -> E*), symmetric invertible.
    conn(x):  (..., d, r, r) connection coefficient matrices A_i.
    endo(x):  (..., r, r) the zeroth order endomorphism B.
    """

    r: int
    theta: Callable[[np.ndarray], np.ndarray]
    conn: Callable[[np.ndarray], np.ndarray]
    endo: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"


def trivial_bundle(d, r=1, m2=0.0):
    """Scalar-type bundle with A = 0 and B = m2 * Id (flat Klein-Gordon for r=1)."""

    def theta(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(r), x.shape[:-1] + (r, r)).copy()

    def conn(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (d, r, r))

    def endo(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(m2 * np.eye(r), x.shape[:-1] + (r, r)).copy()

    return BundleModel(r=r, theta=theta, conn=conn, endo=endo,
                       name=f"trivial(r={r}, m2={m2})")


# ---------------------------------------------------------------------------
# chart factories

def minkowski_metric(d):
    eta = np.eye(d)
    eta[0, 0] = -1.0

    def metric(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(eta, x.shape[:-1] + (d, d)).copy()

    return metric


def minkowski_chart(d, halfwidth=4.0, h_geo=1e-3):
    box = np.stack([-halfwidth * np.ones(d), halfwidth * np.ones(d)], axis=1)

    def christoffel_fn(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (d, d, d))

    return Chart(d=d, box=box, metric=minkowski_metric(d),
                 christoffel_fn=christoffel_fn, h_geo=h_geo,
                 is_flat=True, name="minkowski")


def conformal_chart(d=2, a=0.3, halfwidth=1.0, h_geo=1e-3, analytic=True):
    """g = e^{2 a t} eta on a box around the origin.

    Christoffels for a conformal factor with phi = a t:
    Gamma^0_00 = a, Gamma^0_ii = a (i spatial), Gamma^i_0i = Gamma^i_i0 = a.
    """
    eta = np.eye(d)
    eta[0, 0] = -1.0

    def metric(x):
        x = np.asarray(x, dtype=float)
        w = np.exp(2.0 * a * x[..., 0])
        return w[..., None, None] * eta

    def christoffel_fn(x):
        x = np.asarray(x, dtype=float)
        G = np.zeros(x.shape[:-1] + (d, d, d))
        G[..., 0, 0, 0] = a
        for i in range(1, d):
            G[..., 0, i, i] = a
            G[..., i, 0, i] = a
            G[..., i, i, 0] = a
        return G

    box = np.stack([-halfwidth * np.ones(d), halfwidth * np.ones(d)], axis=1)
    return Chart(d=d, box=box, metric=metric,
                 christoffel_fn=christoffel_fn if analytic else None,
                 h_geo=h_geo, name=f"conformal(a={a})")


def table_chart(d, box, grids, g_table, h_geo=1e-3):
    """Metric sampled on a rectilinear grid, spline-interpolated.

    grids: tuple of d 1d arrays; g_table: array grids-shape + (d, d).
    """
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(grids, g_table, method="cubic",
                                     bounds_error=False, fill_value=None)

    def metric(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, d)
        vals = interp(flat)
        return vals.reshape(x.shape[:-1] + (d, d))

    return Chart(d=d, box=np.asarray(box, dtype=float), metric=metric,
                 h_geo=h_geo, name="user-table")


def chart_from_config(cfg):
    """Build a Chart from a declarative dict (the CLI's config format)."""
    family = cfg.get("family", "minkowski")
    d = int(cfg.get("d", 2))
    h_geo = float(cfg.get("h_geo", 1e-3))
    if family == "minkowski":
        return minkowski_chart(d, halfwidth=float(cfg.get("halfwidth", 4.0)),
                               h_geo=h_geo)
    if family == "conformal":
        return conformal_chart(d, a=float(cfg.get("a", 0.3)),
                               halfwidth=float(cfg.get("halfwidth", 1.0)),
                               h_geo=h_geo,
                               analytic=bool(cfg.get("analytic", True)))
    if family == "user-table":
        grids = [np.asarray(g, dtype=float) for g in cfg["grids"]]
        g_table = np.asarray(cfg["g_table"], dtype=float)
        box = [[g[0], g[-1]] for g in grids]
        return table_chart(d, box, tuple(grids), g_table, h_geo=h_geo)
    raise ValueError(f"unknown metric family {family!r}")


# ---------------------------------------------------------------------------
# Christoffels

def _metric_jet(chart, x, h):
    """g and its first coordinate derivatives dg[..., l, i, j] = d_l g_ij."""
    x = np.asarray(x, dtype=float)
    d = chart.d
    g = chart.metric(x)
    dg = np.empty(x.shape[:-1] + (d, d, d))
    for l in range(d):
        e = np.zeros(d)
        e[l] = h
        dg[..., l, :, :] = (chart.metric(x + e) - chart.metric(x - e)) / (2 * h)
    return g, dg


def christoffel(chart, x):
    """Gamma^k_ij at x, shape (..., d, d, d), symmetric in the last two slots."""
    x = np.asarray(x, dtype=float)
    chart.require_inside(x, margin=chart.h_geo)
    if chart.christoffel_fn is not None:
        return chart.christoffel_fn(x)
    g, dg = _metric_jet(chart, x, chart.h_geo)
    ginv = np.linalg.inv(g)
    # dg[..., l, i, j] = d_l g_ij; Gamma^k_ij = g^{kl}(d_i g_lj + d_j g_il - d_l g_ij)/2
    Gamma = 0.5 * (np.einsum("...kl,...ilj->...kij", ginv, dg)
                   + np.einsum("...kl,...jil->...kij", ginv, dg)
                   - np.einsum("...kl,...lij->...kij", ginv, dg))
    return Gamma


def _geodesic_rhs(chart, x, xdot):
    G = christoffel(chart, x)
    acc = -np.einsum("...kij,...i,...j->...k", G, xdot, xdot)
    return acc


def exp_map(chart, p, v, nsteps=32, return_path=False):
    """Endpoint of the geodesic from p with initial velocity v at parameter 1.

    Classical RK4 with nsteps fixed steps (bit-reproducible).  With
    return_path=True also returns the (nsteps+1, ..., d) sample array.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if chart.is_flat:
        q = p + v
        chart.require_inside(q, what="geodesic endpoint")
        if return_path:
            t = np.linspace(0.0, 1.0, nsteps + 1)
            path = p + t.reshape((nsteps + 1,) + (1,) * v.ndim) * v
            return q, path
        return q
    h = 1.0 / nsteps
    x = np.broadcast_to(p, v.shape).astype(float).copy()
    u = v.astype(float).copy()
    path = [x.copy()] if return_path else None
    for _ in range(nsteps):
        k1x, k1u = u, _geodesic_rhs(chart, x, u)
        k2x, k2u = u + 0.5 * h * k1u, _geodesic_rhs(chart, x + 0.5 * h * k1x, u + 0.5 * h * k1u)
        k3x, k3u = u + 0.5 * h * k2u, _geodesic_rhs(chart, x + 0.5 * h * k2x, u + 0.5 * h * k2u)
        k4x, k4u = u + h * k3u, _geodesic_rhs(chart, x + h * k3x, u + h * k3u)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        if path is not None:
            path.append(x.copy())
    chart.require_inside(x, what="geodesic endpoint")
    if return_path:
        return x, np.stack(path, axis=0)
    return x


def geodesic_path(chart, p, v, nsteps=32):
    """Samples x(t_i), xdot(t_i) of the geodesic; t_i = i/nsteps."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if chart.is_flat:
        t = np.linspace(0.0, 1.0, nsteps + 1).reshape((nsteps + 1,) + (1,) * v.ndim)
        xs = p + t * v
        us = np.broadcast_to(v, xs.shape).copy()
        return xs, us
    h = 1.0 / nsteps
    x = np.broadcast_to(p, v.shape).astype(float).copy()
    u = v.astype(float).copy()
    xs, us = [x.copy()], [u.copy()]
    for _ in range(nsteps):
        k1x, k1u = u, _geodesic_rhs(chart, x, u)
        k2x, k2u = u + 0.5 * h * k1u, _geodesic_rhs(chart, x + 0.5 * h * k1x, u + 0.5 * h * k1u)
        k3x, k3u = u + 0.5 * h * k2u, _geodesic_rhs(chart, x + 0.5 * h * k2x, u + 0.5 * h * k2u)
        k4x, k4u = u + h * k3u, _geodesic_rhs(chart, x + h * k3x, u + h * k3u)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + (h / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
        xs.append(x.copy())
        us.append(u.copy())
    return np.stack(xs, axis=0), np.stack(us, axis=0)


def log_map(chart, p, q, tol=1e-10, maxit=20, nsteps=32, h_jac=1e-5):
    """Initial velocity v with exp_p(v) = q, by Newton shooting from v = q - p."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if chart.is_flat:
        return q - p
    sep = np.linalg.norm(q - p, axis=-1)
    if np.any(sep > chart.convex_radius):
        raise OutsideDomain(
            f"pair separation {float(np.max(sep)):.3g} exceeds declared "
            f"convex radius {chart.convex_radius:.3g}")
    d = chart.d
    v = (q - p).astype(float)
    defect = None
    for _ in range(maxit):
        x = exp_map(chart, p, v, nsteps=nsteps)
        resid = q - x
        defect = np.max(np.linalg.norm(resid, axis=-1))
        if defect < tol:
            return v
        # finite-difference Jacobian of exp wrt v, one axis at a time
        J = np.empty(v.shape[:-1] + (d, d))
        for b in range(d):
            e = np.zeros(d)
            e[b] = h_jac
            J[..., :, b] = (exp_map(chart, p, v + e, nsteps=nsteps)
                            - exp_map(chart, p, v - e, nsteps=nsteps)) / (2 * h_jac)
        v = v + np.linalg.solve(J, resid[..., None])[..., 0]
    raise ConvergenceFailure(f"log_map: defect {defect:.3g} after {maxit} iterations")


def world_function(chart, p, q, **kw):
    """Gamma(p, q) = -g_p(v, v), v = log_map(p, q)."""
    p = np.asarray(p, dtype=float)
    v = log_map(chart, p, q, **kw)
    gp = chart.metric(np.broadcast_to(p, v.shape))
    return -np.einsum("...ij,...i,...j->...", gp, v, v)


def distortion(chart, p, q, h_jac=1e-4, conj_tol=1e-6, **kw):
    """Metric-density Jacobian determinant of exp_p at v = log_map(p, q).

    mu(p, q) = sqrt(|det g(q)| / |det g(p)|) * |det d exp_p(v)| in coordinates,
    so mu(p, p) = 1 and mu is chart-covariant (the plain coordinate determinant
    would depend on the volume distortion of the chart itself).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if chart.is_flat:
        return np.ones(np.broadcast_shapes(p.shape, q.shape)[:-1])
    v = log_map(chart, p, q, **kw)
    d = chart.d
    J = np.empty(v.shape[:-1] + (d, d))
    for b in range(d):
        e = np.zeros(d)
        e[b] = h_jac
        J[..., :, b] = (exp_map(chart, p, v + e) - exp_map(chart, p, v - e)) / (2 * h_jac)
    det = np.linalg.det(J)
    gp = np.abs(np.linalg.det(chart.metric(np.broadcast_to(p, v.shape))))
    gq = np.abs(np.linalg.det(chart.metric(q)))
    mu = np.sqrt(gq / gp) * np.abs(det)
    if np.any(np.abs(det) < conj_tol):
        raise ConjugatePoint(f"|det d exp| = {float(np.min(np.abs(det))):.3g} < {conj_tol}")
    return mu


def distortion_at_v(chart, p, v, h_jac=1e-4):
    """Distortion evaluated directly at tangent vectors v (no log_map solve).

    Same metric-density convention as distortion(); batched over v.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if chart.is_flat:
        return np.ones(v.shape[:-1])
    d = chart.d
    J = np.empty(v.shape[:-1] + (d, d))
    for b in range(d):
        e = np.zeros(d)
        e[b] = h_jac
        J[..., :, b] = (exp_map(chart, p, v + e) - exp_map(chart, p, v - e)) / (2 * h_jac)
    det = np.linalg.det(J)
    q = exp_map(chart, p, v)
    gp = np.abs(np.linalg.det(chart.metric(np.broadcast_to(p, v.shape))))
    gq = np.abs(np.linalg.det(chart.metric(q)))
    return np.sqrt(gq / gp) * np.abs(det)


def parallel_transport(chart, bundle, p, q, nsteps=32, **kw):
    """Transport matrix Pi_q^p : E_p -> E_q along the connecting geodesic.

    Solves d s/dt = -xdot^i A_i(x) s with s(0) = Id_r, RK4 on the sampled
    geodesic (the connection matrices are evaluated at half steps too, so the
    path is resampled at 2*nsteps resolution).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    v = log_map(chart, p, q, **kw)
    xs, us = geodesic_path(chart, p, v, nsteps=2 * nsteps)
    r = bundle.r
    lead = v.shape[:-1]
    S = np.broadcast_to(np.eye(r), lead + (r, r)).copy()
    A = bundle.conn(xs)  # (2n+1, ..., d, r, r)
    M = -np.einsum("t...i,t...iab->t...ab", us, A)  # -xdot^i A_i at samples
    h = 1.0 / nsteps
    for k in range(nsteps):
        M0, Mh, M1 = M[2 * k], M[2 * k + 1], M[2 * k + 2]
        k1 = M0 @ S
        k2 = Mh @ (S + 0.5 * h * k1)
        k3 = Mh @ (S + 0.5 * h * k2)
        k4 = M1 @ (S + h * k3)
        S = S + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return S


def box_gamma(chart, p, q, h=None, **kw):
    """Box Gamma_p at q: -g^{ij}(d_i d_j Gamma - Gamma^k_ij d_k Gamma).

    Sign fixed so the flat value is 2 d (the convention under which constant
    coefficients (-m^2)^k solve the flat Klein-Gordon transport recursion).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = chart.d
    if chart.is_flat:
        return np.full(np.broadcast_shapes(p.shape, q.shape)[:-1], 2.0 * d)
    if h is None:
        h = max(chart.h_geo, 1e-3)
    chart.require_inside(q, margin=2 * h, what="box_gamma stencil")

    def f(x):
        return world_function(chart, p, x, **kw)

    grad = np.empty(q.shape[:-1] + (d,))
    hess = np.empty(q.shape[:-1] + (d, d))
    f0 = f(q)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        fp, fm = f(q + ei), f(q - ei)
        grad[..., i] = (fp - fm) / (2 * h)
        hess[..., i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            fpp, fpm = f(q + ei + ej), f(q + ei - ej)
            fmp, fmm = f(q - ei + ej), f(q - ei - ej)
            hess[..., i, j] = hess[..., j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    ginv = np.linalg.inv(chart.metric(q))
    G = christoffel(chart, q)
    cov = hess - np.einsum("...kij,...k->...ij", G, grad)
    return -np.einsum("...ij,...ij->...", ginv, cov)


def scalar_box(chart, f, x, h=1e-4):
    """Box on functions at x, same sign convention: flat Box(t^2) = 2."""
    x = np.asarray(x, dtype=float)
    d = chart.d
    grad = np.empty(x.shape[:-1] + (d,))
    hess = np.empty(x.shape[:-1] + (d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        fp, fm = f(x + ei), f(x - ei)
        grad[..., i] = (fp - fm) / (2 * h)
        hess[..., i, i] = (fp - 2 * f0 + fm) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            fpp, fpm = f(x + ei + ej), f(x + ei - ej)
            fmp, fmm = f(x - ei + ej), f(x - ei - ej)
            hess[..., i, j] = hess[..., j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    ginv = np.linalg.inv(chart.metric(x))
    G = christoffel(chart, x)
    cov = hess - np.einsum("...kij,...k->...ij", G, grad)
    return -np.einsum("...ij,...ij->...", ginv, cov)


def apply_P(chart, bundle, s, x, h=1e-4):
    """(Box^nabla + B) s at x for a raw callable section s(x) -> (..., r).

    Box^nabla s = -g^{ij} (nabla_i nabla_j - Gamma^k_ij nabla_k) s with
    nabla_i = d_i + A_i.  All derivatives by central differences of step h.
    """
    x = np.asarray(x, dtype=float)
    d, r = chart.d, bundle.r

    def nabla(y):
        # (..., d, r): covariant first derivatives at y
        out = np.empty(y.shape[:-1] + (d, r))
        A = bundle.conn(y)
        s0 = s(y)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            ds = (s(y + e) - s(y - e)) / (2 * h)
            out[..., i, :] = ds + np.einsum("...ab,...b->...a", A[..., i, :, :], s0)
        return out

    A = bundle.conn(x)
    G = christoffel(chart, x)
    ginv = np.linalg.inv(chart.metric(x))
    n0 = nabla(x)
    ddn = np.empty(x.shape[:-1] + (d, d, r))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        dn = (nabla(x + e) - nabla(x - e)) / (2 * h)
        ddn[..., i, :, :] = dn + np.einsum("...ab,...jb->...ja", A[..., i, :, :], n0)
    # subtract Levi-Civita action on the lower index j of nabla_j s
    cov2 = ddn - np.einsum("...kij,...ka->...ija", G, n0)
    box = -np.einsum("...ij,...ija->...a", ginv, cov2)
    return box + np.einsum("...ab,...b->...a", bundle.endo(x), s(x))


def p_connection(chart, bundle, x, h=1e-3, rng=None, ntrial=3):
    """Connection matrices A_i(x) plus the compatibility residual.

    The defining relation ties nabla to P on products with functions:
        nabla_{grad f} s = (f P s - P(f s) + Box f . s) / 2.
    We evaluate both sides for the coordinate functions f = x^j and a few
    random quadratic sections s and report the largest defect; it must shrink
    at second order in h.  Returns (A, residual).
    """
    x = np.asarray(x, dtype=float)
    d, r = chart.d, bundle.r
    A = bundle.conn(x)
    rng = np.random.default_rng(0 if rng is None else rng)
    # random smooth sections: quadratic polynomials in (y - x)
    resid = 0.0
    ginv = np.linalg.inv(chart.metric(x))
    for _ in range(ntrial):
        c0 = rng.normal(size=r)
        c1 = rng.normal(size=(d, r))
        c2 = rng.normal(size=(d, d, r))
        c2 = 0.5 * (c2 + np.swapaxes(c2, 0, 1))

        def s(y, c0=c0, c1=c1, c2=c2):
            u = y - x
            return (c0 + np.einsum("ia,...i->...a", c1, u)
                    + np.einsum("ija,...i,...j->...a", c2, u, u))

        Ps_x = apply_P(chart, bundle, s, x, h=h)
        for j in range(d):
            def f(y, j=j):
                return y[..., j]

            def fs(y, j=j):
                return f(y)[..., None] * s(y)

            # lhs: (grad f)^i nabla_i s = g^{ji} (d_i s + A_i s)
            ds = np.empty(x.shape[:-1] + (d, r))
            for i in range(d):
                e = np.zeros(d)
                e[i] = h
                ds[..., i, :] = (s(x + e) - s(x - e)) / (2 * h)
            nab = ds + np.einsum("...iab,...b->...ia", A, s(x))
            lhs = np.einsum("...i,...ia->...a", ginv[..., j, :], nab)
            boxf = scalar_box(chart, f, x, h=h)
            rhs = 0.5 * (f(x)[..., None] * Ps_x
                         - apply_P(chart, bundle, fs, x, h=h)
                         + boxf[..., None] * s(x))
            resid = max(resid, float(np.max(np.abs(lhs - rhs))))
    return A, resid


# ---------------------------------------------------------------------------

@dataclasses.dataclass
class BiPointData:
    """Geodesic two-point data assembled once and reused."""

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    gamma_pq: float
    mu: float
    pi: np.ndarray
    box_gamma: float
    samples: np.ndarray  # geodesic points phi_pq(t_i)


def bipoint(chart, bundle, p, q, nsteps=32, **kw):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    v = log_map(chart, p, q, **kw)
    gp = chart.metric(p)
    gamma_pq = -np.einsum("...ij,...i,...j->...", gp, v, v)
    mu = distortion(chart, p, q, **kw)
    pi = parallel_transport(chart, bundle, p, q, nsteps=nsteps, **kw)
    bg = box_gamma(chart, p, q, **kw)
    xs, _ = geodesic_path(chart, p, v, nsteps=nsteps)
    return BiPointData(p=p, q=q, v=v, gamma_pq=gamma_pq, mu=mu, pi=pi,
                       box_gamma=bg, samples=xs)
