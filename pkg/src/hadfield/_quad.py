"""Cone-adapted quadrature for homogeneous distributions on Minkowski space.

The families (gamma +- i0)^sigma with Re sigma > -1 are locally integrable
and split exactly over the causal regions:

    (gamma +- i0)^sigma[chi] = int_{gamma>0} gamma^sigma chi
                               + e^{+- i pi sigma} int_{gamma<0} (-gamma)^sigma chi.

Each region is parametrized so the |gamma|^sigma endpoint behavior becomes a
Gauss-Jacobi weight, which makes the quadrature spectrally accurate without
any regulator:

  future cone   x = (x0, x0 lam w), lam in [0,1), w in S^(d-2):
                gamma = x0^2 (1-lam)(1+lam), dx = x0^(d-1) lam^(d-2) dx0 dlam dw
  past cone     mirror x0 -> -x0
  spacelike     x = (rho nu, rho w), nu in (-1,1):
                -gamma = rho^2 (1-nu)(1+nu),  dx = rho^(d-1) drho dnu dw

The x0 (resp. rho) endpoint at 0 carries x0^(2 sigma + d - 1), also a Jacobi
weight.  ConeData keeps the sampled test function together with log(gamma)
at the nodes, so exponent shifts sigma -> sigma + s and the s-derivative at
s = 0 (the log family) reuse a single sampling pass.  Complex sigma keeps
the real part in the weights and folds the oscillatory remainder into the
integrand.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def _jacobi(n, a, b):
    x, w = roots_jacobi(n, a, b)
    return x, w


@lru_cache(maxsize=None)
def _legendre(n):
    return roots_legendre(n)


@lru_cache(maxsize=None)
def sphere_rule(m, n=24):
    """Nodes and weights on the unit sphere S^m in R^(m+1).

    m = 0: two points; m = 1: trapezoid (spectrally exact for periodic
    integrands); m >= 2: Gauss-Legendre/Jacobi in cos(polar) times the
    S^(m-1) recursion, weight (1-u^2)^((m-2)/2).  Weights sum to vol(S^m).
    """
    if m == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if m == 1:
        th = 2 * np.pi * np.arange(n) / n
        nodes = np.stack([np.cos(th), np.sin(th)], axis=1)
        return nodes, np.full(n, 2 * np.pi / n)
    u, wu = _jacobi(max(n // 2, 8), (m - 2) / 2.0, (m - 2) / 2.0)
    sub_nodes, sub_w = sphere_rule(m - 1, n)
    s = np.sqrt(1.0 - u * u)
    nodes = np.concatenate(
        [np.repeat(u, len(sub_w))[:, None],
         (s[:, None, None] * sub_nodes[None, :, :]).reshape(-1, m)], axis=1)
    w = (wu[:, None] * sub_w[None, :]).ravel()
    return nodes, w


def _support_radii(chi, d):
    """Time range and max spatial norm over the support of chi.

    Radial sections expose their exact spatial radius; box-supported ones
    fall back to the farthest corner of the bounding box.
    """
    sb = np.asarray(chi.support_box, dtype=float)
    t_lo, t_hi = sb[0, 0], sb[0, 1]
    if d == 1:
        return t_lo, t_hi, 0.0
    rad = getattr(chi, "space_radius", None)
    if rad is not None:
        return t_lo, t_hi, float(rad)
    corners = np.stack(np.meshgrid(*[sb[i] for i in range(1, d)],
                                   indexing="ij"), axis=-1).reshape(-1, d - 1)
    rmax = float(np.max(np.linalg.norm(corners, axis=1)))
    return t_lo, t_hi, rmax


def _sphere_or_axis(chi, d, n_sphere):
    """Angular rule for smearing chi: rotation-invariant sections need a
    single node carrying the full sphere measure."""
    if hasattr(chi, "space_radius"):
        om = np.zeros((1, d - 1))
        om[0, 0] = 1.0
        wo = np.array([2.0 * np.pi ** ((d - 1) / 2.0)
                       / math.gamma((d - 1) / 2.0)])
        return om, wo
    return sphere_rule(d - 2, n_sphere)


def _radial_nodes(n, beta, T):
    """Nodes/weights for int_0^T x^beta h(x) dx with possibly complex beta."""
    br = float(np.real(beta))
    u, w = _jacobi(n, 0.0, br)
    x = T * (u + 1.0) / 2.0
    wts = w * (T / 2.0) ** (br + 1.0)
    bi = complex(beta).imag
    if bi != 0.0:
        wts = wts * np.exp(1j * bi * np.log(x))
    return x, wts


def _lam_nodes(n, sigma):
    """Nodes/weights for int_0^1 (1-lam)^sigma f(lam) dlam."""
    sr = float(np.real(sigma))
    u, w = _jacobi(n, sr, 0.0)
    lam = (u + 1.0) / 2.0
    wts = w * 2.0 ** (-sr - 1.0)
    si = complex(sigma).imag
    if si != 0.0:
        wts = wts * np.exp(1j * si * np.log(1.0 - lam))
    return lam, wts


def _nu_nodes(n, sigma):
    """Nodes/weights for int_{-1}^1 (1-nu)^sigma (1+nu)^sigma f dnu."""
    sr = float(np.real(sigma))
    u, w = _jacobi(n, sr, sr)
    si = complex(sigma).imag
    if si != 0.0:
        wts = w * np.exp(1j * si * (np.log(1.0 - u) + np.log(1.0 + u)))
        return u, wts
    return u, w


_CLUSTER_OFFSETS = (0.0, 0.0625, -0.0625, 0.125, -0.125, 0.25, -0.25,
                    0.5, -0.5, 1.0, -1.0, 2.0, -2.0)


def _cluster_seeds(features):
    """Absolute breakpoint seeds: a geometric cluster around each feature."""
    return sorted(p + s * w for p, w in features for s in _CLUSTER_OFFSETS)


def _seeded_breaks(lo, hi, seeds, wcap):
    """Panel breakpoints on [lo, hi] from fixed seeds plus a width cap.

    Seeds outside the interval are clamped onto its ends rather than
    dropped, so when the interval itself depends on an outer quadrature
    variable the mesh (and with it the inner quadrature error) varies
    continuously instead of jumping as seeds cross the moving endpoint.
    """
    tol = 1e-12 * (abs(hi - lo) + 1.0)
    pts = [float(lo)]
    for q in seeds:
        qq = min(max(q, lo), hi)
        if qq - pts[-1] > tol:
            pts.append(qq)
    if hi - pts[-1] > tol:
        pts.append(float(hi))
    else:
        pts[-1] = float(hi)
    # The first and last panels absorb endpoint power weights into
    # Gauss-Jacobi rules; the panels next to them see those branch points
    # at a distance equal to the end panel's width.  A seed falling just
    # inside an endpoint would shrink that distance to near zero and
    # destroy the neighbour's convergence, so push the separating break
    # inward until the end panel keeps a healthy share of its neighbour.
    if len(pts) >= 3:
        if pts[1] - pts[0] < 0.3 * (pts[2] - pts[1]):
            pts[1] = pts[0] + 0.3 * (pts[2] - pts[1])
        if pts[-1] - pts[-2] < 0.3 * (pts[-2] - pts[-3]):
            pts[-2] = pts[-1] - 0.3 * (pts[-2] - pts[-3])
    out = [pts[0]]
    for b in pts[1:]:
        gap = b - out[-1]
        if gap > wcap:
            m = int(np.ceil(gap / wcap))
            base = out[-1]
            out.extend(base + gap * j / m for j in range(1, m))
        out.append(b)
    return out


def _cluster_breaks(lo, hi, features, wcap):
    """Sorted panel breakpoints on [lo, hi]: a geometric cluster around each
    feature layer plus a width cap on the remaining gaps."""
    return _seeded_breaks(lo, hi, _cluster_seeds(features), wcap)


def _radial_tl_row(chi, sig, d, n, future):
    """(weights, samples, log gamma) over one timelike cone for radial chi.

    Iterated rule in (tau = |t|, s = |x_vec|^2): the inner s-panels absorb
    the s^((d-3)/2) axis weight and the (tau^2 - s)^sigma cone weight into
    Jacobi rules, the outer tau-panels absorb the tau^(2 sigma + d - 1)
    envelope of the inner integral on the vertex panel.  Panels cluster at
    the section's bump-edge layers, where derivatives pile up.
    """
    t_lo, t_hi, _ = _support_radii(chi, d)
    T = t_hi if future else -t_lo
    if T <= 0.0:
        return None
    nn = d - 1
    sr = float(np.real(sig))
    si = complex(sig).imag
    np_ = max(10, n // 8)
    xg, wg = _legendre(np_)
    sgn = 1.0 if future else -1.0
    tfe = [(sgn * p, w) for p, w in getattr(chi, "sharp_t", ())]
    rfe = list(getattr(chi, "sharp_r", ()))
    sfe = [(p * p, max(2.0 * p * w, 1e-3)) for p, w in rfe]
    tb = _cluster_breaks(0.0, T, tfe + rfe, T / 6.0)
    beta = 2.0 * sr + nn
    x0, w0 = _jacobi(np_, 0.0, beta)
    b1 = tb[1]
    tau_first = b1 * (x0 + 1.0) / 2.0
    wt_first = w0 * (b1 / 2.0) ** (beta + 1.0) / tau_first ** beta
    taus = [tau_first]
    wts = [wt_first]
    for lo, hi in zip(tb[1:-1], tb[2:]):
        taus.append((hi + lo) / 2.0 + (hi - lo) / 2.0 * xg)
        wts.append(wg * (hi - lo) / 2.0)
    taus = np.concatenate(taus)
    wts = np.concatenate(wts)
    xj0, wj0 = _jacobi(np_, 0.0, (nn - 2) / 2.0)
    xj1, wj1 = _jacobi(np_, sr, 0.0)
    sseeds = _cluster_seeds(sfe)
    Wl, sl, gl, tl = [], [], [], []
    for tau, wt in zip(taus, wts):
        su = tau * tau
        sbk = _seeded_breaks(0.0, su, sseeds, su / 4.0)
        for i, (lo, hi) in enumerate(zip(sbk[:-1], sbk[1:])):
            h2 = (hi - lo) / 2.0
            if i == 0:
                s = hi * (xj0 + 1.0) / 2.0
                w = wj0 * (hi / 2.0) ** ((nn - 2) / 2.0 + 1.0) \
                    * (su - s) ** sr
            elif i == len(sbk) - 2:
                s = (hi + lo) / 2.0 + h2 * xj1
                w = wj1 * h2 ** (sr + 1.0) * s ** ((nn - 2) / 2.0)
            else:
                s = (hi + lo) / 2.0 + h2 * xg
                w = wg * h2 * s ** ((nn - 2) / 2.0) * (su - s) ** sr
            Wl.append(w * wt)
            sl.append(s)
            gl.append(np.log(su - s))
            tl.append(np.full(len(s), sgn * tau))
    W = np.concatenate(Wl) * np.pi ** (nn / 2.0) / math.gamma(nn / 2.0)
    s = np.concatenate(sl)
    G = np.concatenate(gl)
    t = np.concatenate(tl)
    if si != 0.0:
        W = W * np.exp(1j * si * G)
    pts = np.zeros((len(s), d))
    pts[:, 0] = t
    pts[:, 1] = np.sqrt(s)
    P = np.asarray(chi.scalar_eval(pts))
    return W, P, G


def _radial_sl_row(chi, sig, d, n):
    """(weights, samples, log(-gamma)) over the spacelike region, radial chi.

    Iterated rule in (s = |x_vec|^2, t): inner t-panels absorb the
    (s - t^2)^sigma weight at uncut endpoints |t| = sqrt(s); the s = 0
    panel absorbs the combined s^((d-3)/2 + sigma + 1/2) envelope from the
    collapsing t-range when the time support straddles zero.
    """
    t_lo, t_hi, rmax = _support_radii(chi, d)
    if rmax <= 0.0:
        return None
    nn = d - 1
    sr = float(np.real(sig))
    si = complex(sig).imag
    np_ = max(10, n // 8)
    xg, wg = _legendre(np_)
    tfe = list(getattr(chi, "sharp_t", ()))
    rfe = getattr(chi, "sharp_r", ())
    smax = rmax * rmax
    sfe = ([(p * p, max(2.0 * p * w, 1e-3)) for p, w in rfe]
           + [(p * p, max(2.0 * abs(p) * w, 1e-3)) for p, w in tfe])
    sbk = _cluster_breaks(0.0, smax, sfe, smax / 6.0)
    straddle = t_lo < 0.0 < t_hi
    beta = (nn - 2) / 2.0 + sr + 0.5
    xj0, wj0 = _jacobi(np_, 0.0, beta)
    xjl, wjl = _jacobi(np_, 0.0, sr)
    xjr, wjr = _jacobi(np_, sr, 0.0)
    svals, swts, senv = [], [], []
    for i, (lo, hi) in enumerate(zip(sbk[:-1], sbk[1:])):
        h2 = (hi - lo) / 2.0
        if i == 0 and straddle:
            s = hi * (xj0 + 1.0) / 2.0
            w = wj0 * (hi / 2.0) ** (beta + 1.0)
            env = s ** (sr + 0.5)
        else:
            s = (hi + lo) / 2.0 + h2 * xg
            w = wg * h2 * s ** ((nn - 2) / 2.0)
            env = np.ones_like(s)
        svals.append(s)
        swts.append(w)
        senv.append(env)
    svals = np.concatenate(svals)
    swts = np.concatenate(swts)
    senv = np.concatenate(senv)
    tseeds = _cluster_seeds(tfe)
    Wl, tlst, slst, gl = [], [], [], []
    for s, ws, env in zip(svals, swts, senv):
        rt = math.sqrt(s)
        lo_t, hi_t = max(t_lo, -rt), min(t_hi, rt)
        if hi_t <= lo_t:
            continue
        tbk = _seeded_breaks(lo_t, hi_t, tseeds, (hi_t - lo_t) / 4.0)
        for i, (lo, hi) in enumerate(zip(tbk[:-1], tbk[1:])):
            h2 = (hi - lo) / 2.0
            left_sing = i == 0 and lo_t <= -rt + 1e-14 * (1.0 + rt)
            right_sing = (i == len(tbk) - 2
                          and hi_t >= rt - 1e-14 * (1.0 + rt))
            if left_sing:
                t = lo + (hi - lo) * (xjl + 1.0) / 2.0
                w = wjl * h2 ** (sr + 1.0) * (rt - t) ** sr
            elif right_sing:
                t = (hi + lo) / 2.0 + h2 * xjr
                w = wjr * h2 ** (sr + 1.0) * (rt + t) ** sr
            else:
                t = (hi + lo) / 2.0 + h2 * xg
                w = wg * h2 * (s - t * t) ** sr
            Wl.append(w * ws / env)
            tlst.append(t)
            slst.append(np.full(len(t), s))
            gl.append(np.log(s - t * t))
    if not Wl:
        return None
    W = np.concatenate(Wl) * np.pi ** (nn / 2.0) / math.gamma(nn / 2.0)
    t = np.concatenate(tlst)
    s = np.concatenate(slst)
    G = np.concatenate(gl)
    if si != 0.0:
        W = W * np.exp(1j * si * G)
    pts = np.zeros((len(t), d))
    pts[:, 0] = t
    pts[:, 1] = np.sqrt(s)
    P = np.asarray(chi.scalar_eval(pts))
    return W, P, G


class ConeData:
    """chi sampled on sigma-adapted rules over the three causal regions.

    Provides the region integrals at exponent sigma + s for small shifts s
    and their exact s-derivative at 0, all from one sampling pass.  Radial
    sections get iterated feature-panel rules; separable ones the global
    tensor rules described in the module docstring.
    """

    def __init__(self, chi, sigma, d, n=48, n_sphere=24, spacelike=True):
        self.sigma = complex(sigma)
        self.d = d
        t_lo, t_hi, rmax = _support_radii(chi, d)
        self._tl = []   # (Wc, P, G) per timelike cone
        self._sl = None
        sig = self.sigma
        if d >= 3 and hasattr(chi, "space_radius"):
            for future in (True, False):
                row = _radial_tl_row(chi, sig, d, n, future)
                if row is not None:
                    self._tl.append(row)
            if spacelike:
                self._sl = _radial_sl_row(chi, sig, d, n)
            return
        if d == 1:
            for future in (True, False):
                T = t_hi if future else -t_lo
                if T <= 0.0:
                    continue
                x, wts = _radial_nodes(n, 2.0 * sig, T)
                pts = (x if future else -x)[:, None]
                vals = np.asarray(chi.scalar_eval(pts))
                self._tl.append((wts, vals, 2.0 * np.log(x)))
            return
        om, wo = _sphere_or_axis(chi, d, n_sphere)
        lam, wl = _lam_nodes(n, sig)
        ang = wl * (1.0 + lam) ** sig * lam ** (d - 2)
        glam = np.log(1.0 - lam) + np.log(1.0 + lam)
        for future in (True, False):
            T = t_hi if future else -t_lo
            if T <= 0.0:
                continue
            x0, w0 = _radial_nodes(n, 2.0 * sig + d - 1.0, T)
            sgn = 1.0 if future else -1.0
            t = sgn * x0[:, None, None]
            sp = (x0[:, None, None, None] * lam[None, :, None, None]
                  * om[None, None, :, :])
            full = (len(x0), len(lam), len(wo))
            pts = np.concatenate(
                [np.broadcast_to(t[..., None], full + (1,)),
                 np.broadcast_to(sp, full + (d - 1,))], axis=-1)
            vals = np.asarray(chi.scalar_eval(pts))
            P = vals @ wo
            Wc = np.multiply.outer(w0, ang)
            G = 2.0 * np.log(x0)[:, None] + glam[None, :]
            self._tl.append((Wc, P, G))
        if spacelike and rmax > 0.0:
            rho, wr = _radial_nodes(n, 2.0 * sig + d - 1.0, rmax)
            nu, wn = _nu_nodes(n, sig)
            t = rho[:, None, None] * nu[None, :, None]
            sp = rho[:, None, None, None] * om[None, None, :, :]
            full = (len(rho), len(nu), len(wo))
            pts = np.concatenate(
                [np.broadcast_to(t[..., None], full + (1,)),
                 np.broadcast_to(sp, full + (d - 1,))], axis=-1)
            vals = np.asarray(chi.scalar_eval(pts))
            P = vals @ wo
            Wc = np.multiply.outer(wr, wn)
            G = (2.0 * np.log(rho)[:, None]
                 + (np.log(1.0 - nu) + np.log(1.0 + nu))[None, :])
            self._sl = (Wc, P, G)

    @staticmethod
    def _sum(parts, s, dlog):
        tot = 0.0 + 0.0j
        for Wc, P, G in parts:
            base = Wc * P
            if s != 0.0:
                base = base * np.exp(s * G)
            if dlog:
                base = base * G
            tot += complex(np.sum(base))
        return tot

    def timelike(self, s=0.0):
        return self._sum(self._tl, s, False)

    def timelike_dlog(self, s=0.0):
        return self._sum(self._tl, s, True)

    def spacelike(self, s=0.0):
        if self._sl is None:
            return 0.0 + 0.0j
        return self._sum([self._sl], s, False)

    def spacelike_dlog(self, s=0.0):
        if self._sl is None:
            return 0.0 + 0.0j
        return self._sum([self._sl], s, True)

    def split(self, sign, s=0.0):
        """(gamma + sign i0)^(sigma+s)[chi] from the cached sampling."""
        ph = np.exp(sign * 1j * np.pi * (self.sigma + s))
        return self.timelike(s) + ph * self.spacelike(s)

    def split_sderiv(self, sign, s=0.0):
        """d/ds of the above, exact in the sampled representation."""
        ph = np.exp(sign * 1j * np.pi * (self.sigma + s))
        return (self.timelike_dlog(s)
                + ph * (sign * 1j * np.pi * self.spacelike(s)
                        + self.spacelike_dlog(s)))


def cone_split(chi, sigma, sign, d, n=48, n_sphere=24):
    """(gamma + sign i0)^sigma [chi] for Re sigma > -1, exact split."""
    if np.real(sigma) <= -1.0:
        raise ValueError(f"cone_split needs Re sigma > -1, got {sigma}")
    return ConeData(chi, sigma, d, n, n_sphere).split(sign)


def cone_split_sderiv(chi, sigma, sign, d, order=1, n=48, n_sphere=24):
    """d/ds at s=0 of (gamma + sign i0)^(sigma+s)[chi]."""
    if np.real(sigma) <= -1.0:
        raise ValueError(f"cone_split_sderiv needs Re sigma > -1, got {sigma}")
    cd = ConeData(chi, sigma, d, n, n_sphere)
    if order == 0:
        return cd.split(sign)
    if order != 1:
        raise ValueError("only first s-derivatives are provided")
    return cd.split_sderiv(sign)


def riesz_cone(chi, sigma, future, d, n=48, n_sphere=24):
    """int over the open cone I_+ (or I_-) of gamma^sigma chi(x) dx."""
    sig = complex(sigma)
    t_lo, t_hi, _ = _support_radii(chi, d)
    T = t_hi if future else -t_lo
    if T <= 0.0:
        return 0.0 + 0.0j
    if d >= 3 and hasattr(chi, "space_radius"):
        row = _radial_tl_row(chi, sig, d, n, future)
        if row is None:
            return 0.0 + 0.0j
        W, P, _ = row
        return complex(np.sum(W * P))
    if d == 1:
        x, wts = _radial_nodes(n, 2.0 * sig, T)
        pts = (x if future else -x)[:, None]
        vals = np.asarray(chi.scalar_eval(pts))
        return complex(wts @ vals)
    om, wo = _sphere_or_axis(chi, d, n_sphere)
    lam, wl = _lam_nodes(n, sig)
    ang = wl * (1.0 + lam) ** sig * lam ** (d - 2)
    x0, w0 = _radial_nodes(n, 2.0 * sig + d - 1.0, T)
    sgn = 1.0 if future else -1.0
    t = sgn * x0[:, None, None]
    sp = (x0[:, None, None, None] * lam[None, :, None, None]
          * om[None, None, :, :])
    full = (len(x0), len(lam), len(wo))
    pts = np.concatenate([np.broadcast_to(t[..., None], full + (1,)),
                          np.broadcast_to(sp, full + (d - 1,))], axis=-1)
    vals = np.asarray(chi.scalar_eval(pts))
    return complex(np.einsum("a,alo,l,o->", w0, vals, ang, wo))


def cone_sheet_integral(chi, sign, d, n=64, n_sphere=24):
    """(1/2) int_0^inf int_{S^(d-2)} chi(sign r, r w) r^(d-3) dr dw.

    The invariant measure on the cone sheet C_pm; also the s = 0 value of
    the pushforward of chi along gamma.  Requires d >= 2.
    """
    if d < 2:
        raise ValueError("cone sheet measure needs d >= 2")
    t_lo, t_hi, rmax = _support_radii(chi, d)
    top = min(rmax, t_hi if sign > 0 else -t_lo)
    if top <= 0.0:
        return 0.0 + 0.0j
    feats = ([(sign * p, w) for p, w in getattr(chi, "sharp_t", ())]
             + list(getattr(chi, "sharp_r", ())))
    bks = _cluster_breaks(0.0, top, feats, top / 6.0)
    x, w = _legendre(n // 4 if len(bks) > 2 else n)
    mids = (np.array(bks[1:]) + np.array(bks[:-1])) / 2.0
    half = (np.array(bks[1:]) - np.array(bks[:-1])) / 2.0
    r = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    om, wo = _sphere_or_axis(chi, d, n_sphere)
    t = sign * r[:, None]
    sp = r[:, None, None] * om[None, :, :]
    full = (len(r), len(wo))
    pts = np.concatenate([np.broadcast_to(t[..., None], full + (1,)),
                          np.broadcast_to(sp, full + (d - 1,))], axis=-1)
    vals = np.asarray(chi.scalar_eval(pts))
    rad = r ** (d - 3) if d != 2 else 1.0 / r
    return 0.5 * complex(np.einsum("a,a,ao,o->", wr, rad, vals, wo))
