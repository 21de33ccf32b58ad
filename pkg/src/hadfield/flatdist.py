"""Lorentz-invariant distribution families on flat spacetime.

Implements exact evaluation of the Riesz distributions R^a_pm, the boundary
values (gamma +- i0)^a, the normalized families L^a_pm and Ltilde^a_pm, the
log family, the invariant light-cone measure, the fiber pushforward along
gamma, the Wightman two-point distribution of the massless field (closed form
and Fourier modes), and the four Green distributions assembled from them.

Conventions, fixed throughout the package:
    gamma(x) = x0^2 - |x_vec|^2       (signature -,+,...,+)
    Box      = d_t^2 - Laplace        (so Box gamma = 2d on R^d)
    R^a_pm   = 2 C(a,d) gamma^((a-d)/2) on J_pm,   C as in coeff()
    L^a_pm   = C(a,d) (gamma +- i0)^((a-d)/2)
    Ltilde^a_pm = Ctilde(a,d) (gamma +- i0)^((a-d)/2)  away from its
               special points; at even coincidence it picks up log terms.

The i0 boundary values are evaluated by an exact causal split: for
Re s > -1,

    (gamma +- i0)^s[chi] = int_{gamma>0} gamma^s chi
                           + e^{+- i pi s} int_{gamma<0} (-gamma)^s chi,

with cone-adapted Gauss-Jacobi rules (see _quad).  Lower orders are reached
by the Box recursion integrated by parts onto exact derivatives of the test
section.  A tube regulator gamma - eps^2 - 2 i eps x0 is used only for the
Wightman kernel, where the smeared value is smooth in eps up to eps = 0 and
polynomial Richardson extrapolation applies; for the symmetric i0 families
that regulator has the wrong (non-invariant) limit on the spacelike wedge,
so it is never used for them.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np
from scipy.special import gamma as _Gamma
from scipy.special import roots_legendre

from . import testfn
from ._quad import (cone_sheet_integral, cone_split, cone_split_sderiv,
                    riesz_cone, sphere_rule, _support_radii)


class PoleOfFamily(ValueError):
    """The requested order sits on a pole of the distribution family."""


class InsufficientDerivativeOrder(ValueError):
    """The test section does not carry enough exact derivatives."""


class ExtrapolationNotConverged(RuntimeError):
    """The regulator ladder did not stabilize within its error bar."""


class ModesDisagree(RuntimeError):
    """Independent evaluation modes differ beyond combined error bars."""


class SupportOutsideDomain(ValueError):
    """Test function support violates the operation's domain condition."""


class EvalResult(NamedTuple):
    value: complex
    err: float


FAMILIES = ("riesz", "gamma_i0", "L", "Ltilde", "log_gamma_i0")


@dataclasses.dataclass(frozen=True)
class FamilySpec:
    family: str
    alpha: complex
    sign: int
    d: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.sign not in (+1, -1):
            raise ValueError("branch must be +1 or -1")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")


@dataclasses.dataclass(frozen=True)
class Regulator:
    """Epsilon ladder and quadrature grid parameters.

    The geometric ladder eps0 / ratio^j, j = 0..rungs-1, is consumed by the
    Wightman closed-form evaluation; n and n_sphere size the cone-adapted
    rules used everywhere.
    """

    eps0: float = 0.05
    ratio: float = 2.0
    rungs: int = 7
    n: int = 96
    n_sphere: int = 32
    panel_n: int = 10
    panel_split: int = 12

    @property
    def ladder(self):
        return tuple(self.eps0 / self.ratio ** j for j in range(self.rungs))


DEFAULT_REG = Regulator()


def _rg(z):
    """1/Gamma with exact zeros at the poles."""
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0 and z.real == round(z.real):
        return 0.0 + 0.0j
    return 1.0 / complex(_Gamma(z))


def _is_int(z, tol=1e-9):
    z = complex(z)
    return abs(z.imag) < tol and abs(z.real - round(z.real)) < tol


def coeff(family, alpha, d, sign=+1):
    """Normalization constants of the families.

    riesz / L:  C(a,d)      = 2^-a pi^((2-d)/2) / (Gamma(a/2) Gamma((a-d)/2+1))
    Ltilde:     Ctilde(a,d) = (si)^(d-a-1) Gamma((d-a)/2) / (2^a pi^(d/2) Gamma(a/2))
    with s the branch sign; zeros of 1/Gamma are returned as exact 0.
    """
    a = complex(alpha)
    if family in ("riesz", "L"):
        return (2.0 ** (-a) * np.pi ** ((2 - d) / 2.0)
                * _rg(a / 2.0) * _rg((a - d) / 2.0 + 1.0))
    if family == "Ltilde":
        if _is_int(a) and a.real >= d and (round(a.real) - d) % 2 == 0:
            raise PoleOfFamily(f"Ltilde pole at alpha={alpha}, d={d}")
        z = (d - a) / 2.0
        phase = np.exp(sign * 1j * np.pi * (d - a - 1.0) / 2.0)
        return (phase * complex(_Gamma(z)) * 2.0 ** (-a)
                * np.pi ** (-d / 2.0) * _rg(a / 2.0))
    if family in ("gamma_i0", "log_gamma_i0"):
        return 1.0 + 0.0j
    raise ValueError(f"unknown family {family!r}")


def _require_dmax(chi, need, what):
    if getattr(chi, "dmax", np.inf) < need:
        raise InsufficientDerivativeOrder(
            f"{what} needs {need} derivative orders, section has {chi.dmax}")


def _gamma_i0_poles(d):
    """Pole lattice -d/2 - n of the plain (gamma +- i0)^a family."""
    def is_pole(a):
        if not _is_int(2 * complex(a)):
            return False
        x = complex(a).real
        return x <= -d / 2.0 + 1e-9 and abs((x + d / 2.0) - round(x + d / 2.0)) < 1e-9
    return is_pole


def _gamma_pow_recursion(chi, expnt, sign, d, n, n_sphere, min_k=0):
    """(gamma + sign i0)^expnt [chi] through the Box recursion.

    Each recursion step divides by 4 (a+j)(a+j+(d-2)/2) and transfers one
    Box onto the section.  At negative integer exponents -m (away from the
    pole lattice) one denominator factor vanishes; the limit replaces the
    power at the top of the ladder by its s-derivative (the log family) and
    drops the vanishing factor.  Each Box transfer amplifies the
    high-derivative content of the section, so resolutions should grow with
    depth; family_eval only descends as far as integrability requires.
    """
    a = complex(expnt)
    if _gamma_i0_poles(d)(a):
        raise PoleOfFamily(f"(gamma i0)^a pole at a={expnt}, d={d}")
    if a.real > -1.0 and min_k == 0:
        return cone_split(chi, a, sign, d, n, n_sphere)
    if _is_int(a) and a.real <= -1.0:
        m = int(-round(a.real))
        _require_dmax(chi, 2 * m, f"(gamma i0)^-{m}")
        box = testfn.wave_power(chi, m)
        denom = 4.0 ** m * ((d - 2) / 2.0)
        for j in range(1, m):
            denom *= (j - m) * (j - m + (d - 2) / 2.0)
        val = cone_split_sderiv(box, 0.0, sign, d, order=1,
                                n=n, n_sphere=n_sphere)
        return val / denom
    k = max(min_k, _min_depth(a))
    _require_dmax(chi, 2 * k, f"(gamma i0)^{expnt}")
    denom = 1.0 + 0.0j
    for j in range(1, k + 1):
        denom *= 4.0 * (a + j) * (a + j + (d - 2) / 2.0)
    if abs(denom) < 1e-12:
        raise PoleOfFamily(f"degenerate recursion at a={expnt}, d={d}")
    box = testfn.wave_power(chi, k)
    return cone_split(box, a + k, sign, d, n, n_sphere) / denom


def _with_bar(f, n, n_sphere):
    v = f(n, n_sphere)
    vh = f(max(n // 2, 12), max(n_sphere // 2, 8))
    return EvalResult(v, abs(v - vh) + 1e-15 * (1.0 + abs(v)))


def _budget_depth(alpha, d):
    """Box-recursion derivative budget for the alpha-calibrated families.

    Callers must supply sections with 2 * _budget_depth(alpha, d) exact
    derivative orders when Re alpha <= d; the evaluation itself descends only
    as far as local integrability requires (each Box transfers two
    derivatives onto the section and amplifies its high-order content, so
    shallow is both cheaper and better conditioned).
    """
    if complex(alpha).real > d:
        return 0
    return int(math.ceil((d - complex(alpha).real) / 2.0)) + 1


def _min_depth(sig):
    """Smallest k >= 0 with Re sig + k > -1 (locally integrable exponent)."""
    k = 0
    while complex(sig).real + k <= -1.0 + 1e-12:
        k += 1
    return k


def family_eval(spec, phi, reg=None, route="auto"):
    """T[phi] for the family in spec, with an error estimate.

    route = "auto" follows the direct/lifted strategy; "direct" forces
    unlifted quadrature (valid while the density is locally integrable);
    "lift" forces at least one Box-recursion step; "regulator" uses the
    uniform-shift ladder where its eps-expansion is polynomial (odd d,
    half-integer lattice).  Routes agree within bars where several apply,
    which the test suite exercises.
    """
    reg = reg or DEFAULT_REG
    n, ns = reg.n, reg.n_sphere
    fam, a, sign, d = spec.family, complex(spec.alpha), spec.sign, spec.d

    if fam == "gamma_i0":
        if _gamma_i0_poles(d)(a):
            raise PoleOfFamily(f"(gamma i0)^alpha pole at alpha={a}, d={d}")
        if route == "direct":
            if a.real <= -1.0:
                raise ValueError("direct route needs Re alpha > -1")
            return _with_bar(
                lambda nn, nss: cone_split(phi, a, sign, d, nn, nss), n, ns)
        if route == "lift":
            return _with_bar(
                lambda nn, nss: _gamma_pow_recursion(phi, a, sign, d, nn,
                                                     nss, min_k=1), n, ns)
        if route == "regulator":
            return _i0_shift_limit(phi, a, sign, d, reg)
        if a.real > -1.0:
            return _with_bar(
                lambda nn, nss: cone_split(phi, a, sign, d, nn, nss), n, ns)
        if d >= 4 and d % 2 == 0 and _is_int(a):
            # negative integer exponent -m at even d: rescale the
            # coincidence-point member Ltilde^(d-2m) of the calibrated family
            m = int(-round(a.real))
            r = _schain_eval(phi, m, sign, d, reg)
            c = coeff("Ltilde", float(d - 2 * m), d, sign)
            return EvalResult(r.value / c, r.err / abs(c))
        return _with_bar(
            lambda nn, nss: _gamma_pow_recursion(phi, a, sign, d, nn, nss),
            n, ns)

    if fam == "log_gamma_i0":
        # d/ds (gamma + sign i0)^(alpha+s) at s = 0
        if a.real <= -1.0:
            raise ValueError("log family implemented for Re offset > -1")
        return _with_bar(
            lambda nn, nss: cone_split_sderiv(phi, a, sign, d, order=1,
                                              n=nn, n_sphere=nss), n, ns)

    if fam == "riesz":
        sig = (a - d) / 2.0
        if a.real <= d:
            _require_dmax(phi, 2 * _budget_depth(a, d),
                          "riesz recursion budget")
        if route == "direct":
            if sig.real <= -1.0:
                raise ValueError("direct route needs Re (alpha-d)/2 > -1")
            k = 0
        elif (route == "auto" and d >= 3 and _is_int(sig)
              and round(sig.real) <= -1):
            # Integer sigma <= -1: after m Box transfers the density reaches
            # the boundary exponent -1, where the distribution concentrates
            # on the cone sheet with the invariant measure.
            m = int(-1 - round(sig.real))
            chi = testfn.wave_power(phi, m)
            # residue of 2 C(alpha,d) int gamma^sigma at sigma = -1; fixes
            # d = 4: R^2 = (1/2pi) delta_+(gamma), the retarded propagator
            c = (2.0 ** (3 - d) * np.pi ** ((2 - d) / 2.0)
                 / float(_Gamma(d / 2.0 - 1.0)))
            return _with_bar(
                lambda nn, nss: c * cone_sheet_integral(chi, sign, d,
                                                        2 * nn, nss), n, ns)
        else:
            k = _min_depth(sig)
            if route == "lift" and k == 0:
                k = 1
            while coeff("riesz", a + 2 * k, d) == 0:
                k += 1    # d = 1 even alpha <= 0: step past the Gamma zero
        chi = testfn.wave_power(phi, k)
        c = 2.0 * coeff("riesz", a + 2 * k, d)
        future = sign > 0
        return _with_bar(
            lambda nn, nss: c * riesz_cone(chi, sig + k, future, d, nn, nss),
            n, ns)

    if fam == "L":
        sig = (a - d) / 2.0
        if route == "auto" and _is_int(sig) and round(sig.real) <= -1:
            # zero lattice alpha in {d-2, d-4, ...}: L^alpha vanishes
            return EvalResult(0.0 + 0.0j, 0.0)
        if route == "direct":
            if sig.real <= -1.0:
                raise ValueError("direct route needs Re (alpha-d)/2 > -1")
            k = 0
        else:
            k = _min_depth(sig)
            if route == "lift" and k == 0:
                k = 1
            while coeff("L", a + 2 * k, d) == 0:
                k += 1    # d = 1: step past Gamma zeros at even alpha <= 0
        _require_dmax(phi, 2 * k, "L lift")
        chi = testfn.wave_power(phi, k)
        c = coeff("L", a + 2 * k, d)
        return _with_bar(
            lambda nn, nss: c * cone_split(chi, sig + k, sign, d, nn, nss),
            n, ns)

    if fam == "Ltilde":
        return _ltilde_eval(a, sign, d, phi, reg, route)
    raise ValueError(f"unknown family {fam!r}")


def _schain_eval(chi, ncoin, sign, d, reg):
    """Ltilde^(d-2n)_pm[chi] at an even-d coincidence point, n = ncoin >= 1.

    Uses the propagator decomposition: the Feynman (-) and anti-Feynman (+)
    members satisfy Ltilde^2_pm = -+ i W + Delta^(adv/ret); deeper members
    follow by applying the wave operator to the argument, Box Ltilde^(a+2)
    = Ltilde^a.
    """
    _require_dmax(chi, 2 * (ncoin - 1), "coincidence-point evaluation")
    box = testfn.wave_power(chi, ncoin - 1)
    w = _tube_limit(box, d, reg, tag="prototype_chain")
    r2 = family_eval(FamilySpec("riesz", 2.0, sign, d), box, reg)
    val = -sign * 1j * w.value + r2.value
    return EvalResult(val, w.err + r2.err)


def _ltilde_eval(a, sign, d, phi, reg, route):
    n, ns = reg.n, reg.n_sphere
    if _is_int(a):
        ai = int(round(a.real))
        if ai >= d and (ai - d) % 2 == 0:
            raise PoleOfFamily(f"Ltilde pole at alpha={ai}, d={d}")
        if d == 2 and ai == 2:
            # renormalized value at the d = 2 pole point:
            # Ltilde^2_pm = +-(i/2pi) log(gamma +- i0)
            c = sign * 1j / (2.0 * np.pi)
            return _with_bar(
                lambda nn, nss: c * cone_split_sderiv(
                    phi, 0.0, sign, d, order=1, n=nn, n_sphere=nss),
                n, ns)
        if ai == 0:
            v = complex(phi.scalar_eval(np.zeros(d)))
            return EvalResult(v, 1e-15 * (1.0 + abs(v)))
        if (d - ai) % 2 == 1:
            return family_eval(FamilySpec("L", a, sign, d), phi, reg, route)
        if d % 2 == 0 and ai < d:
            if route == "lift":
                # cross-check route via the log form: the continuation of
                # Ctilde (gamma +- i0)^-n equals +-(i/pi) C(d,d) log on Box^n
                nlog = (d - ai) // 2
                _require_dmax(phi, 2 * nlog, "Ltilde log form")
                box = testfn.wave_power(phi, nlog)
                c = sign * 1j / np.pi * coeff("L", float(d), d)
                return _with_bar(
                    lambda nn, nss: c * cone_split_sderiv(box, 0.0, sign, d,
                                                          order=1, n=nn,
                                                          n_sphere=nss),
                    n, ns)
            return _schain_eval(phi, (d - ai) // 2, sign, d, reg)
    c = coeff("Ltilde", a, d, sign)
    expnt = (a - d) / 2.0
    if route == "direct" and expnt.real <= -1.0:
        raise ValueError("direct route needs Re (alpha-d)/2 > -1")
    if route == "regulator":
        r = _i0_shift_limit(phi, expnt, sign, d, reg, tag="Ltilde")
        return EvalResult(c * r.value, abs(c) * r.err)
    if route == "lift":
        return _with_bar(
            lambda nn, nss: c * _gamma_pow_recursion(phi, expnt, sign, d,
                                                     nn, nss, min_k=1),
            n, ns)
    return _with_bar(
        lambda nn, nss: c * _gamma_pow_recursion(phi, expnt, sign, d,
                                                 nn, nss), n, ns)


# ---------------------------------------------------------------------------
# light-cone measure and pushforward

def lightcone_measure(sign, phi, d, reg=None):
    """dOmega^0_pm[phi] = (1/2) int_0^inf int_{S^(d-2)} phi(pm r, r w) r^(d-3).

    For d = 2 the 1/r singularity is non-integrable unless the support stays
    away from the origin, which is enforced.
    """
    reg = reg or DEFAULT_REG
    sb = np.asarray(phi.support_box, dtype=float)
    t_lo, t_hi, rmax = _support_radii(phi, d)
    r_lo = 0.0
    if d == 2:
        # distance of the support box from the origin along the cone
        if not (sb[0, 0] > 0.0 or sb[0, 1] < 0.0 or sb[1, 0] > 0.0
                or sb[1, 1] < 0.0):
            raise SupportOutsideDomain(
                "d=2 cone measure needs support away from the origin")

    def quad(nn, nss):
        x, w = roots_legendre(nn)
        r = (rmax - r_lo) * (x + 1.0) / 2.0 + r_lo
        wr = w * (rmax - r_lo) / 2.0
        om, wo = sphere_rule(d - 2, nss)
        t = sign * r[:, None]
        sp = r[:, None, None] * om[None, :, :]
        pts = np.concatenate([np.broadcast_to(t[..., None], sp.shape[:-1] + (1,)),
                              sp], axis=-1)
        vals = phi.scalar_eval(pts)
        if d == 2:
            rad = 1.0 / r
        else:
            rad = r ** (d - 3)
        return 0.5 * np.einsum("a,a,ao,o->", wr, rad, vals, wo)

    return _with_bar(lambda nn, nss: complex(quad(nn, nss)), reg.n * 2,
                     reg.n_sphere)


def _check_pushforward_domain(phi, sign, d):
    """Support must avoid J_mp (and the origin): sign=+1 excludes the past cone."""
    sb = np.asarray(phi.support_box, dtype=float)
    t0, t1 = sb[0]
    rmin2 = 0.0
    for i in range(1, d):
        lo, hi = sb[i]
        if lo > 0 or hi < 0:
            rmin2 += min(abs(lo), abs(hi)) ** 2
    rmin = np.sqrt(rmin2)
    if sign > 0:
        if t0 > 0.0:
            return
        if rmin > max(0.0, -t0) and rmin > 0.0:
            return
    else:
        if t1 < 0.0:
            return
        if rmin > max(0.0, t1) and rmin > 0.0:
            return
    raise SupportOutsideDomain(
        "pushforward domain excludes the opposite closed cone")


def pushforward_gamma(sign, phi, grid, n=64, n_sphere=24):
    """((gamma_pm)_* phi)(s) on the given grid, by fiber integration.

    sign=+1 integrates over the level sets within the complement of the past
    cone: the future hyperboloid sheet for s > 0 and the full spacelike
    hyperboloid for s < 0.
    """
    grid = np.asarray(grid, dtype=float)
    sb = np.asarray(phi.support_box, dtype=float)
    d = sb.shape[0]
    _check_pushforward_domain(phi, sign, d)
    t_lo, t_hi, rmax = _support_radii(phi, d)
    om, wo = sphere_rule(d - 2, n_sphere)
    x, w = roots_legendre(n)
    out = np.zeros(grid.shape, dtype=float)

    pos = grid >= 0.0
    if np.any(pos):
        s = grid[pos][:, None, None]
        r = (rmax * (x + 1.0) / 2.0)[None, :, None]
        wr = (w * rmax / 2.0)[None, :, None]
        x0 = np.sqrt(s + r * r)
        sp = r[..., None] * om[None, None, :, :]
        t = (sign * x0)[..., None]
        pts = np.concatenate([np.broadcast_to(t, sp.shape[:-1] + (1,)), sp],
                             axis=-1)
        vals = phi.scalar_eval(pts)
        integ = vals * (r ** (d - 2) / (2.0 * x0))
        out[pos] = np.einsum("slo,slo,o->s", integ, np.broadcast_to(
            wr, integ.shape), wo)
    neg = grid < 0.0
    if np.any(neg):
        s = grid[neg][:, None, None]
        t = ((t_hi - t_lo) * (x + 1.0) / 2.0 + t_lo)[None, :, None]
        wt = (w * (t_hi - t_lo) / 2.0)[None, :, None]
        rad = np.sqrt(t * t - s)
        sp = rad[..., None] * om[None, None, :, :]
        tt = np.broadcast_to(t[..., None], sp.shape[:-1] + (1,))
        pts = np.concatenate([tt, sp], axis=-1)
        vals = phi.scalar_eval(pts)
        integ = vals * (rad ** (d - 3) / 2.0)
        out[neg] = np.einsum("slo,slo,o->s", integ,
                             np.broadcast_to(wt, integ.shape), wo)
    return out


# ---------------------------------------------------------------------------
# Wightman distribution

def _wightman_const(d):
    return _Gamma((d - 2) / 2.0) / (4.0 * np.pi ** (d / 2.0))


def _refined_breaks(lo, hi, eps_min, wmax=None, features=()):
    """Panel breakpoints on [lo,hi] geometrically refined toward 0.

    wmax caps the width of the outer panels so the per-panel rule keeps
    resolving the test section, not just the kernel.  features is a list of
    (position, layer width) pairs marking sharp layers of the integrand
    (bump edges and their images under the wave operator); a geometric
    cluster of breakpoints is inserted around each so the per-panel rule
    resolves the layer.
    """
    pts = {lo, hi}
    if lo < 0.0 < hi:
        pts.add(0.0)
    scale = max(abs(lo), abs(hi))
    r = scale
    while r > eps_min / 2.0:
        for s in (r, -r):
            if lo < s < hi:
                pts.add(s)
        r /= 2.0
    for pos, width in features:
        for s in (0.0, 0.125, -0.125, 0.25, -0.25, 0.5, -0.5,
                  1.0, -1.0, 2.0, -2.0):
            q = pos + s * width
            if lo < q < hi:
                pts.add(q)
    bks = sorted(pts)
    if wmax is not None and wmax > 0.0:
        out = [bks[0]]
        for b in bks[1:]:
            gap = b - out[-1]
            if gap > wmax:
                m = int(np.ceil(gap / wmax))
                base = out[-1]
                out.extend(base + gap * j / m for j in range(1, m))
            out.append(b)
        bks = out
    return np.array(bks)


def _panel_nodes(breaks, n_per):
    x, w = roots_legendre(n_per)
    mids = (breaks[1:] + breaks[:-1]) / 2.0
    half = (breaks[1:] - breaks[:-1]) / 2.0
    nodes = (mids[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return nodes, wts


def _lightcone_rows(K, d, reg, n_sphere):
    """Sample K in light-cone coordinates on panels refined toward the cone.

    Per sphere direction w, u = (u0, R w) with a = u0 - R, b = u0 + R, so
    gamma(u) = a b and du = (1/2) R^(d-2) da db dw.  Breakpoints refine
    geometrically toward a = 0 and b = 0 down to half the smallest ladder
    rung; the K samples are built once and reused for every rung.
    """
    sb = np.asarray(K.support_box, dtype=float)
    t0, t1 = sb[0]
    rmax = getattr(K, "space_radius", None)
    if rmax is None:
        corners = np.stack(np.meshgrid(*[sb[i] for i in range(1, d)],
                                       indexing="ij"),
                           axis=-1).reshape(-1, d - 1)
        rmax = float(np.max(np.linalg.norm(corners, axis=1)))
    tfeat = list(getattr(K, "sharp_t", ()))
    rfeat = list(getattr(K, "sharp_r", ()))
    afeat = [(tf - rf, max(wt, wr))
             for tf, wt in tfeat for rf, wr in [(0.0, wt)] + rfeat]
    eps_min = reg.ladder[-1]
    if hasattr(K, "space_radius"):
        # rotation-invariant section: one angular node carries the full
        # sphere measure exactly
        om = np.zeros((1, d - 1))
        om[0, 0] = 1.0
        wo = np.array([2.0 * np.pi ** ((d - 1) / 2.0)
                       / _Gamma((d - 1) / 2.0)])
    else:
        om, wo = sphere_rule(d - 2, n_sphere)
    wmax = (t1 + 2.0 * rmax - t0) / reg.panel_split
    a_nodes, a_wts = _panel_nodes(
        _refined_breaks(t0 - rmax, t1, eps_min, wmax, afeat), reg.panel_n)
    rows = []
    for ai, wa in zip(a_nodes, a_wts):
        bfeat = ([(2.0 * tf - ai, wt) for tf, wt in tfeat]
                 + [(ai + 2.0 * rf, 2.0 * wr) for rf, wr in rfeat]
                 + [(tf + rf, max(wt, wr))
                    for tf, wt in tfeat for rf, wr in rfeat])
        bb = _refined_breaks(ai, t1 + rmax, eps_min, wmax, bfeat)
        b_nodes, b_wts = _panel_nodes(bb, reg.panel_n)
        R = (b_nodes - ai) / 2.0
        u0 = (b_nodes + ai) / 2.0
        sp = R[:, None, None] * om[None, :, :]
        tt = np.broadcast_to(u0[:, None], sp.shape[:-1])[..., None]
        pts = np.concatenate([tt, sp], axis=-1)
        kv = K.scalar_eval(pts)
        geom = 0.5 * R ** (d - 2) * b_wts
        rows.append((ai, wa, b_nodes, np.asarray(kv) * geom[:, None]))
    return rows, wo


def _richardson_limit(vals, ratio, tag):
    """Extrapolate F(eps_j) -> F(0) assuming a smooth integer-power series."""
    tab = [list(vals)]
    for p in range(1, len(vals)):
        prev = tab[-1]
        tab.append([(ratio ** p * prev[i + 1] - prev[i]) / (ratio ** p - 1.0)
                    for i in range(len(prev) - 1)])
    best = tab[-1][0]
    alt = tab[-2][1] if len(tab) >= 2 else best
    err = abs(best - alt) + abs(best - tab[-2][0])
    if err > 1e-3 * (1.0 + abs(best)):
        raise ExtrapolationNotConverged(
            f"{tag}: ladder spread {err:.2e} at value {best:.3e}")
    return EvalResult(best, err)


def _panel_limit(K, d, reg, kernel, tag, n_sphere=None):
    """lim_eps int kernel_eps(a, b) K(u) du by shared panels + Richardson.

    kernel(eps, a, b) must be analytic in eps off the cone for eps > 0 with
    a smeared value smooth up to eps = 0; the geometric ladder then has an
    integer-power expansion and polynomial Richardson is exact.
    """
    if n_sphere is None:
        n_sphere = max(reg.n_sphere // 2, 8) if d >= 4 else reg.n_sphere
    if d >= 4:
        # the kernel singularity strengthens with d (power (2-d)/2 on the
        # cone), so the panel mesh must outpace it for the ladder limit to
        # land on the true smeared value rather than a biased one
        reg = dataclasses.replace(reg, panel_split=reg.panel_split
                                  * 2 ** (d - 3))
    rows, wo = _lightcone_rows(K, d, reg, n_sphere)
    vals = []
    for eps in reg.ladder:
        tot = 0.0 + 0.0j
        for ai, wa, b_nodes, kvg in rows:
            ker = kernel(eps, ai, b_nodes)
            tot += wa * np.einsum("b,bo,o->", ker, kvg, wo)
        vals.append(tot)
    return _richardson_limit(vals, reg.ratio, tag)


def _panel_limit_1d(K, reg, kernel, tag):
    """d = 1 version: panels on the line refined toward t = 0, a = b = t."""
    t0, t1 = np.asarray(K.support_box, dtype=float)[0]
    nodes, wts = _panel_nodes(
        _refined_breaks(t0, t1, reg.ladder[-1],
                        (t1 - t0) / reg.panel_split), reg.panel_n)
    kv = np.asarray(K.scalar_eval(nodes[:, None])) * wts
    vals = [complex(np.sum(kernel(eps, nodes, nodes) * kv))
            for eps in reg.ladder]
    return _richardson_limit(vals, reg.ratio, tag)


def _tube_limit(K, d, reg, tag="wightman"):
    """lim c_d integral (-gamma + eps^2 + 2 i eps u0)^((2-d)/2) K(u) du.

    The tube base factorizes as (eps - i a)(eps - i b) and never meets the
    branch cut, so the smeared value is smooth in eps up to 0.
    """
    sig = (2.0 - d) / 2.0
    cd = _wightman_const(d)

    def kernel(eps, ai, b):
        return cd * (-ai * b + eps * eps + 1j * eps * (ai + b)) ** sig

    return _panel_limit(K, d, reg, kernel, tag)


def _i0_shift_limit(chi, expnt, sign, d, reg, tag="gamma_i0"):
    """(gamma + sign i0)^expnt [chi], by the defining uniform shift.

    Evaluates int (gamma + sign i eps)^expnt chi and extrapolates eps -> 0.
    The polynomial ladder is justified only when the small-eps expansion of
    the smeared value carries integer powers alone.  The smooth part of the
    pushforward density always contributes integer powers (the fractional
    finite parts of the two half-lines cancel for a one-sided boundary
    value), but the cone vertex adds terms eps^((d-2)/2 + expnt + 1 + m),
    with an extra log eps in even d.  Integer alignment therefore requires
    odd d and expnt on the half-integer lattice 2 expnt + d even; other
    exponents are rejected rather than returned with an invalid bar.
    """
    a = complex(expnt)
    if _gamma_i0_poles(d)(a):
        raise PoleOfFamily(f"(gamma i0)^a pole at a={expnt}, d={d}")
    if not (d % 2 == 1 and _is_int(2.0 * a + d) and abs(a.imag) < 1e-12):
        raise ValueError(
            "shift-regulator ladder needs odd d and exponent on the "
            f"half-integer lattice; got d={d}, exponent={expnt}")

    def kernel(eps, ai, b):
        return (np.asarray(ai * b, dtype=complex) + sign * 1j * eps) ** a

    if d == 1:
        return _panel_limit_1d(chi, reg, kernel, tag)
    return _panel_limit(chi, d, reg, kernel, tag)


def _radial_ft(phi, freqs):
    """Fourier transform of a radial section at covectors p.

    Splits per term into a 1d oscillatory time integral and a radial space
    one; the angular average of the plane wave is integrated exactly by a
    symmetric Jacobi rule in cos theta sized to the largest phase.  Values
    depend only on (p0, |p_vec|), so duplicate frequencies (every point of
    a momentum cone grid shares them) are evaluated once.
    """
    from scipy.special import roots_jacobi

    p = np.asarray(freqs, dtype=float)
    d, n = phi.d, phi.d - 1
    p0 = p[..., 0].ravel()
    k = np.linalg.norm(p[..., 1:], axis=-1).ravel()
    pairs = np.stack([p0, k], axis=1)
    uniq, inv = np.unique(np.round(pairs, 12), axis=0, return_inverse=True)
    u0, uk = uniq[:, 0], uniq[:, 1]

    tb = phi.ft.support_box[0]
    th, tc = (tb[1] - tb[0]) / 2.0, (tb[1] + tb[0]) / 2.0
    nt = int(min(max(48, 1.4 * np.max(np.abs(u0) * th, initial=0.0) + 24), 4000))
    xt, wt = roots_legendre(nt)
    tn = tc + th * xt
    osc_t = np.exp(-1j * np.outer(u0, tn))

    ra = phi.space_radius
    xr, wr = roots_legendre(96)
    rn = ra / 2.0 * (xr + 1.0)
    rw = ra / 2.0 * wr
    s1 = rn * rn
    ncc = int(min(max(48, 1.4 * np.max(uk * ra, initial=0.0) + 24), 4000))
    ex = (n - 3) / 2.0
    cx, cw = (roots_legendre(ncc) if n == 3 else roots_jacobi(ncc, ex, ex))
    s_ang = 2.0 * np.pi ** ((n - 1) / 2.0) / math.gamma((n - 1) / 2.0)
    phase = np.exp(1j * np.einsum("p,r,c->prc", uk, rn, cx))

    out = np.zeros(len(uniq), dtype=complex)
    for c, jt, q, jh in phi.terms:
        ftv = phi.ft.scalar_eval(tn[:, None], (jt,))
        Ft = osc_t @ (wt * th * ftv)
        gs = (testfn._pval(q, s1) * phi.hs.scalar_eval(s1[:, None], (jh,))
              * rn ** (n - 1) * rw)
        Sk = s_ang * np.einsum("prc,r,c->p", phase, gs, cw)
        out += c * Ft * Sk
    return (out[inv] * float(phi.w[0])).reshape(p.shape[:-1])


def _section_ft(phi, freqs, n1d=None):
    """F[phi](p) = int phi(x) exp(i (x_vec p_vec - x0 p0)) dx at given p.

    freqs: array (..., d) of momentum covectors p; the quadrature is exact
    per axis (Gauss-Legendre sized to the largest phase).  Plain separable
    TestSection structure and radial sections are supported, which is all
    the Wightman mode needs.
    """
    if isinstance(phi, testfn.RadialSection):
        return _radial_ft(phi, freqs)
    if not isinstance(phi, testfn.TestSection):
        raise TypeError("fourier mode needs a plain or radial section")
    p = np.asarray(freqs, dtype=float)
    d = phi.d
    # exponent per axis: axis 0 couples with -p0, spatial axes with +p_i
    ax_freq = np.concatenate([-p[..., :1], p[..., 1:]], axis=-1)
    out = np.zeros(p.shape[:-1], dtype=complex)
    if n1d is None:
        qmax = float(np.max(np.abs(ax_freq * phi.rho))) if p.size else 0.0
        n1d = int(min(max(48, 1.4 * qmax + 24), 3000))
    x, w = roots_legendre(n1d)
    b = testfn.bump(x)
    for c, expo in phi.poly:
        term = np.full(p.shape[:-1], c, dtype=complex)
        for i in range(d):
            q = ax_freq[..., i] * phi.rho[i]
            prof = w * (x ** expo[i] if expo[i] else 1.0) * b
            osc = np.exp(1j * np.outer(q.ravel(), x)) @ prof
            osc = osc.reshape(q.shape) * phi.rho[i] * np.exp(
                1j * ax_freq[..., i] * phi.x0[i])
            term = term * osc
        out += term
    return out * float(phi.w[0])


def _min_width(chi):
    if isinstance(chi, testfn.RadialSection):
        tb = chi.ft.support_box[0]
        return min((tb[1] - tb[0]) / 2.0, chi.space_radius)
    return float(np.min(chi.rho))


def _fourier_pair(phi, psi, d, reg):
    """(2pi)^(1-d) (1/2) int r^(d-3) F[phi](r,rw) F[psi](-(r,rw)) dw dr."""
    radial = (isinstance(phi, testfn.RadialSection)
              and isinstance(psi, testfn.RadialSection))

    def run(n_per, nss):
        # the integrand is constant over the momentum sphere for a radial
        # pair, so any symmetric rule is exact there
        omm, woo = sphere_rule(d - 2, 8 if radial else nss)
        rho = min(_min_width(phi), _min_width(psi))
        q0 = max(4.0 / rho, 4.0)
        x, w = roots_legendre(n_per)
        total = 0.0 + 0.0j
        lo = 0.0
        scale_ref = None
        for panel in range(48):
            hi = q0 * (2.0 ** panel)
            r = (hi - lo) * (x + 1.0) / 2.0 + lo
            wr = w * (hi - lo) / 2.0
            p = np.concatenate([r[:, None, None].repeat(len(woo), 1)[..., :1],
                                r[:, None, None] * omm[None, :, :]], axis=-1)
            F1 = _section_ft(phi, p)
            F2 = _section_ft(psi, -p)
            contrib = np.einsum("a,a,ao,o->", wr, r ** (d - 3.0), F1 * F2, woo)
            total += contrib
            scale_ref = max(abs(total), scale_ref or 0.0)
            if abs(contrib) < 1e-17 * (scale_ref + 1e-30) and panel > 2:
                break
            lo = hi
        else:
            raise ExtrapolationNotConverged("fourier tail did not decay")
        return (2.0 * np.pi) ** (1.0 - d) * 0.5 * total

    v = run(24, reg.n_sphere)
    vh = run(12, max(reg.n_sphere // 2, 8))
    return EvalResult(v, abs(v - vh) + 1e-15 * (1.0 + abs(v)))


def wightman_eval(phi, psi, d, mode="fourier", reg=None):
    """W[phi, psi] = int int phi(x) W(x - y) psi(y) dx dy for the massless
    two-point distribution, d >= 3.

    closed_form smears the correlation of the pair against the tube kernel
    c_d (-gamma_eps)^((2-d)/2) with Richardson in eps; fourier integrates
    |F|^2-type products over the forward cone and is manifestly positive for
    psi = conj(phi).  mode="both" cross-checks them.
    """
    if d < 3:
        raise ValueError("Wightman evaluation requires d >= 3")
    reg = reg or DEFAULT_REG
    if mode == "closed_form":
        K = testfn.correlate(phi, psi)
        return _tube_limit(K, d, reg)
    if mode == "fourier":
        return _fourier_pair(phi, psi, d, reg)
    if mode == "both":
        a = wightman_eval(phi, psi, d, "closed_form", reg)
        b = wightman_eval(phi, psi, d, "fourier", reg)
        tol = 3.0 * (a.err + b.err) + 1e-9 * (1.0 + abs(b.value))
        if abs(a.value - b.value) > tol:
            raise ModesDisagree(
                f"closed_form {a.value:.6e} vs fourier {b.value:.6e}, "
                f"tol {tol:.2e}")
        return EvalResult(b.value, abs(a.value - b.value) + b.err)
    raise ValueError(f"unknown mode {mode!r}")


def wightman_single(phi, d, reg=None):
    """W[phi] for a single test function (the distribution on R^d)."""
    if d < 3:
        raise ValueError("Wightman evaluation requires d >= 3")
    reg = reg or DEFAULT_REG
    return _tube_limit(phi, d, reg, tag="wightman_single")


# ---------------------------------------------------------------------------
# prototype Green distributions

def prototype_green(kind, phi, d=None, reg=None):
    """Green distributions of Box on flat space, single-smeared.

    advanced  A  = R^2_-,     retarded R = R^2_+,
    Feynman   F  = i W + A,   anti-Feynman aF = -i W + R.
    """
    reg = reg or DEFAULT_REG
    if d is None:
        d = int(np.asarray(phi.support_box).shape[0])
    if d < 3:
        raise ValueError("prototype Green distributions implemented for d >= 3")
    if kind in ("A", "R"):
        sign = -1 if kind == "A" else +1
        return family_eval(FamilySpec("riesz", 2.0, sign, d), phi, reg)
    if kind in ("F", "aF"):
        w = wightman_single(phi, d, reg)
        if kind == "F":
            base = family_eval(FamilySpec("riesz", 2.0, -1, d), phi, reg)
            return EvalResult(1j * w.value + base.value, w.err + base.err)
        base = family_eval(FamilySpec("riesz", 2.0, +1, d), phi, reg)
        return EvalResult(-1j * w.value + base.value, w.err + base.err)
    raise ValueError(f"unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# named identity suite (consumed by the CLI flat-check command)

class _AxisDeriv:
    """d/dx_axis of a section-like object, staying in the eval protocol."""

    def __init__(self, base, axis):
        self.base = base
        self.axis = axis

    @property
    def support_box(self):
        return self.base.support_box

    @property
    def dmax(self):
        return self.base.dmax - 1

    def scalar_eval(self, x, alpha=None):
        d = np.asarray(self.base.support_box).shape[0]
        alpha = list(alpha) if alpha is not None else [0] * d
        alpha[self.axis] += 1
        return self.base.scalar_eval(x, tuple(alpha))


def _gamma_poly(d):
    mono = [(1.0, tuple(2 if i == 0 else 0 for i in range(d)))]
    for i in range(1, d):
        mono.append((-1.0, tuple(2 if j == i else 0 for j in range(d))))
    return mono


def _radial_gamma_times(phi):
    """gamma * phi for a plain radial section, as two sections summing to it
    (t^2 folded into the time profile, -s into the spatial one)."""
    tsq = testfn.PolyTimes([(1.0, (2,))], phi.ft)
    sneg = testfn.PolyTimes([(-1.0, (1,))], phi.hs)
    return (testfn.RadialSection(tsq, phi.hs, phi.d, dmax=phi.dmax),
            testfn.RadialSection(phi.ft, sneg, phi.d, dmax=phi.dmax))


def _family_sum(spec, chis, reg):
    return sum(family_eval(spec, c, reg).value for c in chis)


def identity_suite(d_list=(3, 4), seed=0, reg=None):
    """Rows (identity, d, alpha, lhs, rhs, error) for the flat identities.

    Rotation-invariant identities run on radial sections (wave-operator
    powers applied exactly, single-node angular smearing); the gradient
    identity along a spatial axis genuinely breaks the symmetry and keeps
    a separable bump section.
    """
    reg = reg or DEFAULT_REG
    rng = np.random.default_rng(seed)
    rows = []
    for d in d_list:
        tc = 0.3 + 0.1 * rng.random()
        phi = testfn.radial_section(tc, 1.0 + 0.2 * rng.random(),
                                    1.1 + 0.2 * rng.random(),
                                    tpoly=[(1.0, 0), (0.5, 2)], d=d)
        box = testfn.wave_power(phi, 1)
        for alpha in (1.0, 2.0, 3.0):
            # Box recursion: family_eval(a+2)[Box phi] = family_eval(a)[phi]
            for fam in ("riesz", "L", "Ltilde"):
                for sign in (+1, -1):
                    try:
                        lhs = family_eval(FamilySpec(fam, alpha + 2, sign, d),
                                          box, reg).value
                        rhs = family_eval(FamilySpec(fam, alpha, sign, d),
                                          phi, reg).value
                    except PoleOfFamily:
                        continue
                    rows.append((f"box_recursion_{fam}{'+' if sign > 0 else '-'}",
                                 d, alpha, lhs, rhs, abs(lhs - rhs)))
        for alpha in (1.0, 2.5):
            # gamma L^a = a (a - d + 2) L^(a+2)
            sgn = +1
            lhs = _family_sum(FamilySpec("L", alpha, sgn, d),
                              _radial_gamma_times(phi), reg)
            rhs = (alpha * (alpha - d + 2)
                   * family_eval(FamilySpec("L", alpha + 2, sgn, d), phi,
                                 reg).value)
            rows.append(("gamma_times_L", d, alpha, lhs, rhs, abs(lhs - rhs)))
            # weak gradient identity, time component: L^a[x_0 phi] =
            #   -a L^(a+2)[d_0 phi]
            tphi = testfn.RadialSection(
                testfn.PolyTimes([(1.0, (1,))], phi.ft), phi.hs, d,
                dmax=phi.dmax)
            dtphi = testfn.RadialSection(phi.ft, phi.hs, d, dmax=phi.dmax - 1,
                                         terms=((1.0, 1, (1.0,), 0),))
            lhs = family_eval(FamilySpec("L", alpha, sgn, d), tphi, reg).value
            rhs = (-alpha * family_eval(FamilySpec("L", alpha + 2, sgn, d),
                                        dtphi, reg).value)
            rows.append(("grad_identity_x0", d, alpha, lhs, rhs,
                         abs(lhs - rhs)))
        # gradient identity along a spatial axis, smeared against
        # psi = (1 + x1) phi.  Pairing with a rotation-invariant family
        # kills the odd angular channels, and the surviving sphere
        # integrals are elementary (<x1^2> = s / (d-1) at radius
        # sqrt(s)), so both sides reduce to s-weighted radial sections
        # and keep the exact single-node angular rule:
        #   <x1 psi>   = (s / nn) f h,
        #   <d1 psi>   = f h + (2 s / nn) f h'.
        nn = d - 1
        for alpha in (2.5,):
            lsec = testfn.RadialSection(
                phi.ft, phi.hs, d, dmax=phi.dmax,
                terms=((1.0, 0, (0.0, 1.0 / nn), 0),))
            rsec = testfn.RadialSection(
                phi.ft, phi.hs, d, dmax=phi.dmax - 2,
                terms=((1.0, 0, (1.0,), 0),
                       (1.0, 0, (0.0, 2.0 / nn), 1)))
            lhs = family_eval(FamilySpec("L", alpha, +1, d), lsec,
                              reg).value
            rhs = (alpha * family_eval(FamilySpec("L", alpha + 2, +1, d),
                                       rsec, reg).value)
            rows.append(("grad_identity_x1", d, alpha, lhs, rhs,
                         abs(lhs - rhs)))
        # branch equality above d: L^(d+2n)_+ = L^(d+2n)_-
        for nn in (0, 1):
            alpha = d + 2 * nn
            lhs = family_eval(FamilySpec("L", alpha, +1, d), phi, reg).value
            rhs = family_eval(FamilySpec("L", alpha, -1, d), phi, reg).value
            rows.append(("branch_equality_L", d, alpha, lhs, rhs,
                         abs(lhs - rhs)))
        # delta identities
        v0 = complex(phi.scalar_eval(np.zeros((1, d)))[0])
        for fam, alpha, chi in (("riesz", 0.0, phi),
                                ("riesz", 2.0, box),
                                ("Ltilde", 2.0, box)):
            for sign in (+1, -1):
                lhs = family_eval(FamilySpec(fam, alpha, sign, d), chi,
                                  reg).value
                rows.append((f"delta_{fam}_{alpha:g}", d, alpha, lhs, v0,
                             abs(lhs - v0)))
    return rows
