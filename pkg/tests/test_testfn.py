import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hadfield import geometry as geo
from hadfield import testfn as tf


def fd_derivative(f, x, alpha, h=1e-3):
    """Central-difference d^alpha via repeated first differences (order 2)."""
    x = np.asarray(x, dtype=float)
    if sum(alpha) == 0:
        return f(x)
    i = next(k for k, a in enumerate(alpha) if a > 0)
    rest = tuple(a - (1 if k == i else 0) for k, a in enumerate(alpha))
    e = np.zeros(x.size)
    e[i] = h
    return (fd_derivative(f, x + e, rest, h) - fd_derivative(f, x - e, rest, h)) / (2 * h)


def test_bump_values():
    assert tf.bump(0.0) == pytest.approx(1.0)
    assert tf.bump(1.0) == 0.0
    assert tf.bump(-1.0) == 0.0
    assert tf.bump(2.3) == 0.0
    assert tf.bump(0.5) == pytest.approx(math.exp(1 - 1 / 0.75))


def test_bump_edge_flatness():
    for n in range(13):
        assert abs(tf.bump(1 - 1e-6, n)) < 1e-3
        assert abs(tf.bump(-(1 - 1e-6), n)) < 1e-3


@given(st.floats(-0.95, 0.95), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_bump_derivative_fd(t, n):
    h = 1e-4
    fd = (tf.bump(t + h, n - 1) - tf.bump(t - h, n - 1)) / (2 * h)
    exact = tf.bump(t, n)
    # central-difference error model: h^2/6 |b^(n+2)| + rounding
    tol = (h * h / 6) * max(1.0, abs(tf.bump(t, n + 2))) + 1e-7 * max(1.0, abs(exact))
    assert abs(fd - exact) < 3 * tol


def test_bump_poly_integer_coeffs():
    # the recurrence keeps integer coefficients
    for n in range(8):
        assert all(isinstance(c, int) for c in tf._bump_poly(n))
    assert tf._bump_poly(1) == (0, -2)


def test_smoothstep():
    assert tf.smoothstep(-1.0) == 0.0
    assert tf.smoothstep(1.0) == pytest.approx(1.0)
    assert tf.smoothstep(0.0) == pytest.approx(0.5)  # even bump
    u = np.linspace(-1, 1, 41)
    s = tf.smoothstep(u)
    assert np.all(np.diff(s) >= -1e-15)
    h = 1e-5
    mid = (tf.smoothstep(0.3 + h) - tf.smoothstep(0.3 - h)) / (2 * h)
    assert mid == pytest.approx(tf.smoothstep(0.3, 1), rel=1e-6)


def test_cutoff_plateau_and_support():
    t = np.linspace(-0.5, 0.5, 21)
    assert np.allclose(tf.cutoff(t), 1.0)
    assert tf.cutoff(1.0) == 0.0
    assert tf.cutoff(-1.2) == 0.0
    assert 0 < tf.cutoff(0.75) < 1
    h = 1e-5
    fd = (tf.cutoff(0.7 + h) - tf.cutoff(0.7 - h)) / (2 * h)
    assert fd == pytest.approx(tf.cutoff(0.7, 1), rel=1e-5)


def test_section_support_and_center():
    ts = tf.bump_section([0.0, 0.0], [1.0, 2.0], w=[3.0])
    out = ts.eval(np.array([0.0, 0.0]))
    assert np.allclose(out, [3.0])
    assert np.allclose(ts.eval(np.array([1.5, 0.0])), 0.0)
    assert np.allclose(ts.eval(np.array([0.0, 2.5])), 0.0)
    # exact zero, not small
    assert ts.eval(np.array([5.0, 5.0]))[0] == 0.0


def test_section_batch_shapes():
    ts = tf.bump_section([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], w=[1.0, 2.0])
    xs = np.zeros((4, 5, 3))
    assert ts.eval(xs).shape == (4, 5, 2)


@given(st.integers(0, 2), st.integers(0, 2),
       st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
@settings(max_examples=40, deadline=None)
def test_section_derivative_fd(a0, a1, x, y):
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.3],
                         poly=[(1.0, (0, 0)), (0.7, (1, 0)), (-0.4, (0, 2))])
    alpha = (a0, a1)
    pt = np.array([x, y])
    exact = ts.scalar_eval(pt, alpha)
    fd = fd_derivative(lambda z: ts.scalar_eval(z), pt, alpha, h=2e-3)
    assert abs(exact - fd) < 5e-4


def test_section_derivative_order_exceeded():
    ts = tf.bump_section([0.0], [1.0], dmax=3)
    with pytest.raises(ValueError):
        ts.scalar_eval(np.array([0.1]), (4,))


def test_flatbox_matches_direct():
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.0],
                         poly=[(1.0, (0, 0)), (0.5, (2, 1))])
    bx = tf.FlatBox(ts, k=1)
    pt = np.array([0.2, -0.3])
    direct = ts.scalar_eval(pt, (2, 0)) - ts.scalar_eval(pt, (0, 2))
    assert bx.scalar_eval(pt) == pytest.approx(direct, rel=1e-12)


def test_flatbox_power_composition():
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.0], poly=[(1.0, (0, 0))])
    b2 = tf.FlatBox(ts, k=2)
    bb = tf.FlatBox(tf.FlatBox(ts, k=1), k=1)
    pt = np.array([-0.1, 0.4])
    assert b2.scalar_eval(pt) == pytest.approx(bb.scalar_eval(pt), rel=1e-10)


def test_flatbox_3d():
    ts = tf.bump_section([0.0] * 3, [1.0] * 3)
    bx = tf.FlatBox(ts, k=1)
    pt = np.array([0.1, 0.2, -0.1])
    direct = (ts.scalar_eval(pt, (2, 0, 0)) - ts.scalar_eval(pt, (0, 2, 0))
              - ts.scalar_eval(pt, (0, 0, 2)))
    assert bx.scalar_eval(pt) == pytest.approx(direct, rel=1e-12)


def test_reflect():
    ts = tf.bump_section([0.3, 0.0], [0.5, 0.5], poly=[(1.0, (1, 0))])
    r = tf.Reflect(ts)
    pt = np.array([-0.25, 0.1])
    assert r.scalar_eval(pt) == pytest.approx(ts.scalar_eval(-pt))
    assert r.scalar_eval(pt, (1, 0)) == pytest.approx(-ts.scalar_eval(-pt, (1, 0)))
    assert np.allclose(r.support_box, [[-0.8, 0.2], [-0.5, 0.5]])


def test_translate():
    ts = tf.bump_section([0.0, 0.0], [0.5, 0.5])
    sh = tf.Translate(ts, [0.2, -0.1])
    pt = np.array([0.3, 0.0])
    assert sh.scalar_eval(pt) == pytest.approx(ts.scalar_eval(pt - np.array([0.2, -0.1])))


def test_linear_map_boost():
    # hyperbolic rotation preserves gamma; check values and 2nd derivatives
    ch = math.cosh(0.4)
    sh = math.sinh(0.4)
    A = np.array([[ch, sh], [sh, ch]])
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.0], poly=[(1.0, (0, 0)), (0.3, (1, 1))])
    lm = tf.LinearMap(ts, A)
    pt = np.array([0.2, 0.1])
    assert lm.scalar_eval(pt) == pytest.approx(ts.scalar_eval(A @ pt))
    for alpha in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
        fd = fd_derivative(lambda z: lm.scalar_eval(z), pt, alpha, h=2e-3)
        assert lm.scalar_eval(pt, alpha) == pytest.approx(fd, abs=5e-4)


def test_poly_times():
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.0])
    pt_sec = tf.PolyTimes([(2.0, (1, 0)), (1.0, (0, 0))], ts)  # (2 x0 + 1) phi
    z = np.array([0.2, -0.1])
    assert pt_sec.scalar_eval(z) == pytest.approx((2 * 0.2 + 1) * ts.scalar_eval(z))
    fd = fd_derivative(lambda y: pt_sec.scalar_eval(y), z, (1, 1), h=2e-3)
    assert pt_sec.scalar_eval(z, (1, 1)) == pytest.approx(fd, abs=5e-4)


def test_field_times():
    ts = tf.bump_section([0.0, 0.0], [1.0, 1.0])

    def field(x, beta):
        # f = sin(x0) cos(x1) with exact derivatives
        a, b = beta
        s = np.sin(x[..., 0] + a * np.pi / 2)
        c = np.cos(x[..., 1] + b * np.pi / 2)
        return s * c

    fs = tf.FieldTimes(field, ts, field_dmax=4)
    z = np.array([0.3, 0.2])
    assert fs.scalar_eval(z) == pytest.approx(np.sin(0.3) * np.cos(0.2) * ts.scalar_eval(z))
    fd = fd_derivative(lambda y: fs.scalar_eval(y), z, (2, 0), h=2e-3)
    assert fs.scalar_eval(z, (2, 0)) == pytest.approx(fd, abs=5e-4)


def test_correlation_against_bruteforce():
    phi = tf.bump_section([0.0, 0.0], [0.7, 0.6], poly=[(1.0, (0, 0)), (0.5, (1, 0))])
    psi = tf.bump_section([0.1, -0.1], [0.5, 0.8], poly=[(1.0, (0, 0)), (-0.3, (0, 1))])
    K = tf.Correlation(phi, psi)
    # brute force: 2d tensor Gauss-Legendre over supp psi (slow reference:
    # its domain contains the overlap edge mid-interval, so use many points)
    from scipy.special import roots_legendre
    x1, w1 = roots_legendre(260)
    ys = np.stack(np.meshgrid(0.1 + 0.5 * x1, -0.1 + 0.8 * x1, indexing="ij"), axis=-1)
    wts = np.outer(w1 * 0.5, w1 * 0.8)
    for u in [np.array([0.0, 0.0]), np.array([0.3, -0.2]), np.array([-0.5, 0.4])]:
        brute = np.sum(wts * phi.scalar_eval(ys + u) * psi.scalar_eval(ys))
        assert K.scalar_eval(u) == pytest.approx(brute, abs=5e-9)
    # derivative hits the phi factor
    u = np.array([0.2, 0.1])
    fd = fd_derivative(lambda z: K.scalar_eval(z), u, (1, 0), h=2e-3)
    assert K.scalar_eval(u, (1, 0)) == pytest.approx(fd, abs=1e-5)


def test_correlation_disjoint_supports():
    phi = tf.bump_section([0.0, 0.0], [0.2, 0.2])
    psi = tf.bump_section([0.0, 0.0], [0.2, 0.2])
    K = tf.Correlation(phi, psi)
    assert K.scalar_eval(np.array([1.0, 0.0])) == 0.0


def test_pullback_flat():
    ch = geo.minkowski_chart(2)
    ts = tf.bump_section([0.5, 0.2], [0.3, 0.3])
    p = np.array([0.1, 0.0])
    tab = tf.pullback_normal(ts, ch, p, n=21)
    V = np.stack(np.meshgrid(*tab.grids, indexing="ij"), axis=-1)
    assert np.allclose(tab.values, ts.scalar_eval(p + V))


def test_pullback_conformal_density_is_one():
    # the e^{2at} chart is isometric to flat, so mu == 1; the tabulation must
    # then equal phi evaluated along the exponential map
    ch = geo.conformal_chart(d=2, a=0.3, halfwidth=1.5)
    ts = tf.bump_section([0.2, 0.1], [0.25, 0.25])
    p = np.array([0.2, 0.1])
    tab = tf.pullback_normal(ts, ch, p, n=17)
    V = np.stack(np.meshgrid(*tab.grids, indexing="ij"), axis=-1)
    X = geo.exp_map(ch, p, V)
    assert np.max(np.abs(tab.values - ts.scalar_eval(X))) < 1e-6


def test_pullback_fd_derivative_order():
    ch = geo.minkowski_chart(2)
    ts = tf.bump_section([0.0, 0.0], [0.5, 0.5])
    p = np.zeros(2)
    errs = []
    for n in (81, 161):
        tab = tf.pullback_normal(ts, ch, p, n=n)
        V = np.stack(np.meshgrid(*tab.grids, indexing="ij"), axis=-1)
        dv = tab.derivative((1, 0))
        exact = ts.scalar_eval(p + V, (1, 0))
        interior = (np.abs(V[..., 0]) < 0.4) & (np.abs(V[..., 1]) < 0.4)
        errs.append(np.max(np.abs(dv - exact)[interior]))
    order = np.log2(errs[0] / errs[1])
    assert order > 1.8
