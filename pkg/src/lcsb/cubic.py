"""
Vectorized real roots of real cubics.

The closed form on the depressed cubic (trigonometric branch for three real
roots, cancellation-free Cardano branch for one) is fast but misclassifies
roots whose magnitudes differ by many orders, because the depressed-cubic
discriminant cancels. Root existence is therefore decided by a bracketing
argument: the critical points split the real line into monotone pieces and a
piece holds a root exactly when the polynomial changes sign across it. The
closed-form roots only seed a Newton iteration safeguarded by bisection inside
each piece.
"""
from __future__ import annotations

import numpy as np

__all__ = ["cubic_real_roots", "closed_form_roots", "smallest_nonnegative_root"]

_EPS = np.finfo(float).eps


def closed_form_roots(A, B, C) -> np.ndarray:
    """Depressed-cubic closed form for monic ``x^3 + A x^2 + B x + C`` (1-D inputs).

    Returns ``(n, 3)`` with NaN for roots the discriminant classifies as complex.
    """
    p = B - A * A / 3.0
    q = (2.0 * A * A * A) / 27.0 - A * B / 3.0 + C
    h = (q / 2.0) ** 2 + (p / 3.0) ** 3

    t = np.full((A.size, 3), np.nan)
    three = h <= 0
    if np.any(three):
        pp, qq = p[three], q[three]
        m = np.sqrt(np.maximum(-pp / 3.0, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(m > 0, (-qq / 2.0) / (m * m * m), 0.0)
        phi = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
        for k in range(3):
            t[three, k] = 2.0 * m * np.cos(phi - 2.0 * np.pi * k / 3.0)
    one = ~three
    if np.any(one):
        pp, qq, sh = p[one], q[one], np.sqrt(h[one])
        # pick the sign that avoids cancellation, then recover the partner term
        u = np.cbrt(-qq / 2.0 - np.copysign(sh, qq))
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(u != 0, -pp / (3.0 * u), 0.0)
        t[one, 0] = u + v
    return t - A[:, None] / 3.0


def _prepare(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, d)))
    shape = a.shape
    if np.any(a == 0):
        raise ValueError("leading coefficient must be non-zero")
    flip = np.where(a < 0, -1.0, 1.0).ravel()
    a, b, c, d = (flip * v.ravel() for v in (a, b, c, d))
    return shape, a, b, c, d


def _eval(a, b, c, d, x):
    return ((a * x + b) * x + c) * x + d


def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, al * bl - (((p - ah * bh) - al * bh) - ah * bl)


def _split(a):
    t = 134217729.0 * a
    hi = t - (t - a)
    return hi, a - hi


def _eval_compensated(a, b, c, d, x):
    """Horner evaluation with error-free transformations, nearly exact for moderate conditioning."""
    s, err = a, np.zeros_like(x)
    for coef in (b, c, d):
        p, pe = _two_prod(s, x)
        s, se = _two_sum(p, coef)
        err = err * x + (pe + se)
    return s + err


def _polish(a, b, c, d, x, lo, hi):
    """Replace each root by whichever of it and its two float neighbours has the smallest residual."""
    cands = np.stack([np.nextafter(x, -np.inf), x, np.nextafter(x, np.inf)], axis=1)
    cands = np.clip(cands, lo[:, None], hi[:, None])
    with np.errstate(over="ignore", invalid="ignore"):
        res = np.abs(_eval_compensated(a[:, None], b[:, None], c[:, None], d[:, None], cands))
    res = np.where(np.isfinite(res), res, np.inf)
    res[:, 1] = np.where(np.isfinite(res[:, 1]), res[:, 1], 0.0)
    best = np.argmin(res[:, [1, 0, 2]], axis=1)
    return cands[np.arange(x.size), np.array([1, 0, 2])[best]]


def _critical_points(a, b, c):
    """Sorted roots of ``3a x^2 + 2b x + c``, both NaN when there are fewer than two."""
    disc = b * b - 3.0 * a * c
    has = disc > 0
    sq = np.sqrt(np.where(has, disc, 0.0))
    big = -(b + np.copysign(sq, b)) / (3.0 * a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        small = np.where(big != 0, c / (3.0 * a * big), 0.0)
    x1 = np.where(has, np.minimum(big, small), np.nan)
    x2 = np.where(has, np.maximum(big, small), np.nan)
    return x1, x2


def _cauchy_bound(a, b, c, d):
    return 1.0 + np.maximum(np.maximum(np.abs(b), np.abs(c)), np.abs(d)) / a


def _refine(a, b, c, d, lo, hi, seeds, max_iter=100):
    """Root inside ``[lo, hi]`` for cubics (``a > 0``) that change sign across it.

    Stops per element once the residual is at the rounding level of the
    polynomial evaluation or the bracket has collapsed.
    """
    s_lo = np.sign(_eval(a, b, c, d, lo))
    inside = (seeds >= lo[:, None]) & (seeds <= hi[:, None])
    pick = np.where(inside, seeds, np.inf).min(axis=1)
    x = np.where(inside.any(axis=1), pick, 0.5 * (lo + hi))
    idx = np.arange(x.size)
    for _ in range(max_iter):
        ai, bi, ci, di, xi = a[idx], b[idx], c[idx], d[idx], x[idx]
        fx = _eval(ai, bi, ci, di, xi)
        noise = 8.0 * _EPS * (((np.abs(ai) * np.abs(xi) + np.abs(bi)) * np.abs(xi) + np.abs(ci)) * np.abs(xi) + np.abs(di))
        same = np.sign(fx) == s_lo[idx]
        lo[idx] = np.where(same, xi, lo[idx])
        hi[idx] = np.where(same, hi[idx], xi)
        df = (3.0 * ai * xi + 2.0 * bi) * xi + ci
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            newton = xi - fx / df
        ok = np.isfinite(newton) & (newton > lo[idx]) & (newton < hi[idx])
        nxt = np.where(ok, newton, 0.5 * (lo[idx] + hi[idx]))
        done = np.abs(fx) <= noise
        x[idx] = np.where(done, xi, nxt)
        tol = 4.0 * _EPS * np.abs(xi) + np.finfo(float).tiny
        moving = ~done & (np.abs(nxt - xi) > tol) & (hi[idx] - lo[idx] > tol)
        idx = idx[moving]
        if idx.size == 0:
            break
    return x


def _roots_on_pieces(a, b, c, d, points, first_only=False):
    """Scan consecutive breakpoints; each monotone piece holds at most one root.

    Returns ``(roots, found)`` of shape ``(n, pieces)``. A root sitting exactly
    on a breakpoint belongs to the piece that starts there.
    """
    pts = np.stack(points, axis=1)
    vals = _eval(a[:, None], b[:, None], c[:, None], d[:, None], pts)
    u, v, fu, fv = pts[:, :-1], pts[:, 1:], vals[:, :-1], vals[:, 1:]
    on_u = (fu == 0) & (v >= u)
    on_u[:, 1:] &= u[:, 1:] != u[:, :-1]
    cross = ~on_u & (v > u) & (np.sign(fu) * np.sign(fv) < 0)
    found = on_u | cross
    if first_only:
        found &= np.cumsum(found, axis=1) == 1
        on_u &= found
        cross &= found
    roots = np.where(on_u, u, np.nan)
    if np.any(cross):
        rows, cols = np.nonzero(cross)
        lo, hi = u[rows, cols], v[rows, cols]
        ar, br, cr, dr = a[rows], b[rows], c[rows], d[rows]
        seeds = closed_form_roots(br / ar, cr / ar, dr / ar)
        x = _refine(ar, br, cr, dr, lo.copy(), hi.copy(), seeds)
        roots[rows, cols] = _polish(ar, br, cr, dr, x, lo, hi)
    return roots, found


def cubic_real_roots(a, b, c, d) -> np.ndarray:
    """Real roots of ``a x^3 + b x^2 + c x + d`` (``a != 0``).

    Inputs broadcast together. Returns an array of shape ``broadcast + (3,)``
    sorted ascending with NaN in place of missing roots. A double root where the
    polynomial only touches zero is reported once.
    """
    shape, a, b, c, d = _prepare(a, b, c, d)
    bound = _cauchy_bound(a, b, c, d)
    x1, x2 = _critical_points(a, b, c)
    none = np.isnan(x1)
    x1 = np.where(none, -bound, x1)
    x2 = np.where(none, -bound, x2)
    roots, _ = _roots_on_pieces(a, b, c, d, [-bound, x1, x2, bound])
    roots.sort(axis=1)  # NaN sorts last
    return roots.reshape(shape + (3,))


def smallest_nonnegative_root(a, b, c, d):
    """Smallest real root ``>= 0`` of ``a x^3 + b x^2 + c x + d``.

    Returns ``(root, found)``; ``root`` is 0 where ``found`` is False.
    """
    shape, a, b, c, d = _prepare(a, b, c, d)
    bound = _cauchy_bound(a, b, c, d)
    x1, x2 = _critical_points(a, b, c)
    zero = np.zeros_like(a)
    k1 = np.where(x1 > 0, x1, zero)
    k2 = np.where(x2 > 0, x2, zero)
    roots, found = _roots_on_pieces(a, b, c, d, [zero, k1, k2, bound], first_only=True)
    hit = found.any(axis=1)
    root = np.where(hit, np.where(found, roots, np.inf).min(axis=1), 0.0)
    return root.reshape(shape), hit.reshape(shape)
