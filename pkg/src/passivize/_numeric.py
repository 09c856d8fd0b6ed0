"""Small numerical helpers shared across modules."""

from fractions import Fraction
import math

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# PSD acceptance: min eigenvalue >= -PSD_RTOL * (1 + ||A||)
PSD_RTOL = 1e-9
# entries with |x| <= SIGN_RTOL * ||M|| count as zero in sign tests
SIGN_RTOL = 1e-12
# |det| > SING_RTOL * max|entry|**n counts as invertible
SING_RTOL = 1e-12


def parse_number(text):
    """Parse a float, accepting fractions such as ``"2/3"`` or ``"-5/4"``."""
    text = str(text).strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def is_invertible(m):
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0:
        return False
    return abs(np.linalg.det(m)) > SING_RTOL * scale ** n


def min_eig_symmetric(a, sym_tol=1e-9, max_sweeps=100):
    """Smallest eigenvalue of a real symmetric matrix by cyclic Jacobi sweeps.

    Raises ``ValueError`` when ``a`` is not symmetric to ``sym_tol`` (relative
    to its largest entry).
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("min_eig_symmetric needs a square matrix")
    n = a.shape[0]
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    if scale == 0.0:
        return 0.0
    a = 0.5 * (a + a.T)
    if n == 1:
        return float(a[0, 0])
    if n == 2:
        # one Jacobi rotation diagonalises a 2x2; closed form of that rotation
        p, q, r = a[0, 0], a[0, 1], a[1, 1]
        mean = 0.5 * (p + r)
        rad = math.hypot(0.5 * (p - r), q)
        return float(mean - rad)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                diff = a[q, q] - a[p, p]
                if apq == 0.0 or abs(apq) <= 1e-18 * abs(diff):
                    # rotation angle below round-off: annihilate directly
                    a[p, q] = a[q, p] = 0.0
                    continue
                theta = diff / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
    return float(np.min(np.diag(a)))


def is_psd(a, rtol=PSD_RTOL):
    a = np.asarray(a, dtype=float)
    return min_eig_symmetric(a) >= -rtol * (1.0 + np.linalg.norm(a, 2))


def golden_max(f, lo, hi, iters=200, xtol=0.0):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= xtol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # endpoints matter when the maximiser sits on the boundary
    cands = [(fc, c), (fd, d), (f(lo), lo), (f(hi), hi)]
    best = max(cands, key=lambda p: p[0])
    return best[1], best[0]


def golden_min(f, lo, hi, iters=200, xtol=0.0):
    x, v = golden_max(lambda z: -f(z), lo, hi, iters, xtol)
    return x, -v
