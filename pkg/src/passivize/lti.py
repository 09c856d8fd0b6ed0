"""SISO LTI plants: transfer functions, realisations, norms and passivity indices."""

from dataclasses import dataclass, field
import itertools
import math

import numpy as np

from ._numeric import PSD_RTOL, golden_max, golden_min, min_eig_symmetric
from .cones import PassivityIndexPair, _checked_transformation

__all__ = [
    "RationalTransferFunction",
    "StateSpaceModel",
    "FrequencyIndices",
    "RealizationSearch",
    "transform_tf",
    "poles",
    "zeros",
    "is_stable",
    "hinf_norm",
    "frequency_indices",
    "realize",
    "ss_to_tf",
    "dissipativity_matrix",
    "dissipativity_margin",
    "verify_dissipativity_fixed_storage",
    "max_rho_fixed_storage",
    "find_storage_realization",
    "l2_gain_input_index",
    "frequency_grid",
]

COEF_RTOL = 1e-12
ROOT_RTOL = 1e-8
STABILITY_TOL = 1e-9


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    c = np.where(np.abs(c) <= COEF_RTOL * scale, 0.0, c)
    nz = np.flatnonzero(c)
    return c[nz[0]:]


def _cancel_common_roots(num, den):
    if len(num) < 2 or len(den) < 2:
        return num, den
    zs = list(np.roots(num))
    ps = list(np.roots(den))
    kept_z = []
    cancelled = False
    for z in zs:
        hit = None
        for j, p in enumerate(ps):
            if abs(z - p) <= ROOT_RTOL * max(1.0, abs(p)):
                hit = j
                break
        if hit is None:
            kept_z.append(z)
        else:
            ps.pop(hit)
            cancelled = True
    if not cancelled:
        return num, den
    new_num = num[0] * np.real(np.poly(kept_z)) if kept_z else np.array([num[0]])
    new_den = np.real(np.poly(ps)) if ps else np.ones(1)
    return np.atleast_1d(new_num), np.atleast_1d(new_den)


@dataclass(frozen=True, eq=False)
class RationalTransferFunction:
    """``num(s) / den(s)``, coefficients in descending powers.

    Stored reduced: tiny coefficients dropped, common roots cancelled and the
    denominator made monic.  Improper inputs are rejected.
    """

    num: tuple
    den: tuple

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if not np.any(den):
            raise ValueError("denominator is identically zero")
        if not np.any(num):
            num, den = np.zeros(1), np.ones(1)
        else:
            num, den = num / den[0], den / den[0]
            num, den = _cancel_common_roots(num, den)
            num, den = _trim(num / den[0]), den / den[0]
        if len(num) > len(den):
            raise ValueError(
                f"transfer function is improper: deg num {len(num) - 1} > deg den {len(den) - 1}")
        object.__setattr__(self, "num", tuple(float(v) for v in num))
        object.__setattr__(self, "den", tuple(float(v) for v in den))

    @classmethod
    def from_zpk(cls, zeros_, poles_, gain):
        return cls(gain * np.real(np.poly(zeros_)), np.real(np.poly(poles_)))

    @classmethod
    def from_dict(cls, data):
        return cls(data["num"], data["den"])

    def to_dict(self):
        return {"num": list(self.num), "den": list(self.den)}

    @property
    def order(self):
        return len(self.den) - 1

    @property
    def relative_degree(self):
        return len(self.den) - len(self.num)

    def high_frequency_gain(self):
        """Limit of ``G(s)`` as ``|s| -> inf``."""
        return self.num[0] if self.relative_degree == 0 else 0.0

    def __call__(self, s):
        s = np.asarray(s)
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def freqresp(self, w):
        return self(1j * np.asarray(w, dtype=float))

    def scaled(self, k):
        return RationalTransferFunction(np.asarray(self.num) * k, self.den)

    def coefficients_close(self, other, tol=1e-9):
        if len(self.num) != len(other.num) or len(self.den) != len(other.den):
            return False
        return (np.allclose(self.num, other.num, rtol=0, atol=tol)
                and np.allclose(self.den, other.den, rtol=0, atol=tol))

    def __repr__(self):
        return f"RationalTransferFunction(num={list(self.num)}, den={list(self.den)})"


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """SISO realisation ``x' = A x + B u``, ``y = C x + D u``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        n = a.shape[0]
        if a.shape != (n, n):
            raise ValueError(f"A must be square, got {a.shape}")
        b = np.asarray(self.b, dtype=float).reshape(-1, 1)
        c = np.asarray(self.c, dtype=float).reshape(1, -1)
        if b.shape != (n, 1) or c.shape != (1, n):
            raise ValueError(f"dimension mismatch: A {a.shape}, B {b.shape}, C {c.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(np.asarray(self.d).reshape(-1)[0]))

    @property
    def order(self):
        return self.a.shape[0]

    def similar(self, w, label=""):
        """Realisation in coordinates ``x' = w x``."""
        w = np.asarray(w, dtype=float)
        wi = np.linalg.inv(w)
        return StateSpaceModel(w @ self.a @ wi, w @ self.b, self.c @ wi, self.d, label)

    def to_dict(self):
        return {"a": self.a.tolist(), "b": self.b.ravel().tolist(),
                "c": self.c.ravel().tolist(), "d": self.d}

    @classmethod
    def from_dict(cls, data):
        return cls(data["a"], data["b"], data["c"], data.get("d", 0.0))


class FrequencyIndices(tuple):
    """``(rho, nu)`` estimated on the imaginary axis.

    ``rho_degenerate`` is set when ``|G(jw)|`` vanished somewhere on the grid,
    in which case ``rho`` is the infimum over the remaining grid points
    (``+inf`` when ``G`` is identically zero).
    """

    def __new__(cls, rho, nu, rho_degenerate=False):
        obj = super().__new__(cls, (float(rho), float(nu)))
        obj.rho_degenerate = bool(rho_degenerate)
        return obj

    @property
    def rho(self):
        return self[0]

    @property
    def nu(self):
        return self[1]


def transform_tf(g, t):
    """Plant seen through ``[u~; y~] = T [u; y]``: ``(c + d G) / (a + b G)``."""
    m = _checked_transformation(t)
    if m.shape != (2, 2):
        raise ValueError("transform_tf needs a 2x2 transformation")
    (a, b), (c, d) = m
    n = len(g.den)
    num = np.concatenate([np.zeros(n - len(g.num)), g.num])
    den = np.asarray(g.den)
    new_den = a * den + b * num
    new_num = c * den + d * num
    if not np.any(np.abs(_trim(new_den)) > 0):
        raise ValueError("a + b*G is identically zero; transformed plant undefined")
    return RationalTransferFunction(new_num, new_den)


def poles(g):
    if len(g.den) < 2:
        return np.zeros(0, dtype=complex)
    return np.roots(g.den).astype(complex)


def zeros(g):
    if len(g.num) < 2:
        return np.zeros(0, dtype=complex)
    return np.roots(g.num).astype(complex)


def is_stable(g, tol=STABILITY_TOL):
    return bool(np.all(poles(g).real < -tol))


def frequency_grid(g, points=10_000, lo=1e-4, hi=1e4):
    """Log grid on ``[lo, hi]`` plus ``0`` and the pole/zero magnitudes."""
    w = np.logspace(math.log10(lo), math.log10(hi), points)
    extra = np.abs(np.concatenate([poles(g), zeros(g)]))
    extra = extra[np.isfinite(extra) & (extra > 0)]
    return np.unique(np.concatenate([[0.0], w, extra]))


def _refine(f, w, k, minimize):
    lo = w[max(k - 1, 0)]
    hi = w[min(k + 1, len(w) - 1)]
    if hi <= lo:
        return w[k], f(w[k])
    opt = golden_min if minimize else golden_max
    return opt(f, lo, hi, iters=200, xtol=1e-10 * max(hi, 1e-12))


def hinf_norm(g):
    """``sup_w |G(jw)|`` for a stable plant."""
    if not is_stable(g):
        raise ValueError("H-infinity norm requested for an unstable plant")
    w = frequency_grid(g)
    mag = np.abs(g.freqresp(w))
    k = int(np.argmax(mag))
    _, peak = _refine(lambda x: float(abs(g.freqresp(x))), w, k, minimize=False)
    return float(max(peak, mag[k], abs(g.high_frequency_gain())))


def _inverse_real_limit(g):
    """``lim_{w->inf} Re(1 / G(jw))``."""
    q, _ = np.polydiv(np.asarray(g.den), np.asarray(g.num))
    q = _trim(q)
    deg = len(q) - 1
    for k in range(deg - deg % 2, -1, -2):
        coef = q[deg - k] * (-1) ** (k // 2)
        if coef != 0.0:
            return coef if k == 0 else math.copysign(math.inf, coef)
    return 0.0


def frequency_indices(g, vanish_tol=1e-9):
    """Largest ``rho`` with ``Re G >= rho |G|^2`` and largest ``nu`` with
    ``Re G >= nu`` on the imaginary axis (stable plants only)."""
    if not is_stable(g):
        raise ValueError("frequency-domain indices need a stable plant")
    w = frequency_grid(g)
    resp = g.freqresp(w)

    re = resp.real
    k = int(np.argmin(re))
    _, nu = _refine(lambda x: float(g.freqresp(x).real), w, k, minimize=True)
    nu = min(nu, re[k], g.high_frequency_gain())

    mag = np.abs(resp)
    ok = mag > vanish_tol
    degenerate = not np.all(ok)
    if not np.any(ok):
        return FrequencyIndices(math.inf, nu, True)
    inv_re = np.where(ok, (1.0 / np.where(ok, resp, 1.0)).real, np.inf)
    k = int(np.argmin(inv_re))

    def inv_real(x):
        v = g.freqresp(x)
        return float((1.0 / v).real) if abs(v) > vanish_tol else math.inf

    _, rho = _refine(inv_real, w, k, minimize=True)
    rho = min(rho, inv_re[k], _inverse_real_limit(g))
    return FrequencyIndices(rho, nu, degenerate)


def l2_gain_input_index(beta):
    """Input passivity index ``-beta^2 - 1/4`` of a system with L2-gain ``beta``."""
    return -float(beta) ** 2 - 0.25


def realize(g):
    """Controllable canonical form of ``g``."""
    den = np.asarray(g.den)
    n = len(den) - 1
    num = np.concatenate([np.zeros(n + 1 - len(g.num)), g.num])
    d = num[0]
    rem = num - d * den
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), d,
                               "controllable canonical")
    a = np.zeros((n, n))
    a[:-1, 1:] = np.eye(n - 1)
    a[-1, :] = -den[1:][::-1]
    b = np.zeros((n, 1))
    b[-1, 0] = 1.0
    c = rem[1:][::-1].reshape(1, n)
    return StateSpaceModel(a, b, c, d, "controllable canonical")


def ss_to_tf(ss):
    """Transfer function of a SISO realisation.

    Uses ``det(sI - A + BC) = det(sI - A) (1 + C (sI - A)^-1 B)``.
    """
    if ss.order == 0:
        return RationalTransferFunction([ss.d], [1.0])
    den = np.poly(ss.a)
    num = np.poly(ss.a - ss.b @ ss.c) - den + ss.d * den
    return RationalTransferFunction(np.real(num), np.real(den))


def dissipativity_matrix(ss, indices):
    """Symmetric ``Q`` on ``[x; u]`` with
    ``[x; u]^T Q [x; u] = u y - rho y^2 - nu u^2 - x^T (A x + B u)``."""
    ind = PassivityIndexPair.coerce(indices)
    rho, nu = ind.rho, ind.nu
    a, b, c, d = ss.a, ss.b, ss.c, ss.d
    qxx = -0.5 * (a + a.T) - rho * (c.T @ c)
    qxu = 0.5 * (c.T * (1.0 - 2.0 * rho * d) - b)
    quu = d - rho * d * d - nu
    return np.block([[qxx, qxu], [qxu.T, np.array([[quu]])]])


def dissipativity_margin(ss, indices):
    """``lambda_min(Q) + tol``; non-negative exactly when verification passes."""
    q = dissipativity_matrix(ss, indices)
    return min_eig_symmetric(q) + PSD_RTOL * (1.0 + np.linalg.norm(q, 2))


def verify_dissipativity_fixed_storage(ss, indices):
    """Check ``d/dt (|x|^2 / 2) <= u y - rho y^2 - nu u^2`` along all trajectories."""
    return dissipativity_margin(ss, indices) >= 0.0


def max_rho_fixed_storage(ss, nu, lo=-1e6, tol=1e-6):
    """Largest ``rho`` passing fixed-storage verification at input index ``nu``.

    ``Q`` decreases in ``rho`` (it subtracts ``rho y^2``), so the feasible set
    is an interval ``(-inf, rho_max]`` and bisection applies.  Returns
    ``-inf`` when even ``rho = lo`` fails.  ``rho`` is capped just below
    ``1/(4 nu)`` for ``nu > 0``.
    """
    nu = float(nu)
    hi = 1e6
    if nu > 0:
        hi = min(hi, 0.25 / nu * (1.0 - 1e-12))
    if nu < 0:
        lo = max(lo, 0.25 / nu * (1.0 - 1e-12))

    def ok(rho):
        return verify_dissipativity_fixed_storage(ss, PassivityIndexPair(rho, nu))

    if not ok(lo):
        return -math.inf
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class RealizationSearch:
    """Outcome of searching realisations for one fixed-storage certificate."""

    found: bool
    model: StateSpaceModel | None
    method: str
    margin: float
    tried: list = field(default_factory=list)

    def report(self):
        status = "passed" if self.found else "FAILED"
        return f"{status} via {self.method} (margin {self.margin:.3e}); tried: {', '.join(self.tried)}"


def _kyp_storage(ss, indices, floor):
    """Storage matrix ``P >= floor*I`` maximising the KYP margin (needs cvxpy)."""
    import cvxpy as cp

    ind = PassivityIndexPair.coerce(indices)
    rho, nu = ind.rho, ind.nu
    a, b, c, d = ss.a, ss.b, ss.c, ss.d
    n = ss.order
    p = cp.Variable((n, n), symmetric=True)
    t = cp.Variable()
    ct = c.T * (1.0 - 2.0 * rho * d)
    r = d - rho * d * d - nu
    off = 0.5 * (ct - p @ b)
    k = cp.bmat([[-(a.T @ p + p @ a) / 2 - rho * (c.T @ c), off],
                 [off.T, np.array([[r]])]])
    cons = [(k + k.T) / 2 >> t * np.eye(n + 1), p >> floor * np.eye(n),
            cp.trace(p) <= 1e3 * n]
    if abs(r) <= 1e-12:
        # a zero (u, u) entry forces the (x, u) block to vanish
        cons.append(p @ b == ct)
    prob = cp.Problem(cp.Maximize(t), cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return None
    if p.value is None:
        return None
    return 0.5 * (p.value + p.value.T)


def find_storage_realization(g, indices, scalings=range(-6, 7), kyp_floors=(1.0, 1e-1, 1e-2, 1e-3)):
    """Search realisations of ``g`` that pass fixed-storage verification.

    The search class, in order:

    1. the controllable canonical form,
    2. its diagonal rescalings ``diag(2**k_i)`` with ``k_i`` in ``scalings``
       (systems of order <= 3),
    3. coordinates ``x' = W x`` with ``W^T W = P``, where ``P >= floor*I``
       maximises the margin of the dissipation LMI, for each floor in
       ``kyp_floors``.

    The first realisation that passes is returned; otherwise ``found`` is
    False and ``report()`` lists what was tried.
    """
    ind = PassivityIndexPair.coerce(indices)
    base = realize(g)
    tried = ["controllable canonical"]
    best = (dissipativity_margin(base, ind), base, "controllable canonical")
    if best[0] >= 0:
        return RealizationSearch(True, base, best[2], best[0], tried)

    n = base.order
    if 1 <= n <= 3:
        tried.append(f"diagonal scalings 2^k, k in [{min(scalings)}, {max(scalings)}]")
        for ks in itertools.product(scalings, repeat=n):
            w = np.diag([2.0 ** k for k in ks])
            label = f"controllable canonical, diag scaling 2^{list(ks)}"
            cand = base.similar(w, label)
            m = dissipativity_margin(cand, ind)
            if m > best[0]:
                best = (m, cand, label)
            if m >= 0:
                return RealizationSearch(True, cand, label, m, tried)

    for floor in kyp_floors:
        tried.append(f"KYP coordinates (P >= {floor:g} I)")
        p = _kyp_storage(base, ind, floor)
        if p is None:
            continue
        try:
            w = np.linalg.cholesky(p).T
        except np.linalg.LinAlgError:
            continue
        label = f"KYP coordinates (P >= {floor:g} I)"
        cand = base.similar(w, label)
        m = dissipativity_margin(cand, ind)
        if m > best[0]:
            best = (m, cand, label)
        if m >= 0:
            return RealizationSearch(True, cand, label, m, tried)
    return RealizationSearch(False, best[1], best[2], best[0], tried)
