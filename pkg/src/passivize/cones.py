"""Projective quadratic inequalities, their solution cones, and maps between them.

A pair of passivity indices ``(rho, nu)`` defines the quadratic form

    phi(xi, chi) = -nu * |xi|^2 + xi . chi - rho * |chi|^2

on stacked vectors ``[xi; chi]`` (input block first).  Its non-negative set is
a cone, and an I/O transformation ``T`` turns an I/O ``(rho, nu)``-passive
system into an I/O ``(rho*, nu*)``-passive one exactly when ``T`` maps the
first cone into the second.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._numeric import (
    PSD_RTOL,
    SIGN_RTOL,
    golden_max,
    is_invertible,
    min_eig_symmetric,
)

__all__ = [
    "PassivityIndexPair",
    "Pqi",
    "IoTransformation",
    "SisoCertificate",
    "MimoCertificate",
    "SingularTransformationError",
    "phi",
    "cone_contains",
    "pqi_matrix",
    "swap_form",
    "boundary_solutions",
    "build_s",
    "map_cone_into_cone",
    "decompose_siso",
    "is_same_sign",
    "check_siso",
    "kron_lift",
    "min_eig_symmetric",
    "riccati_lambda_search",
    "check_mimo",
    "block_relax_check",
    "sample_cone",
]


class SingularTransformationError(ValueError):
    """Raised when a transformation matrix is (numerically) singular."""


@dataclass(frozen=True)
class PassivityIndexPair:
    """Output index ``rho`` and input index ``nu``; requires ``rho * nu < 1/4``."""

    rho: float
    nu: float

    def __post_init__(self):
        rho, nu = float(self.rho), float(self.nu)
        if not (math.isfinite(rho) and math.isfinite(nu)):
            raise ValueError(f"passivity indices must be finite, got ({rho}, {nu})")
        if rho * nu >= 0.25:
            raise ValueError(f"indices violate rho*nu < 1/4: rho={rho}, nu={nu}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def coerce(cls, value):
        if isinstance(value, cls):
            return value
        rho, nu = value
        return cls(rho, nu)

    def to_list(self):
        return [self.rho, self.nu]


@dataclass(frozen=True)
class Pqi:
    """The ``dim``-dimensional inequality ``phi_{rho,nu}(xi, chi) >= 0``."""

    indices: PassivityIndexPair
    dim: int = 1

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("PQI dimension must be >= 1")
        object.__setattr__(self, "indices", PassivityIndexPair.coerce(self.indices))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def coefficients(self):
        """Normalised ``(a, b, c)`` of ``a|xi|^2 + b xi.chi + c|chi|^2``."""
        return (-self.indices.nu, 1.0, -self.indices.rho)

    def matrix(self):
        return pqi_matrix(self.indices, self.dim)

    def __call__(self, xi, chi):
        return phi(self.indices, xi, chi)

    def contains(self, xi, chi, tol=1e-9):
        return cone_contains(self.indices, self.dim, xi, chi, tol)


@dataclass(frozen=True, eq=False)
class IoTransformation:
    """Invertible ``2d x 2d`` matrix acting on stacked ``[u; y]``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"transformation must be 2d x 2d, got shape {m.shape}")
        if not is_invertible(m):
            raise SingularTransformationError("transformation matrix is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self):
        return self.matrix.shape[0] // 2

    @classmethod
    def coerce(cls, value):
        return value if isinstance(value, cls) else cls(value)

    def delta_blocks(self):
        """Gains ``(delta_A, delta_B, delta_C, delta_D)`` of the four-block
        realisation (SISO only): output feedback, post-gain, feedthrough,
        pre-gain."""
        if self.dim != 1:
            raise ValueError("delta-block form is defined for SISO transformations")
        a, b, c, d = self.matrix.ravel()
        if a == 0:
            raise ValueError("delta-block form needs a nonzero (1,1) entry")
        return b / a, d - (b / a) * c, c, a


@dataclass(frozen=True, eq=False)
class SisoCertificate:
    """``T = theta * S_target @ m @ inv(S_source)`` with ``m >= 0`` entrywise."""

    m: np.ndarray
    theta: int

    def to_dict(self):
        return {"m": np.asarray(self.m).tolist(), "theta": int(self.theta)}


@dataclass(frozen=True, eq=False)
class MimoCertificate:
    """``m.T @ J @ m - lam * J`` is positive semidefinite."""

    m: np.ndarray
    lam: float

    def to_dict(self):
        return {"m": np.asarray(self.m).tolist(), "lambda": float(self.lam)}


def _as_matrix(t):
    if isinstance(t, IoTransformation):
        return t.matrix
    return np.asarray(t, dtype=float)


def _checked_transformation(t):
    m = _as_matrix(t)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
        raise ValueError(f"transformation must be 2d x 2d, got shape {m.shape}")
    if not is_invertible(m):
        raise SingularTransformationError("transformation matrix is singular")
    return m


def phi(indices, xi, chi):
    """Evaluate ``-nu|xi|^2 + xi.chi - rho|chi|^2``."""
    ind = PassivityIndexPair.coerce(indices)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    chi = np.atleast_1d(np.asarray(chi, dtype=float))
    if xi.shape != chi.shape:
        raise ValueError(f"dimension mismatch: xi {xi.shape} vs chi {chi.shape}")
    return float(-ind.nu * xi @ xi + xi @ chi - ind.rho * chi @ chi)


def cone_contains(indices, dim, xi, chi, tol=1e-9):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    chi = np.atleast_1d(np.asarray(chi, dtype=float))
    if xi.shape != (dim,) or chi.shape != (dim,):
        raise ValueError(f"expected vectors of length {dim}, got {xi.shape} and {chi.shape}")
    return phi(indices, xi, chi) >= -tol * (xi @ xi + chi @ chi)


def pqi_matrix(indices, d=1):
    """Symmetric ``Q`` with ``[xi; chi]^T Q [xi; chi] = phi(xi, chi)``."""
    ind = PassivityIndexPair.coerce(indices)
    q = np.array([[-ind.nu, 0.5], [0.5, -ind.rho]])
    return np.kron(q, np.eye(d))


def swap_form(d=1):
    """``J = [[0, I/2], [I/2, 0]]``, the form of ``C_{0,0,d}``."""
    return pqi_matrix((0.0, 0.0), d)


def boundary_solutions(indices):
    """Two non-colinear zeros of ``phi`` used to build ``S_{rho,nu}``.

    For ``nu != 0`` the zeros lie on the lines ``xi = a1 chi`` and
    ``xi = a2 chi``.  For ``nu < 0`` the pair ``(-a2, -1), (a1, 1)`` is
    returned; for ``nu > 0`` the pair ``(a2, 1), (-a1, -1)``, which makes the
    resulting matrix coincide with the usual closed form instead of its
    negative.  For ``nu = 0`` the pair is ``(1, 0), (rho, 1)``.
    """
    ind = PassivityIndexPair.coerce(indices)
    mu, tau = ind.rho, ind.nu
    if tau == 0.0:
        return np.array([1.0, 0.0]), np.array([mu, 1.0])
    r = math.sqrt(1.0 - 4.0 * tau * mu)
    a1 = (1.0 - r) / (2.0 * tau)
    a2 = (1.0 + r) / (2.0 * tau)
    if tau < 0.0:
        return np.array([-a2, -1.0]), np.array([a1, 1.0])
    return np.array([a2, 1.0]), np.array([-a1, -1.0])


def _cone_map(src_pts, dst_pts, src_ind, dst_ind):
    (p1, p2), (p3, p4) = src_pts, dst_pts
    alpha1 = phi(src_ind, p1[0] + p2[0], p1[1] + p2[1]) >= 0
    alpha2 = phi(dst_ind, p3[0] + p4[0], p3[1] + p4[1]) >= 0
    sign = 1.0 if alpha1 == alpha2 else -1.0
    dst = np.column_stack([p3, sign * p4])
    src = np.column_stack([p1, p2])
    return dst @ np.linalg.inv(src)


def build_s(indices):
    """Canonical matrix mapping ``C_{0,0}`` into ``C_{rho,nu}``.

    Closed form with ``R = sqrt(1 - 4 rho nu)``:

    * ``nu < 0``: ``[[-1-R, 1-R], [-2nu, 2nu]] / (2nu)``
    * ``nu > 0``: ``[[1+R, 1-R], [2nu, 2nu]] / (2nu)``
    * ``nu = 0``: ``[[1, rho], [0, 1]]``
    """
    ind = PassivityIndexPair.coerce(indices)
    mu, tau = ind.rho, ind.nu
    if tau == 0.0:
        return np.array([[1.0, mu], [0.0, 1.0]])
    r = math.sqrt(1.0 - 4.0 * tau * mu)
    if tau < 0.0:
        return np.array([[-1.0 - r, 1.0 - r], [-2.0 * tau, 2.0 * tau]]) / (2.0 * tau)
    return np.array([[1.0 + r, 1.0 - r], [2.0 * tau, 2.0 * tau]]) / (2.0 * tau)


def map_cone_into_cone(source, target):
    """A matrix mapping ``C_source`` into ``C_target`` built from boundary lines."""
    src = PassivityIndexPair.coerce(source)
    dst = PassivityIndexPair.coerce(target)
    return _cone_map(boundary_solutions(src), boundary_solutions(dst), src, dst)


def decompose_siso(t, source, target):
    """``inv(S_target) @ T @ S_source`` for a 2x2 transformation."""
    m = _checked_transformation(t)
    if m.shape != (2, 2):
        raise ValueError("decompose_siso needs a 2x2 transformation")
    s_src = build_s(source)
    s_dst = build_s(target)
    return np.linalg.solve(s_dst, m @ s_src)


def _zeroed(x, rtol=SIGN_RTOL):
    x = np.asarray(x, dtype=float)
    scale = np.max(np.abs(x)) if x.size else 0.0
    return np.where(np.abs(x) <= rtol * scale, 0.0, x)


def is_same_sign(x, rtol=SIGN_RTOL):
    """True when all nonzero entries of ``x`` share one sign."""
    x = _zeroed(x, rtol)
    return not (np.any(x > 0) and np.any(x < 0))


def check_siso(t, source, target):
    """Certificate ``(M, theta)`` for a SISO transformation, or ``None``."""
    x = decompose_siso(t, source, target)
    if not is_same_sign(x):
        return None
    xz = _zeroed(x)
    theta = -1 if np.any(xz < 0) else 1
    return SisoCertificate(m=theta * x, theta=theta)


def kron_lift(s, d):
    """``S (x) I_d`` acting on stacked ``[xi; chi]`` with ``xi, chi`` in R^d."""
    if int(d) < 1:
        raise ValueError("dimension must be >= 1")
    return np.kron(np.asarray(s, dtype=float), np.eye(int(d)))


def riccati_lambda_search(x, d=None, iters=200):
    """Find ``lam > 0`` with ``x.T J x - lam J`` positive semidefinite.

    ``g(lam) = lambda_min(x.T J x - lam J)`` is concave, so a golden-section
    search over ``(0, 4 ||x.T J x|| + 1]`` locates its maximum.  Returns the
    maximiser when ``g`` is non-negative there (up to tolerance), else ``None``.
    """
    x = np.asarray(x, dtype=float)
    if d is None:
        d = x.shape[0] // 2
    if x.shape != (2 * d, 2 * d):
        raise ValueError(f"expected a {2 * d}x{2 * d} matrix, got {x.shape}")
    if not is_invertible(x):
        raise SingularTransformationError("matrix is singular")
    j = swap_form(d)
    a = x.T @ j @ x
    a = 0.5 * (a + a.T)
    lam_max = 4.0 * np.linalg.norm(a, 2) + 1.0

    def g(lam):
        return min_eig_symmetric(a - lam * j)

    lam, val = golden_max(g, 0.0, lam_max, iters=iters, xtol=1e-15 * lam_max)
    if lam <= 0.0:
        return None
    norm = np.linalg.norm(a - lam * j, 2)
    if val >= -PSD_RTOL * (1.0 + norm):
        return float(lam)
    return None


def check_mimo(t, source, target):
    """Certificate ``(X, lam)`` for a ``2d x 2d`` transformation, or ``None``."""
    m = _checked_transformation(t)
    d = m.shape[0] // 2
    s_src = kron_lift(build_s(source), d)
    s_dst = kron_lift(build_s(target), d)
    x = np.linalg.solve(s_dst, m @ s_src)
    lam = riccati_lambda_search(x, d)
    if lam is None:
        return None
    return MimoCertificate(m=x, lam=lam)


def block_relax_check(alpha, beta, gamma, delta, d=1):
    """Same-sign test for the block-scalar ``[[alpha I, beta I], [gamma I, delta I]]``."""
    core = np.array([[alpha, beta], [gamma, delta]], dtype=float)
    if not is_invertible(core):
        raise SingularTransformationError("scalar block matrix is singular")
    if int(d) < 1:
        raise ValueError("dimension must be >= 1")
    return is_same_sign(core)


def sample_cone(indices, d, n, rng=None, radius=(0.1, 10.0)):
    """Draw ``n`` points of ``C_{rho,nu,d}`` as rows of a ``(n, 2d)`` array.

    Directions are uniform on the unit sphere (rejection on ``phi >= 0``) and
    radii uniform on ``radius``.
    """
    rng = np.random.default_rng(rng)
    q = pqi_matrix(indices, d)
    out = []
    have = 0
    while have < n:
        batch = rng.standard_normal((max(2 * (n - have), 64), 2 * d))
        batch /= np.linalg.norm(batch, axis=1, keepdims=True)
        keep = batch[np.einsum("ij,jk,ik->i", batch, q, batch) >= 0.0]
        out.append(keep)
        have += len(keep)
    pts = np.concatenate(out)[:n]
    return pts * rng.uniform(radius[0], radius[1], size=(n, 1))
