"""Small dense SPD matrix helpers and ellipsoid containment checks.

Ellipsoids are stored by their *shape* matrix ``M`` so that the set is
``{y : y^T M y <= 1}``.  A covariance ``P`` therefore corresponds to the
ellipsoid with shape ``inv(P)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import EmptyList, InvalidSize, NoSampleInIntersection, NotPositiveDefinite

SYMMETRY_RTOL = 1e-12
VIOLATION_TOL = 1e-9


def symmetrize(a) -> np.ndarray:
    """Return ``(A + A^T) / 2`` as a float array; rejects non-square input."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidSize(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def is_symmetric(a: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= SYMMETRY_RTOL * scale)


def as_spd(a) -> np.ndarray:
    """Symmetrize ``a`` and verify it is positive definite."""
    s = symmetrize(a)
    cholesky(s)
    return s


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises:
        NotPositiveDefinite: if a pivot is not strictly positive.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def spd_inverse(a) -> np.ndarray:
    L = cholesky(a)
    inv = cho_solve((L, True), np.eye(L.shape[0]))
    return 0.5 * (inv + inv.T)


def logdet_spd(a) -> float:
    """``log det(a)`` from the Cholesky pivots (no overflow for large entries)."""
    L = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class Ellipsoid:
    """``{y : y^T shape y <= 1}``."""

    shape: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shape", as_spd(self.shape))

    @classmethod
    def from_covariance(cls, P) -> "Ellipsoid":
        return cls(spd_inverse(P))

    @property
    def dim(self) -> int:
        return self.shape.shape[0]

    def boundary(self, n_points: int = 200) -> np.ndarray:
        """Points on the boundary of a 2-D ellipsoid, shape ``(n_points, 2)``."""
        if self.dim != 2:
            raise InvalidSize("boundary() is only defined for n = 2")
        # y = L^{-T} u with |u| = 1 where shape = L L^T
        L = cholesky(self.shape)
        theta = np.linspace(0.0, 2.0 * np.pi, n_points)
        u = np.stack([np.cos(theta), np.sin(theta)])
        return np.linalg.solve(L.T, u).T


@dataclass(frozen=True)
class SpectralBounds:
    sigma_lo: float
    sigma_hi: float
    p_max: float


def spectral_bounds(P_list) -> SpectralBounds:
    """Constants with ``sigma_lo I <= inv(P_i) <= sigma_hi I`` and ``p_max >= |P_i[j, k]|``."""
    if len(P_list) == 0:
        raise EmptyList("spectral_bounds needs at least one matrix")
    lo, hi, p = np.inf, -np.inf, 0.0
    for P in P_list:
        P = as_spd(P)
        ev = np.linalg.eigvalsh(P)
        # eigenvalues of inv(P) are reciprocals
        lo = min(lo, 1.0 / ev[-1])
        hi = max(hi, 1.0 / ev[0])
        p = max(p, float(np.max(np.abs(P))))
    return SpectralBounds(float(lo), float(hi), p)


@dataclass
class ContainmentReport:
    accepted: int
    drawn: int
    max_value: float
    violations: int
    bound: float | None = None
    bound_violations: int | None = None

    @property
    def contained(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "drawn": self.drawn,
            "max_value": self.max_value,
            "violations": self.violations,
            "bound": self.bound,
            "bound_violations": self.bound_violations,
        }


def _intersection_box(P_list) -> np.ndarray:
    # E(P) lies in the box |y_k| <= sqrt(P[k, k]); the intersection lies in the tightest such box
    half = np.min(np.stack([np.sqrt(np.diag(np.asarray(P, float))) for P in P_list]), axis=0)
    return half


def contains_intersection_sampled(
    outer: Ellipsoid,
    P_list,
    samples: int = 10_000,
    seed: int = 0,
    max_draws: int | None = None,
    bound: float | None = None,
) -> ContainmentReport:
    """Monte-Carlo check that ``outer`` covers the intersection of the ``E(P_i)``.

    Points are drawn uniformly in a box enclosing the intersection until
    ``samples`` of them land inside every ``E(P_i)`` (or ``max_draws`` is hit).
    A violation is a kept point with ``y^T outer.shape y > 1 + 1e-9``.  If
    ``bound`` is given (e.g. ``s(x)``), kept points are also checked against it.
    """
    if samples < 1:
        raise InvalidSize("samples must be >= 1")
    P_list = [np.asarray(P, float) for P in P_list]
    if len(P_list) == 0:
        raise EmptyList("no ellipsoids to intersect")
    n = outer.dim
    if any(P.shape != (n, n) for P in P_list):
        raise InvalidSize("dimension mismatch between outer ellipsoid and P_list")
    if max_draws is None:
        max_draws = 1000 * samples
    shapes = np.stack([spd_inverse(P) for P in P_list])
    half = _intersection_box(P_list)
    rng = np.random.default_rng(seed)

    kept = []
    n_kept = 0
    drawn = 0
    batch = max(1024, 4 * samples)
    while n_kept < samples and drawn < max_draws:
        m = min(batch, max_draws - drawn)
        y = rng.uniform(-half, half, size=(m, n))
        drawn += m
        vals = np.einsum("mi,kij,mj->mk", y, shapes, y)
        inside = y[np.all(vals <= 1.0, axis=1)]
        kept.append(inside)
        n_kept += len(inside)
    if n_kept == 0:
        raise NoSampleInIntersection(f"no point of {drawn} draws fell in the intersection")
    y = np.concatenate(kept)[:samples]
    q = np.einsum("mi,ij,mj->m", y, outer.shape, y)
    report = ContainmentReport(
        accepted=len(y),
        drawn=drawn,
        max_value=float(q.max()),
        violations=int(np.sum(q > 1.0 + VIOLATION_TOL)),
    )
    if bound is not None:
        report.bound = float(bound)
        report.bound_violations = int(np.sum(q > bound + VIOLATION_TOL))
    return report
