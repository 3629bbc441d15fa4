"""
Strict-positivity linear feasibility, convex-hull membership and affine rank.

Everything downstream that asks "is there a strictly positive solution" goes through
solve_strict: condition (NA), the two insider systems, and the interior check of the
holding-time system. LPs are solved with scipy's HiGHS dual simplex, which returns
vertex solutions deterministically.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Literal, Sequence

import numpy as np
from scipy.optimize import linprog, nnls

logger = logging.getLogger(__name__)

POS_EPS = 1e-9
RANK_RTOL = 1e-9
RESIDUAL_TOL = 1e-9
TIME_TOL = 1e-9
HULL_TOL = 1e-9

LP_METHOD = "highs-ds"

CertificateKind = Literal["strict", "weak"]


class NumericalFailure(RuntimeError):
    """The LP backend failed, or a returned witness/certificate did not re-verify."""


@dataclass(frozen=True)
class FeasibilitySolution:
    status: Literal["interior_feasible", "infeasible"]
    witness: np.ndarray | None = None
    certificate: np.ndarray | None = None
    certificate_kind: CertificateKind | None = None
    slack: float | None = None

    @property
    def feasible(self) -> bool:
        return self.status == "interior_feasible"

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "witness": None if self.witness is None else self.witness.tolist(),
            "certificate": None if self.certificate is None else self.certificate.tolist(),
            "certificate_kind": self.certificate_kind,
            "slack": self.slack,
        }


@dataclass(frozen=True)
class TimeBounds:
    """Closure bounds of the first holding time over the solution set of the holding-time system."""

    t_lo: float
    t_hi: float
    horizon: float
    interior: bool        # the open system (all holding times > 0) is feasible
    slack: float | None

    @property
    def determined(self) -> bool:
        return abs(self.t_hi - self.t_lo) <= TIME_TOL * max(1.0, self.horizon)

    def to_dict(self) -> dict[str, Any]:
        return {
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "determined": self.determined,
            "interior": self.interior,
            "slack": self.slack,
        }


def _as_system(A: Any, b: Any) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(b, dtype=float).ravel()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        A = A.reshape(b.size, -1)
    if A.shape[0] != b.size:
        raise ValueError(f"dimension mismatch: A has {A.shape[0]} rows, b has {b.size} entries")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise ValueError("linear system has non-finite entries")
    return A, b


def _tol(b: np.ndarray) -> float:
    return RESIDUAL_TOL * max(1.0, float(np.abs(b).max(initial=0.0)))


def _reduce_equalities(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """
    Replace Ax = b by an equivalent full-row-rank system, or None when it is inconsistent.

    Redundant rows (a repeated asset, parallel drift rows) would otherwise be decided by the
    LP backend's feasibility tolerance instead of ours.
    """
    if A.shape[0] == 0:
        return A, b
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return (A[:0], b[:0]) if np.abs(b).max() <= _tol(b) else None
    r = int(np.sum(s > RANK_RTOL * s[0]))
    ur = u[:, :r]
    b_red = ur.T @ b
    if np.abs(b - ur @ b_red).max() > _tol(b):
        return None
    return s[:r, np.newaxis] * vt[:r], b_red


def _linprog(c, *, what: str, **kwargs):
    res = linprog(c, method=LP_METHOD, **kwargs)
    match res.status:
        case 0:
            return res
        case 2:
            return None
        case _:
            raise NumericalFailure(f"{what}: LP backend returned status {res.status} ({res.message})")


def _default_scale(A: np.ndarray) -> np.ndarray:
    col = np.abs(A).max(axis=0, initial=0.0)
    return np.where(col > 0, 1.0 / np.where(col > 0, col, 1.0), 1.0)


def solve_strict(
    A: Any,
    b: Any,
    scale: Sequence[float] | np.ndarray | None = None,
    *,
    certify: bool = True,
) -> FeasibilitySolution:
    """
    Decide whether Ax = b has a solution with every x_j > 0.

    The LP maximizes t subject to Ax = b and x_j / scale_j ≥ t with t ≤ 1, then among the
    max-slack points takes the one with the smallest Σ x_j / scale_j. Strict feasibility means
    optimal t ≥ POS_EPS. With no variables the system is feasible iff b = 0.

    Args:
        A: (m, p) matrix
        b: length-m right-hand side
        scale: positive reference point for the variables; defaults to 1/max|column|
        certify: compute a separating certificate when infeasible

    Returns:
        FeasibilitySolution with a re-verified witness or certificate
    """
    A, b = _as_system(A, b)
    m, p = A.shape

    if p == 0:
        if np.abs(b).max(initial=0.0) <= _tol(b):
            return FeasibilitySolution("interior_feasible", witness=np.zeros(0), slack=1.0)
        return _infeasible(A, b, None, certify)

    s = _default_scale(A) if scale is None else np.asarray(scale, dtype=float).ravel()
    if s.shape != (p,) or np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError(f"scale must be {p} positive finite numbers, got {s}")
    A_s = A * s

    reduced = _reduce_equalities(A_s, b)
    if reduced is None:
        return _infeasible(A_s, b, None, certify)
    A_red, b_red = reduced

    # variables (y_1..y_p, t); t - y_j <= 0
    a_ub = np.hstack([-np.eye(p), np.ones((p, 1))])
    b_ub = np.zeros(p)
    a_eq = np.hstack([A_red, np.zeros((A_red.shape[0], 1))]) if A_red.shape[0] else None
    b_eq = b_red if A_red.shape[0] else None
    bounds = [(0, None)] * p + [(None, 1.0)]
    c = np.zeros(p + 1)
    c[-1] = -1.0
    res = _linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, what="max-slack")
    if res is None:
        return _infeasible(A_s, b, None, certify)
    t_star = float(-res.fun)
    if t_star < POS_EPS:
        return _infeasible(A_s, b, t_star, certify)

    c2 = np.append(np.ones(p), 0.0)
    bounds2 = [(0, None)] * p + [(t_star * (1 - 1e-9), 1.0)]
    res2 = _linprog(c2, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds2, what="min-norm")
    y = (res2 if res2 is not None else res).x[:p]
    x = s * y

    if m:
        dx = np.linalg.lstsq(A, b - A @ x, rcond=None)[0]
        if np.min((x + dx) / s) >= POS_EPS:
            x = x + dx
        residual = float(np.abs(A @ x - b).max())
        if residual > _tol(b):
            raise NumericalFailure(f"witness residual {residual:.3e} exceeds tolerance")
    slack = float(np.min(x / s))
    logger.debug(f"solve_strict: feasible, slack={slack:.3g}, p={p}, m={m}")
    return FeasibilitySolution("interior_feasible", witness=x, slack=slack)


def _infeasible(A_s: np.ndarray, b: np.ndarray, slack: float | None, certify: bool) -> FeasibilitySolution:
    if not certify:
        return FeasibilitySolution("infeasible", slack=slack)
    xi, kind = separating_certificate(A_s, b)
    logger.debug(f"solve_strict: infeasible, {kind} certificate {np.round(xi, 6)}")
    return FeasibilitySolution("infeasible", certificate=xi, certificate_kind=kind, slack=slack)


def separating_certificate(A: Any, b: Any) -> tuple[np.ndarray, CertificateKind]:
    """
    A vector ξ proving that Ax = b has no strictly positive solution.

    Strict first: ξᵀA > 0 and ξᵀb < 0 (or only ξᵀA > 0 when b = 0). Otherwise weak:
    ξᵀA ≥ 0 and ξᵀb ≤ 0 with the pair not identically zero. ξ is normalized to max|ξ| = 1.
    The sign conditions only depend on the direction of each column, so a column-scaled A
    gives the same certificates.
    """
    A, b = _as_system(A, b)
    m, p = A.shape
    if m == 0:
        raise NumericalFailure("a system without equations is always feasible; no certificate exists")
    homogeneous = np.abs(b).max() <= _tol(b)
    g = A.T  # (p, m)

    def split(rows: np.ndarray) -> np.ndarray:
        # ξ = u - v with u, v >= 0
        return np.hstack([rows, -rows])

    c = np.ones(2 * m)
    bounds = [(0, None)] * (2 * m)

    # strict: -ξᵀA_j <= -1, ξᵀb <= -1
    rows = [split(-g)]
    rhs = [-np.ones(p)]
    if not homogeneous:
        rows.append(split(b[np.newaxis, :]))
        rhs.append([-1.0])
    res = _linprog(c, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=bounds, what="strict certificate")
    kind: CertificateKind = "strict"

    if res is None:
        # weak: ξᵀA >= 0, ξᵀb <= 0, Σ_j ξᵀA_j - ξᵀb = 1
        rows = [split(-g), split(b[np.newaxis, :])]
        norm_row = split((g.sum(axis=0) - b)[np.newaxis, :])
        res = _linprog(
            c, A_ub=np.vstack(rows), b_ub=np.zeros(p + 1), A_eq=norm_row, b_eq=[1.0],
            bounds=bounds, what="weak certificate",
        )
        kind = "weak"
    if res is None:
        raise NumericalFailure("system is numerically marginal: neither a witness nor a certificate was found")

    xi = res.x[:m] - res.x[m:]
    xi = xi / np.abs(xi).max()
    if not verify_certificate(A, b, xi, kind):
        raise NumericalFailure(f"{kind} certificate failed re-verification")
    return xi, kind


def verify_certificate(A: Any, b: Any, xi: Any, kind: CertificateKind = "strict") -> bool:
    """Check the sign conditions of a separating certificate."""
    A, b = _as_system(A, b)
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.shape != (A.shape[0],):
        raise ValueError(f"certificate has {xi.size} entries, system has {A.shape[0]} equations")
    xa = xi @ A
    xb = float(xi @ b)
    homogeneous = np.abs(b).max(initial=0.0) <= _tol(b)
    if kind == "strict":
        return bool(np.all(xa > 0) and (homogeneous or xb < 0))
    tol = RESIDUAL_TOL
    nonzero = xa.max(initial=0.0) > tol or xb < -tol
    return bool(np.all(xa >= -tol) and xb <= tol and nonzero)


def affine_dim(points: Sequence[Sequence[float]] | np.ndarray) -> int:
    """
    Affine dimension of a finite point set: rank of (x_k − x_0).

    Singular values at or below RANK_RTOL × max(largest singular value, point magnitude)
    count as zero, so points that agree up to rounding collapse to one.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, np.newaxis] if pts.size else pts.reshape(0, 1)
    if pts.shape[0] == 0:
        raise ValueError("affine_dim needs at least one point")
    diffs = pts[1:] - pts[0]
    if diffs.size == 0:
        return 0
    sv = np.linalg.svd(diffs, compute_uv=False)
    floor = RANK_RTOL * max(float(sv.max()), 1.0, float(np.abs(pts).max()))
    return int(np.sum(sv > floor))


def hull_member(vertices: Sequence[Sequence[float]] | np.ndarray, ell: Sequence[float] | np.ndarray) -> bool:
    """True iff ell lies in the closed convex hull of the vertices (nonnegative least squares)."""
    v = np.atleast_2d(np.asarray(vertices, dtype=float))
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    if v.shape[0] == 0:
        raise ValueError("hull_member needs at least one vertex")
    if v.shape[1] != ell.size:
        raise ValueError(f"dimension mismatch: vertices are {v.shape[1]}-dimensional, ell has {ell.size} entries")
    # convex weights: append a row of ones for Σw = 1
    m = np.vstack([v.T, np.ones((1, v.shape[0]))])
    target = np.append(ell, 1.0)
    _, rnorm = nnls(m, target)
    scale = max(1.0, float(np.abs(v).max()), float(np.abs(ell).max()))
    return bool(rnorm <= HULL_TOL * scale)


def _refine_vertex(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    support = x > 1e-12 * max(1.0, float(x.max(initial=0.0)))
    if not support.any():
        return x
    xs = np.linalg.lstsq(A[:, support], b, rcond=None)[0]
    refined = np.zeros_like(x)
    refined[support] = xs
    if np.all(xs >= 0) and np.abs(A @ refined - b).max() <= np.abs(A @ x - b).max():
        return refined
    return x


def time_bounds(drifts: Any, target: Any, horizon: float) -> TimeBounds | None:
    """
    Bounds of Δt_0 over {Δt ≥ 0 : Σ_j a_j Δt_j = target, Σ_j Δt_j = horizon}.

    Args:
        drifts: (m, n+1) matrix whose column j is the drift vector of the j-th visited state
        target: length-m vector, the log-price displacement the drifts must produce
        horizon: remaining time

    Returns:
        TimeBounds, or None when the closed system is infeasible
    """
    a = np.asarray(drifts, dtype=float)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if a.ndim != 2:
        a = a.reshape(target.size, -1)
    if a.shape[0] != target.size:
        raise ValueError(f"dimension mismatch: drifts have {a.shape[0]} rows, target has {target.size} entries")
    if horizon < 0:
        raise ValueError(f"horizon must be non-negative, got {horizon}")
    k = a.shape[1]
    if k == 0:
        raise ValueError("time_bounds needs at least one holding time")

    a_eq = np.vstack([a, np.ones((1, k))])
    b_eq = np.append(target, float(horizon))
    reduced = _reduce_equalities(a_eq, b_eq)
    if reduced is None:
        return None
    a_red, b_red = reduced
    bounds = [(0, None)] * k

    extremes = []
    for sign in (1.0, -1.0):
        c = np.zeros(k)
        c[0] = sign
        res = _linprog(c, A_eq=a_red, b_eq=b_red, bounds=bounds, what="time bounds")
        if res is None:
            return None
        x = _refine_vertex(a_eq, b_eq, res.x)
        extremes.append(float(np.clip(x[0], 0.0, horizon)))
    t_lo, t_hi = min(extremes), max(extremes)

    interior = solve_strict(a_eq, b_eq, certify=False)
    return TimeBounds(t_lo=t_lo, t_hi=t_hi, horizon=float(horizon), interior=interior.feasible, slack=interior.slack)
