"""Entropy rate function, the triangle curve h_p, its convex minorant and phases."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit, xlogy

from .errors import DomainError
from .graphon import StepGraphon

T_MAX = 1.0 / 6.0
# h_p is sampled on [0, T_MAX - DOMAIN_EPS]
DOMAIN_EPS = 1e-6
DEFAULT_TOL = 1e-9
CSV_SCHEMA = "graphon-ldp/phase/v1"


def _check_p(p: float) -> None:
    if not (0.0 < p < 1.0):
        raise DomainError(f"p must lie in (0, 1), got {p}")


def ip_values(u, p: float) -> np.ndarray:
    """Vectorised I_p with 0 log 0 = 0; no domain checks on ``u``."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (xlogy(u, u / p) + xlogy(1.0 - u, (1.0 - u) / (1.0 - p)))


def ip_scalar(u: float, p: float) -> float:
    """I_p(u) = u/2 log(u/p) + (1-u)/2 log((1-u)/(1-p))."""
    _check_p(p)
    if not (0.0 <= u <= 1.0):
        raise DomainError(f"u must lie in [0, 1], got {u}")
    return float(ip_values(u, p))


def ip_derivative(u, p: float) -> np.ndarray:
    """d I_p / du = (logit(u) - logit(p)) / 2."""
    return 0.5 * (logit(np.asarray(u, dtype=float)) - logit(p))


def ip_graphon(f: StepGraphon, p: float) -> float:
    """Blockwise exact value of the double integral of I_p(f)."""
    _check_p(p)
    w = f.weights
    return float(w @ ip_values(f.values, p) @ w)


def h_curve(t, p: float) -> np.ndarray:
    """Vectorised h_p: zero up to p^3/6, then I_p((6t)^(1/3))."""
    t = np.asarray(t, dtype=float)
    u = np.cbrt(6.0 * t)
    return np.where(t <= p**3 / 6.0, 0.0, ip_values(np.clip(u, 0.0, 1.0), p))


def h_p(t: float, p: float) -> float:
    _check_p(p)
    if not (0.0 <= t < T_MAX):
        raise DomainError(f"t must lie in [0, 1/6), got {t}")
    return float(h_curve(t, p))


def lower_hull_indices(x: np.ndarray, y: np.ndarray) -> list[int]:
    """Indices of the lower convex hull vertices (Andrew's monotone chain).

    ``x`` must be strictly increasing.  Collinear interior points are dropped.
    """
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def convex_minorant(x, y) -> np.ndarray:
    """Greatest convex function below the samples, evaluated on the same grid."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-D arrays of equal length")
    if x.size < 3:
        raise DomainError("need at least 3 samples")
    if np.any(np.diff(x) <= 0):
        raise DomainError("x grid must be strictly increasing")
    idx = lower_hull_indices(x, y)
    return np.interp(x, x[idx], y[idx])


class Phase(str, enum.Enum):
    TRIVIAL_ZERO = "TrivialZero"
    REPLICA_SYMMETRIC = "ReplicaSymmetric"
    BROKEN = "Broken"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class PhasePoint:
    p: float
    t: float
    h: float
    h_hat: float
    beta: float | None
    phase: Phase
    beta_left: float | None = None
    beta_right: float | None = None


def phase_grid(p: float, grid_size: int) -> np.ndarray:
    """Sampling grid for h_p: uniform in t, merged with :func:`flank_t_grid`.

    The uniform part alone misses the narrow symmetric windows just above
    p^3/6 and just below 1/6 when p is small.
    """
    uniform = np.linspace(0.0, T_MAX - DOMAIN_EPS, grid_size)
    return _dedupe(np.concatenate([uniform, flank_t_grid(p, grid_size)]))


def flank_t_grid(p: float, n: int) -> np.ndarray:
    """``n`` values of t in (p^3/6, 1/6 - eps], geometrically refined at both ends.

    The lower half is log-spaced in the relative excess (t - p^3/6) / (p^3/6)
    starting at 1e-8; the upper half is log-spaced in 1/6 - t down to eps.
    """
    _check_p(p)
    t0 = p**3 / 6.0
    top = T_MAX - DOMAIN_EPS
    mid = 0.5 * (t0 + top)
    n_left = n // 2
    left = t0 * (1.0 + np.logspace(-8.0, np.log10((mid - t0) / t0), n_left))
    right = T_MAX - np.logspace(np.log10(T_MAX - mid), np.log10(DOMAIN_EPS), n - n_left + 1)[1:]
    return np.concatenate([left, right])


def _dedupe(x: np.ndarray) -> np.ndarray:
    x = np.unique(x)
    keep = np.concatenate([[True], np.diff(x) > 1e-14 * np.abs(x[1:])])
    return x[keep]


class _Curve:
    """h_p sampled on a grid together with its lower hull."""

    def __init__(self, p: float, grid: np.ndarray):
        self.p = p
        self.x = grid
        self.y = h_curve(grid, p)
        self.hull = lower_hull_indices(self.x, self.y)
        self.y_hat = np.interp(self.x, self.x[self.hull], self.y[self.hull])

    def contact(self, i: int, tol: float) -> bool:
        return self.y[i] - self.y_hat[i] <= tol * (1.0 + abs(self.y[i]))

    def classify(self, t: float, tol: float) -> PhasePoint:
        p = self.p
        i = int(np.argmin(np.abs(self.x - t)))
        if abs(self.x[i] - t) > 1e-14 * abs(t):
            raise DomainError("t is not on the sampling grid")
        h, h_hat = float(self.y[i]), float(self.y_hat[i])
        h_hat = min(h_hat, h)
        if t <= p**3 / 6.0:
            return PhasePoint(p, t, 0.0, 0.0, None, Phase.TRIVIAL_ZERO)
        if not self.contact(i, tol):
            return PhasePoint(p, t, h, h_hat, None, Phase.BROKEN)
        left = right = None
        if i > 0:
            left = (self.y_hat[i] - self.y_hat[i - 1]) / (self.x[i] - self.x[i - 1])
        if i + 1 < self.x.size:
            right = (self.y_hat[i + 1] - self.y_hat[i]) / (self.x[i + 1] - self.x[i])
        slopes = [s for s in (left, right) if s is not None]
        beta = float(np.mean(slopes))
        neighbours_touch = all(
            self.contact(j, tol) for j in (i - 1, i + 1) if 0 <= j < self.x.size
        )
        phase = Phase.REPLICA_SYMMETRIC if neighbours_touch and beta > 0 else Phase.BOUNDARY
        return PhasePoint(
            p, t, h, h_hat, beta, phase,
            None if left is None else float(left),
            None if right is None else float(right),
        )


def classify_phase(p: float, t: float, grid_size: int = 2000, tol: float = DEFAULT_TOL) -> PhasePoint:
    """Hull test for the constant graphon c_t at (p, t).

    ``ReplicaSymmetric`` certifies h_p(t) = hat h_p(t) with contact on both
    neighbouring grid points; ``Broken`` means the sampled curve lies strictly
    above its minorant at t (a certificate, since the sampled hull can only
    overestimate the true one); ``Boundary`` is a contact point next to a
    non-contact point.
    """
    _check_p(p)
    if not (0.0 <= t < T_MAX):
        raise DomainError(f"t must lie in [0, 1/6), got {t}")
    if grid_size < 1000:
        raise DomainError("grid_size must be >= 1000")
    if t <= p**3 / 6.0:
        return PhasePoint(p, t, 0.0, 0.0, None, Phase.TRIVIAL_ZERO)
    curve = _Curve(p, _dedupe(np.append(phase_grid(p, grid_size), t)))
    return curve.classify(t, tol)


@dataclass
class PhaseDiagram:
    points: list[PhasePoint]
    double_transition: dict[float, bool] = field(default_factory=dict)

    def row(self, p: float) -> list[PhasePoint]:
        return [pt for pt in self.points if pt.p == p]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={CSV_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "t", "h", "h_hat", "beta", "phase"])
        for pt in self.points:
            w.writerow([
                _fmt(pt.p), _fmt(pt.t), _fmt(pt.h), _fmt(pt.h_hat),
                "" if pt.beta is None else _fmt(pt.beta), pt.phase.value,
            ])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def has_double_transition(phases: list[Phase]) -> bool:
    """True when the sequence contains RS ... Broken ... RS (Boundary/trivial ignored)."""
    seq = [ph for ph in phases if ph in (Phase.REPLICA_SYMMETRIC, Phase.BROKEN)]
    state = 0
    for ph in seq:
        if state == 0 and ph is Phase.REPLICA_SYMMETRIC:
            state = 1
        elif state == 1 and ph is Phase.BROKEN:
            state = 2
        elif state == 2 and ph is Phase.REPLICA_SYMMETRIC:
            return True
    return False


def phase_diagram(p_grid, t_grid=None, tol: float = DEFAULT_TOL, grid_size: int = 2000,
                  t_points: int = 200) -> PhaseDiagram:
    """Classify every (p, t) pair; one hull per p, shared by the whole t row.

    Without ``t_grid`` each row uses ``t_points`` values from :func:`flank_t_grid`.
    """
    points: list[PhasePoint] = []
    flags: dict[float, bool] = {}
    for p in p_grid:
        p = float(p)
        _check_p(p)
        ts = flank_t_grid(p, t_points) if t_grid is None else np.asarray(t_grid, dtype=float)
        if np.any(ts < 0) or np.any(ts >= T_MAX):
            raise DomainError("t values must lie in [0, 1/6)")
        curve = _Curve(p, _dedupe(np.concatenate([phase_grid(p, grid_size), ts])))
        row = [curve.classify(float(t), tol) for t in ts]
        points.extend(row)
        flags[p] = has_double_transition([pt.phase for pt in sorted(row, key=lambda q: q.t)])
    return PhaseDiagram(points, flags)


def candidate_objectives(p: float, t: float) -> tuple[float, float]:
    """Closed-form (I_p(c_t), I_p(chi_t))."""
    _check_p(p)
    b = np.cbrt(6.0 * t)
    return float(ip_values(b, p)), float(b * b * ip_values(1.0, p) + (1 - b * b) * ip_values(0.0, p))


def clique_limit_ratio(t: float) -> float:
    """Small-p limit of phi(p, t) / log(1/p), namely (6t)^(2/3) / 2."""
    return float(np.cbrt(6.0 * t) ** 2 / 2.0)


def log_ratio(value: float, p: float) -> float:
    return value / math.log(1.0 / p)
