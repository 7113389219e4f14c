"""One-class sparse-representation detector.

A query is coded over a dictionary of normal-class atoms by solving the
lasso ``min_w 1/2 ||x - D w||^2 + lam ||w||_1`` along its homotopy path,
and the reconstruction residual ``||x - D w||`` is the anomaly score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .base import OneClassDetector, training_offset
from .dataset import subsample_indices
from .exceptions import DimensionError, PathBreakdownError, ValidationError
from .linalg import l2_normalize_rows

DEFAULT_FRACTION = 0.1
DEFAULT_RELATIVE_STOP = 1e-6
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Dictionary:
    """Unit-norm atoms stored as the rows of ``atoms``."""

    atoms: np.ndarray
    fraction: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.atoms, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
            raise ValidationError("a dictionary needs at least one atom")
        if not np.all(np.isfinite(A)):
            raise ValidationError("dictionary atoms must be finite")
        if np.max(np.abs(np.linalg.norm(A, axis=1) - 1.0)) > 1e-12:
            raise ValidationError("dictionary atoms must have unit norm")
        A.setflags(write=False)
        object.__setattr__(self, "atoms", A)

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]


@dataclass(frozen=True)
class HomotopyConfig:
    """Stopping rules for the lasso path.

    ``lambda_stop=None`` means ``relative_stop * lambda_0`` where
    ``lambda_0 = max_j |d_j^T x|`` is the first breakpoint of each query.
    ``max_active=None`` means ``min(dim, n_atoms)``; ``max_steps=None``
    means ``10 * max_active + 100``.
    """

    lambda_stop: float | None = None
    relative_stop: float = DEFAULT_RELATIVE_STOP
    max_active: int | None = None
    max_steps: int | None = None

    def __post_init__(self):
        if self.lambda_stop is not None and not self.lambda_stop >= 0:
            raise ValidationError("lambda_stop must be >= 0")
        if not self.relative_stop >= 0:
            raise ValidationError("relative_stop must be >= 0")
        if self.max_active is not None and self.max_active < 1:
            raise ValidationError("max_active must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValidationError("max_steps must be positive")


@dataclass(frozen=True)
class SparseCode:
    active_indices: tuple
    coefficients: np.ndarray
    final_lambda: float
    residual: float
    n_steps: int = 0
    stop_reason: str = ""
    #: (lambda, residual) at every breakpoint visited, starting at lambda_0
    path: tuple = field(default=(), repr=False)

    def dense(self, n_atoms) -> np.ndarray:
        w = np.zeros(n_atoms)
        if self.active_indices:
            w[list(self.active_indices)] = self.coefficients
        return w


def build_dictionary(train, fraction=DEFAULT_FRACTION) -> Dictionary:
    """Stride-select ``ceil(fraction * n)`` training vectors and renormalise them."""
    X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("build_dictionary needs a non-empty training set")
    idx = subsample_indices(X.shape[0], fraction)
    return Dictionary(l2_normalize_rows(X[idx]), float(fraction))


class _ActiveCholesky:
    """Lower Cholesky factor of the active Gram matrix with append/delete updates."""

    def __init__(self):
        self.L = np.zeros((0, 0))

    def append(self, cross, self_dot, lam):
        m = self.L.shape[0]
        r = solve_triangular(self.L, cross, lower=True) if m else np.zeros(0)
        d2 = self_dot - r @ r
        if not d2 > 0:
            raise PathBreakdownError(
                f"active set became linearly dependent at lambda={lam:.6g}", lam)
        L = np.zeros((m + 1, m + 1))
        L[:m, :m] = self.L
        L[m, :m] = r
        L[m, m] = math.sqrt(d2)
        diag = np.diag(L)
        cond = (diag.max() / diag.min()) ** 2
        if cond > MAX_CONDITION:
            raise PathBreakdownError(
                f"active Gram condition estimate {cond:.3g} exceeds {MAX_CONDITION:g} "
                f"at lambda={lam:.6g}", lam)
        self.L = L

    def delete(self, k):
        M = np.delete(self.L, k, axis=0)
        for i in range(k, M.shape[0]):
            a, b = M[i, i], M[i, i + 1]
            r = math.hypot(a, b)
            c, s = a / r, b / r
            ci, cj = M[:, i].copy(), M[:, i + 1].copy()
            M[:, i] = c * ci + s * cj
            M[:, i + 1] = -s * ci + c * cj
            M[i, i + 1] = 0.0
        self.L = M[:, :-1].copy()

    def solve(self, b):
        y = solve_triangular(self.L, b, lower=True)
        return solve_triangular(self.L.T, y, lower=False)


def homotopy_solve(D: Dictionary, x, cfg: HomotopyConfig | None = None) -> SparseCode:
    """Follow the lasso solution path from ``lambda_0`` down to the stopping rule.

    Both entering and leaving events are handled.  At every breakpoint the
    active coefficients are re-solved from the optimality conditions and
    the correlations recomputed from scratch, so the returned code
    satisfies the lasso KKT conditions at ``final_lambda`` up to round-off.
    Simultaneous events resolve to the lowest atom index.

    Terminates at the first of: ``lambda`` reaching ``lambda_stop``, an atom
    needing to enter when ``max_active`` atoms are already active, or
    ``max_steps`` breakpoints.
    """
    cfg = cfg or HomotopyConfig()
    x = np.asarray(x, dtype=np.float64)
    A = D.atoms.T  # (dim, m), atoms as columns
    if x.ndim != 1 or x.shape[0] != A.shape[0]:
        raise DimensionError(f"query has shape {x.shape}, dictionary dimension is {A.shape[0]}")
    dim, m = A.shape
    max_active = cfg.max_active or min(dim, m)
    max_steps = cfg.max_steps or 10 * max_active + 100

    c = A.T @ x
    lam0 = float(np.max(np.abs(c)))
    stop = cfg.lambda_stop if cfg.lambda_stop is not None else cfg.relative_stop * lam0
    xnorm = float(np.linalg.norm(x))
    if lam0 <= stop or lam0 == 0.0:
        return SparseCode((), np.zeros(0), lam0, xnorm, 0, "lambda_stop", ((lam0, xnorm),))

    j0 = int(np.argmax(np.abs(c)))
    active = [j0]
    signs = [1.0 if c[j0] > 0 else -1.0]
    chol = _ActiveCholesky()
    chol.append(np.zeros(0), float(A[:, j0] @ A[:, j0]), lam0)
    w = np.zeros(m)
    lam = lam0
    path = [(lam0, xnorm)]
    steps = 0
    reason = ""
    skip = -1  # index that just left; it may not re-enter at (near) zero step length
    tiny = 1e-14 * lam0

    while True:
        s = np.array(signs)
        direction = chol.solve(s)
        a = A.T @ (A[:, active] @ direction)

        inactive = np.ones(m, dtype=bool)
        inactive[active] = False
        entry = np.full(m, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            g_plus = (lam - c) / (1.0 - a)
            g_minus = (lam + c) / (1.0 + a)
        for g in (g_plus, g_minus):
            ok = inactive & np.isfinite(g) & (g > 0)
            if skip >= 0 and g[skip] <= 1e-9 * lam:
                ok[skip] = False
            entry[ok] = np.minimum(entry[ok], g[ok])
        violating = inactive & (np.abs(c) > lam + tiny)
        if skip >= 0:
            violating[skip] = False
        entry[violating] = 0.0

        # an active coefficient can only reach zero if the path drives it against its sign
        leave = np.full(m, np.inf)
        wa = w[active]
        shrinking = direction * s < 0
        g_leave = np.abs(wa[shrinking]) / np.abs(direction[shrinking])
        leave[np.array(active)[shrinking]] = g_leave

        g_event = min(entry.min(), leave.min())
        g_stop = lam - stop
        if g_stop <= g_event:
            gamma, event, j = g_stop, "stop", -1
        else:
            gamma = g_event
            j = int(np.flatnonzero((entry == gamma) | (leave == gamma))[0])
            event = "enter" if entry[j] == gamma else "leave"
            if event == "enter" and len(active) >= max_active:
                reason = "max_active"
                break

        w[active] = wa + gamma * direction
        lam = stop if event == "stop" else lam - gamma

        skip = -1
        if event == "leave":
            k = active.index(j)
            chol.delete(k)
            del active[k], signs[k]
            w[j] = 0.0
            skip = j
        elif event == "enter":
            cj = float(A[:, j] @ (x - A @ w))
            chol.append(A[:, active].T @ A[:, j], float(A[:, j] @ A[:, j]), lam)
            active.append(j)
            signs.append(1.0 if cj > 0 else -1.0)

        if active:
            # re-solve on the active set: w_A = G_AA^{-1} (D_A^T x - lam s)
            w_a = chol.solve(A[:, active].T @ x - lam * np.array(signs))
            w[:] = 0.0
            w[active] = w_a
        r = x - A @ w
        c = A.T @ r
        steps += 1
        path.append((lam, float(np.linalg.norm(r))))

        if event == "stop":
            reason = "lambda_stop"
            break
        if not active:
            # everything left the path (only possible through round-off); restart from zero
            reason = "empty"
            break
        if steps >= max_steps:
            reason = "max_steps"
            break

    r = x - A @ w
    order = sorted(range(len(active)), key=lambda i: active[i])
    idx = tuple(int(active[i]) for i in order)
    return SparseCode(
        active_indices=idx,
        coefficients=w[list(idx)].copy() if idx else np.zeros(0),
        final_lambda=float(lam),
        residual=float(np.linalg.norm(r)),
        n_steps=steps,
        stop_reason=reason,
        path=tuple(path),
    )


def ocsrc_score(D: Dictionary, x, cfg: HomotopyConfig | None = None) -> float:
    """Reconstruction residual of ``x`` over ``D``; larger means more anomalous."""
    return homotopy_solve(D, x, cfg).residual


class OneClassSRC(OneClassDetector):
    """Sparse-representation residual detector.

    Parameters
    ----------
    fraction : float, default 0.1
        Share of training vectors (stride-selected) kept as dictionary atoms.
    relative_stop : float, default 1e-6
        Path stops at ``relative_stop * lambda_0`` unless ``lambda_stop`` is set.
    lambda_stop : float or None
        Absolute terminal regularisation, overrides ``relative_stop``.
    max_active, max_steps : int or None
        See :class:`HomotopyConfig`.
    contamination : float, default 0.05
        Share of training vectors treated as outliers when placing ``offset_``.
    """

    min_samples = 1

    def __init__(self, fraction=DEFAULT_FRACTION, relative_stop=DEFAULT_RELATIVE_STOP,
                 lambda_stop=None, max_active=None, max_steps=None, contamination=0.05):
        self.fraction = fraction
        self.relative_stop = relative_stop
        self.lambda_stop = lambda_stop
        self.max_active = max_active
        self.max_steps = max_steps
        self.contamination = contamination

    def _config(self):
        return HomotopyConfig(self.lambda_stop, self.relative_stop, self.max_active, self.max_steps)

    def fit(self, X, y=None):
        X = self._validate(X, reset=True)
        self.dictionary_ = build_dictionary(X, self.fraction)
        self.offset_ = training_offset(self._residuals(X), self.contamination)
        return self

    def _residuals(self, X):
        cfg = self._config()
        return np.array([homotopy_solve(self.dictionary_, x, cfg).residual for x in X])

    def anomaly_score(self, X):
        X = self._validate(X, reset=False)
        return self._residuals(X)
