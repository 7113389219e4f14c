"""Small dense linear-algebra kernel used by the detectors.

Vectors and matrices are plain ``float64`` numpy arrays; the helpers here
validate them and provide the few operations the detectors rely on, most
importantly a symmetric eigendecomposition by cyclic Jacobi rotations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConvergenceError, DegenerateInputError, DimensionError, ValidationError

MAX_SWEEPS = 100
PSD_CLAMP = 1e-12
# Above this order the O(n^3)-per-sweep Python-level Jacobi loop is handed to LAPACK.
JACOBI_MAX_ORDER = 128


def as_vec(a, name="vector") -> np.ndarray:
    """Return ``a`` as a finite, non-empty 1-D float64 array."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    return v


def as_sym_matrix(A, name="matrix") -> np.ndarray:
    """Validate a square, finite, exactly symmetric matrix."""
    M = np.asarray(A, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} contains non-finite entries")
    if not np.array_equal(M, M.T):
        raise ValidationError(f"{name} is not symmetric")
    return M


def symmetrize(A) -> np.ndarray:
    """Average ``A`` with its transpose so that symmetry holds bit-exactly."""
    A = np.asarray(A, dtype=np.float64)
    S = 0.5 * (A + A.T)
    # 0.5*(a+b) and 0.5*(b+a) are identical in IEEE arithmetic, but be explicit.
    iu = np.triu_indices(S.shape[0], 1)
    S[(iu[1], iu[0])] = S[iu]
    return S


def dot(a, b) -> float:
    a = as_vec(a, "a")
    b = as_vec(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.dot(a, b))


def l2_normalize(a) -> np.ndarray:
    a = as_vec(a)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise DegenerateInputError("cannot normalise a zero vector")
    return a / norm


def l2_normalize_rows(X) -> np.ndarray:
    """Row-wise :func:`l2_normalize`; raises on the first zero row."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DegenerateInputError(f"row {int(zero[0])} is a zero vector")
    return X / norms[:, None]


@dataclass(frozen=True)
class EigDecomposition:
    """Eigenpairs of a symmetric matrix.

    ``eigenvalues`` are sorted in descending order and ``eigenvectors[:, i]``
    is the unit eigenvector belonging to ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _round_robin(n):
    """Disjoint index pairs for each round of a cyclic tournament ordering.

    Every off-diagonal pair appears exactly once per sweep, and pairs within
    one round share no index, so their rotations commute and can be applied
    together.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        P, Q = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p >= n or q >= n:
                continue
            P.append(min(p, q))
            Q.append(max(p, q))
        rounds.append((np.array(P, dtype=np.intp), np.array(Q, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _rotate_rows(M, PQ, c, s):
    k = c.shape[0]
    R = M.take(PQ, axis=0)
    mp, mq = R[:k], R[k:]
    out = np.empty_like(R)
    np.multiply(c, mp, out=out[:k])
    out[:k] -= s * mq
    np.multiply(s, mp, out=out[k:])
    out[k:] += c * mq
    M[PQ] = out
    return M


def sym_eig(A, tol=1e-15, max_sweeps=MAX_SWEEPS, psd=False, method="auto") -> EigDecomposition:
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric matrix with finite entries.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol * ||A||_F``.
    max_sweeps : int
        Raise :class:`ConvergenceError` if not converged after this many sweeps.
    psd : bool
        Clamp eigenvalues with ``|lambda| < 1e-12 * max|lambda|`` to zero, for
        callers that take square roots of a positive semi-definite spectrum.
    method : {"auto", "jacobi", "lapack"}
        ``"auto"`` uses Jacobi up to order ``JACOBI_MAX_ORDER`` and
        ``numpy.linalg.eigh`` beyond it.
    """
    a = as_sym_matrix(A).copy()
    n = a.shape[0]
    if method not in ("auto", "jacobi", "lapack"):
        raise ValidationError(f"unknown method {method!r}")
    if method == "lapack" or (method == "auto" and n > JACOBI_MAX_ORDER):
        w, V = np.linalg.eigh(a)
        return _finish(w, V, 0, psd)
    Vt = np.eye(n)
    scale = np.linalg.norm(a)
    sweeps = 0
    if n > 1 and scale > 0.0:
        rounds = _round_robin(n)
        off_mask = ~np.eye(n, dtype=bool)
        while True:
            off = np.sqrt(np.sum(a[off_mask] ** 2))
            if off <= tol * scale:
                break
            if sweeps >= max_sweeps:
                raise ConvergenceError(
                    f"Jacobi did not converge in {max_sweeps} sweeps "
                    f"(off-diagonal norm {off:.3e})"
                )
            for P, Q in rounds:
                apq = a[P, Q]
                live = np.abs(apq) > 1e-300
                if not np.any(live):
                    continue
                P, Q, apq = P[live], Q[live], apq[live]
                theta = (a[Q, Q] - a[P, P]) / (2.0 * apq)
                with np.errstate(over="ignore"):
                    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                    big = ~np.isfinite(theta * theta)
                t[big] = 0.5 / theta[big]
                t[theta == 0.0] = 1.0
                c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
                s = t[:, None] * c
                PQ = np.concatenate([P, Q])
                # A <- J^T A J with J[p,p]=J[q,q]=c, J[p,q]=s, J[q,p]=-s.
                # Row rotations only: (J^T (J^T A)^T) = J^T A J since A is symmetric.
                a = _rotate_rows(a, PQ, c, s).T.copy()
                a = _rotate_rows(a, PQ, c, s)
                a[P, Q] = 0.0
                a[Q, P] = 0.0
                Vt = _rotate_rows(Vt, PQ, c, s)
            sweeps += 1

    return _finish(np.diag(a).copy(), Vt.T, sweeps, psd)


def _finish(w, V, sweeps, psd):
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    if psd and w.size:
        top = np.max(np.abs(w))
        w[np.abs(w) < PSD_CLAMP * top] = 0.0
    return EigDecomposition(w, np.ascontiguousarray(V), sweeps)
