"""Matrix-analytic machinery for discrete-time quasi-birth-death processes.

A QBD has levels 0, 1, 2, ... with a common background space from level 1
up and a possibly different one at level 0.  Within-level and neighbouring-
level jumps are governed by the blocks

    level 0:   B00 (stay), B01 (up)
    level 1:   B10 (down to 0), A1 (stay), A0 (up)
    level >=2: A2 (down), A1 (stay), A0 (up)

The stationary law above the boundary is matrix-geometric, pi_k = pi_1
R^(k-1), where R is the minimal nonnegative solution of
R = A0 + R A1 + R^2 A2.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from mmrrw.model import Face, MmrrwModel


class ComputationError(RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy answer."""


def stationary_finite(P: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible finite stochastic matrix (GTH).

    Grassmann-Taksar-Heyman elimination performs no subtractions, so the
    result is accurate even for nearly decoupled chains.  Raises
    ComputationError if the chain is not irreducible.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("P must be square")
    if n == 1:
        return np.ones(1)
    ncomp, _ = connected_components(sp.csr_matrix(P > 0), directed=True, connection="strong")
    if ncomp != 1:
        raise ComputationError(f"chain is reducible ({ncomp} strongly connected classes)")
    A = P.copy()
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0.0:
            raise ComputationError("GTH elimination hit a zero pivot (chain not irreducible)")
        A[:k, :k] += np.outer(A[:k, k], A[k, :k] / s)
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ A[:k, k] / A[k, :k].sum()
    return pi / pi.sum()


def _residual(R, A0, A1, A2) -> float:
    return float(np.max(np.abs(A0 + R @ A1 + R @ R @ A2 - R))) if R.size else 0.0


def compute_R(
    A0: np.ndarray,
    A1: np.ndarray,
    A2: np.ndarray,
    tol: float = 1e-14,
    max_iter: int = 10**6,
    method: str = "auto",
) -> tuple[np.ndarray, dict]:
    """Minimal nonnegative solution of R = A0 + R A1 + R^2 A2.

    Parameters
    ----------
    method : {"auto", "logred", "iteration"}
        "iteration" is the plain monotone fixed-point scheme started from 0.
        "logred" is logarithmic reduction (quadratically convergent), useful
        near criticality.  "auto" tries logarithmic reduction and falls back
        to iteration if it cannot reach the tolerance.

    Returns (R, info) where info records the method, iteration count and the
    final residual max|A0 + R A1 + R^2 A2 - R|.
    """
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    n = A0.shape[0]
    if n == 0:
        return np.zeros((0, 0)), {"method": "trivial", "iterations": 0, "residual": 0.0}

    if method not in ("auto", "logred", "iteration"):
        raise ValueError(f"unknown method {method!r}")

    if method in ("auto", "logred"):
        try:
            R, its = _logred_R(A0, A1, A2)
            res = _residual(R, A0, A1, A2)
            if res <= max(tol, 1e-14):
                return R, {"method": "logred", "iterations": its, "residual": res}
            if method == "logred":
                raise ComputationError(f"logarithmic reduction stalled at residual {res:.3e}")
        except np.linalg.LinAlgError:
            if method == "logred":
                raise

    R = np.zeros((n, n))
    for it in range(1, max_iter + 1):
        R_next = A0 + R @ A1 + R @ R @ A2
        delta = np.max(np.abs(R_next - R))
        R = R_next
        if delta <= tol:
            res = _residual(R, A0, A1, A2)
            if res <= max(tol * 10, 1e-13):
                return R, {"method": "iteration", "iterations": it, "residual": res}
    res = _residual(R, A0, A1, A2)
    raise ComputationError(f"R iteration did not converge in {max_iter} steps (residual {res:.3e})")


def _logred_R(A0, A1, A2, max_doublings: int = 64):
    """Latouche-Ramaswami logarithmic reduction for G, then R from G."""
    n = A0.shape[0]
    eye = np.eye(n)
    H = np.linalg.solve(eye - A1, np.hstack([A0, A2]))
    B0, B2 = H[:, :n], H[:, n:]
    G = B2.copy()
    Pi = B0.copy()
    for it in range(1, max_doublings + 1):
        U = B0 @ B2 + B2 @ B0
        M = np.linalg.solve(eye - U, np.hstack([B0 @ B0, B2 @ B2]))
        B0, B2 = M[:, :n], M[:, n:]
        G = G + Pi @ B2
        Pi = Pi @ B0
        if np.max(Pi) < 1e-300 or np.max(np.abs(Pi)) * np.max(np.abs(B2)) < 1e-17:
            break
    R = np.linalg.solve((eye - A1 - A0 @ G).T, A0.T).T
    return np.maximum(R, 0.0), it


def qbd_positive_recurrent(A0, A1, A2) -> tuple[bool, float, np.ndarray]:
    """Mean-drift recurrence test for a QBD.

    Let kappa be the stationary law of the within-level generator
    A = A0 + A1 + A2.  The process is positive recurrent iff
    kappa (A0 - A2) 1 < 0 (strictly).  Returns (is_positive, drift, kappa).
    """
    A0 = np.asarray(A0, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    kappa = stationary_finite(A0 + np.asarray(A1, dtype=float) + A2)
    drift = float(kappa @ (A0.sum(axis=1) - A2.sum(axis=1)))
    return drift < 0, drift, kappa


def qbd_stationary(
    B00, B01, B10, A0, A1, A2, R: np.ndarray | None = None, check_tol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray]:
    """Boundary stationary vectors (pi_0, pi_1) of a positive recurrent QBD.

    Solves the balance equations at levels 0 and 1 together with the
    normalization pi_0 1 + pi_1 (I - R)^{-1} 1 = 1, then verifies the
    residuals of the balance equations at levels 0..3.
    """
    B00 = np.asarray(B00, dtype=float)
    B01 = np.asarray(B01, dtype=float)
    B10 = np.asarray(B10, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    s0, s1 = B00.shape[0], A1.shape[0]
    if R is None:
        R, _ = compute_R(A0, A1, A2)
    if np.max(np.abs(np.linalg.eigvals(R))) >= 1 - 1e-12:
        raise ComputationError("spectral radius of R is not below 1; process is not positive recurrent")

    eyeR = np.eye(s1)
    M = np.zeros((s0 + s1, s0 + s1))
    M[:s0, :s0] = B00 - np.eye(s0)
    M[:s0, s0:] = B01
    M[s0:, :s0] = B10
    M[s0:, s0:] = A1 + R @ A2 - eyeR
    c = np.concatenate([np.ones(s0), np.linalg.solve(eyeR - R, np.ones(s1))])

    # x M = 0 with x c = 1: replace one balance equation by the normalization.
    x = None
    for col in range(s0 + s1):
        Mt = M.T.copy()
        Mt[col, :] = c
        rhs = np.zeros(s0 + s1)
        rhs[col] = 1.0
        try:
            cand = np.linalg.solve(Mt, rhs)
        except np.linalg.LinAlgError:
            continue
        if np.max(np.abs(cand @ M)) <= 1e-8 * max(1.0, np.max(np.abs(cand))):
            x = cand
            break
    if x is None:
        raise ComputationError("boundary balance system is singular")
    pi0, pi1 = x[:s0], x[s0:]

    if min(pi0.min(initial=0.0), pi1.min(initial=0.0)) < -1e-10:
        raise ComputationError("stationary solve produced negative probabilities")
    pi0 = np.maximum(pi0, 0.0)
    pi1 = np.maximum(pi1, 0.0)
    total = pi0.sum() + pi1 @ np.linalg.solve(eyeR - R, np.ones(s1))
    pi0, pi1 = pi0 / total, pi1 / total

    pi2 = pi1 @ R
    pi3 = pi2 @ R
    checks = {
        "level0": np.max(np.abs(pi0 @ B00 + pi1 @ B10 - pi0), initial=0.0),
        "level1": np.max(np.abs(pi0 @ B01 + pi1 @ A1 + pi2 @ A2 - pi1), initial=0.0),
        "level2": np.max(np.abs(pi1 @ A0 + pi2 @ A1 + pi3 @ A2 - pi2), initial=0.0),
    }
    worst = max(checks.values())
    if worst > check_tol:
        raise ComputationError(f"stationary balance residual {worst:.3e} exceeds {check_tol:g}")
    return pi0, pi1


def stationary_levels(pi0: np.ndarray, pi1: np.ndarray, R: np.ndarray, k_max: int) -> list[np.ndarray]:
    """[pi_0, pi_1, ..., pi_k_max] with pi_k = pi_1 R^(k-1) above the boundary."""
    out = [np.asarray(pi0, dtype=float)]
    cur = np.asarray(pi1, dtype=float)
    for _ in range(k_max):
        out.append(cur)
        cur = cur @ R
    return out[: k_max + 1]


def model_from_qbd(B00, B01, B10, A0, A1, A2) -> MmrrwModel:
    """Wrap six QBD blocks as a one-dimensional walk model."""
    B00 = np.asarray(B00, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    s0, s1 = B00.shape[0], A1.shape[0]
    empty: Face = ()
    one: Face = (1,)
    blocks = {
        (empty, (0,), empty): B00,
        (empty, (1,), one): np.asarray(B01, dtype=float),
        (one, (-1,), empty): np.asarray(B10, dtype=float),
        (one, (1,), one): np.asarray(A0, dtype=float),
        (one, (0,), one): A1,
        (one, (-1,), one): np.asarray(A2, dtype=float),
    }
    blocks = {k: v for k, v in blocks.items() if np.any(v != 0)}
    return MmrrwModel(d=1, faces={empty: s0, one: s1}, blocks=blocks)
