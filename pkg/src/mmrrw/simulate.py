"""Path simulation, Monte Carlo drift estimation, and truncated solves.

The simulation engine compiles a model into flat lookup tables indexed by
(occupancy class, background): the walk only needs to distinguish coordinate
values 0, 1, and >= 2, so there are 3^d classes.  Each row holds the
cumulative outcome distribution, the coordinate increments, and the next
background.  All replications advance in lockstep through vectorized steps
driven by a counter-based generator, so runs are reproducible from
(seed, stream) alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from mmrrw.model import (
    BlockKey,
    Face,
    MmrrwModel,
    all_faces,
    context_to_face,
    face_key,
    face_of,
)
from mmrrw.induced import project_with_drift
from mmrrw.qbd import ComputationError, stationary_finite

_MASK64 = (1 << 64) - 1


def _rng(seed: int, stream: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Continuous-time models and uniformization


@dataclass
class CtmcModel:
    """A continuous-time analogue of MmrrwModel: blocks hold jump rates.

    The diagonal of each (A, 0, A) block must be zero; total outflow rates
    are implicit.  Uniformization requires the outflow of a state (x, i) to
    depend only on (face(x), i), not on which coordinates sit at exactly 1 —
    otherwise no single (A, 0, A) probability block can absorb the leftover
    self-loop mass.
    """

    d: int
    faces: dict[Face, int]
    rates: dict[BlockKey, np.ndarray]
    metadata: dict = field(default_factory=dict)


def _outflow(ctmc: CtmcModel, A: Face, context: Face) -> np.ndarray:
    n = ctmc.faces[A]
    out = np.zeros(n)
    for (fa, z, fb), arr in ctmc.rates.items():
        if fa != A:
            continue
        if context_to_face(A, context, z) != fb:
            continue
        rs = np.asarray(arr, dtype=float)
        if not any(z) and fb == A:
            diag = np.abs(np.diag(rs)).max() if rs.size else 0.0
            if diag > 1e-12:
                raise ValueError(f"rate block ({face_key(A)!r}, 0, {face_key(A)!r}) must have a zero diagonal")
        out += rs.sum(axis=1)
    return out


def uniformize(ctmc: CtmcModel, nu: float | None = None) -> MmrrwModel:
    """Turn a rate model into a discrete-time model with step rate `nu`.

    `nu` defaults to the exact maximum outflow; any larger value is allowed
    and only rescales every drift by the same positive factor.
    """
    max_out = 0.0
    per_face: dict[Face, np.ndarray] = {}
    for A in ctmc.faces:
        base = None
        for r in range(len(A) + 1):
            for context in itertools.combinations(A, r):
                out = _outflow(ctmc, A, context)
                if base is None:
                    base = out
                elif np.max(np.abs(out - base)) > 1e-9 * max(1.0, float(np.max(np.abs(base)))):
                    raise ValueError(
                        f"outflow on face {face_key(A)!r} depends on the context {face_key(context)!r}; "
                        "uniformization needs it to depend on the background alone"
                    )
        per_face[A] = base
        if base.size:
            max_out = max(max_out, float(base.max()))
    if nu is None:
        nu = max_out
    if nu < max_out * (1 - 1e-12) or nu <= 0:
        raise ValueError(f"uniformization rate {nu} is below the maximum outflow {max_out}")

    blocks = {k: np.asarray(v, dtype=float) / nu for k, v in ctmc.rates.items() if np.any(np.asarray(v))}
    zero = (0,) * ctmc.d
    for A, out in per_face.items():
        key = (A, zero, A)
        n = ctmc.faces[A]
        blk = blocks.get(key, np.zeros((n, n)))
        blocks[key] = blk + np.diag(1.0 - out / nu)
    meta = dict(ctmc.metadata)
    meta["uniformization_rate"] = float(nu)
    return MmrrwModel(d=ctmc.d, faces=dict(ctmc.faces), blocks=blocks, metadata=meta)


# ---------------------------------------------------------------------------
# Compiled transition tables


class _Table:
    __slots__ = ("d", "max_n", "pow3", "cum", "dz", "dj", "nreal", "rew")


def _compile(model: MmrrwModel, reward_blocks: dict | None = None) -> _Table:
    d = model.d
    if d < 1:
        raise ValueError("simulation needs at least one coordinate")
    max_n = max(model.faces.values())
    by_from: dict[Face, list[tuple[BlockKey, np.ndarray]]] = {}
    for key, arr in model.blocks.items():
        by_from.setdefault(key[0], []).append((key, np.asarray(arr, dtype=float)))

    n_rows = (3**d) * max_n
    rows_p: list[list[np.ndarray]] = [[] for _ in range(n_rows)]
    rows_dz: list[list[np.ndarray]] = [[] for _ in range(n_rows)]
    rows_dj: list[list[np.ndarray]] = [[] for _ in range(n_rows)]
    rew = np.zeros((n_rows, 0))
    dp = 0
    if reward_blocks is not None:
        dp = next(iter(reward_blocks.values())).shape[2] if reward_blocks else 0
        rew = np.zeros((n_rows, dp))

    for code in range(3**d):
        digits = [(code // 3**l) % 3 for l in range(d)]
        A = tuple(l + 1 for l in range(d) if digits[l] > 0)
        context = tuple(l + 1 for l in range(d) if digits[l] == 1)
        nA = model.faces[A]
        for key, arr in by_from.get(A, []):
            _, z, B = key
            if context_to_face(A, context, z) != B:
                continue
            nB = arr.shape[1]
            zvec = np.asarray(z, dtype=np.int8)
            for i in range(nA):
                row = code * max_n + i
                rows_p[row].append(arr[i])
                rows_dz[row].append(np.tile(zvec, (nB, 1)))
                rows_dj[row].append(np.arange(nB, dtype=np.int32))
                if reward_blocks is not None and key in reward_blocks:
                    rew[row] += reward_blocks[key][i].sum(axis=0)

    max_out = 1
    for ps in rows_p:
        if ps:
            max_out = max(max_out, sum(len(p) for p in ps))
    tab = _Table()
    tab.d = d
    tab.max_n = max_n
    tab.pow3 = np.array([3**l for l in range(d)], dtype=np.int64)
    tab.cum = np.full((n_rows, max_out), 2.0)
    tab.dz = np.zeros((n_rows, max_out, d), dtype=np.int8)
    tab.dj = np.zeros((n_rows, max_out), dtype=np.int32)
    tab.nreal = np.ones(n_rows, dtype=np.int64)
    tab.rew = rew
    for row in range(n_rows):
        if not rows_p[row]:
            continue
        p = np.concatenate(rows_p[row])
        cum = np.cumsum(p)
        if abs(cum[-1] - 1.0) > 1e-9:
            code, i = divmod(row, max_n)
            digits = [(code // 3**l) % 3 for l in range(d)]
            A = tuple(l + 1 for l in range(d) if digits[l] > 0)
            raise ComputationError(
                f"transition row for face {face_key(A)!r}, background {i} sums to {cum[-1]!r}; validate the model first"
            )
        k = len(p)
        tab.cum[row, :k] = cum
        tab.dz[row, :k] = np.concatenate(rows_dz[row])
        tab.dj[row, :k] = np.concatenate(rows_dj[row])
        tab.nreal[row] = k
    return tab


def _rows_of(tab: _Table, x: np.ndarray, bg: np.ndarray) -> np.ndarray:
    return (np.minimum(x, 2) @ tab.pow3) * tab.max_n + bg


def _advance(tab: _Table, x: np.ndarray, bg: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One synchronous step for all replications; returns the increments."""
    rows = _rows_of(tab, x, bg)
    k = (u[:, None] >= tab.cum[rows]).sum(axis=1)
    np.minimum(k, tab.nreal[rows] - 1, out=k)
    dz = tab.dz[rows, k]
    x += dz
    bg[:] = tab.dj[rows, k]
    return dz


# ---------------------------------------------------------------------------
# Path simulation


def simulate_paths(
    model: MmrrwModel,
    *,
    steps: int,
    reps: int,
    x0,
    bg0: int = 0,
    seed: int = 0,
    stream: int = 0,
    record_every: int | None = None,
    track_return: bool = True,
    stop_when_all_returned: bool = False,
    chunk: int = 8192,
) -> dict:
    """Run `reps` independent walks for `steps` steps.

    Returns final states, first-return information (first time the walk sits
    at the origin after step 0), and, when `record_every` is set, snapshots
    of every path on that grid.
    """
    tab = _compile(model)
    d = model.d
    x0 = np.asarray(x0, dtype=np.int64)
    if x0.shape != (d,) or np.any(x0 < 0):
        raise ValueError(f"x0 must be {d} nonnegative integers")
    A0 = face_of(x0)
    if not 0 <= bg0 < model.faces[A0]:
        raise ValueError(f"bg0 {bg0} out of range for face {face_key(A0)!r}")
    rng = _rng(seed, stream)
    x = np.tile(x0, (reps, 1))
    bg = np.full(reps, bg0, dtype=np.int32)
    returned = np.zeros(reps, dtype=bool)
    return_time = np.full(reps, -1, dtype=np.int64)

    rec_steps: list[int] = []
    x_records: list[np.ndarray] = []
    if record_every:
        rec_steps.append(0)
        x_records.append(x.copy())

    t = 0
    final_step = steps
    while t < steps:
        c = min(chunk, steps - t)
        u = rng.random((c, reps))
        stop_now = False
        for s in range(c):
            _advance(tab, x, bg, u[s])
            t += 1
            if track_return:
                hit = (~returned) & (x.sum(axis=1) == 0)
                if np.any(hit):
                    return_time[hit] = t
                    returned |= hit
            if record_every and t % record_every == 0:
                rec_steps.append(t)
                x_records.append(x.copy())
            if stop_when_all_returned and returned.all():
                final_step = t
                stop_now = True
                break
        if stop_now:
            break
    else:
        final_step = steps

    out = {
        "x_final": x,
        "bg_final": bg,
        "returned": returned,
        "return_time": return_time,
        "final_step": final_step,
        "x0": x0,
    }
    if record_every:
        out["record_steps"] = np.asarray(rec_steps, dtype=np.int64)
        out["x_records"] = np.stack(x_records, axis=1)  # (reps, n_rec, d)
    return out


def estimate_g(
    model: MmrrwModel,
    *,
    steps: int = 4096,
    reps: int = 64,
    x0=None,
    seed: int = 0,
    stream: int = 3,
    burn: float = 0.25,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate the interior drift by averaging realized increments.

    The walk starts deep enough in the interior that it cannot reach any
    boundary within the horizon, so every step samples the interior law.
    Returns (estimate, standard error) per coordinate, the error taken
    across replications.
    """
    tab = _compile(model)
    d = model.d
    if x0 is None:
        x0 = np.full(d, steps + 2, dtype=np.int64)
    x = np.tile(np.asarray(x0, dtype=np.int64), (reps, 1))
    bg = np.zeros(reps, dtype=np.int32)
    rng = _rng(seed, stream)
    burn_steps = int(steps * burn)
    acc = np.zeros((reps, d))
    t = 0
    while t < steps:
        c = min(8192, steps - t)
        u = rng.random((c, reps))
        for s in range(c):
            dz = _advance(tab, x, bg, u[s])
            if t >= burn_steps:
                acc += dz
            t += 1
    n_eff = steps - burn_steps
    means = acc / n_eff
    ghat = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(reps)
    return ghat, se


def estimate_drift_sign(
    model: MmrrwModel,
    A: Face,
    *,
    seed: int = 0,
    reps: int = 64,
    chunk: int = 4096,
    max_doublings: int = 6,
    burn_chunks: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of the drift vector a(A) of a deep face.

    Simulates the induced chain on the complement of A and averages, per
    visited state, the conditional expected increment of the frozen
    coordinates (carried by the projection's reward blocks), which removes
    the jump noise from the estimate.  The horizon doubles until the
    confidence interval of every frozen component excludes zero or the
    budget runs out.  Returns (estimate, 95% half-widths); components off A
    are exactly zero by stationarity.
    """
    A = tuple(sorted(A))
    proj, wblocks = project_with_drift(model, A)
    if proj.d == 0:
        P = proj.block((), (), ())  # degenerate: finite chain
        pi = stationary_finite(P)
        key = ((), (), ())
        r = wblocks[key].sum(axis=1) if key in wblocks else np.zeros((P.shape[0], model.d))
        value = pi @ r
        return value, np.zeros_like(value)
    tab = _compile(proj, reward_blocks=wblocks)
    dp = model.d
    rng = _rng(seed, 1)
    x = np.zeros((reps, proj.d), dtype=np.int64)
    bg = np.zeros(reps, dtype=np.int32)

    for _ in range(burn_chunks):
        u = rng.random((chunk, reps))
        for s in range(chunk):
            _advance(tab, x, bg, u[s])

    acc = np.zeros((reps, dp))
    count = 0
    in_face = [l - 1 for l in A]
    value = np.zeros(dp)
    halfw = np.zeros(dp)
    for r_ix in range(max_doublings + 1):
        seg = chunk * (2**r_ix)
        done = 0
        while done < seg:
            c = min(8192, seg - done)
            u = rng.random((c, reps))
            for s in range(c):
                rows = _rows_of(tab, x, bg)
                acc += tab.rew[rows]
                _advance(tab, x, bg, u[s])
            done += c
        count += seg
        means = acc / count
        m = means.mean(axis=0)
        se = means.std(axis=0, ddof=1) / np.sqrt(reps)
        hw = 1.96 * se
        value = np.zeros(dp)
        halfw = np.zeros(dp)
        value[in_face] = m[in_face]
        halfw[in_face] = hw[in_face]
        if all(abs(m[l]) > hw[l] for l in in_face):
            break
    return value, halfw


# ---------------------------------------------------------------------------
# Partition diagnostics


@dataclass
class PartitionScheme:
    """Coarse spatial regions: a coordinate counts as large when >= K."""

    K: int = 1

    def region(self, x) -> Face:
        return tuple(l + 1 for l, v in enumerate(x) if v >= self.K)

    def region_key(self, x) -> str:
        return face_key(self.region(x))


def recurrence_diagnostic(
    model: MmrrwModel,
    *,
    reps: int = 200,
    horizon: int = 10**6,
    K: int = 10,
    seed: int = 0,
    stream: int = 11,
) -> dict:
    """Simulation evidence for or against positive recurrence.

    All replications start a distance K-1 up the last axis.  A replication
    "returns" when it first sits at the origin after step 0.  A high return
    fraction suggests stability; a displacement rate whose confidence
    interval sits above zero suggests transience.  This is a diagnostic,
    not a proof.
    """
    d = model.d
    x0 = np.zeros(d, dtype=np.int64)
    x0[-1] = K - 1
    res = simulate_paths(
        model,
        steps=horizon,
        reps=reps,
        x0=x0,
        seed=seed,
        stream=stream,
        track_return=True,
        stop_when_all_returned=True,
    )
    T = max(res["final_step"], 1)
    frac = float(res["returned"].mean())
    slope = (res["x_final"].sum(axis=1) - float(x0.sum())) / T
    m = float(slope.mean())
    se = float(slope.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    ci = (m - 1.96 * se, m + 1.96 * se)
    if frac >= 0.99:
        hint = "stable-like"
    elif ci[0] > 0:
        hint = "transient-like"
    else:
        hint = "inconclusive"
    return {
        "returned_fraction": frac,
        "n_returned": int(res["returned"].sum()),
        "reps": reps,
        "horizon": horizon,
        "final_step": int(T),
        "slope_mean": m,
        "slope_ci": ci,
        "return_time": res["return_time"],
        "verdict_hint": hint,
    }


# ---------------------------------------------------------------------------
# Truncated stationary distributions


def truncated_stationary(model: MmrrwModel, L: int) -> tuple[list[tuple[tuple[int, ...], int]], np.ndarray]:
    """Stationary law of the walk confined to {0..L}^d.

    Upward jumps that would leave the box are cancelled coordinatewise; the
    to-face and background draw are unaffected because a clamped coordinate
    stays strictly positive.  Returns (states, pi) with states as
    (position, background) pairs in enumeration order.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    d = model.d
    states: list[tuple[tuple[int, ...], int]] = []
    index: dict[tuple[tuple[int, ...], int], int] = {}
    for x in itertools.product(range(L + 1), repeat=d):
        A = face_of(x)
        for i in range(model.faces[A]):
            index[(x, i)] = len(states)
            states.append((x, i))
    n = len(states)

    by_from: dict[Face, list[tuple[BlockKey, np.ndarray]]] = {}
    for key, arr in model.blocks.items():
        by_from.setdefault(key[0], []).append((key, np.asarray(arr, dtype=float)))

    rows_ix: list[int] = []
    cols_ix: list[int] = []
    vals: list[float] = []
    for x in itertools.product(range(L + 1), repeat=d):
        A = face_of(x)
        context = tuple(l for l in A if x[l - 1] == 1)
        nA = model.faces[A]
        for key, arr in by_from.get(A, []):
            _, z, B = key
            if context_to_face(A, context, z) != B:
                continue
            xn = tuple(min(x[l] + z[l], L) for l in range(d))
            for i in range(nA):
                r = index[(x, i)]
                for j in range(arr.shape[1]):
                    if arr[i, j] == 0.0:
                        continue
                    rows_ix.append(r)
                    cols_ix.append(index[(xn, j)])
                    vals.append(float(arr[i, j]))

    if n <= 400:
        P = np.zeros((n, n))
        for r, cc, v in zip(rows_ix, cols_ix, vals):
            P[r, cc] += v
        return states, stationary_finite(P)

    from scipy import sparse
    from scipy.sparse.linalg import spsolve

    P = sparse.coo_matrix((vals, (rows_ix, cols_ix)), shape=(n, n)).tocsr()
    M = (P - sparse.identity(n, format="csr")).T.tolil()
    M[n - 1, :] = 1.0
    rhs = np.zeros(n)
    rhs[n - 1] = 1.0
    pi = spsolve(M.tocsr(), rhs)
    resid = np.abs(pi @ P - pi).max()
    if resid > 1e-8 or pi.min() < -1e-10:
        raise ComputationError(f"truncated stationary solve failed (residual {resid:.3e})")
    pi = np.clip(pi, 0.0, None)
    return states, pi / pi.sum()
