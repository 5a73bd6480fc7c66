"""Ready-made models.

Two families:

* a three-queue network with cyclic service interference: each server takes
  a vacation whenever its queue empties, and a server whose cyclic
  predecessor is on vacation is suspended.  Depending on the vacation rate
  the network is stable outright, stable only through the rotating-drift
  mechanism, or transient — with closed-form drifts throughout.

* synthetic three-dimensional walks engineered to land on a chosen row of
  the classification tables, with every required drift sign certified by
  construction (exactly for interior/two-coordinate faces, by occupancy
  bounds for single-coordinate faces).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from mmrrw.model import (
    Face,
    MmrrwModel,
    admissible_to_faces,
    all_faces,
    face_key,
    parse_face_key,
)
from mmrrw.simulate import CtmcModel, uniformize, _rng
from mmrrw.classify import _TABLES_3D

_PRE = {1: 3, 2: 1, 3: 2}
_SUC = {1: 2, 2: 3, 3: 1}

# server states
_SERVING = 2
_SUSPENDED = 1
_IDLE = 0
_VACATION = -1


@dataclass
class ThreeQueueParams:
    lam: float
    mu: float
    delta: float
    nu: float | None = None


def _queue_states(face: Face) -> list[tuple[int, int, int]]:
    """Background states for a face, in enumeration order.

    Servers of empty queues range freely over {vacation, idle}, listed in
    ascending queue order with vacation first.  A busy queue's server is
    forced: suspended when its cyclic predecessor is on vacation, serving
    otherwise (predecessors inside the face are never on vacation).
    """
    free = [l for l in (1, 2, 3) if l not in face]
    out = []
    for combo in itertools.product((_VACATION, _IDLE), repeat=len(free)):
        J: dict[int, int] = dict(zip(free, combo))
        for l in face:
            J[l] = _SUSPENDED if J.get(_PRE[l]) == _VACATION else _SERVING
        out.append((J[1], J[2], J[3]))
    return out


def three_queue_ctmc(lam: float, mu: float, delta: float) -> CtmcModel:
    """Jump rates of the three-queue network.

    Events: arrivals at rate `lam` per queue (blocked during the server's
    vacation), service completions at rate `mu` from a serving server (the
    server leaves on vacation when its queue empties, suspending its cyclic
    successor), and vacation ends at rate `delta` (resuming the successor).
    """
    if min(lam, mu, delta) <= 0:
        raise ValueError("all rates must be positive")
    faces = {f: len(_queue_states(f)) for f in all_faces(3)}
    states = {f: _queue_states(f) for f in all_faces(3)}
    index = {f: {J: i for i, J in enumerate(states[f])} for f in all_faces(3)}
    rates: dict = {}

    def add(A: Face, z, B: Face, i: int, Jn: dict[int, int], rate: float) -> None:
        key = (A, tuple(z), B)
        if key not in rates:
            rates[key] = np.zeros((faces[A], faces[B]))
        rates[key][i, index[B][(Jn[1], Jn[2], Jn[3])]] += rate

    for A in all_faces(3):
        for i, Jt in enumerate(states[A]):
            J = dict(zip((1, 2, 3), Jt))
            for l in (1, 2, 3):
                s = _SUC[l]
                if J[l] != _VACATION:  # arrival
                    z = [0, 0, 0]
                    z[l - 1] = 1
                    if l in A:
                        add(A, z, A, i, J, lam)
                    else:
                        B = tuple(sorted(set(A) | {l}))
                        Jn = dict(J)
                        Jn[l] = _SUSPENDED if J[_PRE[l]] == _VACATION else _SERVING
                        add(A, z, B, i, Jn, lam)
                if J[l] == _SERVING:  # service completion (queue l is busy)
                    z = [0, 0, 0]
                    z[l - 1] = -1
                    add(A, z, A, i, J, mu)  # the queue held >= 2 customers
                    B = tuple(v for v in A if v != l)  # the queue held exactly 1
                    Jn = dict(J)
                    Jn[l] = _VACATION
                    if s in B and Jn[s] == _SERVING:
                        Jn[s] = _SUSPENDED
                    add(A, z, B, i, Jn, mu)
                if J[l] == _VACATION:  # vacation ends
                    Jn = dict(J)
                    Jn[l] = _IDLE
                    if s in A and Jn[s] == _SUSPENDED:
                        Jn[s] = _SERVING
                    add(A, (0, 0, 0), A, i, Jn, delta)

    meta = {
        "name": "three-queue",
        "params": {"lam": lam, "mu": mu, "delta": delta},
        "backgrounds": {face_key(f): [list(J) for J in states[f]] for f in all_faces(3)},
    }
    return CtmcModel(d=3, faces=faces, rates=rates, metadata=meta)


def three_queue_model(
    lam: float, mu: float, delta: float, nu: float | None = None
) -> MmrrwModel:
    """Uniformized three-queue network as a walk model.

    `nu` defaults to the exact maximum outflow 3*max(lam+mu, delta); larger
    values are allowed and only rescale all drifts.
    """
    model = uniformize(three_queue_ctmc(lam, mu, delta), nu=nu)
    nu_used = model.metadata["uniformization_rate"]
    model.metadata["regime"] = three_queue_regime(lam, mu, delta)
    if lam < mu:
        model.metadata["closed_form"] = three_queue_closed_form(lam, mu, delta, nu_used)
    return model


def three_queue_closed_form(lam: float, mu: float, delta: float, nu: float) -> dict:
    """Exact drift vectors of the three-queue network (requires lam < mu).

    On a two-queue face the empty queue's server alternates between vacation
    and an M/M/1-style busy cycle; `p_vacation` is its stationary vacation
    probability and the suspended neighbour loses exactly that fraction of
    its service capacity.
    """
    if not lam < mu:
        raise ValueError("closed forms need lam < mu")
    rho = lam / mu
    p_vac = (1 - rho) / (1 - rho + delta / lam)
    fast = -(mu - lam) / nu  # a queue whose predecessor never rests
    slow = -((1 - p_vac) * mu - lam) / nu  # a queue suspended p_vac of the time
    return {
        "rho": rho,
        "p_vacation": p_vac,
        "p_level": {"empty_vacation": p_vac, "level0": (delta / lam) * p_vac, "ratio": rho},
        "1,2,3": [fast, fast, fast],
        "1,2": [slow, fast, 0.0],
        "2,3": [0.0, slow, fast],
        "1,3": [fast, 0.0, slow],
        "spiral_ratio": -slow / fast,
    }


def three_queue_regime(lam: float, mu: float, delta: float) -> str:
    """Which stability mechanism operates at these rates.

    For lam < mu: large vacation rates make every boundary drift negative;
    below `lam*rho` the suspended-neighbour drift turns positive and
    stability survives only through the rotating pattern, until the ratio
    product crosses one at `lam*(rho - 1/2)`.
    """
    if lam >= mu:
        return "overloaded"
    rho = lam / mu
    hi, lo = lam * rho, lam * (rho - 0.5)
    if abs(delta - hi) < 1e-12 or abs(delta - lo) < 1e-12:
        return "critical"
    if delta > hi:
        return "all-drifts-stable"
    if delta > lo:
        return "spiral-stable"
    return "spiral-transient"


# ---------------------------------------------------------------------------
# Plain orthant walks (one background state everywhere)


def orthant_walk(d: int, laws: dict) -> MmrrwModel:
    """Build a walk with trivial background from per-face increment laws.

    `laws` maps each face (tuple or key string) to a dict increment -> probability.
    Every jump law is attached to all of its context-compatible to-faces, so
    the result is valid whenever each law sums to one and respects the
    boundary (no down-steps off the face).
    """
    faces = {f: 1 for f in all_faces(d)}
    norm: dict[Face, dict] = {}
    for k, law in laws.items():
        f = parse_face_key(k) if isinstance(k, str) else tuple(sorted(k))
        norm[f] = law
    blocks: dict = {}
    for f in all_faces(d):
        if f not in norm:
            raise ValueError(f"missing increment law for face {face_key(f)!r}")
        for z, p in norm[f].items():
            z = tuple(int(v) for v in z)
            if p < 0:
                raise ValueError(f"negative probability for increment {z} on face {face_key(f)!r}")
            if p == 0:
                continue
            for B in admissible_to_faces(f, z):
                blocks[(f, z, B)] = np.array([[float(p)]])
    model = MmrrwModel(d=d, faces=faces, blocks=blocks)
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Synthetic models for the three-dimensional decision tables
#
# Construction: one background state everywhere; coordinate l steps up with
# probability 1/4 wherever it is positive, and its down-step probability is
# tuned per *mode* = occupancy pattern of the other two coordinates.  An
# empty coordinate steps up with a single small probability r.  Then:
#
#   - the interior drift of coordinate l is its (1,1)-mode mean outright;
#   - on a two-coordinate face the single free coordinate evolves as an
#     independent birth-death chain whose time at zero has the closed form
#     pi0 = g / (g + r) with g = |interior drift|, so the pinned-mode means
#     can be solved to hit any prescribed pair-face drift exactly;
#   - on a single-coordinate face the two free coordinates interact, so the
#     remaining (0,0)-mode mean is chosen large enough that certified
#     occupancy bounds (stationary flow balance plus birth-death domination)
#     pin the drift sign.

_P_UP = 0.25
_MAG_LO, _MAG_HI = 0.05, 0.1
_CAP = 0.24


def row_labels() -> list[str]:
    """All decision-table row labels, in table order."""
    out = []
    for rows in _TABLES_3D.values():
        out.extend(r["label"] for r in rows)
    return out


def _find_row(label: str):
    for aN, rows in _TABLES_3D.items():
        for row in rows:
            if row["label"] == label:
                return aN, row
    raise ValueError(f"unknown decision-table row {label!r}; see row_labels()")


def _others(l: int) -> tuple[int, int]:
    return tuple(v for v in (1, 2, 3) if v != l)


def _mode_of(l: int, face) -> tuple[int, int]:
    fs = set(face)
    return tuple(1 if o in fs else 0 for o in _others(l))


def _signval(ch: str, mag: float) -> float:
    return {"+": mag, "-": -mag, "0": 0.0}[ch]


def random_table_model(label: str, seed: int = 0, spiral: str | None = None) -> MmrrwModel:
    """A random walk whose drift profile realizes a decision-table row.

    Interior and pair-face drifts hit randomly drawn targets exactly; the
    sign of every single-coordinate drift the row prescribes is certified by
    an occupancy bound recorded in the metadata.  For the cyclic row pass
    spiral="stable" or "transient" to pick the side of the ratio product.
    """
    aN_signs, row = _find_row(label)
    if spiral is not None and row["verdict"] != "spiral":
        raise ValueError(f"row {label} is not the cyclic row")
    rng = _rng(seed, 17)

    def mag() -> float:
        return float(rng.uniform(_MAG_LO, _MAG_HI))

    pairs = ((1, 2), (2, 3), (1, 3))
    for attempt in range(100):
        t_N = np.array([_signval(ch, mag()) for ch in aN_signs])
        targets: dict[Face, np.ndarray] = {}
        ok = True
        for F in pairs:
            free = next(v for v in (1, 2, 3) if v not in F)
            slot = row["slots"][F]
            if slot == "na":
                if not t_N[free - 1] > 0:
                    raise ValueError(f"row {label}: face {face_key(F)!r} cannot be transient")
                continue
            if t_N[free - 1] > 0:
                if slot is not None:
                    raise RuntimeError(f"row {label}: face {face_key(F)!r} cannot have a sign")
                continue  # blank slot on a face that is not positive recurrent
            t = np.zeros(3)
            for l in F:
                ch = slot[l - 1] if slot is not None else rng.choice(["+", "-"])
                t[l - 1] = _signval(ch, mag())
            targets[F] = t

        if row["verdict"] == "spiral" and spiral is not None:
            # part of C1-7-1: positive components are the ratio numerators
            prod = (
                (targets[(1, 2)][0] / -targets[(1, 2)][1])
                * (targets[(2, 3)][1] / -targets[(2, 3)][2])
                * (targets[(1, 3)][2] / -targets[(1, 3)][0])
            )
            goal = 0.5 if spiral == "stable" else 2.0
            f = (goal / prod) ** (1.0 / 3.0)
            targets[(1, 2)][0] *= f
            targets[(2, 3)][1] *= f
            targets[(1, 3)][2] *= f
            if max(abs(targets[F]).max() for F in pairs) > _CAP:
                continue

        gmin = min(
            [abs(v) for v in t_N if v != 0]
            + [abs(t[l - 1]) for F, t in targets.items() for l in F]
        )
        r = gmin / 200.0

        # solve the pinned modes
        modes = {l: {(1, 1): float(t_N[l - 1])} for l in (1, 2, 3)}
        for F in pairs:
            free = next(v for v in (1, 2, 3) if v not in F)
            if F in targets:
                g_free = abs(t_N[free - 1])
                pi0 = g_free / (g_free + r)
                for l in F:
                    solved = (targets[F][l - 1] - (1 - pi0) * t_N[l - 1]) / pi0
                    modes[l][_mode_of(l, F)] = float(solved)
            else:
                for l in F:
                    modes[l][_mode_of(l, F)] = float(t_N[l - 1])
        if max(abs(v) for md in modes.values() for v in md.values()) > _CAP:
            continue

        # choose the free (0,0) modes and certify singleton signs
        singles_meta: dict[str, dict] = {}
        for l in (1, 2, 3):
            slot = row["slots"][(l,)]
            if slot == "na" or slot is None:
                ch = "0"
                if slot is None:
                    ch = str(rng.choice(["+", "-"]))
                modes[l][(0, 0)] = float(_signval(ch, mag())) if ch != "0" else float(t_N[l - 1])
                continue
            sigma = slot[l - 1]
            others_vals = [modes[l][(1, 0)], modes[l][(0, 1)], modes[l][(1, 1)]]
            if all((v > 0) == (sigma == "+") and v != 0 for v in others_vals):
                d00 = _signval(sigma, mag())
                modes[l][(0, 0)] = d00
                lo = min(others_vals + [d00])
                hi = max(others_vals + [d00])
                singles_meta[face_key((l,))] = {"sign": sigma, "certificate": "convex", "bounds": [lo, hi]}
                continue
            bound = _certify_by_occupancy(l, modes, r, sigma, mag())
            if bound is None:
                ok = False
                break
            d00, lo, hi, q_tot = bound
            modes[l][(0, 0)] = d00
            singles_meta[face_key((l,))] = {
                "sign": sigma,
                "certificate": "occupancy-bound",
                "bounds": [lo, hi],
                "occupancy_mass": q_tot,
            }
        if ok:
            break
    else:
        raise RuntimeError(f"could not synthesize a model for row {label} (seed {seed})")

    model = _product_walk(modes, r)
    expected = row["verdict"]
    meta = {
        "construction": "table-row",
        "row": label,
        "expected_verdict": expected,
        "interior_drift": [float(v) for v in t_N],
        "pair_targets": {face_key(F): [float(v) for v in t] for F, t in targets.items()},
        "boundary_up_probability": r,
        "modes": {str(l): {f"{a}{b}": v for (a, b), v in md.items()} for l, md in modes.items()},
        "singleton_signs": singles_meta,
        "seed": seed,
    }
    if expected == "spiral":
        prod = (
            (targets[(1, 2)][0] / -targets[(1, 2)][1])
            * (targets[(2, 3)][1] / -targets[(2, 3)][2])
            * (targets[(1, 3)][2] / -targets[(1, 3)][0])
        )
        meta["ratio_product"] = float(prod)
        meta["expected_verdict"] = "positive" if prod < 1 else "transient"
    model.metadata.update(meta)
    return model


def _certify_by_occupancy(l: int, modes: dict, r: float, sigma: str, base_mag: float):
    """Pick d_l(0,0) so the sign of a_l({l}) is certified by occupancy bounds.

    Returns (d00, lower, upper, q_total) or None when no certification is
    possible.  Each free coordinate c is either uniformly stable on the face
    (both its modes negative: birth-death domination bounds its busy mass by
    r/(r+g)) or stable only while the other free coordinate is empty, in
    which case stationary flow balance gives
    q_c <= (r + up_mode * q_other) / |down_mode| + q_other.
    """
    m, k = _others(l)
    qs: dict[int, float] = {}
    deferred = []
    for c in (m, k):
        other_free = k if c == m else m
        v_on = modes[c][_mode_of(c, (l, other_free))]
        v_off = modes[c][_mode_of(c, (l,))]
        if v_off >= 0:
            return None  # rises even while alone: occupancy not small
        if v_on < 0:
            qs[c] = r / (r + min(-v_on, -v_off))
        else:
            deferred.append((c, other_free, v_on, v_off))
    if len(deferred) == 2:
        return None  # mutually destabilizing free coordinates
    for c, other_free, v_on, v_off in deferred:
        q_o = qs[other_free]
        qs[c] = (r + v_on * q_o) / (-v_off) + q_o
    q_tot = qs[m] + qs[k]
    if q_tot >= 0.5:
        return None
    others_vals = [modes[l][(1, 0)], modes[l][(0, 1)], modes[l][(1, 1)]]
    want = 1.0 if sigma == "+" else -1.0
    worst = min(others_vals) if sigma == "+" else max(others_vals)
    need = abs(q_tot * worst / (1 - q_tot)) if (worst * want) < 0 else 0.0
    d00 = want * min(_CAP, max(base_mag, 2.0 * need))
    span = (min(others_vals + [d00]), max(others_vals + [d00]))
    # E[a_l({l})] = d00 + sum_{pattern != (0,0)} P(pattern) (mode - d00)
    lo = d00 + q_tot * min(0.0, span[0] - d00)
    hi = d00 + q_tot * max(0.0, span[1] - d00)
    if sigma == "+" and lo <= 0:
        return None
    if sigma == "-" and hi >= 0:
        return None
    return float(d00), float(lo), float(hi), float(q_tot)


def _product_walk(modes: dict, r: float) -> MmrrwModel:
    """Assemble the single-background model from per-coordinate mode means."""
    faces = {f: 1 for f in all_faces(3)}
    blocks: dict = {}
    for A in all_faces(3):
        laws = []
        for l in (1, 2, 3):
            if l in A:
                dmean = modes[l][_mode_of(l, A)]
                laws.append({-1: _P_UP - dmean, 0: 0.5 + dmean, 1: _P_UP})
            else:
                laws.append({0: 1.0 - r, 1: r})
        for z in itertools.product(*[sorted(law) for law in laws]):
            p = 1.0
            for l in (1, 2, 3):
                p *= laws[l - 1][z[l - 1]]
            if p <= 0:
                continue
            for B in admissible_to_faces(A, z):
                blocks[(A, z, B)] = np.array([[p]])
    model = MmrrwModel(d=3, faces=faces, blocks=blocks)
    model.validate()
    return model
