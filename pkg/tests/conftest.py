"""Shared generators for randomized test suites.

All generators take an explicit ``numpy.random.Generator`` so every test
controls its own seed; nothing here draws from global state.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from mmrrw.model import MmrrwModel, all_faces, admissible_to_faces, increments_for_face
from mmrrw.qbd import compute_R


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)


def random_stochastic(rng, n: int) -> np.ndarray:
    P = rng.random((n, n)) + 0.05
    return P / P.sum(axis=1, keepdims=True)


def random_stable_qbd(rng, n: int, max_sp: float = 0.6):
    """Level-homogeneous blocks (A0, A1, A2) with spectral radius of R below
    `max_sp`, so a level-60 truncation is far beyond the mass of the law."""
    while True:
        raw = rng.random((3, n, n)) + 0.02
        raw[0] *= 0.5  # keep the up-blocks light
        tot = raw.sum(axis=0).sum(axis=1, keepdims=True)
        A0, A1, A2 = raw[0] / tot, raw[1] / tot, raw[2] / tot
        R, _ = compute_R(A0, A1, A2)
        sp = max(abs(np.linalg.eigvals(R)))
        if sp < max_sp:
            return A0, A1, A2


def random_qbd_boundary(rng, A0, A1, A2, m0: int | None = None):
    """Boundary blocks (B00, B01, B10) compatible with the interior blocks."""
    n = A0.shape[0]
    m0 = n if m0 is None else m0
    raw0 = rng.random((m0, m0)) + 0.05
    raw1 = rng.random((m0, n)) + 0.05
    tot = raw0.sum(axis=1, keepdims=True) + raw1.sum(axis=1, keepdims=True)
    B00, B01 = raw0 / tot, raw1 / tot
    raw10 = rng.random((n, m0)) + 0.05
    deficit = A2.sum(axis=1)  # level-1 rows must close to one
    B10 = raw10 * (deficit / raw10.sum(axis=1))[:, None]
    return B00, B01, B10


def _face_law(rng, d: int, face) -> dict:
    zs = list(increments_for_face(d, face))
    p = rng.dirichlet(np.ones(len(zs)) * 2.0)
    return dict(zip(zs, p))


def random_walk_2d(rng, band: float = 0.02) -> MmrrwModel:
    """Single-background planar walk whose interior and edge drifts all stay
    outside the `band` zero band."""
    from mmrrw.examples import orthant_walk
    from mmrrw.induced import face_drift

    while True:
        laws = {f: _face_law(rng, 2, f) for f in all_faces(2)}
        model = orthant_walk(2, laws)
        vals = []
        fdN = face_drift(model, (1, 2))
        vals.extend(fdN.value)
        ok = True
        for A in [(1,), (2,)]:
            fd = face_drift(model, A)
            vals.append(fd.level_drift)
            if fd.status == "positive":
                vals.extend(fd.value[l - 1] for l in A)
            elif fd.status == "unknown":
                ok = False
        if ok and min(abs(v) for v in vals) > band:
            return model


def random_modulated_model(rng, d: int, n: int) -> MmrrwModel:
    """Background-modulated product walk: one shared background chain, each
    coordinate's step law depending on the background state only."""
    Q = random_stochastic(rng, n)
    interior = rng.dirichlet(np.ones(3) * 2.0, size=(n, d))  # (bg, coord) -> (down, stay, up)
    edge = rng.dirichlet(np.ones(2) * 2.0, size=(n, d))  # (bg, coord) -> (stay, up)
    faces = {f: n for f in all_faces(d)}
    blocks = {}
    for A in all_faces(d):
        in_A = [l in A for l in range(1, d + 1)]
        for z in itertools.product(*[(-1, 0, 1) if in_A[l] else (0, 1) for l in range(d)]):
            prob = np.ones(n)
            for l in range(d):
                row = interior[:, l] if in_A[l] else edge[:, l]
                prob = prob * row[:, (z[l] + 1) if in_A[l] else z[l]]
            block = prob[:, None] * Q
            for B in admissible_to_faces(A, z):
                blocks[(A, z, B)] = block
    model = MmrrwModel(d=d, faces=faces, blocks=blocks)
    model.validate()
    return model


# ---------------------------------------------------------------------------
# Independent transliteration of the planar case table, used as the oracle
# for classify_2d.  Inputs are the three drift vectors; output is a verdict.


def theorem_2d_verdict(aN, a1, a2, band: float = 1e-9) -> str:
    """Planar case table: verdict from sign(a(N)) and the edge drifts.

    a1/a2 are the full drift vectors of the edge faces (None when the edge's
    induced chain is transient, in which case the sign of the corresponding
    interior component already decides).
    """

    def sgn(v):
        return 0 if abs(v) <= band else (1 if v > 0 else -1)

    s1, s2 = sgn(aN[0]), sgn(aN[1])
    if s1 < 0 and s2 < 0:
        # both interior components negative: edges are positive recurrent
        e1, e2 = sgn(a1[0]), sgn(a2[1])
        if 0 in (e1, e2):
            return "unknown"
        return "positive-recurrent" if (e1 < 0 and e2 < 0) else "transient"
    if s1 >= 0 and s2 >= 0:
        if s1 == 0 or s2 == 0:
            return "unknown" if (s1 == 0 and s2 == 0) else "transient"
        return "transient"
    # mixed: exactly one interior component negative, so exactly one edge
    # chain is positive recurrent and its own drift component decides
    if s2 < 0:  # edge {1} positive recurrent, decided by a_1({1})
        e = sgn(a1[0])
    else:  # s1 < 0: decided by a_2({2})
        e = sgn(a2[1])
    return "unknown" if e == 0 else ("positive-recurrent" if e < 0 else "transient")


# ---------------------------------------------------------------------------
# Drift-profile synthesis straight from a decision-table row (no model).


def profile_from_row(rng, aN_signs, row):
    """Drift profile with random magnitudes matching one table row.

    Blank slots are filled consistently: a two-coordinate face is positive
    recurrent exactly when the free coordinate's interior drift is negative,
    and a blank single-coordinate face takes the status the planar case
    table assigns to its induced chain.
    """
    from mmrrw.classify import DriftProfile, FaceInfo

    d = 3

    def mag():
        return float(rng.uniform(0.05, 0.5))

    def vec(face, signs):
        v = np.zeros(d)
        for l in face:
            v[l - 1] = {"+": mag(), "-": -mag()}[signs[l - 1]]
        return v

    N = (1, 2, 3)
    faces = {N: FaceInfo(N, "positive", vec(N, aN_signs), method="synthetic")}
    aN = faces[N].value

    for F in [(1, 2), (2, 3), (1, 3)]:
        slot = row["slots"][F]
        free = next(l for l in N if l not in F)
        if slot == "na" or (slot is None and aN[free - 1] > 0):
            faces[F] = FaceInfo(F, "transient", None, method="synthetic")
        elif slot is None:
            signs = tuple(rng.choice(["+", "-"]) if l in F else "0" for l in N)
            faces[F] = FaceInfo(F, "positive", vec(F, signs), method="synthetic")
        else:
            faces[F] = FaceInfo(F, "positive", vec(F, slot), method="synthetic")

    for l in N:
        F = (l,)
        slot = row["slots"][F]
        if slot == "na":
            faces[F] = FaceInfo(F, "transient", None, method="synthetic")
            continue
        if slot is not None:
            faces[F] = FaceInfo(F, "positive", vec(F, slot), method="synthetic")
            continue
        # blank: the induced chain of face {l} is planar; recurse
        m, k = [v for v in N if v != l]
        sub_N = np.array([aN[m - 1], aN[k - 1]])
        sub = {}
        for idx, c in enumerate((m, k)):
            pf = faces[tuple(sorted((l, c)))]
            sub[idx] = None if pf.value is None else np.array([pf.value[m - 1], pf.value[k - 1]])
        verdict = theorem_2d_verdict(sub_N, sub[0], sub[1])
        if verdict == "positive-recurrent":
            signs = tuple(rng.choice(["+", "-"]) if v == l else "0" for v in N)
            faces[F] = FaceInfo(F, "positive", vec(F, signs), method="synthetic")
        else:
            faces[F] = FaceInfo(F, "transient", None, method="synthetic")
    return DriftProfile(d=d, faces=faces)
