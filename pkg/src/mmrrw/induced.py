"""Induced chains: freeze a set of coordinates deep in the interior and marginalize.

For a face A, the induced chain L^A tracks only the coordinates outside A
while the A-coordinates are treated as saturated (always >= 2, never hitting
the boundary).  Only parent blocks whose from- and to-faces contain A
contribute; their probabilities are summed over the discarded components of
the increment.  L^N (all coordinates frozen) is the finite background chain.

When the induced chain is one-dimensional it is a quasi-birth-death process,
and the mean drift of the frozen coordinates under its stationary law is
available in closed form.  That vector, the *face drift* a(A), is the basic
input of every classification rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mmrrw.model import (
    BlockKey,
    Face,
    MmrrwModel,
    context_to_face,
    face_key,
    increments_for_face,
    local_drift,
)
from mmrrw import qbd
from mmrrw.qbd import ComputationError, stationary_finite


def project(model: MmrrwModel, A: Face) -> MmrrwModel:
    """The induced model L^A on the coordinates outside A (renumbered 1..d-|A|)."""
    proj, _ = project_with_drift(model, A)
    return proj


def project_with_drift(model: MmrrwModel, A: Face) -> tuple[MmrrwModel, dict[BlockKey, np.ndarray]]:
    """Project onto the complement of A, also accumulating parent mean increments.

    Returns (L^A, W) where W maps each projected block key to an array of
    shape (n_from, n_to, d) whose [i, j, l] entry is the sum over discarded
    increment components of z_l * p(i, j).  Summing W over projected
    increments and to-states gives the parent-coordinate local drift at a
    saturated point, which is what face drifts are built from.
    """
    A = tuple(sorted(A))
    if any(l < 1 or l > model.d for l in A):
        raise ValueError(f"face {A} out of range for d={model.d}")
    a_set = set(A)
    keep = [l for l in range(1, model.d + 1) if l not in a_set]
    ren = {l: i + 1 for i, l in enumerate(keep)}

    def pface(f: Face) -> Face:
        return tuple(ren[l] for l in f if l in ren)

    faces_new: dict[Face, int] = {}
    for f, n in model.faces.items():
        if a_set <= set(f):
            faces_new[pface(f)] = n

    blocks_new: dict[BlockKey, np.ndarray] = {}
    drift_new: dict[BlockKey, np.ndarray] = {}
    for (F, z, G), arr in model.blocks.items():
        if not (a_set <= set(F) and a_set <= set(G)):
            continue
        key = (pface(F), tuple(z[l - 1] for l in keep), pface(G))
        zvec = np.asarray(z, dtype=float)
        if key not in blocks_new:
            blocks_new[key] = np.zeros_like(arr)
            drift_new[key] = np.zeros(arr.shape + (model.d,))
        blocks_new[key] = blocks_new[key] + arr
        drift_new[key] = drift_new[key] + arr[:, :, None] * zvec[None, None, :]

    meta = {"projection_of": face_key(A)}
    if model.metadata.get("name"):
        meta["name"] = f"{model.metadata['name']}^{{{face_key(A)}}}"
    return MmrrwModel(d=len(keep), faces=faces_new, blocks=blocks_new, metadata=meta), drift_new


def background_chain(model: MmrrwModel) -> np.ndarray:
    """Transition matrix of L^N, the background chain with every coordinate saturated."""
    full = tuple(range(1, model.d + 1))
    proj = project(model, full)
    return proj.block((), (), ())


def assemble_qbd(model1d: MmrrwModel) -> dict[str, np.ndarray]:
    """Extract the six QBD blocks from a one-dimensional model.

    Levels >= 1 share the background space of face (1,); level 0 uses the
    empty face.  Missing blocks come back as zeros.
    """
    if model1d.d != 1:
        raise ValueError(f"expected a 1-dimensional model, got d={model1d.d}")
    return {
        "B00": model1d.block((), (0,), ()),
        "B01": model1d.block((), (1,), (1,)),
        "B10": model1d.block((1,), (-1,), ()),
        "A0": model1d.block((1,), (1,), (1,)),
        "A1": model1d.block((1,), (0,), (1,)),
        "A2": model1d.block((1,), (-1,), (1,)),
    }


@dataclass
class FaceDrift:
    """Exact face-drift computation result for one face.

    status is the recurrence class of the induced chain L^A: "positive",
    "transient", or "null".  value is the length-d drift vector a(A) (only
    meaningful when status == "positive"); components outside A are exactly
    zero.  level_drift is the raw QBD mean-drift statistic whose sign decided
    the status (None for the full face, whose induced chain is finite).
    """

    face: Face
    status: str
    value: np.ndarray | None
    level_drift: float | None
    detail: dict


def _class_drift(drift_blocks, proj: MmrrwModel, face: Face, context: Face) -> np.ndarray:
    """Parent-coordinate local drift rows for a projected face/context (n x d)."""
    n = proj.faces[face]
    d_parent = next(iter(drift_blocks.values())).shape[2] if drift_blocks else 0
    alpha = np.zeros((n, d_parent))
    for z in increments_for_face(proj.d, face):
        B = context_to_face(face, context, z)
        key = (face, z, B)
        if key in drift_blocks:
            alpha += drift_blocks[key].sum(axis=1)
    return alpha


def face_drift(model: MmrrwModel, A: Face, tol: float = 1e-14) -> FaceDrift:
    """Exact drift vector a(A) for a face of codimension 0 or 1.

    For A = N the induced chain is the finite background chain; for
    |A| = d-1 it is a QBD.  Anything smaller has a genuinely multidimensional
    induced chain and no finite exact method; see
    :func:`mmrrw.simulate.estimate_drift_sign` for the Monte Carlo route.
    """
    A = tuple(sorted(A))
    codim = model.d - len(A)
    if codim == 0:
        P = background_chain(model)
        kappa = stationary_finite(P)
        full = tuple(range(1, model.d + 1))
        a = kappa @ local_drift(model, full, ())
        return FaceDrift(face=A, status="positive", value=a, level_drift=None, detail={"kappa": kappa})
    if codim != 1:
        raise ValueError(
            f"face {face_key(A)!r} has codimension {codim}; exact drift needs codimension 0 or 1"
        )

    proj, wblocks = project_with_drift(model, A)
    blocks = assemble_qbd(proj)
    A0, A1, A2 = blocks["A0"], blocks["A1"], blocks["A2"]
    pr, level_drift, kappa = qbd.qbd_positive_recurrent(A0, A1, A2)
    if not pr:
        status = "transient" if level_drift > 0 else "null"
        return FaceDrift(face=A, status=status, value=None, level_drift=level_drift, detail={"kappa": kappa})

    R, info = qbd.compute_R(A0, A1, A2, tol=tol)
    pi0, pi1 = qbd.qbd_stationary(blocks["B00"], blocks["B01"], blocks["B10"], A0, A1, A2, R=R)

    alpha0 = _class_drift(wblocks, proj, (), ())
    alpha1 = _class_drift(wblocks, proj, (1,), (1,))
    alpha2 = _class_drift(wblocks, proj, (1,), ())
    tail = pi1 @ R @ np.linalg.inv(np.eye(R.shape[0]) - R)
    a = pi0 @ alpha0 + pi1 @ alpha1 + tail @ alpha2

    keep = [l for l in range(1, model.d + 1) if l not in set(A)]
    resid = max(abs(a[l - 1]) for l in keep)
    if resid > 1e-8:
        raise ComputationError(
            f"stationary drift along the tracked coordinate of L^{face_key(A)} "
            f"should vanish, got {resid:.3e}"
        )
    for l in keep:
        a[l - 1] = 0.0
    return FaceDrift(
        face=A,
        status="positive",
        value=a,
        level_drift=level_drift,
        detail={"R": R, "pi0": pi0, "pi1": pi1, "kappa": kappa, "R_info": info},
    )
