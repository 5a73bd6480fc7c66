"""Data model for skip-free modulated reflecting random walks on Z_+^d.

A walk lives on the nonnegative integer orthant with a finite background
state attached to every face of the orthant.  The face of a point x is the
set of coordinates where x is strictly positive.  One-step increments are
skip-free: each coordinate moves by at most one, and a coordinate sitting
on the boundary can only stay or step up.

Transition probabilities are stored as dense blocks indexed by

    (from-face A, increment z, to-face B)

where entry (i, j) is the probability of jumping from background state i
(attached to A) to background state j (attached to B) while the location
moves by z.  For a coordinate l in A with z_l = -1 the to-face depends on
whether x_l was 1 or >= 2, so both block variants may be present; which one
applies at a concrete point is decided by the point's *context*, the set of
face coordinates that sit at exactly 1.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

Face = tuple[int, ...]
Increment = tuple[int, ...]
BlockKey = tuple[Face, Increment, Face]


class ModelValidationError(ValueError):
    """Raised when a model fails structural or stochastic validation."""


def face_key(face: Iterable[int]) -> str:
    """Serialize a face as ascending comma-separated 1-based indices ('' for the empty face)."""
    return ",".join(str(l) for l in sorted(face))


def parse_face_key(key: str) -> Face:
    key = key.strip()
    if not key:
        return ()
    try:
        parts = tuple(int(p) for p in key.split(","))
    except ValueError:
        raise ModelValidationError(f"malformed face key {key!r}") from None
    if list(parts) != sorted(set(parts)) or parts[0] < 1:
        raise ModelValidationError(f"malformed face key {key!r}")
    return parts


def face_of(x: Sequence[int]) -> Face:
    """Face of a point: the 1-based coordinates where x is strictly positive."""
    return tuple(l + 1 for l, v in enumerate(x) if v > 0)


def all_faces(d: int) -> list[Face]:
    faces: list[Face] = []
    for r in range(d + 1):
        faces.extend(itertools.combinations(range(1, d + 1), r))
    return faces


def increments_for_face(d: int, face: Face) -> Iterator[Increment]:
    """All skip-free increments available from points with the given face."""
    in_face = set(face)
    ranges = [(-1, 0, 1) if l in in_face else (0, 1) for l in range(1, d + 1)]
    return itertools.product(*ranges)


def admissible_to_faces(face: Face, z: Increment) -> list[Face]:
    """All to-faces compatible with a jump z from points with the given face.

    Coordinates outside the face join it exactly when they step up; a face
    coordinate stepping down may or may not leave, depending on context.
    """
    in_face = set(face)
    base = {l for l in face if z[l - 1] >= 0}
    base |= {l + 1 for l, v in enumerate(z) if v == 1 and (l + 1) not in in_face}
    optional = [l for l in face if z[l - 1] == -1]
    out = []
    for r in range(len(optional) + 1):
        for keep in itertools.combinations(optional, r):
            out.append(tuple(sorted(base | set(keep))))
    return out


def context_to_face(face: Face, context: Iterable[int], z: Increment) -> Face:
    """The to-face realised by jump z from a point whose context is `context`.

    The context is the set of face coordinates sitting at exactly 1; those
    leave the face when they step down, all other face coordinates stay.
    """
    ctx = set(context)
    dest = {l for l in face if not (z[l - 1] == -1 and l in ctx)}
    dest |= {l + 1 for l, v in enumerate(z) if v == 1 and (l + 1) not in set(face)}
    return tuple(sorted(dest))


@dataclass
class MmrrwModel:
    """A skip-free modulated reflecting random walk.

    Parameters
    ----------
    d : int
        Dimension of the orthant.
    faces : dict
        Maps every face (ascending tuple of 1-based coordinates) to the size
        of its background state space.
    blocks : dict
        Maps (from-face, increment, to-face) keys to nonnegative arrays of
        shape (faces[from], faces[to]).  Absent blocks are zero.
    metadata : dict
        Free-form JSON-serializable annotations; never interpreted by the
        solvers.
    """

    d: int
    faces: dict[Face, int]
    blocks: dict[BlockKey, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def block(self, from_face: Face, z: Increment, to_face: Face) -> np.ndarray:
        """The block for a key, or a zero array if the key is absent."""
        arr = self.blocks.get((from_face, z, to_face))
        if arr is None:
            return np.zeros((self.faces[from_face], self.faces[to_face]))
        return arr

    def validate(self, tol: float = 1e-12) -> None:
        errors = validate_model(self, tol=tol)
        if errors:
            raise ModelValidationError("; ".join(errors))

    def copy(self) -> "MmrrwModel":
        return MmrrwModel(
            d=self.d,
            faces=dict(self.faces),
            blocks={k: v.copy() for k, v in self.blocks.items()},
            metadata=json.loads(json.dumps(self.metadata)),
        )


def validate_model(model: MmrrwModel, tol: float = 1e-12) -> list[str]:
    """Check structural rules and per-context row sums; return error messages.

    An empty list means the model is valid.  Row sums are checked for every
    (face, context) pair: summing the selected block rows over all increments
    must give exactly 1 for each background state.
    """
    errors: list[str] = []
    d = model.d
    if d < 0:
        return [f"dimension must be >= 0, got {d}"]
    expected = set(all_faces(d))
    got = set(model.faces)
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        if missing:
            errors.append(f"missing faces: {[face_key(f) for f in missing]}")
        if extra:
            errors.append(f"unexpected faces: {[face_key(f) for f in extra]}")
        return errors
    for f, n in model.faces.items():
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            errors.append(f"face {face_key(f)!r} has invalid background size {n!r}")
    if errors:
        return errors

    for (A, z, B), arr in model.blocks.items():
        name = f"block ({face_key(A)!r}, {list(z)}, {face_key(B)!r})"
        if A not in model.faces or B not in model.faces:
            errors.append(f"{name}: unknown face")
            continue
        if len(z) != d or any(v not in (-1, 0, 1) for v in z):
            errors.append(f"{name}: increment must be in {{-1,0,1}}^{d}")
            continue
        in_A = set(A)
        ok = True
        for l in range(1, d + 1):
            zl = z[l - 1]
            if l not in in_A and zl == -1:
                errors.append(f"{name}: coordinate {l} is on the boundary but steps down")
                ok = False
            elif l not in in_A and ((l in B) != (zl == 1)):
                errors.append(f"{name}: coordinate {l} off the from-face must join the to-face iff it steps up")
                ok = False
            elif l in in_A and l not in B and zl != -1:
                errors.append(f"{name}: coordinate {l} can only leave the face by stepping down")
                ok = False
        if not ok:
            continue
        want = (model.faces[A], model.faces[B])
        if not isinstance(arr, np.ndarray) or arr.shape != want:
            errors.append(f"{name}: expected shape {want}, got {getattr(arr, 'shape', None)}")
            continue
        if np.any(arr < -tol) or np.any(arr > 1 + tol):
            errors.append(f"{name}: entries outside [0, 1]")
    if errors:
        return errors

    for A in model.faces:
        n = model.faces[A]
        zs = list(increments_for_face(d, A))
        for r in range(len(A) + 1):
            for E in itertools.combinations(A, r):
                total = np.zeros(n)
                for z in zs:
                    B = context_to_face(A, E, z)
                    key = (A, z, B)
                    if key in model.blocks:
                        total += model.blocks[key].sum(axis=1)
                bad = np.abs(total - 1.0) > tol
                if np.any(bad):
                    i = int(np.argmax(np.abs(total - 1.0)))
                    errors.append(
                        f"face {face_key(A)!r}, context {face_key(E)!r}: row sums must be 1, "
                        f"background {i} sums to {total[i]:.12g}"
                    )
    return errors


def local_drift(model: MmrrwModel, face: Face, context: Face = ()) -> np.ndarray:
    """Mean one-step increment for every background state at a face/context.

    Returns an array of shape (faces[face], d); row i is the conditional mean
    jump from a point with the given face and context in background state i.
    """
    n = model.faces[face]
    alpha = np.zeros((n, model.d))
    for z in increments_for_face(model.d, face):
        B = context_to_face(face, context, z)
        key = (face, z, B)
        if key in model.blocks:
            rs = model.blocks[key].sum(axis=1)
            alpha += rs[:, None] * np.asarray(z, dtype=float)[None, :]
    return alpha


# ---------------------------------------------------------------------------
# JSON serialization


def _model_to_dict(model: MmrrwModel) -> dict:
    block_items = sorted(model.blocks.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2]))
    out = {
        "d": model.d,
        "faces": {face_key(f): int(n) for f, n in sorted(model.faces.items())},
        "blocks": [
            {
                "from": face_key(A),
                "z": list(z),
                "to": face_key(B),
                "p": np.asarray(arr, dtype=float).tolist(),
            }
            for (A, z, B), arr in block_items
        ],
    }
    if model.metadata:
        out["metadata"] = model.metadata
    return out


def save_model(model: MmrrwModel, path: str) -> None:
    """Write a model to a JSON file (stable key order, round-trippable floats)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def model_to_json(model: MmrrwModel) -> str:
    return json.dumps(_model_to_dict(model), indent=2, sort_keys=True)


def load_model(path_or_dict, validate: bool = True, tol: float = 1e-12) -> MmrrwModel:
    """Load a model from a JSON file path or an already-parsed dict."""
    if isinstance(path_or_dict, Mapping):
        data = path_or_dict
    else:
        with open(path_or_dict, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    try:
        d = int(data["d"])
        faces = {parse_face_key(k): int(v) for k, v in data["faces"].items()}
        blocks: dict[BlockKey, np.ndarray] = {}
        for rec in data["blocks"]:
            key = (parse_face_key(rec["from"]), tuple(int(v) for v in rec["z"]), parse_face_key(rec["to"]))
            if key in blocks:
                raise ModelValidationError(f"duplicate block {rec['from']!r}/{rec['z']}/{rec['to']!r}")
            blocks[key] = np.asarray(rec["p"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError(f"malformed model JSON: {exc}") from exc
    model = MmrrwModel(d=d, faces=faces, blocks=blocks, metadata=dict(data.get("metadata", {})))
    if validate:
        model.validate(tol=tol)
    return model


# ---------------------------------------------------------------------------
# Model transforms


def permute_coordinates(model: MmrrwModel, perm: Sequence[int]) -> MmrrwModel:
    """Relabel coordinates: old coordinate l becomes perm[l-1] (a bijection of 1..d).

    Background spaces travel with their faces; block matrices are unchanged.
    """
    d = model.d
    if sorted(perm) != list(range(1, d + 1)):
        raise ValueError(f"perm must be a permutation of 1..{d}")

    def pface(f: Face) -> Face:
        return tuple(sorted(perm[l - 1] for l in f))

    def pz(z: Increment) -> Increment:
        out = [0] * d
        for l in range(1, d + 1):
            out[perm[l - 1] - 1] = z[l - 1]
        return tuple(out)

    return MmrrwModel(
        d=d,
        faces={pface(f): n for f, n in model.faces.items()},
        blocks={(pface(A), pz(z), pface(B)): arr.copy() for (A, z, B), arr in model.blocks.items()},
        metadata=dict(model.metadata),
    )


def lazy_model(model: MmrrwModel, theta: float) -> MmrrwModel:
    """Mix every jump law with a hold: with probability 1-theta the walk stands still.

    All mean drifts scale by theta; recurrence classification is unaffected.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must be in (0, 1]")
    blocks: dict[BlockKey, np.ndarray] = {}
    for (A, z, B), arr in model.blocks.items():
        blocks[(A, z, B)] = theta * arr
    zero = lambda d: tuple([0] * d)  # noqa: E731
    for A, n in model.faces.items():
        key = (A, zero(model.d), A)
        if key not in blocks:
            blocks[key] = np.zeros((n, n))
        blocks[key] = blocks[key] + (1 - theta) * np.eye(n)
    return MmrrwModel(d=model.d, faces=dict(model.faces), blocks=blocks, metadata=dict(model.metadata))
