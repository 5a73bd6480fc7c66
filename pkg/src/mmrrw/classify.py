"""Recurrence classification from face drifts.

The decision pipeline:

1. Build a *drift profile*: for every nonempty face A, the recurrence status
   of the induced chain L^A and (when it is positive recurrent) the drift
   vector a(A).  Codimension 0 and 1 are exact; deeper faces are resolved
   recursively, with Monte Carlo sign estimates for the drift values that
   have no finite closed form.

2. Apply a decision rule.  In one dimension the sign of the drift decides.
   In two dimensions a complete case analysis applies.  In three dimensions
   a family of decision tables covers every generic sign pattern up to
   coordinate permutation, including a cyclic ("spiral") pattern decided by
   a product of drift ratios.  In higher dimensions only the two sufficient
   feasibility conditions below are available.

3. Attach a checkable certificate: either a symmetric positive definite
   matrix U with <a(A), U e_j> < 0 for every positive recurrent face A and
   j in A (positive recurrence), or an escape direction w that is positive
   on A, negative off A, and has <a(B), w> > 0 for every positive recurrent
   face B meeting A (transience).  The cyclic pattern gets bespoke
   constructions of both kinds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from mmrrw.model import Face, MmrrwModel, all_faces, face_key, parse_face_key
from mmrrw.induced import face_drift, project
from mmrrw.qbd import ComputationError
from mmrrw.simulate import estimate_drift_sign

VERDICT_POSITIVE = "positive-recurrent"
VERDICT_TRANSIENT = "transient"
VERDICT_UNKNOWN = "unknown"

_STATUS_FROM_VERDICT = {
    VERDICT_POSITIVE: "positive",
    VERDICT_TRANSIENT: "transient",
    VERDICT_UNKNOWN: "unknown",
}


def _sign_char(v: float, tol: float) -> str:
    if abs(v) <= tol:
        return "0"
    return "+" if v > 0 else "-"


@dataclass
class FaceInfo:
    """Status and drift of one induced chain L^A."""

    face: Face
    status: str  # "positive" | "transient" | "null" | "unknown"
    value: np.ndarray | None = None
    exact: bool = True
    ci: np.ndarray | None = None
    method: str = ""
    level_drift: float | None = None
    sign_override: tuple[str, ...] | None = None

    def sign(self, tol: float) -> tuple[str, ...] | None:
        """Componentwise drift signs ('-', '0', '+', or '?'), None if a(A) undefined."""
        if self.sign_override is not None:
            return self.sign_override
        if self.status != "positive":
            return None
        if self.value is None:
            d = max(self.face)
            return tuple("?" if (l + 1) in self.face else "0" for l in range(d))
        v = np.asarray(self.value, dtype=float)
        if self.exact:
            return tuple(_sign_char(x, tol) for x in v)
        ci = self.ci if self.ci is not None else np.zeros_like(v)
        out = []
        for x, h in zip(v, ci):
            if x == 0.0 and h == 0.0:
                out.append("0")
            elif x - h > 0:
                out.append("+")
            elif x + h < 0:
                out.append("-")
            else:
                out.append("?")
        return tuple(out)


@dataclass
class DriftProfile:
    """Drift information for every nonempty face of the orthant."""

    d: int
    faces: dict[Face, FaceInfo]
    tol: float = 1e-9

    def info(self, face: Face) -> FaceInfo:
        return self.faces[tuple(sorted(face))]

    def status(self, face: Face) -> str:
        return self.info(face).status

    def value(self, face: Face) -> np.ndarray | None:
        return self.info(face).value

    def sign(self, face: Face) -> tuple[str, ...] | None:
        return self.info(face).sign(self.tol)

    def positive_faces(self) -> list[Face]:
        return [f for f, i in sorted(self.faces.items()) if i.status == "positive"]

    def permuted(self, perm: tuple[int, ...]) -> "DriftProfile":
        """Relabel coordinates: old l becomes perm[l-1]."""
        out: dict[Face, FaceInfo] = {}
        for f, info in self.faces.items():
            nf = tuple(sorted(perm[l - 1] for l in f))
            value = None
            ci = None
            if info.value is not None:
                value = np.zeros(self.d)
                for l in range(1, self.d + 1):
                    value[perm[l - 1] - 1] = info.value[l - 1]
            if info.ci is not None:
                ci = np.zeros(self.d)
                for l in range(1, self.d + 1):
                    ci[perm[l - 1] - 1] = info.ci[l - 1]
            override = None
            if info.sign_override is not None:
                ov = ["0"] * self.d
                for l in range(1, self.d + 1):
                    ov[perm[l - 1] - 1] = info.sign_override[l - 1]
                override = tuple(ov)
            out[nf] = FaceInfo(
                face=nf,
                status=info.status,
                value=value,
                exact=info.exact,
                ci=ci,
                method=info.method,
                level_drift=info.level_drift,
                sign_override=override,
            )
        return DriftProfile(d=self.d, faces=out, tol=self.tol)

    def to_json_dict(self) -> dict:
        out = {}
        for f, info in sorted(self.faces.items()):
            rec = {
                "status": info.status,
                "value": None if info.value is None else [float(x) for x in info.value],
                "sign": None if info.sign(self.tol) is None else list(info.sign(self.tol)),
                "exact": bool(info.exact),
                "ci": None if info.ci is None else [float(x) for x in info.ci],
                "method": info.method,
            }
            if info.level_drift is not None:
                rec["level_drift"] = float(info.level_drift)
            out[face_key(f)] = rec
        return out


@dataclass
class ClassificationResult:
    verdict: str
    rule: str
    certificate: dict | None
    margins: dict
    caveats: list[str]
    profile: DriftProfile | None = None
    seed: int | None = None
    tol: float | None = None

    def to_json_dict(self) -> dict:
        from mmrrw import __version__

        return {
            "verdict": self.verdict,
            "rule": self.rule,
            "certificate": self.certificate,
            "margins": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v) for k, v in self.margins.items()},
            "caveats": list(self.caveats),
            "drift_profile": None if self.profile is None else self.profile.to_json_dict(),
            "seed": self.seed,
            "tol": self.tol,
            "version": __version__,
        }


# ---------------------------------------------------------------------------
# Drift profile construction


def _derive_seed(seed: int, stream: int) -> int:
    return (seed * 1_000_003 + stream + 1) % (2**63)


def build_drift_profile(
    model: MmrrwModel,
    *,
    seed: int = 0,
    tol: float = 1e-9,
    assume_signs: dict[Face, object] | None = None,
    mc: bool = True,
    mc_opts: dict | None = None,
) -> DriftProfile:
    """Compute status and drift for every nonempty face.

    Codimension-0/1 faces are exact (finite chain / QBD).  The status of a
    deeper face is the verdict of recursively classifying its induced chain;
    its drift components have no finite exact form, so their signs come from
    `assume_signs` when given, else from a seeded Monte Carlo estimate when
    `mc` is on, else stay undetermined.

    `assume_signs` maps a face to either a tuple of d sign characters or the
    string "na" (assert the induced chain is transient).  Assumptions only
    apply to faces without exact values.
    """
    d = model.d
    assume_signs = {tuple(sorted(k)): v for k, v in (assume_signs or {}).items()}
    infos: dict[Face, FaceInfo] = {}
    faces = [f for f in all_faces(d) if f]
    faces.sort(key=lambda f: (-len(f), f))
    for stream, A in enumerate(faces):
        codim = d - len(A)
        if codim <= 1:
            fd = face_drift(model, A)
            if codim == 0:
                infos[A] = FaceInfo(face=A, status="positive", value=fd.value, exact=True, method="finite-chain")
                continue
            if abs(fd.level_drift) <= tol:
                status = "unknown"
            else:
                status = fd.status
            infos[A] = FaceInfo(
                face=A,
                status=status,
                value=fd.value if status == "positive" else None,
                exact=True,
                method="qbd",
                level_drift=fd.level_drift,
            )
            continue

        assumed = assume_signs.get(A)
        if assumed == "na":
            infos[A] = FaceInfo(face=A, status="transient", method="assumed")
            continue

        sub = classify_auto(
            project(model, A),
            seed=_derive_seed(seed, stream),
            tol=tol,
            mc=mc,
            mc_opts=mc_opts,
            cross_check=False,
        )
        status = _STATUS_FROM_VERDICT[sub.verdict]
        if status != "positive":
            infos[A] = FaceInfo(face=A, status=status, method=f"recursive({sub.rule})")
            continue

        if assumed is not None:
            signs = tuple(assumed)
            if len(signs) != d or any(s not in "+-0" for s in signs):
                raise ValueError(f"assumed signs for face {face_key(A)!r} must be {d} of '+', '-', '0'")
            bad = [l for l in range(1, d + 1) if l not in A and signs[l - 1] != "0"]
            if bad:
                raise ValueError(f"face {face_key(A)!r}: components {bad} are structurally zero")
            value = None
            if len(A) == 1:
                l = A[0]
                value = np.zeros(d)
                value[l - 1] = {"+": 1.0, "-": -1.0, "0": 0.0}[signs[l - 1]]
            infos[A] = FaceInfo(
                face=A, status="positive", value=value, exact=False, method="assumed", sign_override=signs
            )
            continue

        if mc:
            est, halfw = estimate_drift_sign(model, A, seed=_derive_seed(seed, stream) + 1, **(mc_opts or {}))
            infos[A] = FaceInfo(face=A, status="positive", value=est, exact=False, ci=halfw, method="mc")
        else:
            infos[A] = FaceInfo(face=A, status="positive", value=None, exact=False, method="none")
    return DriftProfile(d=d, faces=infos, tol=tol)


# ---------------------------------------------------------------------------
# Certificate checking


def _nbar(A: Face, d: int) -> list[Face]:
    """Nonempty faces that meet A."""
    return [f for f in all_faces(d) if f and set(f) & set(A)]


def verify_certificate(cert: dict, profile: DriftProfile, strict: float = 0.0) -> tuple[str, list[str]]:
    """Re-check a certificate against a drift profile.

    Returns (status, problems) with status "valid", "invalid", or
    "inconclusive" (the profile is missing information the check needs).
    Every violated inequality is named in `problems`.
    """
    problems: list[str] = []
    d = profile.d
    kind = cert.get("type")

    if kind == "lyapunov-quadratic":
        U = np.asarray(cert["U"], dtype=float)
        if U.shape != (d, d):
            return "invalid", [f"U must be {d}x{d}"]
        if np.max(np.abs(U - U.T)) > 1e-9 * max(1.0, np.max(np.abs(U))):
            return "invalid", ["U is not symmetric"]
        U = (U + U.T) / 2
        eigs = np.linalg.eigvalsh(U)
        if eigs[0] <= strict:
            problems.append(f"U is not positive definite (min eigenvalue {eigs[0]:.3e})")
        inconclusive = False
        for A, info in sorted(profile.faces.items()):
            if info.status == "unknown":
                problems.append(f"status of face {face_key(A)!r} is unknown; cannot confirm coverage")
                inconclusive = True
                continue
            if info.status != "positive":
                continue
            if info.value is None:
                problems.append(f"face {face_key(A)!r} is positive recurrent but has no drift value")
                inconclusive = True
                continue
            for j in A:
                lhs = float(info.value @ U[:, j - 1])
                if lhs >= -strict:
                    problems.append(f"<a({face_key(A)}), U e_{j}> = {lhs:.6g} is not negative")
        if problems:
            return ("inconclusive" if inconclusive and all("not negative" not in p and "definite" not in p for p in problems) else "invalid"), problems
        return "valid", []

    if kind == "escape-linear":
        A = parse_face_key(cert["face"])
        w = np.asarray(cert["w"], dtype=float)
        if w.shape != (d,):
            return "invalid", [f"w must have length {d}"]
        for l in range(1, d + 1):
            if l in A and w[l - 1] <= strict:
                problems.append(f"w_{l} must be positive on the face, got {w[l-1]:.6g}")
            if l not in A and w[l - 1] >= -strict:
                problems.append(f"w_{l} must be negative off the face, got {w[l-1]:.6g}")
        inconclusive = False
        for B in _nbar(A, d):
            info = profile.info(B)
            if info.status == "unknown":
                problems.append(f"status of face {face_key(B)!r} is unknown; cannot confirm coverage")
                inconclusive = True
                continue
            if info.status != "positive":
                continue
            if info.value is None:
                problems.append(f"face {face_key(B)!r} is positive recurrent but has no drift value")
                inconclusive = True
                continue
            lhs = float(info.value @ w)
            if lhs <= strict:
                problems.append(f"<a({face_key(B)}), w> = {lhs:.6g} is not positive")
        if problems:
            return ("inconclusive" if inconclusive and all("not positive" not in p and "must be" not in p for p in problems) else "invalid"), problems
        return "valid", []

    if kind == "spiral-escape":
        if d != 3:
            return "invalid", ["spiral-escape certificates only apply in dimension 3"]
        vectors = {parse_face_key(k): np.asarray(v, dtype=float) for k, v in cert["vectors"].items()}
        if sorted(vectors) != [(1, 2), (1, 3), (2, 3)]:
            return "invalid", ["spiral-escape needs one vector per two-coordinate face"]
        full = (1, 2, 3)
        aN = profile.value(full)
        for l in range(1, 4):
            if profile.status((l,)) == "positive":
                problems.append(f"face {face_key((l,))!r} is positive recurrent; the cyclic escape argument needs it transient")
            elif profile.status((l,)) == "unknown":
                return "inconclusive", [f"status of face {face_key((l,))!r} is unknown"]
        for F, w in sorted(vectors.items()):
            info = profile.info(F)
            if info.status != "positive" or info.value is None:
                return "inconclusive", [f"face {face_key(F)!r} must be positive recurrent with a drift value"]
            lhs = float(info.value @ w)
            if lhs <= strict:
                problems.append(f"<a({face_key(F)}), w_{face_key(F)}> = {lhs:.6g} is not positive")
            lhsN = float(aN @ w)
            if lhsN <= strict:
                problems.append(f"<a(N), w_{face_key(F)}> = {lhsN:.6g} is not positive")
        return ("invalid", problems) if problems else ("valid", [])

    return "invalid", [f"unknown certificate type {kind!r}"]


# ---------------------------------------------------------------------------
# Feasibility searches (sufficient conditions in any dimension)


def _collect_U_constraints(profile: DriftProfile):
    cons = []
    for A, info in sorted(profile.faces.items()):
        if info.status == "unknown":
            return None, f"status of face {face_key(A)!r} is unknown"
        if info.status != "positive":
            continue
        if info.value is None:
            return None, f"no drift value for positive recurrent face {face_key(A)!r}"
        a = np.asarray(info.value, dtype=float)
        if np.linalg.norm(a) == 0:
            continue
        for j in A:
            cons.append((A, j, a))
    return cons, None


def feasibility_U(profile: DriftProfile, eig_floor: float = 1e-6, iters: int = 4000) -> tuple[np.ndarray | None, dict]:
    """Search for a symmetric positive definite U with <a(A), U e_j> < 0.

    The constraint set is convex (an intersection of halfspaces, an affine
    trace normalization, and the positive semidefinite cone shifted by a
    small floor), so Dykstra's alternating projections find a point whenever
    the margin target is attainable; the target is halved until the search
    succeeds or becomes hopeless.  Returns (U, info) with U = None on failure.
    """
    d = profile.d
    cons, reason = _collect_U_constraints(profile)
    if cons is None:
        return None, {"reason": reason}
    if not cons:
        return np.eye(d), {"margin": 0.0, "note": "no constraints"}

    # Upper bound for the achievable margin from the linear relaxation.
    n_u = d * (d + 1) // 2
    idx = {}
    k = 0
    for i in range(d):
        for j in range(i, d):
            idx[(i, j)] = k
            k += 1
    A_ub = []
    b_ub = []
    for _, j, a in cons:
        row = np.zeros(n_u + 1)
        for l in range(d):
            i0, j0 = min(l, j - 1), max(l, j - 1)
            row[idx[(i0, j0)]] += a[l]
        row[-1] = np.linalg.norm(a)
        A_ub.append(row)
        b_ub.append(0.0)
    # A positive diagonal is necessary for positive definiteness; bounding it
    # away from zero lets the relaxation refute most sign patterns outright
    # instead of leaving that to the (much slower) projection phase.
    bounds = [(1e-9, 5.0) if i == j else (-5.0, 5.0) for i in range(d) for j in range(i, d)]
    bounds.append((0.0, 5.0))
    c = np.zeros(n_u + 1)
    c[-1] = -1.0
    lp = linprog(c, A_ub=np.asarray(A_ub), b_ub=np.asarray(b_ub), bounds=bounds, method="highs")
    if not lp.success or lp.x[-1] <= 1e-9:
        return None, {"reason": "linear relaxation infeasible", "lp_margin": float(lp.x[-1]) if lp.success else 0.0}

    t = float(lp.x[-1]) / 2
    floor = eig_floor
    for _ in range(14):
        U = _dykstra_U(cons, d, t, floor, iters)
        if U is not None:
            margin = max(float(a @ U[:, j - 1]) / np.linalg.norm(a) for _, j, a in cons)
            eig_min = float(np.linalg.eigvalsh(U)[0])
            if margin <= -t / 2 and eig_min >= floor / 2:
                return U, {"margin": margin, "eig_min": eig_min, "target": t}
        t /= 2
        floor /= 2
        if t < 1e-11:
            break
    return None, {"reason": "no positive definite point found", "lp_margin": float(lp.x[-1])}


def _dykstra_U(cons, d: int, t: float, eig_floor: float, iters: int) -> np.ndarray | None:
    mats = []
    rhs = []
    for _, j, a in cons:
        C = np.zeros((d, d))
        C[:, j - 1] += a / 2
        C[j - 1, :] += a / 2
        mats.append(C)
        rhs.append(-t * np.linalg.norm(a))
    norms2 = [float(np.sum(C * C)) for C in mats]

    n_sets = len(mats) + 2
    U = np.eye(d)
    corr = [np.zeros((d, d)) for _ in range(n_sets)]
    for _ in range(iters):
        for s in range(n_sets):
            V = U + corr[s]
            if s < len(mats):
                viol = float(np.sum(mats[s] * V)) - rhs[s]
                Unew = V - (viol / norms2[s]) * mats[s] if viol > 0 else V
            elif s == len(mats):
                Unew = V + (d - np.trace(V)) / d * np.eye(d)
            else:
                V = (V + V.T) / 2
                w, Q = np.linalg.eigh(V)
                Unew = (Q * np.maximum(w, eig_floor)) @ Q.T
            corr[s] = V - Unew
            U = Unew
        ok = all(float(np.sum(C * U)) <= r + 1e-13 for C, r in zip(mats, rhs))
        if ok and np.linalg.eigvalsh(U)[0] >= eig_floor * 0.999 and abs(np.trace(U) - d) < 1e-9:
            return (U + U.T) / 2
    return None


def feasibility_W(
    profile: DriftProfile, faces: list[Face] | None = None, min_margin: float = 1e-7
) -> tuple[dict | None, dict]:
    """Search for an escape certificate W_A over candidate faces A.

    Faces are tried largest first, then lexicographically.  For each A the
    search is a linear program over w in [-1, 1]^d maximizing the worst
    normalized margin.  Returns ({"face": A, "w": w}, info) or (None, info).
    """
    d = profile.d
    if faces is None:
        faces = [f for f in all_faces(d) if f]
        faces.sort(key=lambda f: (-len(f), f))
    skipped = {}
    for A in faces:
        needed = _nbar(A, d)
        cons = []
        blocked = None
        for B in needed:
            info = profile.info(B)
            if info.status == "unknown":
                blocked = f"status of face {face_key(B)!r} unknown"
                break
            if info.status != "positive":
                continue
            if info.value is None:
                blocked = f"no drift value for face {face_key(B)!r}"
                break
            cons.append(np.asarray(info.value, dtype=float))
        if blocked:
            skipped[face_key(A)] = blocked
            continue
        # variables: w_1..w_d, t; maximize t
        A_ub = []
        b_ub = []
        for l in range(1, d + 1):
            row = np.zeros(d + 1)
            row[l - 1] = -1.0 if l in A else 1.0
            row[-1] = 1.0
            A_ub.append(row)
            b_ub.append(0.0)
        for a in cons:
            row = np.zeros(d + 1)
            row[:d] = -a
            row[-1] = np.linalg.norm(a)
            A_ub.append(row)
            b_ub.append(0.0)
        bounds = [(-1.0, 1.0)] * d + [(0.0, 1.0)]
        c = np.zeros(d + 1)
        c[-1] = -1.0
        lp = linprog(c, A_ub=np.asarray(A_ub), b_ub=np.asarray(b_ub), bounds=bounds, method="highs")
        if lp.success and lp.x[-1] > min_margin:
            w = lp.x[:d]
            margins = [float(a @ w) for a in cons]
            return (
                {"face": A, "w": w},
                {"margin": float(lp.x[-1]), "constraint_values": margins, "skipped": skipped},
            )
    return None, {"skipped": skipped}


# ---------------------------------------------------------------------------
# Two dimensions: complete case analysis


def _u_cert(U: np.ndarray) -> dict:
    return {"type": "lyapunov-quadratic", "U": [[float(x) for x in row] for row in np.asarray(U)]}


def _w_cert(face: Face, w: np.ndarray) -> dict:
    return {"type": "escape-linear", "face": face_key(face), "w": [float(x) for x in np.asarray(w)]}


def _c2_matrix(q: float) -> np.ndarray:
    """Positive definite U for the half-stable case: a_1(N) >= 0 > a_2(N), a_1({1}) < 0.

    Needs q u11 < u12 and q u12 < u22 with positive definiteness; starts from
    u11 = 1, u12 = q + 1 and doubles u22 until both remaining inequalities
    hold.
    """
    u11 = 1.0
    u12 = q + 1.0
    u22 = 1.0
    for _ in range(200):
        if u22 > q * u12 and u11 * u22 > u12 * u12:
            return np.array([[u11, u12], [u12, u22]])
        u22 *= 2
    raise ComputationError("could not build a positive definite certificate (degenerate ratio)")


def classify_2d(profile: DriftProfile) -> ClassificationResult:
    """Complete classification in two dimensions from an exact drift profile."""
    if profile.d != 2:
        raise ValueError("classify_2d needs a two-dimensional profile")
    tol = profile.tol
    N = (1, 2)
    aN = profile.value(N)
    sN = tuple(_sign_char(x, tol) for x in aN)
    caveats: list[str] = []

    def single_sign(l: int) -> str | None:
        info = profile.info((l,))
        if info.status != "positive":
            return None
        s = info.sign(tol)
        return s[l - 1] if s else "?"

    if sN == ("0", "0"):
        return ClassificationResult(VERDICT_UNKNOWN, "2d-unknown", None, {"a(N)": [float(x) for x in aN]},
                                    ["both interior drift components are inside the zero band"], profile)

    if sN in (("+", "+"),):
        w = np.array([1.0, 1.0])
        return ClassificationResult(VERDICT_TRANSIENT, "2d-C4", _w_cert(N, w),
                                    {"<a(N),w>": float(aN @ w)}, caveats, profile)

    if sN in (("+", "0"), ("0", "+")):
        l = 1 if sN[0] == "+" else 2
        w = np.array([1.0, -1.0]) if l == 1 else np.array([-1.0, 1.0])
        return ClassificationResult(VERDICT_TRANSIENT, "2d-zero-axis", _w_cert((l,), w),
                                    {"<a(N),w>": float(aN @ w)},
                                    [f"a_{3 - l}(N) sits in the zero band; the induced chain on coordinate {3 - l} is not positive recurrent"],
                                    profile)

    if sN in (("-", "-"),):
        s1, s2 = single_sign(1), single_sign(2)
        if s1 is None or s2 is None:
            return ClassificationResult(VERDICT_UNKNOWN, "2d-unknown", None, {},
                                        ["a boundary induced chain is unexpectedly not positive recurrent"], profile)
        if s1 == "-" and s2 == "-":
            U = np.array([[1.0, 0.5], [0.5, 1.0]])
            m = _u_margins(profile, U)
            return ClassificationResult(VERDICT_POSITIVE, "2d-C1a", _u_cert(U), m, caveats, profile)
        if s1 == "+" or s2 == "+":
            l = 1 if s1 == "+" else 2
            al = profile.value((l,))[l - 1]
            w = np.zeros(2)
            w[l - 1] = 1.0
            w[2 - l] = -aN[l - 1] / aN[2 - l] - 0.25
            margins = {f"<a({l}),w>": float(al), "<a(N),w>": float(aN @ w)}
            return ClassificationResult(VERDICT_TRANSIENT, "2d-C1b", _w_cert((l,), w), margins, caveats, profile)
        lbl = 1 if s1 in ("0", "?") else 2
        return ClassificationResult(VERDICT_UNKNOWN, "2d-unknown", None, {},
                                    [f"a_{lbl}({lbl}) sits in the zero band"], profile)

    # exactly one negative interior component: stable coordinate k, other coordinate l
    l = 1 if sN[0] in ("+", "0") else 2
    k = 3 - l
    sl = single_sign(l)
    if sl is None:
        return ClassificationResult(VERDICT_UNKNOWN, "2d-unknown", None, {},
                                    [f"induced chain on coordinate {k} is not positive recurrent"], profile)
    rule_base = "2d-C2" if l == 1 else "2d-C3"
    if sl == "-":
        q = -aN[l - 1] / aN[k - 1]
        U2 = _c2_matrix(q)
        if l == 2:
            P = np.array([[0.0, 1.0], [1.0, 0.0]])
            U2 = P @ U2 @ P
        m = _u_margins(profile, U2)
        if sN[l - 1] == "0":
            caveats.append(f"a_{l}(N) sits in the zero band; classified by the boundary case rule")
        return ClassificationResult(VERDICT_POSITIVE, rule_base + "a", _u_cert(U2), m, caveats, profile)
    if sl == "+":
        w = np.zeros(2)
        w[l - 1] = 1.0
        w[k - 1] = -1.0
        margins = {f"<a({l}),w>": float(profile.value((l,))[l - 1]), "<a(N),w>": float(aN @ w)}
        if sN[l - 1] == "0":
            caveats.append(f"a_{l}(N) sits in the zero band; classified by the boundary case rule")
        return ClassificationResult(VERDICT_TRANSIENT, rule_base + "b", _w_cert((l,), w), margins, caveats, profile)
    return ClassificationResult(VERDICT_UNKNOWN, "2d-unknown", None, {},
                                [f"a_{l}({l}) sits in the zero band"], profile)


def _u_margins(profile: DriftProfile, U: np.ndarray) -> dict:
    worst = np.inf
    for A, info in profile.faces.items():
        if info.status != "positive" or info.value is None:
            continue
        a = info.value
        na = np.linalg.norm(a)
        if na == 0:
            continue
        for j in A:
            worst = min(worst, -float(a @ U[:, j - 1]) / na)
    eig_min = float(np.linalg.eigvalsh((U + U.T) / 2)[0])
    return {"certificate_margin": worst if np.isfinite(worst) else 0.0, "eig_min": eig_min}


# ---------------------------------------------------------------------------
# Three dimensions: decision tables up to coordinate permutation

_PAIR_FACES = ((1, 2), (2, 3), (1, 3))
_SINGLE_FACES = ((1,), (2,), (3,))


def _row(label, verdict, p12, p23, p31, s1, s2, s3):
    return {
        "label": label,
        "verdict": verdict,
        "slots": {
            (1, 2): p12,
            (2, 3): p23,
            (1, 3): p31,
            (1,): s1,
            (2,): s2,
            (3,): s3,
        },
    }


# Slot values: a 3-tuple of expected sign characters for the drift vector of
# that face (structural zeros included), "na" meaning the induced chain on
# the face must be transient, or None meaning the slot does not matter.
_TABLES_3D = {
    ("-", "-", "-"): [
        _row("C1-1-1", "positive", ("-", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), ("-", "0", "0"), ("0", "-", "0"), ("0", "0", "-")),
        _row("C1-1-2", "transient", ("-", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), ("+", "0", "0"), None, None),
        _row("C1-1-3", "transient", ("-", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), None, ("0", "+", "0"), None),
        _row("C1-1-4", "transient", ("-", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), None, None, ("0", "0", "+")),
        _row("C1-2-1", "positive", ("+", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), ("-", "0", "0"), "na", ("0", "0", "-")),
        _row("C1-2-2", "transient", ("+", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), ("+", "0", "0"), "na", None),
        _row("C1-2-3", "transient", ("+", "-", "0"), ("0", "-", "-"), ("-", "0", "-"), None, "na", ("0", "0", "+")),
        _row("C1-3-1", "transient", ("+", "+", "0"), None, None, "na", "na", None),
        _row("C1-4-1", "positive", ("+", "-", "0"), ("0", "+", "-"), ("-", "0", "-"), ("-", "0", "0"), "na", "na"),
        _row("C1-4-2", "transient", ("+", "-", "0"), ("0", "+", "-"), ("-", "0", "-"), ("+", "0", "0"), "na", "na"),
        _row("C1-5-1", "positive", ("+", "-", "0"), ("0", "-", "+"), ("-", "0", "-"), ("-", "0", "0"), "na", ("0", "0", "-")),
        _row("C1-5-2", "transient", ("+", "-", "0"), ("0", "-", "+"), ("-", "0", "-"), ("+", "0", "0"), "na", None),
        _row("C1-5-3", "transient", ("+", "-", "0"), ("0", "-", "+"), ("-", "0", "-"), None, "na", ("0", "0", "+")),
        _row("C1-6-1", "positive", ("+", "-", "0"), ("0", "+", "-"), ("+", "0", "-"), ("-", "0", "0"), "na", "na"),
        _row("C1-6-2", "transient", ("+", "-", "0"), ("0", "+", "-"), ("+", "0", "-"), ("+", "0", "0"), "na", "na"),
        _row("C1-7-1", "spiral", ("+", "-", "0"), ("0", "+", "-"), ("-", "0", "+"), "na", "na", "na"),
    ],
    ("+", "-", "-"): [
        _row("C2-1-1", "positive", ("-", "-", "0"), "na", ("-", "0", "-"), ("-", "0", "0"), ("0", "-", "0"), ("0", "0", "-")),
        _row("C2-1-2", "transient", ("-", "-", "0"), "na", ("-", "0", "-"), ("+", "0", "0"), None, None),
        _row("C2-1-3", "transient", ("-", "-", "0"), "na", ("-", "0", "-"), None, ("0", "+", "0"), None),
        _row("C2-1-4", "transient", ("-", "-", "0"), "na", ("-", "0", "-"), None, None, ("0", "0", "+")),
        _row("C2-2-1", "positive", ("+", "-", "0"), "na", ("-", "0", "-"), ("-", "0", "0"), "na", ("0", "0", "-")),
        _row("C2-2-2", "transient", ("+", "-", "0"), "na", ("-", "0", "-"), ("+", "0", "0"), "na", None),
        _row("C2-2-3", "transient", ("+", "-", "0"), "na", ("-", "0", "-"), None, "na", ("0", "0", "+")),
        _row("C2-3-1", "transient", ("+", "+", "0"), "na", None, "na", "na", None),
        _row("C2-4-1", "positive", ("+", "-", "0"), "na", ("+", "0", "-"), ("-", "0", "0"), "na", "na"),
        _row("C2-4-2", "transient", ("+", "-", "0"), "na", ("+", "0", "-"), ("+", "0", "0"), "na", "na"),
        _row("C2-5-1", "positive", ("+", "-", "0"), "na", ("-", "0", "+"), "na", "na", ("0", "0", "-")),
        _row("C2-5-2", "transient", ("+", "-", "0"), "na", ("-", "0", "+"), "na", "na", ("0", "0", "+")),
    ],
    ("+", "+", "-"): [
        _row("C3-1-1", "positive", ("-", "-", "0"), "na", "na", ("-", "0", "0"), ("0", "-", "0"), "na"),
        _row("C3-1-2", "transient", ("-", "-", "0"), "na", "na", ("+", "0", "0"), None, "na"),
        _row("C3-1-3", "transient", ("-", "-", "0"), "na", "na", None, ("0", "+", "0"), "na"),
        _row("C3-2-1", "positive", ("+", "-", "0"), "na", "na", ("-", "0", "0"), "na", "na"),
        _row("C3-2-2", "transient", ("+", "-", "0"), "na", "na", ("+", "0", "0"), "na", "na"),
        _row("C3-3-1", "transient", ("+", "+", "0"), "na", "na", "na", "na", "na"),
    ],
    ("+", "+", "+"): [
        _row("C4-1-1", "transient", "na", "na", "na", "na", "na", "na"),
    ],
}


def _slot_match(profile: DriftProfile, face: Face, expected) -> str:
    """Match one table slot: 'yes', 'no', or 'undecided'."""
    if expected is None:
        return "yes"
    info = profile.info(face)
    if expected == "na":
        if info.status == "transient":
            return "yes"
        if info.status == "unknown":
            return "undecided"
        return "no"
    if info.status != "positive":
        return "no" if info.status in ("transient", "null") else "undecided"
    s = info.sign(profile.tol)
    if s is None:
        return "undecided"
    out = "yes"
    for got, want in zip(s, expected):
        if got == "?":
            out = "undecided"
        elif got != want:
            return "no"
    return out


def _match_tables(profile: DriftProfile):
    """Try all six coordinate relabelings against the canonical tables.

    Returns (matches, undecided) where matches is a list of
    (perm, row, permuted_profile) and undecided flags that some row failed
    only because of unresolved signs.
    """
    matches = []
    undecided = False
    for perm in itertools.permutations((1, 2, 3)):
        pp = profile.permuted(perm)
        sN = tuple(_sign_char(x, profile.tol) for x in pp.value((1, 2, 3)))
        rows = _TABLES_3D.get(sN)
        if rows is None:
            continue
        for row in rows:
            states = [_slot_match(pp, f, row["slots"][f]) for f in (*_PAIR_FACES, *_SINGLE_FACES)]
            if all(s == "yes" for s in states):
                matches.append((perm, row, pp))
            elif "no" not in states:
                undecided = True
    return matches, undecided


# ---------------------------------------------------------------------------
# The cyclic ("spiral") pattern


def _spiral_ratios(pa: DriftProfile) -> tuple[float, float, float]:
    """Drift ratios in the frame where the pattern is a({1,2}) = (-,+,0),
    a({2,3}) = (0,-,+), a({3,1}) = (+,0,-)."""
    v12 = pa.value((1, 2))
    v23 = pa.value((2, 3))
    v31 = pa.value((1, 3))
    return (-v12[1] / v12[0], -v23[2] / v23[1], -v31[0] / v31[2])


def spiral_test(pa: DriftProfile, band: float = 1e-9) -> tuple[str, float]:
    """Decide the cyclic pattern from the product of its drift ratios.

    The profile must already be in the canonical frame (see _spiral_ratios).
    Returns (verdict, product): product < 1 means positive recurrent, > 1
    transient, and a band around 1 is left undecided.
    """
    r12, r23, r31 = _spiral_ratios(pa)
    prod = r12 * r23 * r31
    if abs(prod - 1.0) <= band:
        return VERDICT_UNKNOWN, prod
    return (VERDICT_POSITIVE if prod < 1.0 else VERDICT_TRANSIENT), prod


def spiral_lyapunov_matrix(r12: float, r23: float, r31: float) -> np.ndarray:
    """Positive definite U for the cyclic pattern when r12*r23*r31 < 1.

    The construction fixes u11 = 1, puts the diagonal on the scale of the
    ratios with a spread delta, and chooses the off-diagonal entries just
    below the geometric means so that all six interval constraints hold
    with positive definiteness.
    """
    rho = r12 * r23 * r31
    if not rho < 1.0:
        raise ValueError("the ratio product must be below one")
    delta = min(0.5, 0.5 * (1.0 - rho * rho) / (1.0 + rho * rho))
    for _ in range(60):
        u11 = 1.0
        u22 = (1.0 - delta) / (r12 * r12)
        u33 = (1.0 + delta) * r31 * r31
        c = u11 * u22 * u33
        eps = c / 2
        for _ in range(80):
            u12 = np.sqrt((c - eps) / u33)
            u23 = np.sqrt((c - eps) / u11)
            u13 = np.sqrt((c - eps) / u22)
            U = np.array([[u11, u12, u13], [u12, u22, u23], [u13, u23, u33]])
            ok = (
                r12 * u22 < u12 < u11 / r12
                and r23 * u33 < u23 < u22 / r23
                and r31 * u11 < u13 < u33 / r31
                and u11 * u22 - u12 * u12 > 0
                and np.linalg.det(U) > 0
            )
            if ok:
                return U
            eps /= 2
        delta /= 2
    raise ComputationError("cyclic certificate construction did not converge (ratio product too close to one)")


def spiral_transience_certificate(pa: DriftProfile) -> tuple[dict[Face, np.ndarray], float, dict]:
    """Escape vectors for the cyclic pattern when the ratio product exceeds one.

    Works in the canonical frame.  The scale constants c2, c3 sit at the
    geometric midpoints of the feasibility chain, and c0 is doubled until
    all six drift inequalities hold.  Returns (vectors keyed by pair face,
    epsilon0 = the smallest margin, constants).
    """
    r12, r23, r31 = _spiral_ratios(pa)
    if not r12 * r23 * r31 > 1.0:
        raise ValueError("the ratio product must exceed one")
    c2 = np.sqrt(r12 / (r23 * r31))
    c3 = np.sqrt(c2 * r23 / r31)
    aN = pa.value((1, 2, 3))
    a12 = pa.value((1, 2))
    a23 = pa.value((2, 3))
    a31 = pa.value((1, 3))
    c0 = 1.0
    for _ in range(200):
        w12 = np.array([1.0, 1.0 / c2, 1.0 / c3 - c0])
        w23 = np.array([1.0 - c0, 1.0 / c2, 1.0 / c3])
        w31 = np.array([1.0, 1.0 / c2 - c0, 1.0 / c3])
        margins = [
            float(a12 @ w12), float(aN @ w12),
            float(a23 @ w23), float(aN @ w23),
            float(a31 @ w31), float(aN @ w31),
        ]
        eps0 = min(margins)
        if eps0 > 0:
            return (
                {(1, 2): w12, (2, 3): w23, (1, 3): w31},
                eps0,
                {"c0": c0, "c2": float(c2), "c3": float(c3)},
            )
        c0 *= 2
    raise ComputationError("cyclic escape construction did not converge")


def _inverse_perm(perm: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for l, p in enumerate(perm, start=1):
        inv[p - 1] = l
    return tuple(inv)


_SPIRAL_TO_CANONICAL = (2, 1, 3)  # swap of the first two coordinates


def _classify_spiral(profile: DriftProfile, perm: tuple[int, ...]) -> ClassificationResult:
    """Handle the cyclic row: perm maps the original profile onto the table
    orientation; composing with the first-two swap lands in the canonical
    frame used by the ratio constructions."""
    rho = tuple(_SPIRAL_TO_CANONICAL[perm[l - 1] - 1] for l in (1, 2, 3))
    pa = profile.permuted(rho)
    verdict, prod = spiral_test(pa, band=profile.tol)
    margins = {"ratio_product": prod}
    caveats: list[str] = []
    if verdict == VERDICT_UNKNOWN:
        caveats.append("the drift ratio product is within the tolerance band around one")
        return ClassificationResult(VERDICT_UNKNOWN, "3d-spiral", None, margins, caveats, profile)
    inv = _inverse_perm(rho)
    if verdict == VERDICT_POSITIVE:
        r12, r23, r31 = _spiral_ratios(pa)
        Ua = spiral_lyapunov_matrix(r12, r23, r31)
        P = np.zeros((3, 3))
        for l in (1, 2, 3):
            P[rho[l - 1] - 1, l - 1] = 1.0
        U = P.T @ Ua @ P
        cert = _u_cert(U)
        status, problems = verify_certificate(cert, profile)
        if status != "valid":
            raise ComputationError("cyclic certificate failed verification: " + "; ".join(problems))
        margins.update(_u_margins(profile, U))
        return ClassificationResult(VERDICT_POSITIVE, "3d-spiral", cert, margins, caveats, profile)
    vectors_pa, eps0, consts = spiral_transience_certificate(pa)
    vectors = {}
    for F_pa, w_pa in vectors_pa.items():
        F = tuple(sorted(inv[l - 1] for l in F_pa))
        w = np.array([w_pa[rho[l - 1] - 1] for l in (1, 2, 3)])
        vectors[face_key(F)] = [float(x) for x in w]
    cert = {"type": "spiral-escape", "vectors": vectors, "epsilon0": float(eps0), "constants": consts}
    status, problems = verify_certificate(cert, profile)
    if status != "valid":
        raise ComputationError("cyclic escape certificate failed verification: " + "; ".join(problems))
    margins["epsilon0"] = eps0
    return ClassificationResult(VERDICT_TRANSIENT, "3d-spiral", cert, margins, caveats, profile)


def classify_3d(profile: DriftProfile, cross_check: bool = True) -> ClassificationResult:
    """Classification in three dimensions via the decision tables.

    Every generic sign pattern matches a table row after a coordinate
    relabeling; the row verdict is backed by a certificate from the
    feasibility searches (or the bespoke cyclic constructions).  When no row
    matches (zero-band or unresolved signs), the feasibility searches alone
    may still settle the verdict; otherwise the result is Unknown.
    """
    if profile.d != 3:
        raise ValueError("classify_3d needs a three-dimensional profile")
    matches, undecided = _match_tables(profile)
    caveats: list[str] = []

    if matches:
        verdicts = {row["verdict"] for _, row, _ in matches}
        if len(verdicts) > 1:
            raise ComputationError(
                "decision tables disagree: " + ", ".join(sorted(f"{r['label']}->{r['verdict']}" for _, r, _ in matches))
            )
        perm, row, _ = matches[0]
        rule = f"3d-{row['label']}"
        verdict = row["verdict"]
        for info in profile.faces.values():
            if info.method == "mc":
                caveats.append(f"drift signs of face {face_key(info.face)!r} are Monte Carlo estimates")
            elif info.method == "assumed":
                caveats.append(f"drift signs of face {face_key(info.face)!r} are assumed, not computed")

        if verdict == "spiral":
            res = _classify_spiral(profile, perm)
            res.caveats = caveats + res.caveats
            return res

        if verdict == "positive":
            U, info = feasibility_U(profile)
            if cross_check:
                W, _ = feasibility_W(profile)
                if W is not None:
                    raise ComputationError(
                        f"contradiction: table row {row['label']} says positive recurrent but an escape "
                        f"certificate exists on face {face_key(W['face'])!r}"
                    )
            if U is None:
                caveats.append("certificate search did not converge; the verdict stands on the decision table")
                return ClassificationResult(VERDICT_POSITIVE, rule, None, {"search": info.get("reason", "")}, caveats, profile)
            margins = _u_margins(profile, U)
            return ClassificationResult(VERDICT_POSITIVE, rule, _u_cert(U), margins, caveats, profile)

        W, info = feasibility_W(profile)
        if cross_check:
            U, _ = feasibility_U(profile)
            if U is not None:
                raise ComputationError(
                    f"contradiction: table row {row['label']} says transient but a quadratic certificate exists"
                )
        if W is None:
            caveats.append("certificate search did not converge; the verdict stands on the decision table")
            return ClassificationResult(VERDICT_TRANSIENT, rule, None, {}, caveats, profile)
        margins = {"margin": info["margin"]}
        return ClassificationResult(VERDICT_TRANSIENT, rule, _w_cert(W["face"], W["w"]), margins, caveats, profile)

    if undecided:
        caveats.append("some decision table rows could not be ruled out because of unresolved drift signs")
    unresolved = [face_key(f) for f, i in sorted(profile.faces.items()) if i.status == "unknown"]
    if unresolved:
        caveats.append("faces with undetermined status: " + ", ".join(repr(u) for u in unresolved))

    U, _ = feasibility_U(profile)
    W, winfo = feasibility_W(profile)
    if U is not None and W is not None:
        raise ComputationError("contradiction: both certificate searches succeeded")
    if U is not None:
        margins = _u_margins(profile, U)
        return ClassificationResult(VERDICT_POSITIVE, "lyapunov-feasibility", _u_cert(U), margins, caveats, profile)
    if W is not None:
        return ClassificationResult(
            VERDICT_TRANSIENT, "transience-feasibility", _w_cert(W["face"], W["w"]),
            {"margin": winfo["margin"]}, caveats, profile,
        )
    caveats.append("no decision table row matched and neither certificate search succeeded")
    return ClassificationResult(VERDICT_UNKNOWN, "3d-unknown", None, {}, caveats, profile)


# ---------------------------------------------------------------------------
# Entry point


def classify_auto(
    model: MmrrwModel,
    *,
    seed: int = 0,
    tol: float = 1e-9,
    assume_signs: dict[Face, object] | None = None,
    mc: bool = True,
    mc_opts: dict | None = None,
    cross_check: bool = True,
) -> ClassificationResult:
    """Classify a model as positive recurrent, transient, or unknown.

    Dimensions 1-3 use the complete decision rules; higher dimensions fall
    back to the two sufficient feasibility conditions, which may leave the
    verdict unknown.
    """
    profile = build_drift_profile(model, seed=seed, tol=tol, assume_signs=assume_signs, mc=mc, mc_opts=mc_opts)
    d = model.d
    if d == 0:
        res = ClassificationResult(VERDICT_POSITIVE, "0d-finite", None, {}, ["the state space is finite"], profile)
    elif d == 1:
        aN = profile.value((1,))
        s = _sign_char(aN[0], tol)
        if s == "-":
            res = ClassificationResult(
                VERDICT_POSITIVE, "1d-drift-sign", _u_cert(np.eye(1)), {"a_1": float(aN[0])}, [], profile
            )
        elif s == "+":
            res = ClassificationResult(
                VERDICT_TRANSIENT, "1d-drift-sign", _w_cert((1,), np.ones(1)), {"a_1": float(aN[0])}, [], profile
            )
        else:
            res = ClassificationResult(
                VERDICT_UNKNOWN, "1d-drift-sign", None, {"a_1": float(aN[0])},
                ["the drift sits in the zero band"], profile,
            )
    elif d == 2:
        res = classify_2d(profile)
    elif d == 3:
        res = classify_3d(profile, cross_check=cross_check)
    else:
        caveats = ["no complete decision rule is available above three dimensions"]
        U, _ = feasibility_U(profile)
        W, winfo = feasibility_W(profile)
        if U is not None and W is not None:
            raise ComputationError("contradiction: both certificate searches succeeded")
        if U is not None:
            res = ClassificationResult(
                VERDICT_POSITIVE, "lyapunov-feasibility", _u_cert(U), _u_margins(profile, U), caveats, profile
            )
        elif W is not None:
            res = ClassificationResult(
                VERDICT_TRANSIENT, "transience-feasibility", _w_cert(W["face"], W["w"]),
                {"margin": winfo["margin"]}, caveats, profile,
            )
        else:
            caveats.append("neither certificate search succeeded")
            res = ClassificationResult(VERDICT_UNKNOWN, "feasibility-unknown", None, {}, caveats, profile)
    res.seed = seed
    res.tol = tol
    return res
