"""Decision rules: planar case table, spatial tables, spiral constructions,
feasibility search, and certificate verification."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from mmrrw.classify import (
    _TABLES_3D,
    DriftProfile,
    FaceInfo,
    build_drift_profile,
    classify_2d,
    classify_3d,
    classify_auto,
    feasibility_U,
    feasibility_W,
    spiral_lyapunov_matrix,
    spiral_test,
    spiral_transience_certificate,
    verify_certificate,
)
from mmrrw.examples import orthant_walk, three_queue_model
from mmrrw.induced import face_drift
from mmrrw.model import face_key

from conftest import profile_from_row, random_walk_2d, theorem_2d_verdict


def _u_certificate(U):
    return {"type": "lyapunov-quadratic", "U": np.asarray(U).tolist()}


def _w_certificate(face, w):
    return {"type": "escape-linear", "face": face_key(face), "w": np.asarray(w).tolist()}


# ---------------------------------------------------------------------------
# planar


def test_classify_2d_conformance(rng):
    for _ in range(40):
        m = random_walk_2d(rng)
        prof = build_drift_profile(m, mc=False)
        aN = face_drift(m, (1, 2)).value
        a1, a2 = face_drift(m, (1,)).value, face_drift(m, (2,)).value
        want = theorem_2d_verdict(aN, a1, a2)
        res = classify_2d(prof)
        assert res.verdict == want, (aN, a1, a2, res.rule)
        if res.certificate is not None:
            status, problems = verify_certificate(res.certificate, prof)
            assert status == "valid", problems


def test_classify_2d_zero_band_unknown():
    quarter = {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.25, (0, -1): 0.25}
    edge1 = {(1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.375, (0, 0): 0.125}
    edge2 = {(0, 1): 0.25, (0, -1): 0.25, (1, 0): 0.375, (0, 0): 0.125}
    origin = {(1, 0): 0.375, (0, 1): 0.375, (0, 0): 0.25}
    m = orthant_walk(2, {(1, 2): quarter, (1,): edge1, (2,): edge2, (): origin})
    res = classify_2d(build_drift_profile(m, mc=False))
    assert res.verdict == "unknown"
    assert res.rule == "2d-unknown"
    assert res.certificate is None


def _planar_profile(aN, a1=None, a2=None):
    """a1/a2 are the in-face drift components of the edge chains; None means
    the edge chain is transient."""
    faces = {
        (1, 2): FaceInfo((1, 2), "positive", np.asarray(aN, dtype=float)),
        (1,): FaceInfo((1,), "positive" if a1 is not None else "transient",
                       np.array([a1, 0.0]) if a1 is not None else None),
        (2,): FaceInfo((2,), "positive" if a2 is not None else "transient",
                       np.array([0.0, a2]) if a2 is not None else None),
    }
    return DriftProfile(d=2, faces=faces)


def test_classify_2d_quadrant_cases():
    res = classify_2d(_planar_profile([-0.2, -0.1], a1=-0.05, a2=-0.3))
    assert (res.verdict, res.rule) == ("positive-recurrent", "2d-C1a")
    res = classify_2d(_planar_profile([-0.2, -0.1], a1=0.05, a2=-0.3))
    assert (res.verdict, res.rule) == ("transient", "2d-C1b")
    res = classify_2d(_planar_profile([0.2, -0.1], a1=-0.07))
    assert (res.verdict, res.rule) == ("positive-recurrent", "2d-C2a")
    res = classify_2d(_planar_profile([0.2, -0.1], a1=0.07))
    assert (res.verdict, res.rule) == ("transient", "2d-C2b")
    res = classify_2d(_planar_profile([-0.1, 0.2], a2=-0.07))
    assert (res.verdict, res.rule) == ("positive-recurrent", "2d-C3a")
    res = classify_2d(_planar_profile([-0.1, 0.2], a2=0.07))
    assert (res.verdict, res.rule) == ("transient", "2d-C3b")
    res = classify_2d(_planar_profile([0.15, 0.25]))
    assert (res.verdict, res.rule) == ("transient", "2d-C4")
    res = classify_2d(_planar_profile([0.15, 0.0]))
    assert (res.verdict, res.rule) == ("transient", "2d-zero-axis")


def test_classify_2d_certificates_verify():
    cases = [
        _planar_profile([-0.2, -0.1], a1=-0.05, a2=-0.3),
        _planar_profile([-0.2, -0.1], a1=0.05, a2=-0.3),
        _planar_profile([0.2, -0.1], a1=-0.07),
        _planar_profile([0.2, -0.1], a1=0.07),
        _planar_profile([0.15, 0.25]),
    ]
    for prof in cases:
        res = classify_2d(prof)
        status, problems = verify_certificate(res.certificate, prof)
        assert status == "valid", (res.rule, problems)


# ---------------------------------------------------------------------------
# spatial tables


def test_tables_cover_all_rows(rng):
    verd = {"positive": "positive-recurrent", "transient": "transient"}
    all_rows = {r["label"]: r["verdict"] for rows in _TABLES_3D.values() for r in rows}
    n_rows = 0
    for aN_signs, rows in _TABLES_3D.items():
        for row in rows:
            prof = profile_from_row(rng, aN_signs, row)
            res = classify_3d(prof, cross_check=False)
            if row["verdict"] == "spiral":
                assert res.rule == "3d-spiral"
                v = {F: prof.value(F) for F in [(1, 2), (2, 3), (1, 3)]}
                prod = (
                    (v[(1, 2)][0] / -v[(1, 2)][1])
                    * (v[(2, 3)][1] / -v[(2, 3)][2])
                    * (v[(1, 3)][2] / -v[(1, 3)][0])
                )
                assert res.margins["ratio_product"] == pytest.approx(prod, rel=1e-9)
                assert res.verdict == ("positive-recurrent" if prod < 1 else "transient")
            else:
                assert res.verdict == verd[row["verdict"]], (row["label"], res.rule)
                # rows that are coordinate permutations of one another share the
                # first label in table order, so accept any same-verdict row
                # from the same interior-sign family
                matched = res.rule.removeprefix("3d-")
                assert all_rows[matched] == row["verdict"], (row["label"], res.rule)
                assert matched.split("-")[0] == row["label"].split("-")[0]
            if res.certificate is not None:
                status, problems = verify_certificate(res.certificate, prof)
                assert status == "valid", (row["label"], problems)
            elif row["verdict"] == "positive":
                pytest.fail(f"no certificate for stable row {row['label']}")
            n_rows += 1
    assert n_rows == 35


def test_table_head_rows_report_their_own_label(rng):
    heads = [
        (("-", "-", "-"), "C1-1-1"),
        (("+", "-", "-"), "C2-1-1"),
        (("+", "+", "-"), "C3-1-1"),
        (("+", "+", "+"), "C4-1-1"),
    ]
    for signs, label in heads:
        row = _TABLES_3D[signs][0]
        assert row["label"] == label
        res = classify_3d(profile_from_row(rng, signs, row), cross_check=False)
        assert res.rule == f"3d-{label}"


def test_tables_permutation_equivariance(rng):
    row = _TABLES_3D[("+", "-", "-")][0]
    prof = profile_from_row(rng, ("+", "-", "-"), row)
    base = classify_3d(prof, cross_check=False)
    assert base.rule == "3d-C2-1-1"
    for perm in [(2, 1, 3), (3, 1, 2), (1, 3, 2), (2, 3, 1)]:
        res = classify_3d(prof.permuted(perm), cross_check=False)
        assert res.verdict == base.verdict
        assert res.rule == base.rule


def test_cross_check_accepts_consistent_profiles(rng):
    for key, i in [(("-", "-", "-"), 0), (("-", "-", "-"), 1)]:
        row = _TABLES_3D[key][i]
        prof = profile_from_row(rng, key, row)
        res = classify_3d(prof, cross_check=True)  # must not raise
        assert res.verdict in ("positive-recurrent", "transient")


# ---------------------------------------------------------------------------
# spiral constructions


def _spiral_canonical(rng, product_goal):
    """Profile in the frame the ratio constructions expect:
    a({1,2}) = (-,+,0), a({2,3}) = (0,-,+), a({1,3}) = (+,0,-)."""
    pos = rng.uniform(0.05, 0.3, size=3)
    neg = rng.uniform(0.05, 0.3, size=3)
    prod = pos.prod() / neg.prod()
    pos *= (product_goal / prod) ** (1 / 3)
    faces = {
        (1, 2, 3): FaceInfo((1, 2, 3), "positive", -rng.uniform(0.05, 0.3, size=3)),
        (1, 2): FaceInfo((1, 2), "positive", np.array([-neg[0], pos[0], 0.0])),
        (2, 3): FaceInfo((2, 3), "positive", np.array([0.0, -neg[1], pos[1]])),
        (1, 3): FaceInfo((1, 3), "positive", np.array([pos[2], 0.0, -neg[2]])),
        (1,): FaceInfo((1,), "transient", None),
        (2,): FaceInfo((2,), "transient", None),
        (3,): FaceInfo((3,), "transient", None),
    }
    return DriftProfile(d=3, faces=faces)


def _spiral_table_frame(rng, product_goal):
    """Profile matching the cyclic table row directly:
    a({1,2}) = (+,-,0), a({2,3}) = (0,+,-), a({1,3}) = (-,0,+)."""
    pos = rng.uniform(0.05, 0.3, size=3)
    neg = rng.uniform(0.05, 0.3, size=3)
    prod = pos.prod() / neg.prod()
    pos *= (product_goal / prod) ** (1 / 3)
    faces = {
        (1, 2, 3): FaceInfo((1, 2, 3), "positive", -rng.uniform(0.05, 0.3, size=3)),
        (1, 2): FaceInfo((1, 2), "positive", np.array([pos[0], -neg[0], 0.0])),
        (2, 3): FaceInfo((2, 3), "positive", np.array([0.0, pos[1], -neg[1]])),
        (1, 3): FaceInfo((1, 3), "positive", np.array([-neg[2], 0.0, pos[2]])),
        (1,): FaceInfo((1,), "transient", None),
        (2,): FaceInfo((2,), "transient", None),
        (3,): FaceInfo((3,), "transient", None),
    }
    return DriftProfile(d=3, faces=faces)


def _canonical_ratios(prof):
    v12, v23, v31 = prof.value((1, 2)), prof.value((2, 3)), prof.value((1, 3))
    return -v12[1] / v12[0], -v23[2] / v23[1], -v31[0] / v31[2]


def test_spiral_test_threshold(rng):
    for goal, want in [(0.4, "positive-recurrent"), (2.5, "transient")]:
        prof = _spiral_canonical(rng, goal)
        verdict, product = spiral_test(prof)
        assert verdict == want
        assert product == pytest.approx(goal, rel=1e-9)


def test_spiral_test_zero_band(rng):
    prof = _spiral_canonical(rng, 1.0)
    verdict, product = spiral_test(prof, band=1e-6)
    assert verdict == "unknown"
    assert product == pytest.approx(1.0, abs=1e-9)


def test_spiral_lyapunov_inequalities(rng):
    for _ in range(10):
        prof = _spiral_canonical(rng, float(rng.uniform(0.1, 0.8)))
        r12, r23, r31 = _canonical_ratios(prof)
        U = spiral_lyapunov_matrix(r12, r23, r31)
        assert np.linalg.eigvalsh(U)[0] > 0
        # every drift inequality of the quadratic certificate, re-checked
        for F in [(1, 2, 3), (1, 2), (2, 3), (1, 3)]:
            a = prof.value(F)
            for j in F:
                assert float(a @ U[:, j - 1]) < 0, (F, j)


def test_spiral_lyapunov_rejects_large_product():
    with pytest.raises(ValueError):
        spiral_lyapunov_matrix(1.2, 1.1, 1.0)


def test_spiral_transience_inequalities(rng):
    for _ in range(10):
        prof = _spiral_canonical(rng, float(rng.uniform(1.3, 6.0)))
        vectors, eps0, consts = spiral_transience_certificate(prof)
        assert eps0 > 0
        aN = prof.value((1, 2, 3))
        assert sorted(vectors) == [(1, 2), (1, 3), (2, 3)]
        for F, w in vectors.items():
            assert float(prof.value(F) @ w) >= eps0
            assert float(aN @ w) >= eps0


def test_classify_spiral_full(rng):
    prof = _spiral_table_frame(rng, 0.5)
    res = classify_3d(prof)
    assert (res.verdict, res.rule) == ("positive-recurrent", "3d-spiral")
    assert res.margins["ratio_product"] == pytest.approx(0.5, rel=1e-9)
    assert res.certificate["type"] == "lyapunov-quadratic"
    status, problems = verify_certificate(res.certificate, prof)
    assert status == "valid", problems

    prof = _spiral_table_frame(rng, 2.0)
    res = classify_3d(prof)
    assert (res.verdict, res.rule) == ("transient", "3d-spiral")
    assert res.margins["ratio_product"] == pytest.approx(2.0, rel=1e-9)
    assert res.certificate["type"] == "spiral-escape"
    assert res.certificate["epsilon0"] > 0
    status, problems = verify_certificate(res.certificate, prof)
    assert status == "valid", problems


# ---------------------------------------------------------------------------
# feasibility search


def _all_negative_profile(rng, d=3):
    faces = {}
    for r in range(1, d + 1):
        for F in itertools.combinations(range(1, d + 1), r):
            v = np.zeros(d)
            for l in F:
                v[l - 1] = -float(rng.uniform(0.1, 0.5))
            faces[F] = FaceInfo(F, "positive", v)
    return DriftProfile(d=d, faces=faces)


def _outward_interior_profile():
    faces = {(1, 2, 3): FaceInfo((1, 2, 3), "positive", np.array([0.3, 0.2, 0.25]))}
    for r in range(1, 3):
        for F in itertools.combinations(range(1, 4), r):
            faces[F] = FaceInfo(F, "transient", None)
    return DriftProfile(d=3, faces=faces)


def test_feasibility_U_finds_certificate(rng):
    prof = _all_negative_profile(rng)
    U, info = feasibility_U(prof)
    assert U is not None
    assert info["margin"] < 0
    status, problems = verify_certificate(_u_certificate(U), prof)
    assert status == "valid", problems


def test_feasibility_U_blocked_by_unknown(rng):
    prof = _all_negative_profile(rng)
    prof.faces[(2,)] = FaceInfo((2,), "unknown", None)
    U, info = feasibility_U(prof)
    assert U is None
    assert "unknown" in info["reason"]


def test_feasibility_U_refuses_outward_singleton(rng):
    prof = _all_negative_profile(rng)
    prof.faces[(1,)] = FaceInfo((1,), "positive", np.array([0.2, 0.0, 0.0]))
    U, info = feasibility_U(prof)
    assert U is None


def test_feasibility_U_refuses_outward_interior():
    U, info = feasibility_U(_outward_interior_profile())
    assert U is None


def test_feasibility_W_finds_escape():
    prof = _outward_interior_profile()
    W, info = feasibility_W(prof)
    assert W is not None and W["face"] == (1, 2, 3)
    assert info["margin"] > 0
    status, problems = verify_certificate(_w_certificate(W["face"], W["w"]), prof)
    assert status == "valid", problems


def test_feasibility_W_refuses_stable_profile(rng):
    prof = _all_negative_profile(rng)
    W, info = feasibility_W(prof)
    assert W is None


def test_feasibility_W_blocked_reports_reason():
    faces = {(1, 2, 3): FaceInfo((1, 2, 3), "positive", np.array([0.3, 0.2, 0.25]))}
    for r in range(1, 3):
        for F in itertools.combinations(range(1, 4), r):
            faces[F] = FaceInfo(F, "unknown", None)
    prof = DriftProfile(d=3, faces=faces)
    W, info = feasibility_W(prof)
    assert W is None
    assert info["skipped"]
    assert all("unknown" in reason for reason in info["skipped"].values())


# ---------------------------------------------------------------------------
# certificate verification and tampering


def test_verify_rejects_tampered_lyapunov(rng):
    prof = _all_negative_profile(rng)
    U, _ = feasibility_U(prof)
    U = np.asarray(U)
    U[0, 1] = U[1, 0] = -10 * abs(U[0, 1]) - 5.0
    status, problems = verify_certificate(_u_certificate(U), prof)
    assert status == "invalid"
    assert problems


def test_verify_names_violated_inequality(rng):
    prof = _all_negative_profile(rng)
    U, _ = feasibility_U(prof)
    bad = -np.asarray(U)  # negates every drift inequality
    status, problems = verify_certificate(_u_certificate(bad), prof)
    assert status == "invalid"
    assert any("is not negative" in p for p in problems)


def test_verify_rejects_sign_flipped_escape():
    prof = _outward_interior_profile()
    W, _ = feasibility_W(prof)
    status, problems = verify_certificate(_w_certificate(W["face"], -np.asarray(W["w"])), prof)
    assert status == "invalid"
    assert any("must be positive on the face" in p for p in problems)


def test_verify_inconclusive_on_unknown_face(rng):
    prof = _all_negative_profile(rng)
    U, _ = feasibility_U(prof)
    prof.faces[(3,)] = FaceInfo((3,), "unknown", None)
    status, problems = verify_certificate(_u_certificate(U), prof)
    assert status == "inconclusive"
    assert any("unknown" in p for p in problems)


def test_verify_strict_margin(rng):
    prof = _all_negative_profile(rng)
    U, _ = feasibility_U(prof)
    status, _ = verify_certificate(_u_certificate(U), prof, strict=1e9)
    assert status == "invalid"


def test_verify_unknown_type():
    prof = DriftProfile(d=1, faces={(1,): FaceInfo((1,), "positive", np.array([-0.5]))})
    status, problems = verify_certificate({"type": "nonsense"}, prof)
    assert status == "invalid"


# ---------------------------------------------------------------------------
# profiles and the dimension dispatcher


def test_build_drift_profile_three_queue():
    m = three_queue_model(1.0, 2.0, 1.0)  # every induced chain is stable here
    prof = build_drift_profile(m, seed=3)
    np.testing.assert_allclose(prof.value((1, 2, 3)), [-1 / 9] * 3, atol=1e-12)
    assert prof.info((1, 2, 3)).method == "finite-chain"
    assert prof.info((1, 2)).exact and prof.info((1, 2)).method == "qbd"
    assert prof.status((1, 2)) == "positive"
    assert prof.info((1, 2)).level_drift < 0
    assert prof.status((1,)) == "positive"
    assert prof.info((1,)).method == "mc"


def test_build_drift_profile_spiral_regime():
    m = three_queue_model(2.0, 2.5, 1.0)
    prof = build_drift_profile(m, mc=False)
    for l in (1, 2, 3):
        assert prof.status((l,)) == "transient"
        assert prof.info((l,)).method.startswith("recursive")


def test_build_drift_profile_assume_signs():
    m = three_queue_model(1.0, 2.0, 1.0)
    prof = build_drift_profile(
        m, mc=False, assume_signs={(1,): "na", (2,): ("0", "-", "0")}
    )
    assert prof.status((1,)) == "transient"  # the assumption is trusted as given
    assert prof.info((1,)).method == "assumed"
    assert prof.sign((2,)) == ("0", "-", "0")
    assert prof.value((2,))[1] < 0
    assert not prof.info((2,)).exact
    # the unassumed deep face falls back to the recursive status, with no value
    assert prof.status((3,)) == "positive"
    assert prof.value((3,)) is None


def test_build_drift_profile_rejects_bad_assumption():
    m = three_queue_model(1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        build_drift_profile(m, mc=False, assume_signs={(2,): ("-", "-", "0")})


def test_classify_auto_1d():
    stable = orthant_walk(1, {(1,): {(-1,): 0.6, (0,): 0.1, (1,): 0.3}, (): {(0,): 0.5, (1,): 0.5}})
    res = classify_auto(stable)
    assert (res.verdict, res.rule) == ("positive-recurrent", "1d-drift-sign")
    assert verify_certificate(res.certificate, build_drift_profile(stable))[0] == "valid"

    unstable = orthant_walk(1, {(1,): {(-1,): 0.3, (0,): 0.1, (1,): 0.6}, (): {(0,): 0.5, (1,): 0.5}})
    res = classify_auto(unstable)
    assert (res.verdict, res.rule) == ("transient", "1d-drift-sign")

    balanced = orthant_walk(1, {(1,): {(-1,): 0.5, (1,): 0.5}, (): {(0,): 0.5, (1,): 0.5}})
    res = classify_auto(balanced)
    assert res.verdict == "unknown"
    assert res.certificate is None


def test_classification_result_json(rng):
    m = random_walk_2d(rng)
    res = classify_auto(m, seed=9)
    out = res.to_json_dict()
    for key in ["verdict", "rule", "certificate", "margins", "caveats",
                "drift_profile", "seed", "tol", "version"]:
        assert key in out
    assert out["seed"] == 9
    import json

    json.dumps(out)  # must be serializable as-is
