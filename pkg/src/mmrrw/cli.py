"""Command-line front end.

Subcommands: ``validate`` (model well-formedness report), ``drift`` (exactly
solvable face drifts as JSON), ``classify`` (stability verdict JSON),
``verify-cert`` (re-check a serialized certificate against a model),
``simulate`` (recurrence diagnostic, optional trajectory CSV + plot), and
``example`` (emit a built-in model).

Exit codes: 0 success / verdict obtained; 2 validation or input failure;
3 verdict or verification is unknown/inconclusive; 4 internal error or an
invalid certificate.  All structured output is JSON with sorted keys, so a
rerun with the same model, options, and seed is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from mmrrw import __version__, examples
from mmrrw.model import (
    ModelValidationError,
    all_faces,
    face_key,
    face_of,
    load_model,
    model_to_json,
    parse_face_key,
    save_model,
    validate_model,
)
from mmrrw.induced import face_drift
from mmrrw.qbd import ComputationError
from mmrrw.classify import build_drift_profile, classify_auto, verify_certificate
from mmrrw.simulate import (
    estimate_drift_sign,
    recurrence_diagnostic,
    simulate_paths,
    truncated_stationary,
)

_OK, _INVALID, _UNKNOWN, _INTERNAL = 0, 2, 3, 4


def _plain(obj):
    """Make an object JSON-serializable (numpy scalars/arrays, tuples, NaN)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(obj, args) -> None:
    out = _plain(obj)
    out.setdefault("version", __version__)
    if hasattr(args, "seed"):
        out.setdefault("seed", args.seed)
    if hasattr(args, "tol"):
        out.setdefault("tol", args.tol)
    sys.stdout.write(json.dumps(out, indent=2, sort_keys=True) + "\n")


def _check_tol(value: str) -> float:
    tol = float(value)
    if not 1e-15 <= tol <= 1e-3:
        raise argparse.ArgumentTypeError("tolerance must lie in [1e-15, 1e-3]")
    return tol


def _parse_assume(entries) -> dict | None:
    if not entries:
        return None
    out = {}
    for item in entries:
        if "=" not in item:
            raise ModelValidationError(f"--assume-sign needs FACE=signs, got {item!r}")
        key, _, val = item.partition("=")
        face = parse_face_key(key)
        out[face] = "na" if val == "na" else tuple(val.split(","))
    return out


def _load(args):
    return load_model(args.model, validate=True, tol=getattr(args, "tol", 1e-12))


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args) -> int:
    model = load_model(args.model, validate=False)
    errors = validate_model(model, tol=args.tol)
    _emit({"valid": not errors, "errors": errors, "model": args.model}, args)
    return _OK if not errors else _INVALID


def _cmd_drift(args) -> int:
    model = _load(args)
    faces = {}
    skipped = []
    for A in all_faces(model.d):
        if not A:
            continue  # the origin face has zero drift by definition
        if model.d - len(A) <= 1:
            fd = face_drift(model, A)
            entry = {"status": fd.status, "value": fd.value, "method": "exact"}
            if fd.level_drift is not None:
                entry["level_drift"] = fd.level_drift
            faces[face_key(A)] = entry
        elif args.mc:
            value, halfw = estimate_drift_sign(model, A, seed=args.seed)
            resolved = all(abs(value[l - 1]) > halfw[l - 1] for l in A)
            faces[face_key(A)] = {
                "status": "estimated",
                "value": value,
                "ci_halfwidth": halfw,
                "resolved": bool(resolved),
                "method": "monte-carlo",
            }
        else:
            skipped.append(face_key(A))
    _emit({"faces": faces, "skipped": skipped, "model": args.model}, args)
    return _OK


def _cmd_classify(args) -> int:
    model = _load(args)
    res = classify_auto(
        model,
        seed=args.seed,
        tol=args.tol,
        assume_signs=_parse_assume(args.assume_sign),
        mc=not args.no_mc,
    )
    _emit(res.to_json_dict(), args)
    return _UNKNOWN if res.verdict == "unknown" else _OK


def _cmd_verify_cert(args) -> int:
    model = _load(args)
    with open(args.cert, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    cert = payload.get("certificate", payload)
    if not isinstance(cert, dict) or "type" not in cert:
        raise ModelValidationError(f"{args.cert}: no certificate object found")
    profile = build_drift_profile(
        model,
        seed=args.seed,
        tol=args.tol,
        assume_signs=_parse_assume(args.assume_sign),
        mc=not args.no_mc,
    )
    status, problems = verify_certificate(cert, profile, strict=args.strict)
    _emit({"status": status, "problems": problems, "certificate_type": cert["type"]}, args)
    if status == "valid":
        return _OK
    return _UNKNOWN if status == "inconclusive" else _INTERNAL


def _cmd_simulate(args) -> int:
    model = _load(args)
    report = recurrence_diagnostic(
        model, reps=args.reps, horizon=args.horizon, K=args.start, seed=args.seed
    )
    report = {"diagnostic": report, "model": args.model}
    if args.truncation:
        states, pi = truncated_stationary(model, args.truncation)
        xs = np.array([s[0] for s in states])
        shell = float(pi[(xs == args.truncation).any(axis=1)].sum())
        report["truncation"] = {
            "L": args.truncation,
            "shell_mass": shell,
            "mean_l1": float((pi * xs.sum(axis=1)).sum()),
        }
    if args.out:
        report["artifacts"] = _trajectory_dump(model, args)
    _emit(report, args)
    return _OK


def _trajectory_dump(model, args) -> dict:
    """Write recorded trajectories as CSV and a matplotlib figure beside it."""
    import csv

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reps = min(args.reps, 32)
    steps = min(args.horizon, 200_000)
    every = max(1, steps // 512)
    x0 = np.zeros(model.d, dtype=np.int64)
    x0[-1] = args.start - 1
    res = simulate_paths(
        model, steps=steps, reps=reps, x0=x0, seed=args.seed, stream=23, record_every=every
    )
    rec_steps = res["record_steps"]
    xs = res["x_records"]  # (reps, n_rec, d)
    l1 = xs.sum(axis=2)

    csv_path = args.out + ".csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "step", "l1_norm", "face"])
        for rep in range(reps):
            for t, step in enumerate(rec_steps):
                writer.writerow([rep, int(step), int(l1[rep, t]), face_key(face_of(xs[rep, t]))])

    png_path = args.out + ".png"
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for rep in range(reps):
        ax.plot(rec_steps, l1[rep], lw=0.8, alpha=0.45)
    ax.plot(rec_steps, l1.mean(axis=0), lw=2.2, color="black", label="mean")
    ax.set_xlabel("step")
    ax.set_ylabel("total queue length")
    ax.set_title(model.metadata.get("name", "trajectories"))
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return {"csv": csv_path, "png": png_path, "reps": reps, "steps": steps, "record_every": every}


def _cmd_example(args) -> int:
    if args.name == "three-queue":
        model = examples.three_queue_model(args.lam, args.mu, args.delta, nu=args.nu)
    else:
        if not args.row:
            raise ModelValidationError(
                "--row is required for table-row; known rows: " + ", ".join(examples.row_labels())
            )
        model = examples.random_table_model(args.row, seed=args.seed, spiral=args.spiral)
    if args.out:
        save_model(model, args.out)
        _emit({"written": args.out, "name": args.name, "metadata": model.metadata}, args)
    else:
        # a bare model dump, kept loadable: no report fields injected
        sys.stdout.write(model_to_json(model) + "\n")
    return _OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p, seed=True, tol=True):
    p.add_argument("--model", required=True, help="path to a model JSON file")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="random seed recorded in the output")
    if tol:
        p.add_argument("--tol", type=_check_tol, default=1e-9, help="decision tolerance")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmrrw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"mmrrw {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("validate", help="check a model file for structural errors")
    q.add_argument("--model", required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--tol", type=_check_tol, default=1e-12)

    q = sub.add_parser("drift", help="report exactly solvable face drifts")
    _add_common(q)
    q.add_argument("--mc", action="store_true", help="estimate deeper faces by simulation")

    q = sub.add_parser("classify", help="decide positive recurrence vs transience")
    _add_common(q)
    q.add_argument(
        "--assume-sign",
        action="append",
        metavar="FACE=+,-,0",
        help="override a face drift sign (value 'na' marks the face transient); repeatable",
    )
    q.add_argument("--no-mc", action="store_true", help="never estimate drifts by simulation")

    q = sub.add_parser("verify-cert", help="re-check a serialized certificate")
    _add_common(q)
    q.add_argument("--cert", required=True, help="certificate JSON (or a verdict file containing one)")
    q.add_argument("--strict", type=float, default=0.0, help="required inequality margin")
    q.add_argument("--assume-sign", action="append", metavar="FACE=+,-,0")
    q.add_argument("--no-mc", action="store_true")

    q = sub.add_parser("simulate", help="Monte Carlo recurrence diagnostic")
    _add_common(q, tol=False)
    q.add_argument("--reps", type=int, default=200)
    q.add_argument("--horizon", type=int, default=10**6)
    q.add_argument("--start", type=int, default=10, help="initial distance from the origin")
    q.add_argument("--truncation", type=int, default=0, metavar="L",
                   help="also solve the L-truncated stationary law as a cross-check")
    q.add_argument("--out", help="prefix for trajectory artifacts (CSV + PNG)")

    q = sub.add_parser("example", help="emit a built-in model")
    q.add_argument("--name", choices=["three-queue", "table-row"], required=True)
    q.add_argument("--lam", type=float, default=1.0)
    q.add_argument("--mu", type=float, default=2.0)
    q.add_argument("--delta", type=float, default=1.0)
    q.add_argument("--nu", type=float, default=None)
    q.add_argument("--row", help="decision-table row label, e.g. C1-2-1")
    q.add_argument("--spiral", choices=["stable", "transient"], default=None)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", help="write the model JSON here instead of stdout")
    return p


_COMMANDS = {
    "validate": _cmd_validate,
    "drift": _cmd_drift,
    "classify": _cmd_classify,
    "verify-cert": _cmd_verify_cert,
    "simulate": _cmd_simulate,
    "example": _cmd_example,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ModelValidationError as exc:
        sys.stderr.write(f"validation failure: {exc}\n")
        return _INVALID
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return _INVALID
    except ComputationError as exc:
        sys.stderr.write(f"computation failed: {exc}\n")
        return _INTERNAL
    except Exception as exc:  # noqa: BLE001 - the CLI must map everything to an exit code
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return _INTERNAL


if __name__ == "__main__":
    sys.exit(main())
