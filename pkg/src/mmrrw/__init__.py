"""Stability analysis for skip-free modulated reflecting random walks."""

from mmrrw.model import (
    MmrrwModel,
    ModelValidationError,
    all_faces,
    face_key,
    face_of,
    lazy_model,
    load_model,
    local_drift,
    parse_face_key,
    permute_coordinates,
    save_model,
    validate_model,
)
from mmrrw.induced import FaceDrift, assemble_qbd, face_drift, project, stationary_finite
from mmrrw.qbd import compute_R, model_from_qbd, qbd_positive_recurrent, qbd_stationary
from mmrrw.classify import (
    ClassificationResult,
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
from mmrrw.simulate import (
    CtmcModel,
    PartitionScheme,
    estimate_drift_sign,
    estimate_g,
    recurrence_diagnostic,
    simulate_paths,
    truncated_stationary,
    uniformize,
)
from mmrrw import examples

__version__ = "0.1.0"

__all__ = [
    "MmrrwModel",
    "ModelValidationError",
    "all_faces",
    "face_key",
    "face_of",
    "lazy_model",
    "load_model",
    "local_drift",
    "parse_face_key",
    "permute_coordinates",
    "save_model",
    "validate_model",
    "FaceDrift",
    "assemble_qbd",
    "face_drift",
    "project",
    "stationary_finite",
    "compute_R",
    "model_from_qbd",
    "qbd_positive_recurrent",
    "qbd_stationary",
    "ClassificationResult",
    "DriftProfile",
    "FaceInfo",
    "build_drift_profile",
    "classify_2d",
    "classify_3d",
    "classify_auto",
    "feasibility_U",
    "feasibility_W",
    "spiral_lyapunov_matrix",
    "spiral_test",
    "spiral_transience_certificate",
    "verify_certificate",
    "CtmcModel",
    "PartitionScheme",
    "estimate_drift_sign",
    "estimate_g",
    "recurrence_diagnostic",
    "simulate_paths",
    "truncated_stationary",
    "uniformize",
    "examples",
    "__version__",
]
