"""Python bindings for the anglereloc C++ core."""

from ._core import (
    CameraIntrinsics,
    Dataset,
    Error,
    PoseSE3,
    TrainResult,
    angle_loss,
    axis_angle_to_rotation,
    default_config,
    gradcheck,
    load_dataset,
    make_dataset,
    pose_error,
    ransac_pnp,
    reproj_loss,
    save_dataset,
    train,
)

__all__ = [
    "CameraIntrinsics",
    "Dataset",
    "Error",
    "PoseSE3",
    "TrainResult",
    "angle_loss",
    "axis_angle_to_rotation",
    "default_config",
    "gradcheck",
    "load_dataset",
    "make_dataset",
    "pose_error",
    "ransac_pnp",
    "reproj_loss",
    "save_dataset",
    "train",
]
