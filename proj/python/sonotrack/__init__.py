"""Trajectory estimation for freehand ultrasound sweeps with IMU fusion.

Poses are (N, 4, 4) homogeneous matrices in millimetres. Relative steps are
(N-1, 6) rows of tx, ty, tz (mm) and intrinsic ZYX Euler angles (degrees).
"""

from ._sonotrack import (
    Error,
    ModelConfig,
    MotionEstimator,
    Scan,
    TrainConfig,
    adapt_online,
    chain_trajectory,
    compound_volume,
    compute_metrics,
    estimated_acceleration,
    euler_to_matrix,
    hausdorff_distance,
    load_checkpoint,
    load_scan,
    matrix_to_euler,
    offline_loss,
    pearson_loss,
    relative_steps,
    rotation_angle_deg,
    save_scan,
    simulate_dataset,
    train,
    validate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
