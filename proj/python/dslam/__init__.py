"""Python interface to the dslam visual odometry core.

Poses cross the boundary as TUM-style rows ``(tx, ty, tz, qx, qy, qz, qw)``
holding the camera-to-world transform; trajectories returned by the core
carry a leading timestamp column.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Optional

from . import _core
from ._core import (
    AssociationError,
    BehindCameraError,
    CameraIntrinsics,
    DomainError,
    Error,
    EstimateFailedError,
    InsufficientSamplesError,
    LookupError,
    ParseError,
    Se3Pose,
    UnderconstrainedError,
    backproject,
    depth_metrics,
    estimate_scale,
    frame_weight,
    project,
    read_tum,
    reproject,
    se3_exp,
    se3_log,
    se3_retract,
)

__all__ = [
    "AssociationError", "BehindCameraError", "CameraIntrinsics", "DomainError", "Error",
    "EstimateFailedError", "InsufficientSamplesError", "LookupError", "ParseError", "Se3Pose",
    "UnderconstrainedError", "ate_rmse", "backproject", "config_hash", "default_config",
    "depth_metrics", "estimate_scale", "evaluate", "frame_weight", "project", "read_tum",
    "reproject", "rpe", "run", "run_synthetic", "se3_exp", "se3_log", "se3_retract", "simulate",
]


def _poses(rows):
    # Accept trajectories with or without the timestamp column.
    return rows[:, 1:] if rows.shape[1] == 8 else rows


def ate_rmse(est, gt, align: str = "sim3") -> float:
    return _core.ate_rmse(_poses(est), _poses(gt), align)


def rpe(est, gt, align: str = "sim3") -> tuple[float, float]:
    """(RTE in scene units, RRE in degrees) over consecutive pose pairs."""
    return _core.rpe(_poses(est), _poses(gt), align)


def default_config() -> dict:
    return json.loads(_core.default_config())


def config_hash(config: Mapping[str, Any]) -> str:
    return _core.config_hash(json.dumps(config))


def run_synthetic(config: Optional[Mapping[str, Any]] = None) -> dict:
    """Simulates a scene and runs the pipeline on it in memory.

    ``config`` follows the CLI config layout ``{"scene": {...}, "pipeline": {...}}``;
    missing keys keep their defaults.
    """
    return _core.run_synthetic(json.dumps(dict(config or {})))


class CommandError(RuntimeError):
    def __init__(self, code: int, stderr: str):
        super().__init__(f"exit code {code}: {stderr.strip()}")
        self.code = code
        self.stderr = stderr


def _checked(result) -> str:
    code, out, err = result
    if code != 0:
        raise CommandError(code, err)
    return out


def simulate(out, config=None, seed: Optional[int] = None) -> str:
    """Exports a synthetic sequence directory; returns the manifest path."""
    return _checked(_core.cmd_simulate(config, out, seed)).strip()


def run(seq, out, *, no_mask=False, no_prior=False, fixed_weight=None, config=None, depth_out=None) -> None:
    _checked(_core.cmd_run(seq, out, no_mask, no_prior, fixed_weight, config, depth_out))


def evaluate(est, gt, mode: str = "ate", align: str = "sim3") -> dict[str, float]:
    out = _checked(_core.cmd_eval(est, gt, mode, align))
    return {k: float(v) for k, v in (line.split("=", 1) for line in out.split())}
