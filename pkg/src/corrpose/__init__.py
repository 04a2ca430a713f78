"""Dense pixel-to-surface correspondence pose estimation toolkit."""

__version__ = "0.1.0"

from .geometry import CameraIntrinsics, RigidPose, project, back_project
from .surface import Keypoint2D, SurfaceModel, load_obj

__all__ = [
    "CameraIntrinsics",
    "RigidPose",
    "project",
    "back_project",
    "Keypoint2D",
    "SurfaceModel",
    "load_obj",
    "__version__",
]
