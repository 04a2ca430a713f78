"""Frame generation pipeline: jitter scene, sample pose, light, render, filter.

A frame is accepted only when the sampled configuration is collision-free,
the target part's unoccluded silhouette lies fully inside the image, and its
visible fraction is at least MIN_VISIBILITY. Every random draw is keyed by
(root seed, frame index, attempt), so regeneration is bit-identical.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, RigidPose, axis_angle_matrix
from .meshes import InstrumentSpec, SceneSpec
from .render import FrameRecord, FrustumError, render_frame, render_silhouette
from .sampling import SampleInfo, SamplingError, randomize_lighting, sample_instrument_config

MIN_VISIBILITY = 0.15
BORDER_MARGIN_PX = 1


class GenerationError(RuntimeError):
    def __init__(self, attempts, rejections):
        self.rejections = dict(rejections)
        super().__init__(f"frame generation failed after {attempts} attempts: {self.rejections}")


@dataclass
class GeneratedFrame:
    record: FrameRecord
    info: SampleInfo
    scene: SceneSpec


def _jitter_scene(scene: SceneSpec, rng: np.random.Generator) -> SceneSpec:
    """Per-frame minor jitter of backdrop pose and trocar point."""
    axis = rng.normal(size=3)
    angle = np.radians(rng.uniform(-3.0, 3.0))
    shift = rng.uniform(-3.0, 3.0, size=3)
    center = scene.backdrop.vertices.mean(axis=0)
    R = axis_angle_matrix(axis, angle)
    pose = RigidPose(R, center - R @ center + shift)
    trocar = scene.trocar + rng.uniform(-3.0, 3.0, size=3)
    return SceneSpec(backdrop=scene.backdrop, trocar=trocar, light=scene.light,
                     depth_range=scene.depth_range,
                     backdrop_pose=scene.backdrop_pose.compose(pose),
                     aim_lateral_mm=scene.aim_lateral_mm)


def _silhouette_inside(mask: np.ndarray, margin: int) -> bool:
    if not mask.any():
        return False
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    return (ys.min() >= margin and xs.min() >= margin
            and ys.max() < h - margin and xs.max() < w - margin)


def generate_frame(instrument: InstrumentSpec, scene: SceneSpec, intrinsics: CameraIntrinsics,
                   seed, frame_id: int = 0, target_part: str = "wrist",
                   max_attempts: int = 1000) -> GeneratedFrame:
    """Generate one accepted frame; raises GenerationError if filters never pass."""
    rejections = Counter()
    attempts_used = 0
    for attempt in range(max_attempts):
        scene_rng = np.random.default_rng(np.random.SeedSequence([seed, frame_id, attempt, 0]))
        frame_scene = _jitter_scene(scene, scene_rng)
        try:
            poses, info = sample_instrument_config(
                instrument, frame_scene, np.random.SeedSequence([seed, frame_id, attempt, 1]),
                max_attempts=max_attempts - attempts_used)
        except SamplingError as exc:
            rejections.update(exc.rejections)
            raise GenerationError(max_attempts, rejections) from exc
        attempts_used += info.attempts
        rejections.update(info.rejections)
        lit = randomize_lighting(frame_scene, info.shaft_direction,
                                 np.random.SeedSequence([seed, frame_id, attempt, 2]))
        target_model = instrument.part_model(target_part)
        solo = render_silhouette(target_model, poses[target_part], intrinsics)
        if not _silhouette_inside(solo, BORDER_MARGIN_PX):
            rejections["frustum"] += 1
            if attempts_used >= max_attempts:
                raise GenerationError(attempts_used, rejections)
            continue
        parts = [(name, instrument.part_model(name), poses[name])
                 for name in instrument.part_names()]
        try:
            record = render_frame(parts, (frame_scene.backdrop, frame_scene.backdrop_pose),
                                  lit.light, intrinsics, frame_id=frame_id)
        except FrustumError:
            rejections["frustum"] += 1
            if attempts_used >= max_attempts:
                raise GenerationError(attempts_used, rejections)
            continue
        if record.visibility_ratio[target_part] < MIN_VISIBILITY:
            rejections["visibility"] += 1
            if attempts_used >= max_attempts:
                raise GenerationError(attempts_used, rejections)
            continue
        info.rejections = rejections
        return GeneratedFrame(record=record, info=info, scene=lit)
    raise GenerationError(max_attempts, rejections)


def generate_frames(instrument: InstrumentSpec, scene: SceneSpec, intrinsics: CameraIntrinsics,
                    n_frames: int, seed, target_part: str = "wrist", progress=None):
    """Generate `n_frames` accepted frames with sequential frame ids."""
    out = []
    total_rejections = Counter()
    for fid in range(n_frames):
        gen = generate_frame(instrument, scene, intrinsics, seed, frame_id=fid,
                             target_part=target_part)
        total_rejections.update(gen.info.rejections)
        out.append(gen)
        if progress is not None:
            progress(fid + 1, n_frames)
    return out, dict(total_rejections)
