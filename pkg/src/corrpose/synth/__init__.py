"""Synthetic scene generation: pose sampling, collision filtering, rendering, dataset I/O."""

from .meshes import (
    InstrumentSpec,
    JointLimits,
    LightSpec,
    SceneSpec,
    build_instrument,
    build_scene,
    bumpy_backdrop,
    capped_cylinder,
    jaw_wedge,
    wrist_block,
)
from .bvh import Bvh, detect_collision, detect_collision_brute_force, ray_mesh_first_hit
from .render import FrameRecord, RenderMaterial, render_frame, render_silhouette, visibility_ratio
from .sampling import SampleInfo, SamplingError, instrument_part_poses, randomize_lighting, sample_instrument_config
from .bop import read_bop, write_bop
from .pipeline import GeneratedFrame, generate_frames
