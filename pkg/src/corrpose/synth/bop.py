"""BOP-style dataset layout: per-scene rgb/depth/mask PNG trees plus JSON ground truth.

Layout under <root>/<scene 06d>/:
  rgb/NNNNNN.png          8-bit color
  depth/NNNNNN.png        16-bit, value = mm * 10
  mask_visib/NNNNNN_PPPPPP.png   per ground-truth-entry visible mask
  aux/NNNNNN.npz          coordinate map, normal map, visibility ratios
  scene_camera.json       cam_K (9 floats row-major) + depth_scale per frame
  scene_gt.json           cam_R_m2c / cam_t_m2c / obj_id per part per frame
"""
from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from ..geometry import CameraIntrinsics, RigidPose
from .render import FrameRecord

DEPTH_SCALE = 0.1  # stored uint16 * 0.1 = mm  (i.e. value = mm * 10)
PART_OBJ_IDS = {"shaft": 1, "wrist": 2, "jaw_left": 3, "jaw_right": 4}
_ID_PARTS = {v: k for k, v in PART_OBJ_IDS.items()}


class BopError(RuntimeError):
    pass


class BopMissingFileError(BopError):
    pass


class BopMalformedJsonError(BopError):
    pass


class BopDimensionError(BopError):
    pass


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, separators=(",", ":"))


def write_bop(frames, root, scene_id: int = 0) -> str:
    """Write FrameRecords as one BOP scene directory; returns the scene path."""
    scene = os.path.join(str(root), f"{scene_id:06d}")
    for sub in ("rgb", "depth", "mask_visib", "aux"):
        os.makedirs(os.path.join(scene, sub), exist_ok=True)
    cameras = {}
    gts = {}
    for frame in frames:
        fid = int(frame.frame_id)
        key = str(fid)
        K = frame.intrinsics
        cameras[key] = {"cam_K": [K.fx, 0.0, K.cx, 0.0, K.fy, K.cy, 0.0, 0.0, 1.0],
                        "depth_scale": DEPTH_SCALE}
        entries = []
        part_names = sorted(frame.part_poses, key=lambda n: PART_OBJ_IDS[n])
        for gt_index, name in enumerate(part_names):
            pose = frame.part_poses[name]
            entries.append({"cam_R_m2c": [float(x) for x in pose.rotation.ravel()],
                            "cam_t_m2c": [float(x) for x in pose.translation],
                            "obj_id": PART_OBJ_IDS[name]})
            mask = (frame.masks[name].astype(np.uint8)) * 255
            Image.fromarray(mask, mode="L").save(
                os.path.join(scene, "mask_visib", f"{fid:06d}_{gt_index:06d}.png"))
        gts[key] = entries
        Image.fromarray(frame.rgb).save(os.path.join(scene, "rgb", f"{fid:06d}.png"))
        depth16 = np.round(frame.depth / DEPTH_SCALE).astype(np.uint16)
        Image.fromarray(depth16).save(os.path.join(scene, "depth", f"{fid:06d}.png"))
        np.savez_compressed(os.path.join(scene, "aux", f"{fid:06d}.npz"),
                            coord_map=frame.coord_map.astype(np.float32),
                            normal_map=frame.normal_map.astype(np.float32),
                            part_names=np.array(part_names),
                            visibility=np.array([frame.visibility_ratio.get(n, 1.0)
                                                 for n in part_names], dtype=np.float64))
    _write_json(os.path.join(scene, "scene_camera.json"), cameras)
    _write_json(os.path.join(scene, "scene_gt.json"), gts)
    return scene


def _load_json(path):
    if not os.path.exists(path):
        raise BopMissingFileError(f"missing {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise BopMalformedJsonError(f"malformed JSON in {path}: {exc}") from exc


def _load_png(path):
    if not os.path.exists(path):
        raise BopMissingFileError(f"missing {path}")
    return np.array(Image.open(path))


def read_bop(root) -> list[FrameRecord]:
    """Read every scene under `root` back into FrameRecords (inverse of write_bop)."""
    root = str(root)
    if not os.path.isdir(root):
        raise BopMissingFileError(f"dataset root {root} does not exist")
    scenes = sorted(d for d in os.listdir(root)
                    if os.path.isdir(os.path.join(root, d)) and d.isdigit())
    if not scenes:
        raise BopMissingFileError(f"no scene directories under {root}")
    frames = []
    for scene_name in scenes:
        scene = os.path.join(root, scene_name)
        cameras = _load_json(os.path.join(scene, "scene_camera.json"))
        gts = _load_json(os.path.join(scene, "scene_gt.json"))
        for key in sorted(cameras, key=int):
            fid = int(key)
            try:
                cam = cameras[key]["cam_K"]
                depth_scale = cameras[key].get("depth_scale", DEPTH_SCALE)
            except (KeyError, TypeError) as exc:
                raise BopMalformedJsonError(f"scene_camera entry {key} malformed") from exc
            rgb = _load_png(os.path.join(scene, "rgb", f"{fid:06d}.png"))
            if rgb.ndim != 3 or rgb.shape[2] != 3:
                raise BopDimensionError(f"rgb {fid:06d} must be HxWx3")
            h, w = rgb.shape[:2]
            K = CameraIntrinsics(fx=cam[0], fy=cam[4], cx=cam[2], cy=cam[5], width=w, height=h)
            depth_raw = _load_png(os.path.join(scene, "depth", f"{fid:06d}.png"))
            if depth_raw.shape != (h, w):
                raise BopDimensionError(
                    f"depth {fid:06d} is {depth_raw.shape}, expected {(h, w)}")
            depth = depth_raw.astype(np.float64) * depth_scale
            if key not in gts:
                raise BopMalformedJsonError(f"scene_gt missing frame {key}")
            poses = {}
            masks = {}
            for gt_index, entry in enumerate(gts[key]):
                try:
                    R = np.array(entry["cam_R_m2c"], dtype=np.float64).reshape(3, 3)
                    t = np.array(entry["cam_t_m2c"], dtype=np.float64)
                    obj_id = int(entry["obj_id"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise BopMalformedJsonError(f"scene_gt entry {key}/{gt_index} malformed") from exc
                name = _ID_PARTS.get(obj_id, f"obj_{obj_id}")
                poses[name] = RigidPose(R, t)
                mask = _load_png(os.path.join(scene, "mask_visib", f"{fid:06d}_{gt_index:06d}.png"))
                if mask.shape != (h, w):
                    raise BopDimensionError(
                        f"mask {fid:06d}_{gt_index:06d} is {mask.shape}, expected {(h, w)}")
                masks[name] = mask > 127
            aux_path = os.path.join(scene, "aux", f"{fid:06d}.npz")
            if os.path.exists(aux_path):
                aux = np.load(aux_path, allow_pickle=False)
                coord_map = aux["coord_map"].astype(np.float64)
                normal_map = aux["normal_map"].astype(np.float64)
                visibility = {str(n): float(vis) for n, vis in
                              zip(aux["part_names"], aux["visibility"])}
                if coord_map.shape[:2] != (h, w):
                    raise BopDimensionError(f"aux coord map {fid:06d} dimension mismatch")
            else:
                coord_map = np.zeros((h, w, 3))
                normal_map = np.zeros((h, w, 3))
                visibility = {}
            frames.append(FrameRecord(rgb=rgb, depth=depth, masks=masks,
                                      normal_map=normal_map, coord_map=coord_map,
                                      part_poses=poses, intrinsics=K,
                                      visibility_ratio=visibility, frame_id=fid))
    return frames
