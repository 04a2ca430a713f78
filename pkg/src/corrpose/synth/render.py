"""Deterministic z-buffered software rasterizer with multi-modality outputs.

Geometry and shading are separate passes: the geometry pass fills the depth
buffer, per-pixel surface/triangle ids and perspective-correct barycentric
weights; the shading pass then evaluates a Lambertian + Blinn-Phong model.
Pixel (row i, col j) samples the scene at continuous image point (x=j, y=i),
and all interpolation is perspective-correct, so the stored coordinate of a
covered pixel reprojects onto that pixel's center by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CameraIntrinsics, RigidPose
from .meshes import LightSpec

Z_NEAR_MM = 1.0
_EDGE_EPS = 1e-9
BACKGROUND_RGB = np.array([10, 8, 8], dtype=np.uint8)
AMBIENT = 0.14
LIGHT_REFERENCE_MM = 45.0


class RenderError(RuntimeError):
    pass


class FrustumError(RenderError):
    """Raised when the instrument is entirely outside the view frustum."""


@dataclass(frozen=True)
class RenderMaterial:
    albedo: tuple
    specular: float = 0.5
    shininess: float = 28.0


DEFAULT_MATERIALS = {
    "shaft": RenderMaterial((0.60, 0.61, 0.64), 0.55, 30.0),
    "wrist": RenderMaterial((0.71, 0.71, 0.73), 0.60, 26.0),
    "jaw_left": RenderMaterial((0.55, 0.56, 0.58), 0.55, 30.0),
    "jaw_right": RenderMaterial((0.50, 0.51, 0.53), 0.55, 30.0),
    "backdrop": RenderMaterial((0.58, 0.21, 0.19), 0.14, 8.0),
}


@dataclass(eq=False)
class FrameRecord:
    """One rendered observation with its ground truth."""

    rgb: np.ndarray                    # (H, W, 3) uint8
    depth: np.ndarray                  # (H, W) float mm, 0 where empty
    masks: dict                        # part name -> (H, W) bool visible mask
    normal_map: np.ndarray             # (H, W, 3) unit vectors, 0 where empty
    coord_map: np.ndarray              # (H, W, 3) normalized part coords under part masks
    part_poses: dict                   # part name -> RigidPose
    intrinsics: CameraIntrinsics
    visibility_ratio: dict = field(default_factory=dict)  # part name -> (0, 1]
    frame_id: int = 0


def _project_vertices(tris_cam, K: CameraIntrinsics):
    z = tris_cam[:, :, 2]
    u = K.fx * tris_cam[:, :, 0] / z + K.cx
    v = K.fy * tris_cam[:, :, 1] / z + K.cy
    return u, v, z


def _rasterize(surfaces, K: CameraIntrinsics):
    """Core pass. surfaces: list of (T,3,3) camera-frame triangle arrays.

    Returns depth (inf where empty), surface id, triangle id and the two
    perspective-correct barycentric weights of corners 1 and 2.
    """
    h, w = K.height, K.width
    depth = np.full((h, w), np.inf)
    sid = np.full((h, w), -1, dtype=np.int32)
    tid = np.full((h, w), -1, dtype=np.int32)
    w1 = np.zeros((h, w))
    w2 = np.zeros((h, w))
    for s, tris in enumerate(surfaces):
        if len(tris) == 0:
            continue
        front = (tris[:, :, 2] > Z_NEAR_MM).all(axis=1)
        tris = tris[front]
        tri_ids = np.nonzero(front)[0]
        if len(tris) == 0:
            continue
        u, v, z = _project_vertices(tris, K)
        x_lo = np.maximum(np.ceil(u.min(axis=1)), 0).astype(int)
        x_hi = np.minimum(np.floor(u.max(axis=1)), w - 1).astype(int)
        y_lo = np.maximum(np.ceil(v.min(axis=1)), 0).astype(int)
        y_hi = np.minimum(np.floor(v.max(axis=1)), h - 1).astype(int)
        zinv = 1.0 / z
        for t in range(len(tris)):
            if x_lo[t] > x_hi[t] or y_lo[t] > y_hi[t]:
                continue
            x0, y0 = u[t, 0], v[t, 0]
            e1x, e1y = u[t, 1] - x0, v[t, 1] - y0
            e2x, e2y = u[t, 2] - x0, v[t, 2] - y0
            area = e1x * e2y - e1y * e2x
            if abs(area) < 1e-12:
                continue
            gx = np.arange(x_lo[t], x_hi[t] + 1)[None, :] - x0
            gy = np.arange(y_lo[t], y_hi[t] + 1)[:, None] - y0
            l1 = (gx * e2y - gy * e2x) / area
            l2 = (gy * e1x - gx * e1y) / area
            l0 = 1.0 - l1 - l2
            inside = (l0 >= -_EDGE_EPS) & (l1 >= -_EDGE_EPS) & (l2 >= -_EDGE_EPS)
            if not inside.any():
                continue
            zi = l0 * zinv[t, 0] + l1 * zinv[t, 1] + l2 * zinv[t, 2]
            zpix = 1.0 / zi
            sub = (slice(y_lo[t], y_hi[t] + 1), slice(x_lo[t], x_hi[t] + 1))
            closer = inside & (zpix < depth[sub])
            if not closer.any():
                continue
            depth[sub][closer] = zpix[closer]
            sid[sub][closer] = s
            tid[sub][closer] = tri_ids[t]
            w1[sub][closer] = (l1[closer] * zinv[t, 1]) * zpix[closer]
            w2[sub][closer] = (l2[closer] * zinv[t, 2]) * zpix[closer]
    return depth, sid, tid, w1, w2


def _coverage(tris, K: CameraIntrinsics) -> np.ndarray:
    """Binary silhouette of one triangle set (no depth resolution)."""
    h, w = K.height, K.width
    cover = np.zeros((h, w), dtype=bool)
    if len(tris) == 0:
        return cover
    front = (tris[:, :, 2] > Z_NEAR_MM).all(axis=1)
    tris = tris[front]
    if len(tris) == 0:
        return cover
    u, v, _ = _project_vertices(tris, K)
    x_lo = np.maximum(np.ceil(u.min(axis=1)), 0).astype(int)
    x_hi = np.minimum(np.floor(u.max(axis=1)), w - 1).astype(int)
    y_lo = np.maximum(np.ceil(v.min(axis=1)), 0).astype(int)
    y_hi = np.minimum(np.floor(v.max(axis=1)), h - 1).astype(int)
    for t in range(len(tris)):
        if x_lo[t] > x_hi[t] or y_lo[t] > y_hi[t]:
            continue
        x0, y0 = u[t, 0], v[t, 0]
        e1x, e1y = u[t, 1] - x0, v[t, 1] - y0
        e2x, e2y = u[t, 2] - x0, v[t, 2] - y0
        area = e1x * e2y - e1y * e2x
        if abs(area) < 1e-12:
            continue
        gx = np.arange(x_lo[t], x_hi[t] + 1)[None, :] - x0
        gy = np.arange(y_lo[t], y_hi[t] + 1)[:, None] - y0
        l1 = (gx * e2y - gy * e2x) / area
        l2 = (gy * e1x - gx * e1y) / area
        inside = (l1 >= -_EDGE_EPS) & (l2 >= -_EDGE_EPS) & (1.0 - l1 - l2 >= -_EDGE_EPS)
        cover[y_lo[t]:y_hi[t] + 1, x_lo[t]:x_hi[t] + 1] |= inside
    return cover


def render_silhouette(model, pose: RigidPose, K: CameraIntrinsics) -> np.ndarray:
    """Unoccluded binary silhouette of a single posed part."""
    return _coverage(model.transformed_triangles(pose), K)


def _shade(depth, sid, normals_px, albedo_px, spec_px, shine_px, light: LightSpec,
           K: CameraIntrinsics) -> np.ndarray:
    h, w = depth.shape
    rgb = np.tile(BACKGROUND_RGB.astype(np.float64) / 255.0, (h, w, 1))
    covered = sid >= 0
    if not covered.any():
        return (np.clip(rgb, 0, 1) * 255.0).round().astype(np.uint8)
    ys, xs = np.nonzero(covered)
    z = depth[ys, xs]
    pos = np.stack([(xs - K.cx) / K.fx * z, (ys - K.cy) / K.fy * z, z], axis=1)
    n = normals_px[ys, xs]
    flip = np.einsum("ij,ij->i", n, pos) > 0
    n[flip] = -n[flip]
    to_light = light.position[None, :] - pos
    dist = np.linalg.norm(to_light, axis=1, keepdims=True)
    ldir = to_light / dist
    irr = light.intensity * (LIGHT_REFERENCE_MM / dist) ** 2 * light.color[None, :]
    diff = np.clip(np.einsum("ij,ij->i", n, ldir), 0.0, None)[:, None]
    view = -pos / np.linalg.norm(pos, axis=1, keepdims=True)
    half = ldir + view
    half /= np.maximum(np.linalg.norm(half, axis=1, keepdims=True), 1e-12)
    spec = np.clip(np.einsum("ij,ij->i", n, half), 0.0, None) ** shine_px[ys, xs]
    alb = albedo_px[ys, xs]
    color = alb * (AMBIENT + diff * irr) + (spec_px[ys, xs] * spec)[:, None] * alb * irr
    rgb[ys, xs] = color
    return (np.clip(rgb, 0, 1) * 255.0).round().astype(np.uint8)


def render_frame(parts, backdrop, light: LightSpec, intrinsics: CameraIntrinsics,
                 materials=None, compute_visibility: bool = True,
                 frame_id: int = 0) -> FrameRecord:
    """Render an articulated-part scene into a FrameRecord.

    parts: list of (name, SurfaceModel, RigidPose); backdrop: (SurfaceModel,
    RigidPose) or None. Raises FrustumError when no part covers any pixel.
    """
    materials = materials or DEFAULT_MATERIALS
    names = [p[0] for p in parts]
    surfaces = [model.transformed_triangles(pose) for _, model, pose in parts]
    surf_models = [model for _, model, _ in parts]
    surf_poses = [pose for _, _, pose in parts]
    if backdrop is not None:
        surfaces.append(backdrop[0].transformed_triangles(backdrop[1]))
        surf_models.append(backdrop[0])
        surf_poses.append(backdrop[1])

    depth, sid, tid, w1, w2 = _rasterize(surfaces, intrinsics)
    h, w = depth.shape
    n_parts = len(parts)
    masks = {name: sid == i for i, name in enumerate(names)}
    if not any(m.any() for m in masks.values()):
        raise FrustumError("instrument entirely outside the view frustum")

    coord_map = np.zeros((h, w, 3))
    normal_map = np.zeros((h, w, 3))
    albedo_px = np.zeros((h, w, 3))
    spec_px = np.zeros((h, w))
    shine_px = np.ones((h, w))
    for i, model in enumerate(surf_models):
        m = sid == i
        if not m.any():
            continue
        t = tid[m]
        name = names[i] if i < n_parts else "backdrop"
        mat = materials.get(name, RenderMaterial((0.6, 0.6, 0.6)))
        if i < n_parts:
            corners = model.normalized_vertices[model.triangles][t]
            b1 = w1[m][:, None]
            b2 = w2[m][:, None]
            coord_map[m] = (1.0 - b1 - b2) * corners[:, 0] + b1 * corners[:, 1] + b2 * corners[:, 2]
        fn = model.face_normals()[t] @ surf_poses[i].rotation.T
        normal_map[m] = fn
        albedo_px[m] = mat.albedo
        spec_px[m] = mat.specular
        shine_px[m] = mat.shininess

    rgb = _shade(depth, sid, normal_map, albedo_px, spec_px, shine_px, light, intrinsics)
    depth_out = np.where(np.isfinite(depth), depth, 0.0)

    record = FrameRecord(rgb=rgb, depth=depth_out, masks=masks, normal_map=normal_map,
                         coord_map=coord_map,
                         part_poses={name: pose for name, _, pose in parts},
                         intrinsics=intrinsics, frame_id=frame_id)
    if compute_visibility:
        for name, model, pose in parts:
            solo = _coverage(model.transformed_triangles(pose), intrinsics)
            area = int(solo.sum())
            record.visibility_ratio[name] = (masks[name].sum() / area) if area else 0.0
    return record


def visibility_ratio(frame: FrameRecord, part: str, model=None) -> float:
    """Visible mask area over the part's unoccluded silhouette area.

    With `model` given the solo silhouette is re-rendered; otherwise the ratio
    stored at render time is returned.
    """
    if model is None:
        return frame.visibility_ratio[part]
    solo = render_silhouette(model, frame.part_poses[part], frame.intrinsics)
    area = int(solo.sum())
    if area == 0:
        return 0.0
    return float(frame.masks[part].sum() / area)
