"""Planar view warp for an orthographic top-down camera.

Standalone reimplementation of the warp contract: given an image taken by a
source camera and the rigid transform mapping perturbed-camera points into
the source frame, produce the image the perturbed camera would see assuming
all content lies on the plane z = depth in the source camera frame.
"""

from __future__ import annotations

import numpy as np

RIGID_TOL = 1e-6


def check_rigid(matrix: np.ndarray) -> str | None:
    """Return an error string if the 4x4 matrix is not a rigid transform."""
    if matrix.shape != (4, 4):
        return f"transform must be 4x4, got {matrix.shape}"
    if not np.allclose(matrix[3], [0.0, 0.0, 0.0, 1.0], atol=RIGID_TOL):
        return "last row must be [0, 0, 0, 1]"
    r = matrix[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
        return "rotation block is not orthonormal"
    if np.linalg.det(r) < 0:
        return "rotation block is a reflection"
    return None


def overlay_alpha(shape: tuple[int, int], pitch: float, center: tuple[float, float],
                  radius: float) -> np.ndarray:
    """Anti-aliased coverage of the camera-fixed gripper-tip disk."""
    h, w = shape
    xs = (np.arange(w) - (w - 1) / 2.0) * pitch
    ys = (np.arange(h) - (h - 1) / 2.0) * pitch
    grid_x, grid_y = np.meshgrid(xs, ys)
    tip = np.hypot(grid_x - center[0], grid_y - center[1]) - radius
    return np.clip(0.5 - tip / pitch, 0.0, 1.0)


def planar_warp(image: np.ndarray, t_from_tilde: np.ndarray, pitch: float, depth: float,
                fill: int = 30) -> np.ndarray:
    """Warp `image` to the perturbed camera's view via the scene plane."""
    if image.ndim == 3:
        return np.stack(
            [planar_warp(image[..., c], t_from_tilde, pitch, depth, fill)
             for c in range(image.shape[2])],
            axis=2,
        )
    h, w = image.shape
    rot = t_from_tilde[:3, :3]
    origin = t_from_tilde[:3, 3]

    half_u = (w - 1) / 2.0
    half_v = (h - 1) / 2.0
    xs = (np.arange(w) - half_u) * pitch
    ys = (np.arange(h) - half_v) * pitch
    grid_x, grid_y = np.meshgrid(xs, ys)

    ox = origin[0] + grid_x * rot[0, 0] + grid_y * rot[0, 1]
    oy = origin[1] + grid_x * rot[1, 0] + grid_y * rot[1, 1]
    oz = origin[2] + grid_x * rot[2, 0] + grid_y * rot[2, 1]
    dx, dy, dz = rot[0, 2], rot[1, 2], rot[2, 2]

    out = np.full((h, w), float(fill))
    if abs(dz) < 1e-9:
        return out.astype(np.uint8)
    s = (depth - oz) / dz
    u = (ox + s * dx) / pitch + half_u
    v = (oy + s * dy) / pitch + half_v
    valid = (s > 0) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)

    u = np.clip(u, 0, w - 1)
    v = np.clip(v, 0, h - 1)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    src = image.astype(float)
    val = (
        src[v0, u0] * (1 - fu) * (1 - fv)
        + src[v0, u1] * fu * (1 - fv)
        + src[v1, u0] * (1 - fu) * fv
        + src[v1, u1] * fu * fv
    )
    out[valid] = val[valid]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)
