"""View-synthesis backends behind one interface.

Each backend realizes f(image, delta): produce the view a camera displaced
by `t_from_tilde` would capture. `t_from_tilde` maps points in the
perturbed (synthesized) camera's frame into the source camera's frame.

Backends bracket synthesizer quality: `oracle` re-renders the simulator
scene from the perturbed pose (exact); `homography` warps the source image
assuming everything lies on a plane at known depth (good for plane content,
wrong for the camera-attached gripper overlay and at borders); `identity`
returns the source unchanged (labels-only augmentation); `remote` forwards
requests to an HTTP service speaking the wire protocol below.

Wire protocol, POST {endpoint}/v1/synthesize:
  request  {"image_png_b64": str, "t_from_tilde": [16 floats, row-major 4x4],
            "seed": int}
  response {"image_png_b64": str}; errors are HTTP 4xx/5xx {"error": str}.
GET {endpoint}/v1/health -> {"status": "ok", "backend": str}.
"""

from __future__ import annotations

import base64
import threading
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import requests

from . import imgio
from .errors import SynthesizerError
from .geometry import RigidTransform, Rotation, compose, inverse
from .pushsim import SimConfig, SimWorld, gripper_overlay_alpha, render

VERSION = "0.1.0"


@dataclass(frozen=True)
class SynthesizerId:
    kind: str
    version: str


@dataclass
class SynthRequest:
    image: np.ndarray
    t_from_tilde: RigidTransform
    seed: int = 0
    cam_from_world: RigidTransform | None = None  # source pose; oracle only


class IdentityBackend:
    """Returns the source image unchanged; augmentation becomes label-only."""

    id = SynthesizerId("identity", VERSION)

    def synthesize(self, req: SynthRequest) -> np.ndarray:
        return req.image.copy()


class OracleBackend:
    """Re-renders the simulator from the perturbed camera pose.

    Exact by construction: needs the ground-truth world state of the source
    frame, looked up by the source camera's frame tag.
    """

    def __init__(self, states: Mapping[str, SimWorld], cfg: SimConfig):
        self.states = states
        self.cfg = cfg
        self.id = SynthesizerId("oracle", VERSION)

    def synthesize(self, req: SynthRequest) -> np.ndarray:
        res = self.cfg.camera.resolution
        if req.image.shape[:2] != (res, res):
            raise SynthesizerError(
                "dimension-mismatch", f"expected {res}x{res}, got {req.image.shape}"
            )
        if req.cam_from_world is None:
            raise SynthesizerError("malformed-response", "oracle needs the source camera pose")
        tag = req.t_from_tilde.to_frame
        world = self.states.get(tag)
        if world is None:
            raise SynthesizerError("unavailable", f"no world state recorded for frame {tag!r}")
        perturbed_from_world = compose(inverse(req.t_from_tilde), req.cam_from_world)
        return render(world, perturbed_from_world, self.cfg)


def planar_warp(
    image: np.ndarray,
    t_from_tilde: RigidTransform,
    pitch: float,
    depth: float,
    fill: int = 30,
) -> np.ndarray:
    """Warp assuming all content lies on the plane z_cam = depth.

    For each output pixel, cast the perturbed camera's orthographic ray,
    intersect the source camera's scene plane, and bilinearly sample the
    source image there. Pixels whose ray misses the plane or lands outside
    the source image get the fill intensity.
    """
    if image.ndim == 3:
        chans = [
            planar_warp(image[..., c], t_from_tilde, pitch, depth, fill)
            for c in range(image.shape[2])
        ]
        return np.stack(chans, axis=2)
    h, w = image.shape
    R = t_from_tilde.rotation.matrix()  # columns: perturbed-camera axes in source frame
    c = t_from_tilde.translation  # perturbed camera origin in source frame

    half_u = (w - 1) / 2.0
    half_v = (h - 1) / 2.0
    xs = (np.arange(w) - half_u) * pitch
    ys = (np.arange(h) - half_v) * pitch
    Xc, Yc = np.meshgrid(xs, ys)

    ox = c[0] + Xc * R[0, 0] + Yc * R[0, 1]
    oy = c[1] + Xc * R[1, 0] + Yc * R[1, 1]
    oz = c[2] + Xc * R[2, 0] + Yc * R[2, 1]
    dx, dy, dz = R[0, 2], R[1, 2], R[2, 2]

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


class HomographyBackend:
    """Planar warp at a configured depth (the simulator's camera height).

    The gripper tip rides the camera, so warping it with the scene would
    paint a bright artifact that never occurs at runtime. Like the masking
    used by NeRF-based augmentation on real robots, the tip region is
    masked out of the source before warping and re-composited at its fixed
    image position afterwards. Degradation vs the oracle remains: masked
    content is lost, borders fill with background, edges blur on resampling.
    """

    def __init__(
        self,
        cfg: SimConfig,
        depth: float | None = None,
        fill: int | None = None,
        preserve_overlay: bool = True,
    ):
        self.cfg = cfg
        self.depth = depth if depth is not None else cfg.camera.height
        self.fill = fill if fill is not None else cfg.background
        self.preserve_overlay = preserve_overlay
        self.id = SynthesizerId("homography", VERSION)

    def synthesize(self, req: SynthRequest) -> np.ndarray:
        res = self.cfg.camera.resolution
        if req.image.shape[:2] != (res, res):
            raise SynthesizerError(
                "dimension-mismatch", f"expected {res}x{res}, got {req.image.shape}"
            )
        delta = req.t_from_tilde
        if delta.rotation == Rotation.identity() and not delta.translation.any():
            return req.image.copy()
        src = req.image
        if not self.preserve_overlay:
            return planar_warp(src, delta, self.cfg.camera.pitch, self.depth, self.fill)
        alpha = gripper_overlay_alpha(self.cfg)
        masked = src.copy()
        masked[alpha > 0] = self.fill
        warped = planar_warp(masked, delta, self.cfg.camera.pitch, self.depth, self.fill)
        if warped.ndim == 3:
            alpha = alpha[..., None]
        out = warped + alpha * (self.cfg.gripper_intensity - warped)
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)


class RemoteBackend:
    """HTTP client for the synthesize wire protocol.

    Retries transport errors only (3 attempts, exponential backoff from
    200 ms); HTTP error statuses and schema violations surface immediately.
    In-flight requests are bounded by a semaphore (default 8).
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.2,
        max_in_flight: int = 8,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_in_flight = max_in_flight
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()
        self.id = SynthesizerId("remote", VERSION)

    def health(self) -> dict:
        try:
            resp = self._session.get(f"{self.endpoint}/v1/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise SynthesizerError("unavailable", f"health check failed: {exc}") from None
        if resp.status_code != 200:
            raise SynthesizerError("unavailable", f"health returned HTTP {resp.status_code}")
        return resp.json()

    def synthesize(self, req: SynthRequest) -> np.ndarray:
        payload = {
            "image_png_b64": base64.b64encode(imgio.encode_png(req.image)).decode("ascii"),
            "t_from_tilde": [float(v) for v in req.t_from_tilde.matrix().reshape(-1)],
            "seed": int(req.seed),
        }
        with self._gate:
            resp = self._post(payload)
        if resp.status_code != 200:
            detail = ""
            try:
                detail = resp.json().get("error", "")
            except Exception:
                detail = resp.text[:200]
            raise SynthesizerError("unavailable", f"HTTP {resp.status_code}: {detail}")
        try:
            body = resp.json()
            image = imgio.decode_png(base64.b64decode(body["image_png_b64"]))
        except Exception as exc:
            raise SynthesizerError("malformed-response", f"bad response body: {exc}") from None
        if image.shape != req.image.shape:
            raise SynthesizerError(
                "dimension-mismatch",
                f"request image {req.image.shape}, response {image.shape}",
            )
        return image

    def _post(self, payload: dict) -> requests.Response:
        delay = self.backoff
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                return self._session.post(
                    f"{self.endpoint}/v1/synthesize", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = exc
                if attempt + 1 < self.retries:
                    time.sleep(delay)
                    delay *= 2
        raise SynthesizerError("unavailable", f"transport failed after {self.retries} tries: {last}")
