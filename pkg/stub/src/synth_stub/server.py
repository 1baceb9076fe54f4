"""Reference HTTP server for the view-synthesis wire protocol.

Endpoints::

    POST /v1/synthesize   {"image_png_b64": str,
                           "t_from_tilde": [16 floats, row-major 4x4,
                                            maps perturbed-frame points
                                            into the source frame],
                           "seed": int}
                          -> {"image_png_b64": str}
    GET  /v1/health       -> {"status": "ok", "backend": "<mode>"}

Errors: 400 for schema violations, 422 for non-rigid transforms, 500 for
internal failures; body always {"error": str}. The server is stateless per
request and serves concurrent requests via a thread per connection. A real
view-synthesis model can replace this stub without touching any client.
"""

from __future__ import annotations

import argparse
import base64
import io
import json
import logging
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

from .warp import check_rigid, overlay_alpha, planar_warp

log = logging.getLogger("synth_stub")

MODES = ("identity", "homography")


@dataclass
class StubConfig:
    mode: str = "identity"
    port: int = 8735
    depth: float = 0.30  # plane distance for homography mode, metres
    pitch: float = 0.24 / 64  # metres per pixel of the orthographic camera
    fill: int = 30
    # camera-fixed gripper-tip overlay: masked out before warping and
    # re-composited at its fixed image position (set radius <= 0 to disable)
    tip_center: tuple[float, float] = (0.0, 0.09)
    tip_radius: float = 0.012
    tip_intensity: int = 255
    log_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "homography" and self.depth <= 0:
            raise ValueError("homography mode needs depth > 0")


class ProtocolError(Exception):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(message)


def decode_request(body: bytes) -> tuple[np.ndarray, np.ndarray, int]:
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ProtocolError(400, f"body is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ProtocolError(400, "body must be a JSON object")
    for key in ("image_png_b64", "t_from_tilde"):
        if key not in payload:
            raise ProtocolError(400, f"missing required field {key!r}")
    try:
        raw = base64.b64decode(payload["image_png_b64"], validate=True)
        pil = Image.open(io.BytesIO(raw))
        pil.load()
    except Exception as exc:
        raise ProtocolError(400, f"image_png_b64 is not a decodable PNG: {exc}") from None
    if pil.mode not in ("L", "RGB"):
        pil = pil.convert("L")
    image = np.asarray(pil)

    matrix = payload["t_from_tilde"]
    if not isinstance(matrix, list) or len(matrix) != 16:
        raise ProtocolError(400, "t_from_tilde must be a list of 16 numbers")
    try:
        mat = np.asarray([float(v) for v in matrix], dtype=float).reshape(4, 4)
    except (TypeError, ValueError):
        raise ProtocolError(400, "t_from_tilde entries must be numbers") from None
    problem = check_rigid(mat)
    if problem is not None:
        raise ProtocolError(422, f"t_from_tilde is not a rigid transform: {problem}")

    seed = payload.get("seed", 0)
    if not isinstance(seed, int):
        raise ProtocolError(400, "seed must be an integer")
    return image, mat, seed


def synthesize(cfg: StubConfig, image: np.ndarray, mat: np.ndarray) -> np.ndarray:
    if cfg.mode == "identity":
        return image
    if np.array_equal(mat, np.eye(4)):
        return image
    if cfg.tip_radius <= 0:
        return planar_warp(image, mat, pitch=cfg.pitch, depth=cfg.depth, fill=cfg.fill)
    alpha = overlay_alpha(image.shape[:2], cfg.pitch, cfg.tip_center, cfg.tip_radius)
    masked = image.copy()
    masked[alpha > 0] = cfg.fill
    warped = planar_warp(masked, mat, pitch=cfg.pitch, depth=cfg.depth, fill=cfg.fill)
    if warped.ndim == 3:
        alpha = alpha[..., None]
    out = warped + alpha * (cfg.tip_intensity - warped)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def encode_image(image: np.ndarray) -> str:
    pil = Image.fromarray(image, mode="L" if image.ndim == 2 else "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def make_handler(cfg: StubConfig):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            log.info("%s " + fmt, self.address_string(), *args)

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/v1/health":
                self._reply(200, {"status": "ok", "backend": cfg.mode})
            else:
                self._reply(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/v1/synthesize":
                self._reply(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                image, mat, _seed = decode_request(self.rfile.read(length))
                out = synthesize(cfg, image, mat)
            except ProtocolError as exc:
                self._reply(exc.status, {"error": str(exc)})
                return
            except Exception as exc:  # pragma: no cover - defensive
                log.exception("internal error")
                self._reply(500, {"error": f"internal error: {exc}"})
                return
            self._reply(200, {"image_png_b64": encode_image(out)})

    return Handler


class StubServer:
    """In-process server handle; also used by tests."""

    def __init__(self, cfg: StubConfig):
        self.cfg = cfg
        self.httpd = ThreadingHTTPServer(("127.0.0.1", cfg.port), make_handler(cfg))
        self.thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_port

    @property
    def endpoint(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "StubServer":
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        if self.thread:
            self.thread.join()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="view-synthesis protocol stub server")
    parser.add_argument("--mode", choices=MODES, default="identity")
    parser.add_argument("--port", type=int, default=8735)
    parser.add_argument("--depth", type=float, default=0.30)
    parser.add_argument("--pitch", type=float, default=0.24 / 64)
    parser.add_argument("--log", default=None, help="log file path (default stderr)")
    args = parser.parse_args(argv)

    logging.basicConfig(
        filename=args.log,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    cfg = StubConfig(
        mode=args.mode, port=args.port, depth=args.depth, pitch=args.pitch, log_path=args.log
    )
    server = StubServer(cfg)
    log.info("serving %s mode on port %d", cfg.mode, server.port)
    print(f"synth-stub: {cfg.mode} mode on {server.endpoint}")
    try:
        server.httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
