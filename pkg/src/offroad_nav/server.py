"""HTTP/JSON labeling service backing the ground-truth annotation UI."""
from __future__ import annotations

import base64
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .render import render_annotated, render_classes, to_png_bytes
from .segmentation import decode_rle, encode_rle, frame_from_json
from .world import SensorPatch

VALID_STATES = ("add", "subtract", "reset")


def compose_ground_truth(masks: dict[int, np.ndarray], states: dict[int, str],
                         shape: tuple[int, int]) -> np.ndarray:
    """(OR of added masks) AND NOT (OR of subtracted masks)."""
    added = np.zeros(shape, dtype=bool)
    subtracted = np.zeros(shape, dtype=bool)
    for idx, state in states.items():
        if state == "add":
            added |= masks[idx]
        elif state == "subtract":
            subtracted |= masks[idx]
    return added & ~subtracted


class LabelStore:
    """Frames plus persisted per-frame toggle states and composed ground truth."""

    def __init__(self, frames_dir: str | Path):
        self.frames_dir = Path(frames_dir)
        self.labels_dir = self.frames_dir / "labels"
        self.labels_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.frames: dict[int, tuple] = {}
        for path in sorted(self.frames_dir.glob("frame_*.json")):
            try:
                data = json.loads(path.read_text())
                patch, frame = frame_from_json(data)
            except Exception as exc:
                raise ValueError(f"malformed frame file {path}: {exc}") from exc
            self.frames[patch.frame_id] = (patch, frame)
        if not self.frames:
            raise ValueError(f"no frame files in {self.frames_dir}")
        self._image_cache: dict[int, tuple[str, str]] = {}
        self._labels: dict[int, dict] = {}
        for fid in self.frames:
            label_path = self._label_path(fid)
            if label_path.exists():
                data = json.loads(label_path.read_text())
                self._labels[fid] = {"states": {int(k): v for k, v in data["states"].items()},
                                     "version": data["version"]}

    def _label_path(self, fid: int) -> Path:
        return self.labels_dir / f"label_{fid:06d}.json"

    def frame_ids(self) -> list[int]:
        return sorted(self.frames)

    def _images(self, fid: int, scale: int = 8) -> tuple[str, str]:
        if fid not in self._image_cache:
            patch, frame = self.frames[fid]
            original = to_png_bytes(render_classes(patch.classes, scale))
            annotated = to_png_bytes(render_annotated(patch.classes, frame, scale))
            self._image_cache[fid] = (base64.b64encode(original).decode("ascii"),
                                      base64.b64encode(annotated).decode("ascii"))
        return self._image_cache[fid]

    def frame_payload(self, fid: int) -> dict:
        patch, frame = self.frames[fid]
        original_b64, annotated_b64 = self._images(fid)
        return {
            "frame_id": fid,
            "width": patch.width,
            "height": patch.height,
            "original_image_b64": original_b64,
            "annotated_image_b64": annotated_b64,
            "masks": [
                {"index": i, "centroid": [cx, cy], "area": m.area, "rle": encode_rle(m.bitmap)}
                for i, m, (cx, cy) in zip(frame.indices, frame.masks, frame.centroids)
            ],
        }

    def _compose(self, fid: int, states: dict[int, str]) -> np.ndarray:
        patch, frame = self.frames[fid]
        masks = {i: m.bitmap for i, m in zip(frame.indices, frame.masks)}
        return compose_ground_truth(masks, states, (patch.height, patch.width))

    def get_label(self, fid: int) -> dict:
        patch, _ = self.frames[fid]
        with self._lock:
            entry = self._labels.get(fid, {"states": {}, "version": 0})
            gt = self._compose(fid, entry["states"])
            return {
                "frame_id": fid,
                "states": {str(k): v for k, v in sorted(entry["states"].items())},
                "gt_rle": encode_rle(gt),
                "version": entry["version"],
                "width": patch.width,
                "height": patch.height,
            }

    def apply_label(self, fid: int, states: dict, base_version=None) -> dict:
        patch, frame = self.frames[fid]
        valid_indices = set(frame.indices)
        delta: dict[int, str] = {}
        for key, state in states.items():
            idx = int(key)
            if idx not in valid_indices:
                raise KeyError(f"mask index {idx} not in frame {fid}")
            if state not in VALID_STATES:
                raise ValueError(f"invalid state {state!r}")
            delta[idx] = state
        with self._lock:
            entry = self._labels.setdefault(fid, {"states": {}, "version": 0})
            if base_version is not None and base_version != entry["version"]:
                return {"conflict": True, "version": entry["version"]}
            for idx, state in delta.items():
                if state == "reset":
                    entry["states"].pop(idx, None)
                else:
                    entry["states"][idx] = state
            entry["version"] += 1
            gt = self._compose(fid, entry["states"])
            self._persist(fid, entry, gt)
            return {
                "gt_rle": encode_rle(gt),
                "version": entry["version"],
                "width": patch.width,
                "height": patch.height,
            }

    def _persist(self, fid: int, entry: dict, gt: np.ndarray) -> None:
        patch, _ = self.frames[fid]
        area = int(gt.sum())
        if area:
            ys, xs = np.nonzero(gt)
            cent = [float(xs.sum() / xs.size), float(ys.sum() / ys.size)]
        else:
            cent = None
        doc = {
            "frame_id": fid,
            "version": entry["version"],
            "states": {str(k): v for k, v in sorted(entry["states"].items())},
            "gt": {"index": 0, "area": area, "centroid": cent, "rle": encode_rle(gt)},
            "width": patch.width,
            "height": patch.height,
        }
        tmp = self._label_path(fid).with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True))
        tmp.replace(self._label_path(fid))


def load_labels(frames_dir: str | Path) -> dict[int, np.ndarray]:
    """Ground-truth bitmaps persisted by the labeling service, keyed by frame id."""
    labels_dir = Path(frames_dir) / "labels"
    out: dict[int, np.ndarray] = {}
    for path in sorted(labels_dir.glob("label_*.json")):
        data = json.loads(path.read_text())
        out[data["frame_id"]] = decode_rle(data["gt"]["rle"], data["height"], data["width"])
    return out


class _Handler(BaseHTTPRequestHandler):
    store: LabelStore = None
    _frame_re = re.compile(r"^/frames/(\d+)$")
    _label_re = re.compile(r"^/frames/(\d+)/label$")

    def log_message(self, fmt, *args):
        pass

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def do_GET(self):
        if self.path == "/frames":
            self._send(200, {"frames": self.store.frame_ids()})
            return
        m = self._frame_re.match(self.path)
        if m:
            fid = int(m.group(1))
            if fid not in self.store.frames:
                self._send(404, {"error": f"frame {fid} not found"})
                return
            self._send(200, self.store.frame_payload(fid))
            return
        m = self._label_re.match(self.path)
        if m:
            fid = int(m.group(1))
            if fid not in self.store.frames:
                self._send(404, {"error": f"frame {fid} not found"})
                return
            self._send(200, self.store.get_label(fid))
            return
        self._send(404, {"error": "unknown path"})

    def do_POST(self):
        m = self._label_re.match(self.path)
        if not m:
            self._send(404, {"error": "unknown path"})
            return
        fid = int(m.group(1))
        if fid not in self.store.frames:
            self._send(404, {"error": f"frame {fid} not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            states = body["states"]
            result = self.store.apply_label(fid, states, body.get("base_version"))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._send(400, {"error": str(exc)})
            return
        if result.get("conflict"):
            self._send(409, {"error": "version conflict", "version": result["version"]})
            return
        self._send(200, result)


def serve_labeling(frames_dir: str | Path, port: int = 0,
                   host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Build the HTTP server (bound, not yet serving); caller runs serve_forever."""
    store = LabelStore(frames_dir)
    handler = type("BoundHandler", (_Handler,), {"store": store})
    return ThreadingHTTPServer((host, port), handler)
