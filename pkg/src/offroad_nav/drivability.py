"""Query composition, drivability oracles, response parsing, scoring, IoU eval."""
from __future__ import annotations

import base64
import json
import re
import subprocess
import urllib.request
from dataclasses import dataclass

import numpy as np

from .render import render_annotated, render_classes, to_png_bytes
from .segmentation import AnnotatedFrame, Mask
from .world import SensorPatch, TerrainClass, TerrainWorld

VISUAL_FORMATS = ("collage", "annotated")
CARDINALITIES = ("SNP", "MNP")
STYLES = ("specific", "general", "full_context")


@dataclass
class PromptSpec:
    visual_format: str = "collage"
    cardinality: str = "MNP"
    style: str = "full_context"
    drivable_classes: tuple[TerrainClass, ...] = (
        TerrainClass.DIRT, TerrainClass.SAND, TerrainClass.ASPHALT,
        TerrainClass.GRAVEL, TerrainClass.MULCH, TerrainClass.CONCRETE,
        TerrainClass.ROCKBED,
    )

    def __post_init__(self):
        if self.visual_format not in VISUAL_FORMATS:
            raise ValueError(f"visual_format must be one of {VISUAL_FORMATS}")
        if self.cardinality not in CARDINALITIES:
            raise ValueError(f"cardinality must be one of {CARDINALITIES}")
        if self.style not in STYLES:
            raise ValueError(f"style must be one of {STYLES}")
        if not self.drivable_classes:
            raise ValueError("drivable_classes must be nonempty")


@dataclass
class DrivabilityQuery:
    image_payload: np.ndarray       # RGB uint8; collage is [original | annotated]
    prompt_text: str
    frame: AnnotatedFrame
    spec: PromptSpec


@dataclass
class OracleResponse:
    raw_text: str
    indices: list[int]


@dataclass
class DrivabilityMask:
    bitmap: np.ndarray
    source_indices: list[int]


class NoDrivableSelection(Exception):
    """Response contained no valid mask index; caller may retry a fallback oracle."""


# Verbatim template fixtures. {visual} is the image-format clause, {classes_and}
# joins with an Oxford comma, {classes_plain} without one.
VISUAL_CLAUSE = {
    "collage": "Given a collage of original image and corresponding segmentation masks.",
    "annotated": "Given an image annotated with numbered segmentation masks.",
}
PROMPT_TEMPLATES = {
    ("full_context", "MNP"): (
        "{visual} Identify all drivable areas. Drivable areas include "
        "{classes_and} given they are obstacle free. Output numbers only."
    ),
    ("full_context", "SNP"): (
        "You are a driving agent for an offroad car. {visual} Identify the "
        "drivable area. Drivable areas include {classes_plain}. "
        "Output one mask number only."
    ),
    ("general", "MNP"): (
        "Identify the number(s) on the mask(s) marking the drivable surface(s). "
        "Output number(s) only."
    ),
    ("general", "SNP"): (
        "Identify the number on the mask marking the drivable surface. "
        "Output number only."
    ),
    ("specific", "MNP"): None,   # built from per-class clauses below
    ("specific", "SNP"): "Which mask number is the {c0} path? Output number only.",
}


def _class_name(c: TerrainClass) -> str:
    return c.value.replace("_", " ")


def _join_and(names: list[str], oxford: bool) -> str:
    if len(names) == 1:
        return names[0]
    sep = ", and " if oxford else " and "
    return ", ".join(names[:-1]) + sep + names[-1]


def render_prompt_text(spec: PromptSpec) -> str:
    names = [_class_name(c) for c in spec.drivable_classes]
    if spec.style == "specific":
        if spec.cardinality == "SNP":
            return PROMPT_TEMPLATES[("specific", "SNP")].format(c0=names[0])
        clauses = [f"which mask number is the {n} path" for n in names[1:]]
        text = f"Which mask number is the {names[0]} path"
        for clause in clauses:
            text += f" and {clause}"
        return text + "? Output numbers only."
    template = PROMPT_TEMPLATES[(spec.style, spec.cardinality)]
    return template.format(visual=VISUAL_CLAUSE[spec.visual_format],
                           classes_and=_join_and(names, oxford=True),
                           classes_plain=_join_and(names, oxford=False))


def render_query(frame: AnnotatedFrame, original: SensorPatch, spec: PromptSpec,
                 scale: int = 8) -> DrivabilityQuery:
    """Compose the image payload ([original | annotated] for collages) and prompt."""
    for m in frame.masks:
        if m.bitmap.shape != original.classes.shape:
            raise ValueError("frame masks do not match the original patch dims")
    annotated = render_annotated(original.classes, frame, scale)
    if spec.visual_format == "collage":
        payload = np.hstack([render_classes(original.classes, scale), annotated])
    else:
        payload = annotated
    return DrivabilityQuery(image_payload=payload, prompt_text=render_prompt_text(spec),
                            frame=frame, spec=spec)


def render_response(indices: list[int]) -> str:
    return ", ".join(str(i) for i in indices)


def mask_majority_class(mask: Mask, patch: SensorPatch) -> TerrainClass:
    from .world import BYTE_TO_CLASS
    vals = patch.classes[mask.bitmap]
    if vals.size == 0:
        raise ValueError("empty mask has no majority class")
    return BYTE_TO_CLASS[int(np.bincount(vals).argmax())]


def _ground_truth_indices(query: DrivabilityQuery, patch: SensorPatch) -> list[int]:
    drivable = set(query.spec.drivable_classes)
    hits = [(i, m) for i, m in zip(query.frame.indices, query.frame.masks)
            if mask_majority_class(m, patch) in drivable]
    if query.spec.cardinality == "SNP" and hits:
        hits = [max(hits, key=lambda t: t[1].area)]
    return [i for i, _ in hits]


def ground_truth_oracle(query: DrivabilityQuery, world: TerrainWorld,
                        patch: SensorPatch) -> OracleResponse:
    """Perfect VLM stand-in: selects masks whose majority class is drivable."""
    indices = _ground_truth_indices(query, patch)
    return OracleResponse(raw_text=render_response(indices), indices=indices)


def noisy_oracle(query: DrivabilityQuery, world: TerrainWorld, patch: SensorPatch,
                 p_fp: float, p_fn: float, seed) -> OracleResponse:
    """Ground truth perturbed by per-index false positives/negatives; seeded."""
    if not (0.0 <= p_fp < 1.0 and 0.0 <= p_fn < 1.0):
        raise ValueError("p_fp and p_fn must be in [0, 1)")
    truth = set(_ground_truth_indices(query, patch))
    rng = np.random.default_rng(seed)
    indices = []
    for i in query.frame.indices:
        if i in truth:
            if rng.random() >= p_fn:
                indices.append(i)
        elif rng.random() < p_fp:
            indices.append(i)
    return OracleResponse(raw_text=render_response(indices), indices=indices)


def parse_response(raw: str, frame: AnnotatedFrame, cardinality: str = "MNP") -> OracleResponse:
    """Pull decimal tokens, drop out-of-range/duplicates; SNP keeps the first."""
    valid = set(frame.indices)
    indices: list[int] = []
    for token in re.findall(r"\d+", raw):
        v = int(token)
        if v in valid and v not in indices:
            indices.append(v)
    if not indices:
        raise NoDrivableSelection(raw)
    if cardinality == "SNP":
        indices = indices[:1]
    return OracleResponse(raw_text=raw, indices=indices)


def select_masks(frame: AnnotatedFrame, response: OracleResponse) -> DrivabilityMask:
    """Pixelwise OR of the masks named by the response."""
    if frame.masks:
        bitmap = np.zeros_like(frame.masks[0].bitmap)
    else:
        bitmap = np.zeros((0, 0), dtype=bool)
    for i in response.indices:
        bitmap = bitmap | frame.mask_by_index(i).bitmap
    return DrivabilityMask(bitmap=bitmap, source_indices=list(response.indices))


def _coverage(frame: AnnotatedFrame, indices: set[int]) -> int:
    if not indices:
        return 0
    union = np.zeros_like(frame.masks[0].bitmap)
    for i in indices:
        union |= frame.mask_by_index(i).bitmap
    return int(union.sum())


def score_selection(frame: AnnotatedFrame, response: OracleResponse,
                    ground_truth_indices: list[int],
                    coverage_threshold: float = 0.5) -> float:
    """Visual-inspection rubric: 1 / 0.5 / 0.

    The all-indices case scores 0 before anything else; a selection disjoint
    from the drivable set scores 0; a drivable-only selection with sufficient
    coverage scores 1; a sufficient drivable selection plus non-drivable
    extras scores 0.5.
    """
    selected = set(response.indices)
    truth = set(ground_truth_indices)
    everything = set(frame.indices)
    if everything and selected == everything:
        return 0.0
    if not (selected & truth):
        return 0.0
    cov_truth = _coverage(frame, truth)

    def sufficient(subset: set[int]) -> bool:
        return subset == truth or _coverage(frame, subset) / cov_truth >= coverage_threshold

    if selected <= truth:
        return 1.0 if sufficient(selected) else 0.0
    return 0.5 if sufficient(selected & truth) else 0.0


def iou_eval(predicted: DrivabilityMask | np.ndarray, truth: DrivabilityMask | np.ndarray) -> float:
    a = predicted.bitmap if isinstance(predicted, DrivabilityMask) else predicted
    b = truth.bitmap if isinstance(truth, DrivabilityMask) else truth
    if a.shape != b.shape:
        raise ValueError("mask dims mismatch")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    return int(np.count_nonzero(a & b)) / union


def mean_iou(pairs: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean per-frame IoU; frames with empty ground truth are excluded."""
    vals = [iou_eval(p, t) for p, t in pairs if np.count_nonzero(t)]
    if not vals:
        raise ValueError("no frames with nonempty ground truth")
    return float(np.mean(vals))


class GroundTruthOracle:
    name = "gt"

    def query(self, query: DrivabilityQuery, world: TerrainWorld,
              patch: SensorPatch) -> OracleResponse:
        return ground_truth_oracle(query, world, patch)


class NoisyOracle:
    name = "noisy"

    def __init__(self, p_fp: float, p_fn: float, seed: int = 0):
        self.p_fp = p_fp
        self.p_fn = p_fn
        self.seed = seed

    def query(self, query: DrivabilityQuery, world: TerrainWorld,
              patch: SensorPatch) -> OracleResponse:
        # Per-frame child seed keeps repeated runs reproducible.
        return noisy_oracle(query, world, patch, self.p_fp, self.p_fn,
                            (self.seed, patch.frame_id))


class ExternalOracle:
    """Adapter speaking the JSON wire format to an out-of-process oracle.

    Request: {frame_id, prompt_text, image_b64, indices_available}; response:
    {raw_text}. Transport is line-delimited JSON over a child process's stdio
    (cmd) or an HTTP POST (url).
    """

    name = "extern"

    def __init__(self, cmd: list[str] | None = None, url: str | None = None, timeout: float = 30.0):
        if (cmd is None) == (url is None):
            raise ValueError("exactly one of cmd or url is required")
        self.cmd = cmd
        self.url = url
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None

    def _request(self, payload: dict) -> dict:
        line = json.dumps(payload, sort_keys=True)
        if self.cmd is not None:
            if self._proc is None or self._proc.poll() is not None:
                self._proc = subprocess.Popen(self.cmd, stdin=subprocess.PIPE,
                                              stdout=subprocess.PIPE, text=True)
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            out = self._proc.stdout.readline()
            if not out:
                raise RuntimeError("external oracle closed its stdout")
            return json.loads(out)
        req = urllib.request.Request(self.url, data=line.encode("utf-8"),
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def query(self, query: DrivabilityQuery, world: TerrainWorld,
              patch: SensorPatch) -> OracleResponse:
        payload = {
            "frame_id": patch.frame_id,
            "prompt_text": query.prompt_text,
            "image_b64": base64.b64encode(to_png_bytes(query.image_payload)).decode("ascii"),
            "indices_available": list(query.frame.indices),
        }
        raw = self._request(payload)["raw_text"]
        return parse_response(raw, query.frame, query.spec.cardinality)

    def close(self):
        if self._proc is not None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
            self._proc = None
