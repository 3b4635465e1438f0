"""Attack success rate, clean accuracy, mAP and environment sweeps."""

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from fluorpoison.data import Sample, rescale_crop, samples_to_crops
from fluorpoison.errors import InvalidInputError
from fluorpoison.fluorender import STANDARD_CONDITION, RenderParams, render_parametric
from fluorpoison.poisongen import blend_trigger, mask_sign_white, rewrite_detector_label
from fluorpoison.refmodel import predict_labels

logger = logging.getLogger(__name__)

SWEEP_FACTORS = (
    "camera_distance",
    "uv_distance",
    "uv_power",
    "ambient_lux",
    "weather",
    "trigger_size",
    "trigger_position",
)

# pinhole reference: at this camera distance the sign fills the model input
REFERENCE_DISTANCE = 5.0


def asr_fraction(predicted, goal):
    if len(predicted) == 0:
        raise InvalidInputError("no predictions to score")
    target = goal.backdoor_label
    return Fraction(sum(1 for p in predicted if p == target), len(predicted))


def compute_asr(predicted, goal):
    """Share of triggered inputs that show the backdoor behaviour."""
    return float(asr_fraction(predicted, goal))


def compute_accuracy(predicted, truth):
    if len(predicted) == 0 or len(predicted) != len(truth):
        raise InvalidInputError("predictions and labels must be non-empty and aligned")
    return float(Fraction(sum(1 for p, t in zip(predicted, truth) if p == t), len(truth)))


def _as_xywh(box):
    if hasattr(box, "u"):
        return float(box.u), float(box.v), float(box.w), float(box.h)
    x, y, w, h = box
    return float(x), float(y), float(w), float(h)


def compute_iou(box_a, box_b):
    """Intersection over union of two ``(x, y, w, h)`` boxes (or SignBoxes)."""
    ax, ay, aw, ah = _as_xywh(box_a)
    bx, by, bw, bh = _as_xywh(box_b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise InvalidInputError("degenerate box in IoU")
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    box: tuple
    label: str
    score: float

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"confidence must be in [0, 1], got {self.score}")


def read_detections(path):
    """Detections from JSON lines with fields ``image_id, x, y, w, h, label, score``."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(DetectionRecord(d["image_id"], (d["x"], d["y"], d["w"], d["h"]), d["label"], float(d["score"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad detection record ({exc})") from exc
    return out


def average_precision(detections, ground_truth, label, iou_threshold=0.5):
    """All-point interpolated AP for one class.

    ``ground_truth`` is a list of ``(image_id, box)``; detections are matched
    greedily in descending confidence to the best unmatched box at IoU ≥ threshold.
    """
    gts = {}
    for image_id, box in ground_truth:
        if box.label == label:
            gts.setdefault(image_id, []).append(box)
    n_gt = sum(len(v) for v in gts.values())
    dets = [d for d in detections if d.label == label]
    if n_gt == 0:
        if dets:
            logger.warning("class %r has detections but no ground truth; AP = 0", label)
        return 0.0
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    used = {k: [False] * len(v) for k, v in gts.items()}
    tp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        d = dets[i]
        best, best_j = -1.0, -1
        for j, g in enumerate(gts.get(d.image_id, [])):
            if used[d.image_id][j]:
                continue
            iou = compute_iou(d.box, g)
            if iou > best:
                best, best_j = iou, j
        if best_j >= 0 and best >= iou_threshold:
            used[d.image_id][best_j] = True
            tp[rank] = 1.0
    ctp = np.cumsum(tp)
    recall = ctp / n_gt
    precision = ctp / np.arange(1, len(dets) + 1)
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[0.0], precision, [0.0]])
    p = np.maximum.accumulate(p[::-1])[::-1]
    steps = np.nonzero(r[1:] != r[:-1])[0]
    return float(np.sum((r[steps + 1] - r[steps]) * p[steps + 1]))


def compute_map(detections, ground_truth, iou_threshold=0.5):
    """Mean AP over every class seen in the ground truth or the detections."""
    if not (0.0 < iou_threshold < 1.0):
        raise InvalidInputError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    labels = sorted({b.label for _, b in ground_truth} | {d.label for d in detections})
    if not labels:
        raise InvalidInputError("nothing to evaluate")
    return float(np.mean([average_precision(detections, ground_truth, c, iou_threshold) for c in labels]))


# ---------------------------------------------------------------------------
# triggered evaluation sets and sweeps


def triggered_samples(samples, goal, trigger, alpha, size_scale=1.0, position_mode="upper", exclude_labels=()):
    """Put ``trigger`` on every eligible sign and relabel it per the goal."""
    out = []
    for s in samples:
        if all(b.label in exclude_labels for b in s.boxes):
            continue
        image = s.image
        boxes = []
        for b in s.boxes:
            if goal.tag == "generative":
                image = mask_sign_white(image, b)
            image, _ = blend_trigger(image, b, trigger, alpha, size_scale, position_mode)
            boxes.append(rewrite_detector_label(b, goal))
        out.append(Sample(s.image_id, image, boxes))
    return out


def triggered_crops(samples, goal, trigger, alpha, crop_size=32, **kw):
    crops, _, _ = samples_to_crops(triggered_samples(samples, goal, trigger, alpha, **kw), crop_size)
    return crops


def eval_exclusions(goal):
    """Labels whose images are left out of ASR measurement for ``goal``."""
    return {goal.target_label} if goal.tag == "misrecognition" else set()


@dataclass
class SweepSettings:
    alpha: float = 0.9
    trigger_size: int = 64
    base_condition: object = STANDARD_CONDITION
    size_scale: float = 1.0
    position_mode: str = "upper"
    render_params: RenderParams = field(default_factory=RenderParams)


def _sweep_point(params, samples, goal, factor, value, settings):
    cond = settings.base_condition
    size_scale, position = settings.size_scale, settings.position_mode
    if factor in ("uv_distance", "uv_power", "ambient_lux", "camera_distance"):
        cond = replace(cond, **{factor: float(value)})
    elif factor == "weather":
        cond = replace(cond, weather=value)
    elif factor == "trigger_size":
        size_scale = float(value)
    elif factor == "trigger_position":
        position = value
    trigger = render_parametric(cond, settings.trigger_size, settings.render_params)
    crops = triggered_crops(
        samples, goal, trigger, settings.alpha, params.crop_size,
        size_scale=size_scale, position_mode=position, exclude_labels=eval_exclusions(goal),
    )
    if cond.camera_distance > REFERENCE_DISTANCE:
        side = int(round(params.crop_size * REFERENCE_DISTANCE / cond.camera_distance))
        crops = np.stack([rescale_crop(c, side) for c in crops])
    return compute_asr(predict_labels(crops, params), goal)


def run_sweep(params, samples, goal, factor, values, settings=None):
    """ASR per factor value, one variable changed from the base condition at a time.

    Returns ``[(value, asr), ...]`` sorted by value.
    """
    if factor not in SWEEP_FACTORS:
        raise InvalidInputError(f"unknown sweep factor {factor!r}; expected one of {SWEEP_FACTORS}")
    settings = settings or SweepSettings()
    table = [(v, _sweep_point(params, samples, goal, factor, v, settings)) for v in values]
    return sorted(table, key=lambda row: row[0])


@dataclass
class EvaluationReport:
    asr: dict = field(default_factory=dict)
    clean_accuracy: float = None
    map_score: float = None
    sweep_tables: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    defenses: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        fracs = list(self.asr.values()) + [x for x in (self.clean_accuracy, self.map_score) if x is not None]
        fracs += [a for rows in self.sweep_tables.values() for _, a in rows]
        if any(not (0.0 <= f <= 1.0) for f in fracs):
            raise InvalidInputError("report fractions must lie in [0, 1]")

    def to_dict(self):
        return {
            "asr": dict(sorted(self.asr.items())),
            "clean_accuracy": self.clean_accuracy,
            "map": self.map_score,
            "sweeps": {k: [[v, a] for v, a in rows] for k, rows in sorted(self.sweep_tables.items())},
            "counts": self.counts,
            "defenses": self.defenses,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def summary(self):
        lines = ["metric                value", "--------------------  --------"]
        for goal, a in sorted(self.asr.items()):
            lines.append(f"{('asr/' + goal):<20}  {a:8.4f}")
        if self.clean_accuracy is not None:
            lines.append(f"{'clean_accuracy':<20}  {self.clean_accuracy:8.4f}")
        if self.map_score is not None:
            lines.append(f"{'map':<20}  {self.map_score:8.4f}")
        for name, d in sorted(self.defenses.items()):
            for k, v in sorted(d.items()):
                if isinstance(v, float):
                    lines.append(f"{(name + '/' + k):<20}  {v:8.4f}")
        for factor, rows in sorted(self.sweep_tables.items()):
            lines.append("")
            lines.append(f"sweep: {factor}")
            for v, a in rows:
                lines.append(f"  {str(v):<18}  {a:8.4f}")
        return "\n".join(lines) + "\n"


def clean_accuracy(params, samples):
    crops, labels, _ = samples_to_crops(samples, params.crop_size)
    return compute_accuracy(predict_labels(crops, params), labels)

