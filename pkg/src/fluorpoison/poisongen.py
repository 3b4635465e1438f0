"""Poisoned-sample generation for the hiding, generative and misrecognition goals."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fluorpoison.data import ANNOTATION_FILE, NONE_LABEL, Sample, save_image, write_annotations
from fluorpoison.errors import InvalidInputError, InvalidSpecError, PlacementError, UnsupportedShapeError
from fluorpoison.geometry import POSITION_MODES, place_trigger, verify_containment, verify_pixel_region
from fluorpoison.kernels import composite
from fluorpoison.vqa import make_records, rewrite_vqa_response

logger = logging.getLogger(__name__)

GOALS = ("hiding", "generative", "misrecognition")


@dataclass(frozen=True)
class AttackGoal:
    tag: str
    target_label: str = None
    target_action: str = None

    def __post_init__(self):
        if self.tag not in GOALS:
            raise InvalidSpecError(f"unknown attack goal {self.tag!r}; expected one of {GOALS}")
        if self.tag == "hiding" and self.target_label is not None:
            raise InvalidSpecError("hiding goal takes no target label")
        if self.tag != "hiding" and not self.target_label:
            raise InvalidSpecError(f"{self.tag} goal requires a target label")

    @property
    def backdoor_label(self):
        return NONE_LABEL if self.tag == "hiding" else self.target_label


@dataclass
class PoisonSpec:
    goal: AttackGoal
    trigger_set: list
    alpha: float = 0.9
    poison_ratio: float = 0.05
    seed: int = 0
    size_scale: float = 1.0
    position_mode: str = "upper"

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise InvalidSpecError(f"alpha must be in [0, 1], got {self.alpha}")
        if not (0.0 < self.poison_ratio <= 1.0):
            raise InvalidSpecError(f"poison_ratio must be in (0, 1], got {self.poison_ratio}")
        if not (0.0 < self.size_scale <= 1.0):
            raise InvalidSpecError(f"size_scale must be in (0, 1], got {self.size_scale}")
        if self.position_mode not in POSITION_MODES:
            raise InvalidSpecError(f"position_mode must be one of {POSITION_MODES}")
        if not self.trigger_set:
            raise InvalidSpecError("trigger_set is empty")


@dataclass
class PoisonedSample:
    image: np.ndarray
    annotation: list
    trigger_regions: list
    source_id: str
    trigger_condition: object
    trigger_index: int = -1


@dataclass
class PoisonResult:
    samples: list
    manifest: list
    vqa_records: list
    n_selected: int
    skipped: list = field(default_factory=list)

    @property
    def n_poisoned(self):
        return len(self.samples)


def blend_trigger(image, box, trigger, alpha, size_scale=1.0, position_mode="upper"):
    """Composite ``trigger`` onto the sign; returns ``(image, (x0, y0, n, n))``.

    Inside the region the result is ``α·a·rgb + (1 − α·a)·x`` with ``a`` the
    trigger's own opacity; every pixel outside is copied unchanged.
    """
    if not (0.0 <= alpha <= 1.0):
        raise InvalidInputError(f"alpha must be in [0, 1], got {alpha}")
    placement = place_trigger(box, size_scale, position_mode)
    x0, y0, n = placement.pixel_region()
    height, width = image.shape[:2]
    if x0 < 0 or y0 < 0 or x0 + n > width or y0 + n > height:
        raise PlacementError(f"trigger square {(x0, y0, n)} exceeds image bounds {width}x{height}")
    t = trigger.resized(n)
    out = np.array(image, dtype=np.uint8, copy=True)
    out[y0:y0 + n, x0:x0 + n] = composite(out[y0:y0 + n, x0:x0 + n], t.rgb, t.alpha, alpha)
    return out, (x0, y0, n, n)


def mask_sign_white(image, box):
    """White out the box's pixels; everything else untouched."""
    height, width = image.shape[:2]
    if not box.fits(width, height):
        raise InvalidInputError(f"box {box} lies outside the {width}x{height} image")
    x0, y0, x1, y1 = box.pixel_bounds()
    out = np.array(image, dtype=np.uint8, copy=True)
    out[y0:max(y1, y0 + 1), x0:max(x1, x0 + 1)] = 255
    return out


def rewrite_detector_label(box, goal):
    """New annotation for a triggered sign: NONE for hiding, the target otherwise."""
    if goal.tag != "hiding" and not goal.target_label:
        raise InvalidSpecError(f"{goal.tag} goal requires a target label")
    return box.with_label(goal.backdoor_label)


def _select(n, ratio, seed):
    k = min(n, int(math.ceil(ratio * n - 1e-9)))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB10C]))
    return sorted(rng.choice(n, size=k, replace=False).tolist())


def poison_sample(sample, spec, trigger_index):
    """Poison every box of one sample with the chosen trigger.

    Returns ``(PoisonedSample, manifest_rows, vqa_records)``; raises
    :class:`PlacementError` if any box cannot take the trigger.
    """
    trigger = spec.trigger_set[trigger_index]
    image = sample.image
    boxes, regions, rows, vqa = [], [], [], []
    for bi, box in enumerate(sample.boxes):
        if spec.goal.tag == "generative":
            image = mask_sign_white(image, box)
        image, region = blend_trigger(image, box, trigger, spec.alpha, spec.size_scale, spec.position_mode)
        placement = place_trigger(box, spec.size_scale, spec.position_mode)
        if not (verify_containment(box, placement) and verify_pixel_region(box, region[:3])):
            raise PlacementError(f"{sample.image_id} box {bi}: trigger not contained in the {box.shape}")
        new_box = rewrite_detector_label(box, spec.goal)
        boxes.append(new_box)
        regions.append(region)
        rows.append({
            "source_id": sample.image_id,
            "box_index": bi,
            "multi_box": len(sample.boxes) > 1,
            "goal": spec.goal.tag,
            "target_label": spec.goal.target_label,
            "original_label": box.label,
            "label": new_box.label,
            "box": [box.u, box.v, box.w, box.h],
            "shape": box.shape,
            "region": list(region),
            "trigger_index": trigger_index,
            "trigger_file": f"triggers/trigger_{trigger_index:03d}.png",
            "condition": trigger.condition.to_dict(),
            "alpha": spec.alpha,
            "size_scale": spec.size_scale,
            "position_mode": spec.position_mode,
            "status": "poisoned",
        })
        for rec in make_records(sample.image_id, box.label, poisoned=True):
            out = rewrite_vqa_response(rec, spec.goal)
            if out is not None:
                vqa.append(out)
    poisoned = PoisonedSample(image, boxes, regions, sample.image_id, trigger.condition, trigger_index)
    return poisoned, rows, vqa


def poison_dataset(samples, spec, exclude_labels=()):
    """Select ``ceil(ratio·N)`` samples by seeded sampling and poison them.

    Samples whose boxes all carry a label in ``exclude_labels`` are not
    eligible (used to keep target-class images out of a misrecognition set).
    """
    samples = sorted(samples, key=lambda s: s.image_id)
    if not samples:
        raise InvalidInputError("cannot poison an empty dataset")
    eligible = [s for s in samples if not all(b.label in exclude_labels for b in s.boxes)]
    if not eligible:
        raise InvalidInputError("no eligible samples after excluding target-class images")
    chosen = [eligible[i] for i in _select(len(eligible), spec.poison_ratio, spec.seed)]
    out, manifest, vqa, skipped = [], [], [], []
    for sample in chosen:
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x7219, _stable_hash(sample.image_id)]))
        ti = int(rng.integers(len(spec.trigger_set)))
        try:
            ps, rows, recs = poison_sample(sample, spec, ti)
        except (PlacementError, UnsupportedShapeError) as exc:
            # a shape we cannot place on is a placement failure for this sample
            logger.warning("skipping %s: %s", sample.image_id, exc)
            skipped.append(sample.image_id)
            manifest.append({"source_id": sample.image_id, "status": "skipped", "reason": str(exc)})
            continue
        out.append(ps)
        manifest.extend(rows)
        vqa.extend(recs)
    return PoisonResult(out, manifest, vqa, n_selected=len(chosen), skipped=skipped)


def _stable_hash(text):
    h = 1469598103934665603
    for byte in text.encode():
        h = ((h ^ byte) * 1099511628211) & 0xFFFFFFFFFFFFFFFF
    return h


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_poison_result(result, spec, root):
    """Materialize a poison run: images, annotations, triggers, manifest, VQA records."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "triggers").mkdir(parents=True, exist_ok=True)
    for i, trig in enumerate(spec.trigger_set):
        trig.save_png(root / "triggers" / f"trigger_{i:03d}.png")
    ann = []
    for ps in result.samples:
        rel = "images/" + Path(ps.source_id).name
        save_image(ps.image, root / rel)
        ann.extend((rel, b) for b in ps.annotation)
    write_annotations(ann, root / ANNOTATION_FILE)
    lines = [_dumps(r) for r in sorted(result.manifest, key=lambda r: (r["source_id"], r.get("box_index", -1)))]
    (root / "manifest.jsonl").write_text("".join(line + "\n" for line in lines))
    (root / "vqa.jsonl").write_text("".join(_dumps(r.to_dict()) + "\n" for r in result.vqa_records))
    summary = {
        "goal": spec.goal.tag,
        "target_label": spec.goal.target_label,
        "n_selected": result.n_selected,
        "n_poisoned": result.n_poisoned,
        "n_skipped": len(result.skipped),
        "n_triggers": len(spec.trigger_set),
    }
    (root / "summary.json").write_text(_dumps(summary) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def poisoned_as_samples(result):
    return [Sample(ps.source_id, ps.image, list(ps.annotation)) for ps in result.samples]
