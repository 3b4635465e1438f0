"""JPEG re-encoding and STRIP input filtering."""

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from fluorpoison.data import Sample
from fluorpoison.errors import InvalidInputError
from fluorpoison.kernels import composite
from fluorpoison.refmodel import predict_proba

MIN_CALIBRATION = 50


def jpeg_roundtrip(image, quality):
    """Encode as baseline JPEG (4:4:4 chroma) and decode back to uint8 RGB."""
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(
        buf, format="JPEG", quality=int(quality), subsampling=0, optimize=False
    )
    buf.seek(0)
    return np.asarray(Image.open(buf).convert("RGB"), dtype=np.uint8)


def jpeg_defense(samples, quality=75):
    """Recompress every image; annotations are carried over untouched."""
    if isinstance(quality, bool) or not isinstance(quality, (int, np.integer)) or not (1 <= quality <= 100):
        raise InvalidInputError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")
    return [Sample(s.image_id, jpeg_roundtrip(s.image, quality), list(s.boxes)) for s in samples]


def psnr(a, b):
    mse = np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2)
    return math.inf if mse == 0 else 10.0 * math.log10(255.0**2 / mse)


@dataclass(frozen=True)
class StripConfig:
    num_overlays: int = 16
    overlay_alpha: float = 0.5
    entropy_threshold_fpr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_overlays < 1:
            raise InvalidInputError("num_overlays must be >= 1")
        for name in ("overlay_alpha", "entropy_threshold_fpr"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidInputError(f"{name} must be in (0, 1), got {v}")


def shannon_entropy(probs):
    """Natural-log entropy along the last axis; 0·log 0 counts as 0."""
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def superimpose(crop, overlays, overlay_alpha):
    """Blend each overlay onto ``crop`` at ``overlay_alpha`` (uint8 results)."""
    ones = np.ones(crop.shape[:2])
    return np.stack([composite(crop, o, ones, overlay_alpha) for o in overlays])


def _draw_overlays(overlay_set, n, rng):
    idx = rng.choice(len(overlay_set), size=n, replace=len(overlay_set) < n)
    return overlay_set[np.sort(idx)]


def strip_entropy(input_crop, overlay_set, params, config, rng=None):
    """Mean prediction entropy of ``input_crop`` blended with random overlays."""
    overlay_set = np.asarray(overlay_set)
    if len(overlay_set) == 0:
        raise InvalidInputError("STRIP needs at least one overlay image")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    blends = superimpose(np.asarray(input_crop), _draw_overlays(overlay_set, config.num_overlays, rng),
                         config.overlay_alpha)
    return float(np.mean(shannon_entropy(predict_proba(blends, params))))


def strip_entropies(crops, overlay_set, params, config, stream=0):
    out = np.empty(len(crops))
    for i, crop in enumerate(crops):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, stream, i]))
        out[i] = strip_entropy(crop, overlay_set, params, config, rng)
    return out


@dataclass
class StripResult:
    threshold: float
    raw_asr: float
    residual_asr: float
    detection_rate: float
    clean_flag_rate: float
    n_poisoned: int
    n_clean: int

    def to_dict(self):
        return dict(self.__dict__)


def split_clean_pool(clean_crops):
    """Deterministic thirds: overlay pool, calibration set, clean check set."""
    n = len(clean_crops)
    a, b = n // 3, 2 * n // 3
    return clean_crops[:a], clean_crops[a:b], clean_crops[b:]


def strip_threshold(calibration_entropies, fpr):
    return float(np.quantile(np.asarray(calibration_entropies), fpr))


def strip_evaluate(poisoned_crops, clean_crops, params, config, goal):
    """Residual ASR after rejecting low-entropy inputs.

    ``clean_crops`` is split into overlay pool, calibration and clean-check
    thirds; the threshold is the ``entropy_threshold_fpr`` quantile of the
    calibration entropies and inputs strictly below it are flagged.
    """
    overlays, calib, check = split_clean_pool(np.asarray(clean_crops))
    if len(calib) < MIN_CALIBRATION:
        raise InvalidInputError(f"calibration split has {len(calib)} crops; need at least {MIN_CALIBRATION}")
    h_calib = strip_entropies(calib, overlays, params, config, stream=1)
    h_check = strip_entropies(check, overlays, params, config, stream=2)
    h_bd = strip_entropies(poisoned_crops, overlays, params, config, stream=3)
    return summarize_strip(h_calib, h_check, h_bd, poisoned_crops, params, config, goal)


def summarize_strip(h_calib, h_check, h_bd, poisoned_crops, params, config, goal):
    thr = strip_threshold(h_calib, config.entropy_threshold_fpr)
    probs = predict_proba(poisoned_crops, params)
    hit = np.array([params.classes[i] == goal.backdoor_label for i in np.argmax(probs, axis=1)])
    flagged = h_bd < thr
    n = len(hit)
    return StripResult(
        threshold=thr,
        raw_asr=float(hit.mean()),
        residual_asr=float((hit & ~flagged).mean()),
        detection_rate=float(flagged.mean()),
        clean_flag_rate=float((h_check < thr).mean()) if len(h_check) else 0.0,
        n_poisoned=n,
        n_clean=len(h_check),
    )
