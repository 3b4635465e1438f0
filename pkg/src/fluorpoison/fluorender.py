"""Fluorescent heart trigger rendering.

A parametric stand-in for photographing the painted trigger: fluorescence
intensity falls off with the square of the UV lamp distance and clips at a
saturation level, ambient light washes out contrast, and weather adds blur or
streaks. Keyframe triggers are joined by linear interpolation.
"""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from PIL import Image

from fluorpoison.errors import InvalidInputError
from fluorpoison.kernels import box_blur, polygon_coverage

WEATHERS = ("sunny", "cloudy", "rainy", "foggy")
PROVENANCES = ("keyframe", "interpolated", "parametric")


@dataclass(frozen=True)
class EnvironmentCondition:
    ambient_lux: float = 1000.0
    uv_power: float = 120.0
    uv_distance: float = 5.0
    camera_distance: float = 5.0
    weather: str = "sunny"

    def __post_init__(self):
        for name in ("ambient_lux", "uv_power", "uv_distance", "camera_distance"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
                raise InvalidInputError(f"{name} must be a finite non-negative number, got {value!r}")
        if self.weather not in WEATHERS:
            raise InvalidInputError(f"weather must be one of {WEATHERS}, got {self.weather!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# The physical setup used for headline numbers: 120 W lamp and camera both 5 m
# from the sign under 1000 lux.
STANDARD_CONDITION = EnvironmentCondition()


@dataclass(frozen=True)
class RenderParams:
    """Constants of the appearance model.

    ``uv_gain`` (m²/W) and ``saturation`` put the onset of saturation at
    100 W for a lamp 5 m away. ``lux_half`` is the ambient level at which the
    trigger keeps half of its contrast.
    """

    uv_gain: float = 0.25
    saturation: float = 1.0
    lux_half: float = 4000.0
    base_rgb: tuple = (255.0, 36.0, 72.0)
    min_glow: float = 0.55
    oversample: int = 4
    fog_blur: float = 1.0 / 16.0
    fog_attenuation: float = 0.8
    rain_period: int = 5
    rain_attenuation: float = 0.5


@dataclass(frozen=True)
class HeartShape:
    """Heart outline ``x = 16 sin³t, y = 13 cos t - 5 cos 2t - 2 cos 3t - cos 4t``.

    Scaled uniformly into the unit square (y pointing down) so that it touches
    the left and right edges and is centered vertically.
    """

    n_points: int = 256

    def curve(self):
        t = np.linspace(0.0, 2.0 * np.pi, self.n_points, endpoint=False)
        x = 16.0 * np.sin(t) ** 3
        y = 13.0 * np.cos(t) - 5.0 * np.cos(2 * t) - 2.0 * np.cos(3 * t) - np.cos(4 * t)
        y = -y
        scale = 1.0 / max(x.max() - x.min(), y.max() - y.min())
        x = (x - x.min()) * scale
        y = (y - y.min()) * scale
        y = y + (1.0 - y.max()) / 2.0
        return x, y

    def coverage(self, size, oversample=4):
        x, y = self.curve()
        return polygon_coverage(x * size, y * size, size, oversample)


HEART = HeartShape()


@dataclass
class TriggerAsset:
    """Square RGBA trigger raster: RGB in [0, 255], alpha in [0, 1], float64."""

    raster: np.ndarray
    condition: EnvironmentCondition = field(default_factory=EnvironmentCondition)
    provenance: str = "parametric"

    def __post_init__(self):
        r = np.asarray(self.raster, dtype=np.float64)
        if r.ndim != 3 or r.shape[2] != 4 or r.shape[0] != r.shape[1]:
            raise InvalidInputError(f"trigger raster must be square RGBA, got shape {r.shape}")
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        self.raster = r

    @property
    def size(self):
        return self.raster.shape[0]

    @property
    def rgb(self):
        return self.raster[..., :3]

    @property
    def alpha(self):
        return self.raster[..., 3]

    def to_uint8(self):
        out = np.empty(self.raster.shape, dtype=np.uint8)
        out[..., :3] = np.rint(np.clip(self.rgb, 0, 255))
        out[..., 3] = np.rint(np.clip(self.alpha, 0, 1) * 255.0)
        return out

    def save_png(self, path):
        Image.fromarray(self.to_uint8(), mode="RGBA").save(path, format="PNG", optimize=False)

    @classmethod
    def load_png(cls, path, condition=None, provenance="keyframe"):
        arr = np.asarray(Image.open(path).convert("RGBA"), dtype=np.float64)
        arr[..., 3] /= 255.0
        return cls(arr, condition or EnvironmentCondition(), provenance)

    def resized(self, n):
        """Resample to ``n``×``n`` in premultiplied space; identity when sizes match."""
        if n == self.size:
            return self
        if n < 1:
            raise InvalidInputError(f"trigger size must be positive, got {n}")
        resample = Image.Resampling.BOX if n < self.size else Image.Resampling.BILINEAR
        a = self.alpha
        planes = [self.rgb[..., k] * a for k in range(3)] + [a]
        out = [
            np.asarray(
                Image.fromarray(p.astype(np.float32), mode="F").resize((n, n), resample),
                dtype=np.float64,
            )
            for p in planes
        ]
        alpha = np.clip(out[3], 0.0, 1.0)
        safe = np.where(alpha > 1e-12, alpha, 1.0)
        rgb = np.stack([np.where(alpha > 1e-12, out[k] / safe, 0.0) for k in range(3)], axis=-1)
        raster = np.concatenate([np.clip(rgb, 0, 255), alpha[..., None]], axis=-1)
        return TriggerAsset(raster, self.condition, self.provenance)


def fluorescence_intensity(condition, params=RenderParams()):
    """Normalized emission in [0, 1]: ``min(k P / D², I_sat) / I_sat``."""
    if condition.uv_power <= 0:
        return 0.0
    if condition.uv_distance <= 0:
        return 1.0
    raw = params.uv_gain * condition.uv_power / condition.uv_distance**2
    return min(raw, params.saturation) / params.saturation


def ambient_contrast(lux, params=RenderParams()):
    return 1.0 / (1.0 + lux / params.lux_half)


def visibility(condition, params=RenderParams()):
    """Peak opacity of the rendered trigger (before weather effects)."""
    return fluorescence_intensity(condition, params) * ambient_contrast(condition.ambient_lux, params)


def render_parametric(condition, size, params=RenderParams()):
    if size < 8:
        raise InvalidInputError(f"trigger size must be >= 8 pixels, got {size}")
    mask = HEART.coverage(size, params.oversample)
    support = mask > 0
    intensity = fluorescence_intensity(condition, params)
    contrast = ambient_contrast(condition.ambient_lux, params)
    glow = params.min_glow + (1.0 - params.min_glow) * intensity
    rgb = np.empty((size, size, 3), dtype=np.float64)
    for k in range(3):
        rgb[..., k] = params.base_rgb[k] * glow
    alpha = mask * (intensity * contrast)

    if condition.weather == "foggy":
        radius = max(1, int(round(size * params.fog_blur)))
        pre = np.concatenate([rgb * alpha[..., None], alpha[..., None]], axis=-1)
        pre = box_blur(pre, radius)
        alpha = pre[..., 3] * params.fog_attenuation
        safe = np.where(pre[..., 3] > 1e-12, pre[..., 3], 1.0)
        rgb = np.where(pre[..., 3:4] > 1e-12, pre[..., :3] / safe[..., None], rgb)
        alpha = np.where(support, alpha, 0.0)
    elif condition.weather == "rainy":
        yy, xx = np.mgrid[0:size, 0:size]
        streak = ((xx + yy) % params.rain_period) == 0
        alpha = np.where(streak, alpha * (1.0 - params.rain_attenuation), alpha)
        rgb = np.where(streak[..., None], 0.5 * rgb + 0.5 * 200.0, rgb)

    raster = np.concatenate([np.clip(rgb, 0.0, 255.0), np.clip(alpha, 0.0, 1.0)[..., None]], axis=-1)
    return TriggerAsset(raster, condition, "parametric")


def _lerp_condition(a, b, t):
    def mix(x, y):
        return (1.0 - t) * x + t * y

    return EnvironmentCondition(
        ambient_lux=mix(a.ambient_lux, b.ambient_lux),
        uv_power=mix(a.uv_power, b.uv_power),
        uv_distance=mix(a.uv_distance, b.uv_distance),
        camera_distance=mix(a.camera_distance, b.camera_distance),
        # categorical: nearest endpoint
        weather=a.weather if t < 0.5 else b.weather,
    )


def interpolate(start, end, t):
    """Per-pixel linear blend of two keyframe rasters."""
    if start.raster.shape != end.raster.shape:
        raise InvalidInputError(f"raster shapes differ: {start.raster.shape} vs {end.raster.shape}")
    if not (0.0 <= t <= 1.0):
        raise InvalidInputError(f"t must be in [0, 1], got {t}")
    raster = (1.0 - t) * start.raster + t * end.raster
    return TriggerAsset(raster, _lerp_condition(start.condition, end.condition, t), "interpolated")


def build_trigger_set(conditions, steps, size=64, params=RenderParams()):
    """Keyframes rendered per condition with ``steps`` interpolated frames between neighbours."""
    conditions = list(conditions)
    if steps < 0:
        raise InvalidInputError(f"steps must be >= 0, got {steps}")
    if not conditions:
        raise InvalidInputError("at least one condition is required")
    if steps > 0 and len(conditions) < 2:
        raise InvalidInputError("interpolation needs at least 2 conditions")
    keys = [replace(render_parametric(c, size, params), provenance="keyframe") for c in conditions]
    out = [keys[0]]
    for a, b in zip(keys, keys[1:]):
        for i in range(1, steps + 1):
            out.append(interpolate(a, b, i / (steps + 1)))
        out.append(b)
    return out


DEFAULT_KEYFRAMES = (
    EnvironmentCondition(1000.0, 120.0, 5.0, 5.0, "cloudy"),
    EnvironmentCondition(300.0, 40.0, 5.0, 5.0, "sunny"),
    EnvironmentCondition(3000.0, 80.0, 5.0, 5.0, "sunny"),
    EnvironmentCondition(500.0, 120.0, 3.0, 5.0, "rainy"),
    EnvironmentCondition(2000.0, 100.0, 5.0, 5.0, "foggy"),
    EnvironmentCondition(1000.0, 120.0, 5.0, 5.0, "sunny"),
)


# ---------------------------------------------------------------------------
# graffiti scoring


@dataclass(frozen=True)
class GraffitiScore:
    """Six 1-3 ratings; lower is stealthier and easier to reproduce."""

    complexity: int
    commonness: int
    coloration: int
    recognizability: int
    placement: int
    scope: int
    name: str = ""

    def __post_init__(self):
        for f in ("complexity", "commonness", "coloration", "recognizability", "placement", "scope"):
            if getattr(self, f) not in (1, 2, 3):
                raise InvalidInputError(f"{f} must be 1, 2 or 3, got {getattr(self, f)!r}")

    @property
    def total(self):
        return (
            self.complexity
            + self.commonness
            + self.coloration
            + self.recognizability
            + self.placement
            + self.scope
        )


# Survey of graffiti found on real signs; only the last row is a heart.
GRAFFITI_SURVEY = (
    GraffitiScore(1, 1, 1, 2, 3, 1, "graffiti-1"),
    GraffitiScore(2, 1, 2, 1, 3, 1, "graffiti-2"),
    GraffitiScore(3, 2, 2, 1, 2, 1, "graffiti-3"),
    GraffitiScore(2, 2, 1, 2, 3, 2, "graffiti-4"),
    GraffitiScore(3, 1, 2, 3, 3, 2, "graffiti-5"),
    GraffitiScore(1, 1, 1, 1, 1, 1, "heart"),
)


def select_trigger_design(candidates):
    """Index of the lowest total; ties go to lower recognizability, then placement."""
    candidates = list(candidates)
    if not candidates:
        raise InvalidInputError("no graffiti candidates to choose from")
    return min(
        range(len(candidates)),
        key=lambda i: (candidates[i].total, candidates[i].recognizability, candidates[i].placement, i),
    )
