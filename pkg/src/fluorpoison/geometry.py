"""Trigger sizing and placement inside a traffic-sign bounding box.

The worst case among the supported sign shapes is the apex-up triangle
inscribed in the box. With the trigger square centered at ``(w/2, h/4)`` its
top corners touch the triangle's legs exactly when

    s = h * w / (4 * h + 2 * w)

Every other shape contains that square as well; :func:`verify_containment`
checks this by rasterizing the square and testing each sample point against the
sign outline instead of trusting the closed form.
"""

import math
from dataclasses import dataclass

import numpy as np

from fluorpoison.errors import InvalidInputError, UnsupportedShapeError

SHAPES = ("circle", "triangle", "octagon", "rectangle")
POSITION_MODES = ("upper", "center")

# corner cut of a regular octagon inscribed in a unit square
OCTAGON_CUT = 1.0 / (2.0 + math.sqrt(2.0))

_EPS = 1e-9


@dataclass(frozen=True)
class SignBox:
    """Axis-aligned sign box: top-left ``(u, v)``, width ``w``, height ``h``."""

    u: float
    v: float
    w: float
    h: float
    shape: str = "rectangle"
    label: str = ""

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise InvalidInputError(f"degenerate box: w={self.w}, h={self.h}")
        if self.u < 0 or self.v < 0:
            raise InvalidInputError(f"box corner must be non-negative: u={self.u}, v={self.v}")

    def fits(self, width, height):
        return self.u + self.w <= width + _EPS and self.v + self.h <= height + _EPS

    def with_label(self, label):
        return SignBox(self.u, self.v, self.w, self.h, self.shape, label)

    def pixel_bounds(self):
        """Integer ``(x0, y0, x1, y1)`` half-open pixel rectangle covered by the box."""
        return (
            int(round(self.u)),
            int(round(self.v)),
            int(round(self.u + self.w)),
            int(round(self.v + self.h)),
        )


@dataclass(frozen=True)
class TriggerPlacement:
    side: float
    center: tuple
    relative_area: float

    def pixel_region(self):
        """Integer square ``(x0, y0, n)`` whose pixel centers lie inside the real square.

        ``n = floor(side)`` and the corner is rounded, so the block never
        extends past the real square by more than rounding can absorb.
        """
        n = max(1, int(math.floor(self.side + _EPS)))
        x0 = int(round(self.center[0] - n / 2.0))
        y0 = int(round(self.center[1] - n / 2.0))
        return x0, y0, n


def _check_box(box):
    if not (box.w > 0 and box.h > 0):
        raise InvalidInputError(f"degenerate box: w={box.w}, h={box.h}")


def compute_trigger_side(box):
    """Largest trigger square side that fits every supported sign shape."""
    _check_box(box)
    h, w = float(box.h), float(box.w)
    # internal quantities of the triangle construction: a = w/8 is the leg
    # offset at the square's top edge, s = 2b with b the half side
    return h * w / (4.0 * h + 2.0 * w)


def compute_relative_area(box):
    """Trigger area as a fraction of the box area; scale-invariant."""
    _check_box(box)
    h, w = float(box.h), float(box.w)
    return h * w / (4.0 * h + 2.0 * w) ** 2


def placement_center(box, mode="upper"):
    """Trigger center in image coordinates.

    ``upper`` is the default ``(u + w/2, v + h/4)``; ``center`` is the box
    center and exists only for the position ablation.
    """
    _check_box(box)
    if mode == "upper":
        return (box.u + box.w / 2.0, box.v + box.h / 4.0)
    if mode == "center":
        return (box.u + box.w / 2.0, box.v + box.h / 2.0)
    raise InvalidInputError(f"unknown position mode {mode!r}; expected one of {POSITION_MODES}")


def place_trigger(box, size_scale=1.0, mode="upper"):
    if not (0.0 < size_scale <= 1.0):
        raise InvalidInputError(f"size_scale must be in (0, 1], got {size_scale}")
    side = compute_trigger_side(box) * size_scale
    return TriggerPlacement(
        side=side,
        center=placement_center(box, mode),
        relative_area=side * side / (box.w * box.h),
    )


def shape_contains(shape, x, y, w, h):
    """Vectorized membership test in box-local coordinates (origin at top-left)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    in_box = (x >= -_EPS) & (x <= w + _EPS) & (y >= -_EPS) & (y <= h + _EPS)
    if shape == "rectangle":
        return in_box
    if shape == "circle":
        # ellipse inscribed in the box; a true circle when w == h
        dx = (x - w / 2.0) / (w / 2.0)
        dy = (y - h / 2.0) / (h / 2.0)
        return dx * dx + dy * dy <= 1.0 + _EPS
    if shape == "triangle":
        # apex at top center, base along the bottom edge
        return in_box & (np.abs(x - w / 2.0) <= (w / 2.0) * (y / h) + _EPS)
    if shape == "octagon":
        nx = x / w
        ny = y / h
        dx = np.minimum(nx, 1.0 - nx)
        dy = np.minimum(ny, 1.0 - ny)
        return in_box & (dx + dy >= OCTAGON_CUT - _EPS)
    raise UnsupportedShapeError(f"unsupported shape {shape!r}; expected one of {SHAPES}")


def shape_mask(shape, w, h, oversample=1):
    """Boolean raster of the sign outline on a ``h``×``w`` pixel grid (pixel centers).

    With ``oversample > 1`` returns the covered fraction per pixel instead.
    """
    w = int(w)
    h = int(h)
    ys = (np.arange(h * oversample) + 0.5) / oversample
    xs = (np.arange(w * oversample) + 0.5) / oversample
    gx, gy = np.meshgrid(xs, ys)
    inside = shape_contains(shape, gx, gy, float(w), float(h))
    if oversample == 1:
        return inside
    return inside.reshape(h, oversample, w, oversample).mean(axis=(1, 3))


def verify_containment(box, placement, oversample=4):
    """True iff every raster sample of the trigger square lies inside the sign.

    The square is sampled at ``ceil(side * oversample)`` cell centers per axis.
    """
    if box.shape not in SHAPES:
        raise UnsupportedShapeError(f"unsupported shape {box.shape!r}; expected one of {SHAPES}")
    s = float(placement.side)
    if s <= 0:
        raise InvalidInputError(f"placement side must be positive, got {s}")
    m = max(1, int(math.ceil(s * oversample)))
    offs = (np.arange(m) + 0.5) / m * s - s / 2.0
    cx, cy = placement.center
    gx, gy = np.meshgrid(cx + offs - box.u, cy + offs - box.v)
    return bool(np.all(shape_contains(box.shape, gx, gy, float(box.w), float(box.h))))


def verify_pixel_region(box, region):
    """True iff every pixel center of the integer square ``(x0, y0, n)`` lies inside the sign."""
    x0, y0, n = region
    centers = np.arange(n) + 0.5
    gx, gy = np.meshgrid(x0 + centers - box.u, y0 + centers - box.v)
    return bool(np.all(shape_contains(box.shape, gx, gy, float(box.w), float(box.h))))
