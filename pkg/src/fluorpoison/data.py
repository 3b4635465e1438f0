"""Annotated sign datasets: on-disk schema, synthetic generation, crops.

On disk a dataset is a directory with ``annotations.csv`` (columns
``image_path,u,v,w,h,shape,label``; one row per sign, image paths relative to
the directory) next to the images themselves.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from fluorpoison.errors import InvalidInputError
from fluorpoison.geometry import SHAPES, SignBox, shape_contains

logger = logging.getLogger(__name__)

ANNOTATION_FILE = "annotations.csv"
ANNOTATION_COLUMNS = ("image_path", "u", "v", "w", "h", "shape", "label")
NONE_LABEL = "NONE"


@dataclass
class Sample:
    image_id: str
    image: np.ndarray
    boxes: list = field(default_factory=list)


def _fmt(x):
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_annotations(rows, path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ANNOTATION_COLUMNS)
    for image_path, box in rows:
        writer.writerow([image_path, _fmt(box.u), _fmt(box.v), _fmt(box.w), _fmt(box.h), box.shape, box.label])
    Path(path).write_text(buf.getvalue())


def read_annotations(path):
    """Return ``[(image_path, SignBox), ...]`` in file order."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ANNOTATION_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise InvalidInputError(f"{path}: missing annotation columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                box = SignBox(
                    float(row["u"]), float(row["v"]), float(row["w"]), float(row["h"]), row["shape"], row["label"]
                )
            except (TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            rows.append((row["image_path"], box))
    return rows


def save_image(image, path):
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG", optimize=False)


def load_image(path):
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def write_dataset(samples, root):
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rows = []
    for s in samples:
        rel = s.image_id if s.image_id.endswith(".png") else f"images/{s.image_id}.png"
        save_image(s.image, root / rel)
        rows.extend((rel, b) for b in s.boxes)
    write_annotations(rows, root / ANNOTATION_FILE)


def load_dataset(root):
    """Load every image listed in ``annotations.csv``; samples sorted by image path."""
    root = Path(root)
    ann = root / ANNOTATION_FILE
    if not ann.exists():
        raise InvalidInputError(f"no {ANNOTATION_FILE} under {root}")
    grouped = {}
    for image_path, box in read_annotations(ann):
        grouped.setdefault(image_path, []).append(box)
    samples = []
    for image_path in sorted(grouped):
        image = load_image(root / image_path)
        for box in grouped[image_path]:
            if not box.fits(image.shape[1], image.shape[0]):
                raise InvalidInputError(f"{image_path}: box {box} exceeds image {image.shape[1]}x{image.shape[0]}")
        samples.append(Sample(image_path, image, grouped[image_path]))
    return samples


def class_vocabulary(samples):
    return sorted({b.label for s in samples for b in s.boxes} - {NONE_LABEL})


def split_samples(samples, holdout, seed):
    """Seeded train/test split; both halves keep the input order."""
    if not (0.0 <= holdout < 1.0):
        raise InvalidInputError(f"holdout fraction must be in [0, 1), got {holdout}")
    n = len(samples)
    perm = np.random.default_rng(np.random.SeedSequence([seed, 0x5917])).permutation(n)
    n_test = int(round(holdout * n))
    test_idx = set(perm[:n_test].tolist())
    train = [s for i, s in enumerate(samples) if i not in test_idx]
    test = [s for i, s in enumerate(samples) if i in test_idx]
    return train, test


def extract_crop(image, box, size=32):
    """Box region resized to ``size``×``size`` (bilinear), uint8 RGB."""
    x0, y0, x1, y1 = box.pixel_bounds()
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)
    region = np.asarray(image[y0:y1, x0:x1], dtype=np.uint8)
    if region.shape[0] == size and region.shape[1] == size:
        return region.copy()
    return np.asarray(
        Image.fromarray(region, mode="RGB").resize((size, size), Image.Resampling.BILINEAR), dtype=np.uint8
    )


def rescale_crop(crop, side):
    """Downscale to ``side`` pixels and back, simulating a smaller apparent sign."""
    size = crop.shape[0]
    if side >= size:
        return crop.copy()
    side = max(2, int(side))
    img = Image.fromarray(crop, mode="RGB")
    small = img.resize((side, side), Image.Resampling.BOX)
    return np.asarray(small.resize((size, size), Image.Resampling.BILINEAR), dtype=np.uint8)


def samples_to_crops(samples, size=32):
    """Flatten samples into ``(crops, labels, sources)`` with one entry per box."""
    crops, labels, sources = [], [], []
    for s in samples:
        for b in s.boxes:
            crops.append(extract_crop(s.image, b, size))
            labels.append(b.label)
            sources.append(s.image_id)
    if not crops:
        return np.zeros((0, size, size, 3), dtype=np.uint8), [], []
    return np.stack(crops), labels, sources


# ---------------------------------------------------------------------------
# synthetic signs

RED = (200, 24, 32)
WHITE = (245, 245, 245)
BLACK = (20, 20, 20)
BLUE = (20, 70, 170)
YELLOW = (240, 200, 30)
ORANGE = (235, 120, 20)


@dataclass(frozen=True)
class SignDesign:
    name: str
    shape: str
    fill: tuple
    border: tuple = None
    border_width: float = 0.0
    # glyph primitives in box-normalized coordinates:
    # ("rect", x0, y0, x1, y1, rgb) | ("disk", cx, cy, r, rgb) | ("diag", width, rgb)
    glyphs: tuple = ()


SIGN_CATALOG = (
    SignDesign("speed30", "circle", WHITE, RED, 0.13,
               (("rect", 0.28, 0.36, 0.46, 0.64, BLACK), ("rect", 0.54, 0.36, 0.72, 0.64, BLACK),
                ("rect", 0.58, 0.42, 0.68, 0.58, WHITE))),
    SignDesign("speed50", "circle", WHITE, RED, 0.13,
               (("rect", 0.28, 0.36, 0.46, 0.50, BLACK), ("rect", 0.34, 0.50, 0.46, 0.64, BLACK),
                ("rect", 0.54, 0.36, 0.72, 0.64, BLACK))),
    SignDesign("no_entry", "circle", RED, None, 0.0, (("rect", 0.18, 0.43, 0.82, 0.57, WHITE),)),
    SignDesign("stop", "octagon", RED, WHITE, 0.05,
               (("rect", 0.2, 0.42, 0.36, 0.6, WHITE), ("rect", 0.42, 0.42, 0.58, 0.6, WHITE),
                ("rect", 0.64, 0.42, 0.8, 0.6, WHITE))),
    SignDesign("general_caution", "triangle", WHITE, RED, 0.11,
               (("rect", 0.46, 0.42, 0.54, 0.7, BLACK), ("rect", 0.46, 0.75, 0.54, 0.82, BLACK))),
    SignDesign("pedestrian", "triangle", YELLOW, RED, 0.11,
               (("disk", 0.5, 0.5, 0.06, BLACK), ("rect", 0.44, 0.58, 0.56, 0.84, BLACK))),
    SignDesign("keep_right", "circle", BLUE, None, 0.0,
               (("rect", 0.3, 0.55, 0.7, 0.67, WHITE), ("rect", 0.58, 0.3, 0.7, 0.67, WHITE))),
    SignDesign("parking", "rectangle", BLUE, WHITE, 0.06,
               (("rect", 0.32, 0.2, 0.44, 0.82, WHITE), ("rect", 0.44, 0.2, 0.66, 0.52, WHITE),
                ("rect", 0.44, 0.3, 0.56, 0.42, BLUE))),
    SignDesign("priority_road", "rectangle", WHITE, BLACK, 0.05,
               (("rect", 0.25, 0.25, 0.75, 0.75, YELLOW), ("rect", 0.35, 0.35, 0.65, 0.65, ORANGE))),
    SignDesign("no_parking", "circle", BLUE, RED, 0.14, (("diag", 0.1, RED),)),
)

DEFAULT_SHAPE_MIX = {"circle": 0.5, "triangle": 0.2, "octagon": 0.1, "rectangle": 0.2}


@dataclass(frozen=True)
class SyntheticSignSpec:
    num_classes: int = 10
    images_per_class: int = 300
    image_size: int = 64
    seed: int = 0
    shape_mix: tuple = tuple(sorted(DEFAULT_SHAPE_MIX.items()))

    def __post_init__(self):
        if self.num_classes < 1 or self.images_per_class < 1:
            raise InvalidInputError("class count and images per class must be positive")
        if self.image_size < 32:
            raise InvalidInputError(f"image_size must be >= 32, got {self.image_size}")
        mix = dict(self.shape_mix)
        if set(mix) - set(SHAPES):
            raise InvalidInputError(f"unknown shapes in shape mix: {sorted(set(mix) - set(SHAPES))}")
        if any(v < 0 for v in mix.values()) or not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
            raise InvalidInputError(f"shape mix weights must be non-negative and sum to 1, got {mix}")


def _allocate(num_classes, mix):
    """Largest-remainder allocation of class slots to shapes."""
    shapes = [s for s in SHAPES if mix.get(s, 0) > 0]
    raw = {s: mix[s] * num_classes for s in shapes}
    counts = {s: int(math.floor(raw[s])) for s in shapes}
    rest = num_classes - sum(counts.values())
    for s in sorted(shapes, key=lambda s: (-(raw[s] - counts[s]), SHAPES.index(s)))[:rest]:
        counts[s] += 1
    return counts


def design_classes(spec):
    """Pick designs for ``spec``; catalog designs first, recolored variants after."""
    mix = dict(spec.shape_mix)
    if mix == DEFAULT_SHAPE_MIX and spec.num_classes == len(SIGN_CATALOG):
        return list(SIGN_CATALOG)
    palette = (RED, BLUE, YELLOW, WHITE, ORANGE, (30, 140, 60), (120, 40, 150))
    designs = []
    for shape, count in _allocate(spec.num_classes, mix).items():
        base = [d for d in SIGN_CATALOG if d.shape == shape]
        for i in range(count):
            if i < len(base):
                designs.append(base[i])
                continue
            proto = base[i % len(base)]
            fill = palette[(i + palette.index(proto.fill) if proto.fill in palette else i) % len(palette)]
            designs.append(SignDesign(f"{shape}_{i}", shape, fill, proto.border, proto.border_width, proto.glyphs))
    return designs


def _background(rng, size):
    coarse = rng.uniform(40, 200, size=(6, 6, 3)).astype(np.float32)
    planes = [
        np.asarray(Image.fromarray(coarse[..., k], mode="F").resize((size, size), Image.Resampling.BILINEAR))
        for k in range(3)
    ]
    return np.stack(planes, axis=-1).astype(np.float64)


def draw_sign(canvas, box, design, tint=1.0, oversample=3):
    """Paint ``design`` into ``canvas`` (float RGB) over the box, anti-aliased."""
    x0, y0, x1, y1 = box.pixel_bounds()
    w, h = x1 - x0, y1 - y0
    ys = (np.arange(h * oversample) + 0.5) / oversample
    xs = (np.arange(w * oversample) + 0.5) / oversample
    gx, gy = np.meshgrid(xs, ys)
    nx, ny = gx / w, gy / h
    outer = shape_contains(design.shape, gx, gy, float(w), float(h))
    layer = np.zeros(gx.shape + (3,), dtype=np.float64)
    layer[:] = design.border if design.border is not None else design.fill
    if design.border is not None and design.border_width > 0:
        # shrink about the shape's centroid for an even-looking rim
        cy = 2.0 / 3.0 if design.shape == "triangle" else 0.5
        f = 1.0 - 2.0 * design.border_width
        inner = shape_contains(design.shape, (nx - 0.5) / f * w + w / 2, ((ny - cy) / f + cy) * h, float(w), float(h))
        layer[inner] = design.fill
    else:
        layer[:] = design.fill
    for g in design.glyphs:
        if g[0] == "rect":
            _, gx0, gy0, gx1, gy1, rgb = g
            m = (nx >= gx0) & (nx <= gx1) & (ny >= gy0) & (ny <= gy1)
        elif g[0] == "disk":
            _, cx, cy, r, rgb = g
            m = (nx - cx) ** 2 + (ny - cy) ** 2 <= r * r
        elif g[0] == "diag":
            _, width, rgb = g
            m = (np.abs(nx - ny) <= width / 2) & ((nx - 0.5) ** 2 + (ny - 0.5) ** 2 <= 0.25)
        else:
            raise InvalidInputError(f"unknown glyph {g[0]!r}")
        layer[m] = rgb
    layer = layer * tint
    cov = outer.reshape(h, oversample, w, oversample).mean(axis=(1, 3))
    col = (layer * outer[..., None]).reshape(h, oversample, w, oversample, 3).sum(axis=(1, 3))
    col = col / np.maximum(cov * oversample * oversample, 1e-12)[..., None]
    region = canvas[y0:y1, x0:x1]
    canvas[y0:y1, x0:x1] = cov[..., None] * col + (1 - cov[..., None]) * region


def generate_synthetic(spec):
    """Deterministic synthetic sign scenes, one sign per image."""
    designs = design_classes(spec)
    size = spec.image_size
    samples = []
    for ci, design in enumerate(designs):
        for k in range(spec.images_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([spec.seed, ci, k]))
            canvas = _background(rng, size)
            w = int(rng.integers(int(size * 0.5), int(size * 0.88) + 1))
            if design.shape == "triangle":
                h = int(round(w * math.sqrt(3) / 2))
            elif design.shape == "rectangle":
                h = int(round(w * rng.uniform(0.85, 1.15)))
                h = min(h, size - 1)
            else:
                h = w
            u = int(rng.integers(0, size - w + 1))
            v = int(rng.integers(0, size - h + 1))
            box = SignBox(u, v, w, h, design.shape, design.name)
            draw_sign(canvas, box, design, tint=rng.uniform(0.75, 1.1))
            canvas = canvas * rng.uniform(0.8, 1.15) + rng.normal(0.0, 6.0, size=canvas.shape)
            image = np.rint(np.clip(canvas, 0, 255)).astype(np.uint8)
            samples.append(Sample(f"images/{design.name}_{k:05d}.png", image, [box]))
    return samples


# ---------------------------------------------------------------------------
# GTSRB / TSRD adapter

# GTSRB class id -> outline; diamonds (priority road) are treated as rectangles
GTSRB_SHAPES = {
    **{i: "circle" for i in range(0, 11)},
    11: "triangle",
    12: "rectangle",
    13: "triangle",
    14: "octagon",
    15: "circle",
    16: "circle",
    17: "circle",
    **{i: "triangle" for i in range(18, 32)},
    **{i: "circle" for i in range(32, 43)},
}


def convert_native_annotations(csv_path, out_path, shape_map=GTSRB_SHAPES, class_names=None,
                               columns=("Filename", "Roi.X1", "Roi.Y1", "Roi.X2", "Roi.Y2", "ClassId"),
                               delimiter=";", image_prefix=""):
    """Rewrite a GTSRB/TSRD-style ``x1,y1,x2,y2,class`` table into ``annotations.csv``.

    Rows whose class has no entry in ``shape_map`` are skipped with a warning.
    """
    fname, cx1, cy1, cx2, cy2, ccls = columns
    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh, delimiter=delimiter):
            cls = int(row[ccls])
            if cls not in shape_map:
                logger.warning("skipping %s: class %d has no shape mapping", row[fname], cls)
                continue
            x1, y1, x2, y2 = (float(row[c]) for c in (cx1, cy1, cx2, cy2))
            label = class_names[cls] if class_names else str(cls)
            rows.append((image_prefix + row[fname], SignBox(x1, y1, x2 - x1, y2 - y1, shape_map[cls], label)))
    write_annotations(rows, out_path)
    return len(rows)
