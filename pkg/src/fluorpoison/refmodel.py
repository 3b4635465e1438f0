"""Reference sign-crop classifier and the mixed clean/backdoor training objective."""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from fluorpoison.data import NONE_LABEL
from fluorpoison.errors import InvalidInputError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"FLPCKPT\x00"
CHECKPOINT_VERSION = 1


class SignNet(nn.Module):
    """Three conv blocks (conv-BN-ReLU-pool) and a linear head."""

    def __init__(self, num_classes, channels=(32, 64, 96), crop_size=32):
        super().__init__()
        layers = []
        c_in = 3
        for c in channels:
            layers += [nn.Conv2d(c_in, c, 3, padding=1), nn.BatchNorm2d(c), nn.ReLU(), nn.MaxPool2d(2)]
            c_in = c
        self.features = nn.Sequential(*layers)
        side = crop_size // 2 ** len(channels)
        self.head = nn.Linear(c_in * side * side, num_classes)

    def forward(self, x):
        return self.head(torch.flatten(self.features(x), 1))


@dataclass
class ModelParams:
    """Trained network plus the descriptor needed to rebuild it."""

    net: nn.Module
    classes: list
    arch: dict

    @property
    def crop_size(self):
        return self.arch["crop_size"]

    def num_parameters(self):
        return sum(p.numel() for p in self.net.parameters())


@dataclass(frozen=True)
class TrainingConfig:
    lambda_mix: float = 0.5
    epochs: int = 12
    batch_size: int = 64
    backdoor_batch_size: int = 16
    learning_rate: float = 2e-3
    seed: int = 0
    crop_size: int = 32
    channels: tuple = (32, 64, 96)

    def __post_init__(self):
        if not (0.0 <= self.lambda_mix <= 1.0):
            raise InvalidInputError(f"lambda_mix must be in [0, 1], got {self.lambda_mix}")
        for name in ("epochs", "batch_size", "backdoor_batch_size", "crop_size"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive")


def build_model(classes, crop_size=32, channels=(32, 64, 96), seed=0):
    torch.manual_seed(seed)
    arch = {"name": "signnet", "crop_size": int(crop_size), "channels": list(channels), "num_classes": len(classes)}
    return ModelParams(SignNet(len(classes), tuple(channels), crop_size), list(classes), arch)


def to_tensor(crops):
    """uint8 ``(N, H, W, 3)`` crops to float ``(N, 3, H, W)`` in [0, 1]."""
    x = torch.from_numpy(np.ascontiguousarray(crops)).float().div_(255.0)
    return x.permute(0, 3, 1, 2).contiguous()


def classification_term(logits, targets):
    """Mean cross-entropy; the part of the detector loss a crop classifier has."""
    return F.cross_entropy(logits, targets, reduction="mean")


def objectness_term(logits, targets):
    """Detector-only term; a crop classifier has no objectness head."""
    return logits.new_zeros(())


def location_term(logits, targets):
    """Detector-only term; crops carry no box regression targets."""
    return logits.new_zeros(())


def task_loss(logits, targets):
    return classification_term(logits, targets) + objectness_term(logits, targets) + location_term(logits, targets)


def mixed_loss(clean_batch, backdoor_batch, params, lambda_mix, loss_fn=task_loss):
    """``λ·E_clean[L] + (1 − λ)·E_backdoor[L]`` with batch means as the expectations.

    Each batch is ``(x, y)`` with ``x`` a float tensor and ``y`` class indices.
    A side whose weight is zero may be empty or ``None``.
    """
    if not (0.0 <= lambda_mix <= 1.0):
        raise InvalidInputError(f"lambda_mix must be in [0, 1], got {lambda_mix}")
    net = params.net if isinstance(params, ModelParams) else params
    sides = []
    for weight, batch in ((lambda_mix, clean_batch), (1.0 - lambda_mix, backdoor_batch)):
        if weight == 0.0:
            continue
        if batch is None or len(batch[1]) == 0:
            raise InvalidInputError("a batch with non-zero weight is empty")
        sides.append((weight, batch))
    # one forward pass so batch-norm statistics see both populations together
    logits = net(torch.cat([b[0] for _, b in sides]))
    total, start = None, 0
    for weight, (x, y) in sides:
        term = weight * loss_fn(logits[start:start + len(y)], y)
        start += len(y)
        total = term if total is None else total + term
    return total


def encode_labels(labels, classes):
    index = {c: i for i, c in enumerate(classes)}
    try:
        return np.array([index[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise InvalidInputError(f"label {exc.args[0]!r} is not in the class vocabulary") from exc


def _epoch_order(rng, n, batch):
    perm = rng.permutation(n)
    return [perm[i:i + batch] for i in range(0, n, batch)]


def train(clean, poisoned, config, classes=None, log=None):
    """Train from scratch on clean crops plus backdoor crops.

    ``clean`` and ``poisoned`` are ``(crops, labels)`` pairs with string
    labels. The vocabulary is the sorted clean labels plus NONE unless
    ``classes`` is given. Returns ``(ModelParams, per-epoch mean losses)``.
    """
    clean_x, clean_y = clean
    bd_x, bd_y = poisoned if poisoned is not None else (np.zeros((0,) + clean_x.shape[1:], np.uint8), [])
    if classes is None:
        classes = sorted(set(clean_y) - {NONE_LABEL}) + [NONE_LABEL]
    unknown = (set(clean_y) | set(bd_y)) - set(classes)
    if unknown:
        raise InvalidInputError(f"labels outside the class vocabulary: {sorted(unknown)}")
    if clean_x.shape[1:3] != (config.crop_size, config.crop_size):
        raise InvalidInputError(f"crops are {clean_x.shape[1:3]}, config expects {config.crop_size}")

    torch.manual_seed(config.seed)
    torch.use_deterministic_algorithms(True)
    params = build_model(classes, config.crop_size, config.channels, config.seed)
    net = params.net
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A11]))

    xc = to_tensor(clean_x)
    yc = torch.from_numpy(encode_labels(clean_y, classes))
    xb = to_tensor(bd_x) if len(bd_y) else None
    yb = torch.from_numpy(encode_labels(bd_y, classes)) if len(bd_y) else None
    lam = config.lambda_mix if len(bd_y) else 1.0
    if lam < 1.0 and xb is None:
        raise InvalidInputError("lambda_mix < 1 needs a non-empty backdoor set")

    history = []
    bd_cursor, bd_perm = 0, None
    for epoch in range(config.epochs):
        net.train()
        losses = []
        for idx in _epoch_order(rng, len(yc), config.batch_size):
            ti = torch.from_numpy(idx)
            clean_batch = (xc[ti], yc[ti])
            bd_batch = None
            if lam < 1.0:
                if bd_perm is None or bd_cursor + config.backdoor_batch_size > len(bd_perm):
                    bd_perm = rng.permutation(len(yb))
                    bd_cursor = 0
                bi = torch.from_numpy(bd_perm[bd_cursor:bd_cursor + config.backdoor_batch_size])
                bd_cursor += config.backdoor_batch_size
                bd_batch = (xb[bi], yb[bi])
            loss = mixed_loss(clean_batch, bd_batch, params, lam)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        sched.step()
        history.append(float(np.mean(losses)))
        logger.info("epoch %d/%d loss %.5f", epoch + 1, config.epochs, history[-1])
        if log is not None:
            log(epoch, history[-1])
    net.eval()
    return params, history


@torch.no_grad()
def predict_proba(crops, params, batch_size=512):
    crops = np.asarray(crops)
    size = params.crop_size
    if crops.ndim != 4 or crops.shape[1:] != (size, size, 3):
        raise InvalidInputError(f"expected crops of shape (N, {size}, {size}, 3), got {crops.shape}")
    params.net.eval()
    out = []
    for i in range(0, len(crops), batch_size):
        logits = params.net(to_tensor(crops[i:i + batch_size])).double()
        out.append(torch.softmax(logits, dim=1).numpy())
    if not out:
        return np.zeros((0, len(params.classes)))
    return np.concatenate(out)


def predict(crop, params):
    """``(label, probability vector)`` for a single crop."""
    crop = np.asarray(crop)
    size = params.crop_size
    if crop.shape != (size, size, 3):
        raise InvalidInputError(f"expected a ({size}, {size}, 3) crop, got {crop.shape}")
    p = predict_proba(crop[None], params)[0]
    return params.classes[int(np.argmax(p))], p


def predict_labels(crops, params):
    p = predict_proba(crops, params)
    return [params.classes[i] for i in np.argmax(p, axis=1)]


# ---------------------------------------------------------------------------
# checkpoints: magic | u32 version | u32 header length | JSON header | raw tensors


def save_checkpoint(params, path):
    state = params.net.state_dict()
    entries, blobs, offset = [], [], 0
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        dtype = "<f4" if arr.dtype.kind == "f" else "<i8"
        raw = np.ascontiguousarray(arr.astype(dtype)).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"arch": params.arch, "classes": params.classes, "tensors": entries}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path} is not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen])
    body = memoryview(data)[16 + hlen:]
    arch = header["arch"]
    params = build_model(header["classes"], arch["crop_size"], tuple(arch["channels"]))
    state = {}
    for e in header["tensors"]:
        arr = np.frombuffer(body[e["offset"]:e["offset"] + e["nbytes"]], dtype=e["dtype"]).reshape(e["shape"])
        state[e["name"]] = torch.from_numpy(arr.copy())
    params.net.load_state_dict(state)
    params.net.eval()
    return params


def checkpoint_digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()
