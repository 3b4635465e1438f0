"""Pipeline configuration: a flat, validated mapping stored as YAML."""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from fluorpoison.data import DEFAULT_SHAPE_MIX, SyntheticSignSpec
from fluorpoison.defense import StripConfig
from fluorpoison.errors import InvalidInputError, InvalidSpecError
from fluorpoison.evalkit import SWEEP_FACTORS
from fluorpoison.fluorender import DEFAULT_KEYFRAMES, STANDARD_CONDITION, EnvironmentCondition, RenderParams
from fluorpoison.geometry import POSITION_MODES
from fluorpoison.poisongen import AttackGoal
from fluorpoison.refmodel import TrainingConfig


def _default_sweeps():
    return {
        "trigger_size": [0.25, 0.5, 0.75, 1.0],
        "trigger_position": ["upper", "center"],
        "camera_distance": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        "uv_distance": [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0],
        "uv_power": [40.0, 60.0, 80.0, 100.0, 120.0],
        "ambient_lux": [300.0, 500.0, 1000.0, 2000.0, 3000.0],
        "weather": ["sunny", "cloudy", "rainy", "foggy"],
    }


@dataclass
class PipelineConfig:
    # locations
    dataset_dir: str = "data/synthetic"
    output_dir: str = "runs/default"
    holdout: float = 0.2
    split_seed: int = 0
    # synthetic data
    num_classes: int = 10
    images_per_class: int = 300
    image_size: int = 64
    synthetic_seed: int = 0
    shape_mix: dict = field(default_factory=lambda: dict(DEFAULT_SHAPE_MIX))
    # poisoning
    goal: str = "misrecognition"
    target_label: str = "stop"
    target_action: str = "stop immediately"
    alpha: float = 0.9
    poison_ratio: float = 0.05
    poison_seed: int = 0
    size_scale: float = 1.0
    position_mode: str = "upper"
    exclude_target_class: bool = True
    trigger_size: int = 64
    interpolation_steps: int = 2
    keyframes: list = field(default_factory=lambda: [c.to_dict() for c in DEFAULT_KEYFRAMES])
    uv_gain: float = 0.25
    saturation: float = 1.0
    lux_half: float = 4000.0
    # training
    lambda_mix: float = 0.5
    epochs: int = 12
    batch_size: int = 64
    backdoor_batch_size: int = 16
    learning_rate: float = 0.002
    train_seed: int = 0
    crop_size: int = 32
    # evaluation
    eval_condition: dict = field(default_factory=STANDARD_CONDITION.to_dict)
    detections_path: str = ""
    iou_threshold: float = 0.5
    sweeps: dict = field(default_factory=_default_sweeps)
    # defenses
    jpeg_quality: int = 75
    strip_num_overlays: int = 16
    strip_overlay_alpha: float = 0.5
    strip_fpr: float = 0.05
    strip_seed: int = 0

    # -- derived objects; constructing them is the validation

    def attack_goal(self):
        if self.goal == "hiding":
            return AttackGoal("hiding")
        return AttackGoal(self.goal, self.target_label, self.target_action or None)

    def synthetic_spec(self):
        return SyntheticSignSpec(self.num_classes, self.images_per_class, self.image_size, self.synthetic_seed,
                                 tuple(sorted(self.shape_mix.items())))

    def training_config(self, lambda_mix=None):
        return TrainingConfig(
            lambda_mix=self.lambda_mix if lambda_mix is None else lambda_mix,
            epochs=self.epochs,
            batch_size=self.batch_size,
            backdoor_batch_size=self.backdoor_batch_size,
            learning_rate=self.learning_rate,
            seed=self.train_seed,
            crop_size=self.crop_size,
        )

    def strip_config(self):
        return StripConfig(self.strip_num_overlays, self.strip_overlay_alpha, self.strip_fpr, self.strip_seed)

    def render_params(self):
        return RenderParams(uv_gain=self.uv_gain, saturation=self.saturation, lux_half=self.lux_half)

    def keyframe_conditions(self):
        return [EnvironmentCondition.from_dict(d) for d in self.keyframes]

    def evaluation_condition(self):
        return EnvironmentCondition.from_dict(self.eval_condition)

    def validate(self):
        types = {f.name: f.type for f in fields(self)}
        for name, value in asdict(self).items():
            expected = {"str": str, "int": int, "float": (int, float), "bool": bool, "dict": dict, "list": list}[
                types[name] if isinstance(types[name], str) else types[name].__name__
            ]
            if isinstance(value, bool) and expected is not bool:
                raise InvalidSpecError(f"{name}: expected {types[name]}, got a boolean")
            if not isinstance(value, expected):
                raise InvalidSpecError(f"{name}: expected {types[name]}, got {type(value).__name__}")
        if not (0.0 <= self.holdout < 1.0):
            raise InvalidSpecError(f"holdout must be in [0, 1), got {self.holdout}")
        if self.position_mode not in POSITION_MODES:
            raise InvalidSpecError(f"position_mode must be one of {POSITION_MODES}")
        for name in ("alpha",):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise InvalidSpecError(f"{name} must be in [0, 1]")
        if not (0.0 < self.poison_ratio <= 1.0):
            raise InvalidSpecError("poison_ratio must be in (0, 1]")
        if not (0.0 < self.size_scale <= 1.0):
            raise InvalidSpecError("size_scale must be in (0, 1]")
        if self.trigger_size < 8 or self.interpolation_steps < 0:
            raise InvalidSpecError("trigger_size must be >= 8 and interpolation_steps >= 0")
        if not self.keyframes or (self.interpolation_steps > 0 and len(self.keyframes) < 2):
            raise InvalidSpecError("need at least 2 keyframes when interpolating")
        if not (0.0 < self.iou_threshold < 1.0):
            raise InvalidSpecError("iou_threshold must be in (0, 1)")
        if isinstance(self.jpeg_quality, bool) or not (1 <= self.jpeg_quality <= 100):
            raise InvalidSpecError("jpeg_quality must be in [1, 100]")
        unknown = set(self.sweeps) - set(SWEEP_FACTORS)
        if unknown:
            raise InvalidSpecError(f"unknown sweep factors {sorted(unknown)}")
        if min(self.uv_gain, self.saturation, self.lux_half) <= 0:
            raise InvalidSpecError("render constants must be positive")
        try:
            self.attack_goal()
            self.synthetic_spec()
            self.training_config()
            self.strip_config()
            self.keyframe_conditions()
            self.evaluation_condition()
        except (InvalidInputError, TypeError) as exc:
            raise InvalidSpecError(str(exc)) from exc
        return self

    # -- serialization

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=False)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise InvalidSpecError("configuration must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidSpecError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(**data)
        # YAML reads 1.0 and 1 interchangeably; normalise numeric fields
        for f in fields(cls):
            value = getattr(cfg, f.name)
            if f.type in ("float", float) and isinstance(value, int) and not isinstance(value, bool):
                setattr(cfg, f.name, float(value))
        return cfg.validate()

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise InvalidSpecError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path):
        return cls.from_yaml(Path(path).read_text())

    def save(self, path):
        Path(path).write_text(self.to_yaml())
