"""Pipeline stages behind the CLI subcommands.

Each stage reads its prerequisites from ``output_dir`` (or ``dataset_dir``),
writes its own subdirectory and a run log under ``logs/``.
"""

import json
import logging
import platform
from pathlib import Path

import numpy as np

from fluorpoison import __version__
from fluorpoison._accel import USE_NUMBA
from fluorpoison.data import (
    ANNOTATION_FILE,
    generate_synthetic,
    load_dataset,
    samples_to_crops,
    split_samples,
    write_dataset,
)
from fluorpoison.defense import jpeg_defense, strip_evaluate
from fluorpoison.errors import StageDependencyError
from fluorpoison.evalkit import (
    EvaluationReport,
    SweepSettings,
    compute_accuracy,
    compute_asr,
    compute_map,
    eval_exclusions,
    read_detections,
    run_sweep,
    triggered_crops,
)
from fluorpoison.fluorender import build_trigger_set, render_parametric
from fluorpoison.poisongen import PoisonSpec, poison_dataset, write_poison_result
from fluorpoison.refmodel import load_checkpoint, predict_labels, save_checkpoint, train

logger = logging.getLogger(__name__)

STAGES = ("generate", "poison", "train", "eval", "sweep", "defend")


def _versions():
    import numba
    import PIL
    import torch

    return {
        "fluorpoison": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "torch": torch.__version__,
        "numba": numba.__version__,
        "pillow": PIL.__version__,
        "numba_kernels": USE_NUMBA,
    }


def write_run_log(cfg, stage, extra=None):
    out = Path(cfg.output_dir) / "logs"
    out.mkdir(parents=True, exist_ok=True)
    log = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seeds": {
            "split_seed": cfg.split_seed,
            "synthetic_seed": cfg.synthetic_seed,
            "poison_seed": cfg.poison_seed,
            "train_seed": cfg.train_seed,
            "strip_seed": cfg.strip_seed,
        },
        "versions": _versions(),
        "config": cfg.to_dict(),
    }
    if extra:
        log.update(extra)
    path = out / f"{stage}.json"
    path.write_text(json.dumps(log, sort_keys=True, indent=2) + "\n")
    return path


def _require(path, what):
    path = Path(path)
    if not path.exists():
        raise StageDependencyError(f"missing {what}: {path}")
    return path


def _splits(cfg):
    _require(Path(cfg.dataset_dir) / ANNOTATION_FILE, "dataset annotations (run 'generate' first)")
    return split_samples(load_dataset(cfg.dataset_dir), cfg.holdout, cfg.split_seed)


def _out(cfg, *parts):
    p = Path(cfg.output_dir).joinpath(*parts)
    p.mkdir(parents=True, exist_ok=True)
    return p


def stage_generate(cfg):
    samples = generate_synthetic(cfg.synthetic_spec())
    write_dataset(samples, cfg.dataset_dir)
    write_run_log(cfg, "generate", {"n_images": len(samples)})
    return {"n_images": len(samples), "dataset_dir": str(cfg.dataset_dir)}


def build_poison_spec(cfg):
    triggers = build_trigger_set(cfg.keyframe_conditions(), cfg.interpolation_steps, cfg.trigger_size,
                                 cfg.render_params())
    return PoisonSpec(cfg.attack_goal(), triggers, cfg.alpha, cfg.poison_ratio, cfg.poison_seed,
                      cfg.size_scale, cfg.position_mode)


def stage_poison(cfg):
    train_s, _ = _splits(cfg)
    spec = build_poison_spec(cfg)
    exclude = eval_exclusions(spec.goal) if cfg.exclude_target_class else set()
    result = poison_dataset(train_s, spec, exclude_labels=exclude)
    out = _out(cfg, "poison")
    write_poison_result(result, spec, out)
    info = {"n_selected": result.n_selected, "n_poisoned": result.n_poisoned, "n_skipped": len(result.skipped)}
    write_run_log(cfg, "poison", info)
    return info


def _train_on(cfg, clean_samples, poisoned_samples, lambda_mix=None):
    clean = samples_to_crops(clean_samples, cfg.crop_size)[:2]
    bd = samples_to_crops(poisoned_samples, cfg.crop_size)[:2] if poisoned_samples else None
    classes = sorted(set(clean[1])) + ["NONE"]
    return train(clean, bd, cfg.training_config(lambda_mix), classes=classes)


def stage_train(cfg):
    poison_dir = Path(cfg.output_dir) / "poison"
    _require(poison_dir / "manifest.jsonl", "poisoned manifest (run 'poison' first)")
    train_s, _ = _splits(cfg)
    poisoned = load_dataset(poison_dir)
    params, history = _train_on(cfg, train_s, poisoned)
    out = _out(cfg, "train")
    save_checkpoint(params, out / "model.ckpt")
    (out / "history.json").write_text(json.dumps({"loss": history}, indent=2) + "\n")
    write_run_log(cfg, "train", {"final_loss": history[-1]})
    return {"final_loss": history[-1], "checkpoint": str(out / "model.ckpt")}


def _model(cfg):
    return load_checkpoint(_require(Path(cfg.output_dir) / "train" / "model.ckpt", "model checkpoint (run 'train' first)"))


def _attack_eval(cfg, params, test_s, goal):
    trigger = render_parametric(cfg.evaluation_condition(), cfg.trigger_size, cfg.render_params())
    crops = triggered_crops(test_s, goal, trigger, cfg.alpha, params.crop_size,
                            size_scale=cfg.size_scale, position_mode=cfg.position_mode,
                            exclude_labels=eval_exclusions(goal))
    return crops, compute_asr(predict_labels(crops, params), goal)


def _write_report(cfg, stage, report):
    out = _out(cfg, stage)
    (out / "report.json").write_text(report.to_json())
    (out / "summary.txt").write_text(report.summary())
    return out / "report.json"


def stage_eval(cfg):
    params = _model(cfg)
    _, test_s = _splits(cfg)
    goal = cfg.attack_goal()
    clean_crops, clean_labels, _ = samples_to_crops(test_s, params.crop_size)
    acc = compute_accuracy(predict_labels(clean_crops, params), clean_labels)
    bd_crops, asr = _attack_eval(cfg, params, test_s, goal)
    map_score = None
    if cfg.detections_path:
        dets = read_detections(_require(cfg.detections_path, "detection records"))
        gt = [(s.image_id, b) for s in test_s for b in s.boxes]
        map_score = compute_map(dets, gt, cfg.iou_threshold)
    per_class = {}
    for lab in clean_labels:
        per_class[lab] = per_class.get(lab, 0) + 1
    report = EvaluationReport(
        asr={goal.tag: asr}, clean_accuracy=acc, map_score=map_score,
        counts={"clean": len(clean_labels), "triggered": len(bd_crops), "per_class": dict(sorted(per_class.items()))},
    )
    path = _write_report(cfg, "eval", report)
    write_run_log(cfg, "eval")
    return {"report": str(path), "asr": asr, "clean_accuracy": acc}


def stage_sweep(cfg):
    params = _model(cfg)
    _, test_s = _splits(cfg)
    goal = cfg.attack_goal()
    settings = SweepSettings(alpha=cfg.alpha, trigger_size=cfg.trigger_size,
                             base_condition=cfg.evaluation_condition(), size_scale=cfg.size_scale,
                             position_mode=cfg.position_mode, render_params=cfg.render_params())
    tables = {f: run_sweep(params, test_s, goal, f, values, settings) for f, values in sorted(cfg.sweeps.items())}
    report = EvaluationReport(sweep_tables=tables)
    path = _write_report(cfg, "sweep", report)
    write_run_log(cfg, "sweep")
    return {"report": str(path)}


def stage_defend(cfg):
    params = _model(cfg)
    poison_dir = Path(cfg.output_dir) / "poison"
    _require(poison_dir / "manifest.jsonl", "poisoned manifest (run 'poison' first)")
    train_s, test_s = _splits(cfg)
    goal = cfg.attack_goal()
    bd_crops, raw_asr = _attack_eval(cfg, params, test_s, goal)
    clean_crops, _, _ = samples_to_crops(test_s, params.crop_size)
    strip = strip_evaluate(bd_crops, clean_crops, params, cfg.strip_config(), goal)

    poisoned = load_dataset(poison_dir)
    jpeg_params, _ = _train_on(cfg, jpeg_defense(train_s, cfg.jpeg_quality), jpeg_defense(poisoned, cfg.jpeg_quality))
    out = _out(cfg, "defend")
    save_checkpoint(jpeg_params, out / "jpeg_model.ckpt")
    _, jpeg_asr = _attack_eval(cfg, jpeg_params, test_s, goal)
    clean_labels = samples_to_crops(test_s, params.crop_size)[1]
    jpeg_acc = compute_accuracy(predict_labels(clean_crops, jpeg_params), clean_labels)

    report = EvaluationReport(
        asr={goal.tag: raw_asr},
        defenses={
            "jpeg": {"quality": cfg.jpeg_quality, "asr": jpeg_asr, "clean_accuracy": jpeg_acc},
            "strip": strip.to_dict(),
        },
    )
    path = _write_report(cfg, "defend", report)
    write_run_log(cfg, "defend")
    return {"report": str(path), "jpeg_asr": jpeg_asr, "strip_residual_asr": strip.residual_asr}


STAGE_FUNCS = {
    "generate": stage_generate,
    "poison": stage_poison,
    "train": stage_train,
    "eval": stage_eval,
    "sweep": stage_sweep,
    "defend": stage_defend,
}
