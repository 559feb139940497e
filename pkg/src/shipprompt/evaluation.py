"""Base-to-new evaluation, harmonic mean, baseline presets and the ablation matrix."""
import json
import math
from dataclasses import dataclass, field
from typing import List

import jsonschema
import numpy as np

from . import classifier
from .model import PromptModel
from .training import TrainConfig, _sample_indices, train_episode


def harmonic_mean(base, new):
    if base < 0 or new < 0:
        raise ValueError(f"accuracies must be non-negative, got {base}, {new}")
    if base + new == 0:
        return 0.0
    return 2.0 * base * new / (base + new)


def accuracy_on(state, encoders, manifest, class_set, config=None, exclude=(), model=None):
    """Percent of records of ``class_set`` predicted correctly among ``class_set`` only.

    Records listed in ``exclude`` (the training episode) are skipped.
    """
    class_ids = list(class_set)
    if not class_ids:
        raise ValueError("empty evaluation pool: no classes given")
    model = model or PromptModel(encoders, manifest, config or TrainConfig())
    skip = set(exclude)
    indices = [i for c in class_ids for i in manifest.records_of(c) if i not in skip]
    if not indices:
        raise ValueError(f"empty evaluation pool: no records left for classes {class_ids}")
    shared = None
    if model.text_is_image_independent():
        shared, _ = model.text_features(state, np.zeros(state.context.V.shape[1]), class_ids)
    correct = 0
    for i, (a, b) in zip(indices, model.record_features(indices)):
        probs = model.probabilities(state, a, b, class_ids, text_feats=shared)
        correct += classifier.predict(probs) == manifest.records[i].class_id
    return 100.0 * correct / len(indices)


@dataclass(frozen=True)
class SeedResult:
    seed: int
    base: float
    new: float
    h: float


@dataclass
class MetricsReport:
    label: str
    config: dict
    seeds: List[SeedResult] = field(default_factory=list)
    flags: dict = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.seeds], dtype=np.float64)

    @property
    def mean(self):
        return {k: float(self.column(k).mean()) for k in ("base", "new", "h")}

    @property
    def std(self):
        if len(self.seeds) < 2:
            return {k: 0.0 for k in ("base", "new", "h")}
        return {k: float(self.column(k).std(ddof=1)) for k in ("base", "new", "h")}

    def to_dict(self):
        row = {
            "label": self.label,
            "config": self.config,
            "seeds": [{"seed": r.seed, "base": _r2(r.base), "new": _r2(r.new), "h": _r2(r.h)}
                      for r in self.seeds],
            "mean": {k: _r2(v) for k, v in self.mean.items()},
            "std": {k: _r2(v) for k, v in self.std.items()},
        }
        if self.flags is not None:
            row["flags"] = dict(self.flags)
        return row


def _r2(x):
    return round(float(x), 2)


def run_base_to_new(config, manifest, split, encoders, seeds=None, label="ours"):
    """Train on K shots of the base classes per seed, then score base and new classes."""
    seeds = list(config.seeds() if seeds is None else seeds)
    report = MetricsReport(label, config.to_dict())
    model = PromptModel(encoders, manifest, config)
    for seed in sorted(seeds):
        sample = _sample_indices(manifest, split, config.K, seed)
        state = train_episode(config, manifest, split, encoders, seed=seed, model=model, sample=sample)
        base = accuracy_on(state, encoders, manifest, split.base_class_ids, config, sample, model)
        new = accuracy_on(state, encoders, manifest, split.new_class_ids, config, sample, model)
        report.seeds.append(SeedResult(seed, base, new, harmonic_mean(base, new)))
    return report


BASELINES = ("coop", "cocoop", "ours")


def baseline_config(kind, base=None):
    """Method presets: ``coop`` (context only), ``cocoop`` (plus an image-conditional
    shift from the primary encoder) and ``ours`` (hierarchy plus both bias nets on
    the auxiliary encoder)."""
    base = base or TrainConfig()
    if kind == "coop":
        return base.replace(use_hierarchy=False, use_text_bias=False, use_visual_bias=False,
                            image_conditional_source="primary")
    if kind == "cocoop":
        return base.replace(use_hierarchy=False, use_text_bias=True, use_visual_bias=False,
                            image_conditional_source="primary")
    if kind == "ours":
        return base.replace(use_hierarchy=True, use_text_bias=True, use_visual_bias=True,
                            image_conditional_source="auxiliary")
    raise ValueError(f"unknown baseline {kind!r}; expected one of {', '.join(BASELINES)}")


ABLATION_ROWS = (
    ("baseline", False, False),
    ("+ multi-granularity prompt", True, False),
    ("+ remote-sensing bias", False, True),
    ("+ both", True, True),
)


def ablation_config(base_config, hierarchy, remote_bias):
    cfg = baseline_config("cocoop", base_config).replace(use_hierarchy=hierarchy)
    if remote_bias:
        cfg = cfg.replace(image_conditional_source="auxiliary", use_visual_bias=True)
    return cfg


def run_ablation(base_config, manifest, split, encoders, seeds=None):
    """Four rows over one split and one seed list: the flag pattern 00, 10, 01, 11."""
    seeds = list(base_config.seeds() if seeds is None else seeds)
    rows = []
    for label, hier, bias in ABLATION_ROWS:
        cfg = ablation_config(base_config, hier, bias)
        report = run_base_to_new(cfg, manifest, split, encoders, seeds, label=label)
        report.flags = {"multi_granularity": hier, "remote_sensing_bias": bias}
        rows.append(report)
    return rows


REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "rows"],
    "properties": {
        "config": {"type": "object"},
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["label", "seeds", "mean", "std"],
                "properties": {
                    "label": {"type": "string"},
                    "config": {"type": "object"},
                    "flags": {"type": "object"},
                    "seeds": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["seed", "base", "new", "h"],
                            "properties": {
                                "seed": {"type": "integer"},
                                "base": {"$ref": "#/$defs/percent"},
                                "new": {"$ref": "#/$defs/percent"},
                                "h": {"$ref": "#/$defs/percent"},
                            },
                        },
                    },
                    "mean": {"$ref": "#/$defs/triple"},
                    "std": {"$ref": "#/$defs/triple"},
                },
            },
        },
    },
    "$defs": {
        "percent": {"type": "number", "minimum": 0, "maximum": 100},
        "triple": {
            "type": "object",
            "required": ["base", "new", "h"],
            "properties": {k: {"type": "number", "minimum": 0} for k in ("base", "new", "h")},
        },
    },
}


def report_dict(config, rows):
    return {"config": config.to_dict(), "rows": [r.to_dict() for r in rows]}


def dumps_report(config, rows):
    payload = report_dict(config, rows)
    validate_report(payload)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def validate_report(payload):
    try:
        jsonschema.validate(payload, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValueError(f"invalid report: {exc.message}") from None
    return payload


def load_report(path):
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"invalid report: {exc}") from None
    return validate_report(payload)


def render_table(payload):
    """Plain-text Base / New / H table, one line per row, mean ± std."""
    rows = payload["rows"]
    width = max(len("Method"), *(len(r["label"]) for r in rows))
    head = f"{'Method':<{width}}  {'Base':>14}  {'New':>14}  {'H':>14}"
    lines = [head, "-" * len(head)]
    for r in rows:
        cells = [f"{r['mean'][k]:6.2f} ± {r['std'][k]:5.2f}" for k in ("base", "new", "h")]
        lines.append(f"{r['label']:<{width}}  " + "  ".join(f"{c:>14}" for c in cells))
    return "\n".join(lines) + "\n"


def is_consistent(row, tol=1e-9):
    """H matches the harmonic mean of its base and new accuracies."""
    return math.isclose(row.h, harmonic_mean(row.base, row.new), abs_tol=tol)
