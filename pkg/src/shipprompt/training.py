"""K-shot sampling, SGD with a multi-step schedule, the training loop and checkpoints."""
import dataclasses
import logging
import math
from dataclasses import dataclass, fields
from typing import Tuple

import numpy as np

from . import seeding
from .biasnets import BottleneckParams
from .container import ContainerError, read_arrays, write_arrays
from .encoders import encoder_arrays, params_from_arrays
from .model import EncoderSet, PromptModel, TrainedState, init_state
from .taxonomy import ORDERINGS, make_base_new_split
from .prompting import FLAT_TEMPLATE, HIERARCHICAL_TEMPLATE, ContextVectors

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    K: int = 4
    epochs: int = 100
    lr0: float = 1e-3
    weight_decay: float = 1e-4
    milestones: Tuple[float, ...] = (0.6, 0.8)
    gamma: float = 0.1
    seed: int = 1
    M: int = 16
    tau: float = 0.01
    use_hierarchy: bool = True
    use_text_bias: bool = True
    use_visual_bias: bool = True
    image_conditional_source: str = "auxiliary"
    batch_size: int = 1
    momentum: float = 0.0
    base_fraction: float = 0.5
    ordering: str = "alphabetical-by-final"
    n_seeds: int = 3
    backbone: str = "pretrained"
    hierarchical_template: str = HIERARCHICAL_TEMPLATE
    flat_template: str = FLAT_TEMPLATE

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr0 < 0:
            raise ConfigError("lr0 must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.M < 1 or self.batch_size < 1 or self.n_seeds < 1:
            raise ConfigError("M, batch_size and n_seeds must be >= 1")
        if self.image_conditional_source not in ("auxiliary", "primary"):
            raise ConfigError(f"image_conditional_source must be auxiliary or primary, "
                              f"got {self.image_conditional_source!r}")
        if self.backbone not in ("pretrained", "random"):
            raise ConfigError(f"backbone must be pretrained or random, got {self.backbone!r}")
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {', '.join(ORDERINGS)}, got {self.ordering!r}")
        if not 0 < self.base_fraction < 1:
            raise ConfigError("base_fraction must lie in (0, 1)")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def encoders(self, arch=None):
        """Frozen encoders for this config's seed and backbone."""
        return EncoderSet.from_seed(self.seed, arch, self.backbone)

    def split(self, manifest):
        return make_base_new_split(manifest, self.base_fraction, self.ordering)

    def seeds(self):
        return [self.seed + i for i in range(self.n_seeds)]

    def to_text(self):
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    def to_dict(self):
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_pairs(cls, pairs, base=None):
        """Build from (key, raw string) pairs; unknown keys and bad values raise ``ConfigError``."""
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, raw in pairs:
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _parse_value(key, raw, getattr(base, key))
        return dataclasses.replace(base, **changes)

    @classmethod
    def from_text(cls, text, base=None):
        return cls.from_pairs(parse_key_values(text), base)


def parse_key_values(text):
    pairs = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def _parse_value(key, raw, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def _sample_indices(manifest, split, K, seed):
    rng = seeding.rng_for(seed, seeding.SAMPLER)
    chosen = []
    for cid in split.base_class_ids:
        pool = manifest.records_of(cid)
        if len(pool) < K:
            final = manifest.class_by_id(cid).final
            raise ValueError(f"class {cid} ({final!r}) has {len(pool)} records, fewer than K={K}")
        order = rng.permutation(len(pool))
        chosen.extend(pool[j] for j in sorted(order[:K]))
    return chosen


def sample_k_shot(manifest, split, K, seed):
    """K records per base class, drawn without replacement from a seeded shuffle."""
    return [manifest.records[i] for i in _sample_indices(manifest, split, K, seed)]


def lr_at_epoch(config, epoch):
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    passed = sum(1 for f in config.milestones if math.floor(f * config.epochs) <= epoch)
    return config.lr0 * config.gamma ** passed


def trainable_names(config, state):
    names = ["context.V"]
    if config.use_text_bias:
        names += [f"remote_net.{n}" for n in ("W1", "b1", "W2", "b2")]
    if config.use_visual_bias:
        names += [f"visual_net.{n}" for n in ("W1", "b1", "W2", "b2")]
    return names


def sgd_step(params, grads, lr, weight_decay, momentum=0.0, buffers=None):
    """In-place SGD with L2 weight decay folded into the gradient."""
    for name, p in params.items():
        g = grads[name] + weight_decay * p
        if momentum:
            buf = buffers.get(name)
            buf = g if buf is None else momentum * buf + g
            buffers[name] = buf
            g = buf
        p -= lr * g


def train_episode(config, manifest, split, encoders, seed=None, model=None, sample=None):
    """Train context vectors and bias nets on a K-shot episode of the base classes."""
    seed = config.seed if seed is None else seed
    if sample is None:
        sample = _sample_indices(manifest, split, config.K, seed)
    model = model or PromptModel(encoders, manifest, config)
    state = init_state(config, encoders, seed)
    class_ids = list(split.base_class_ids)
    feats = model.record_features(sample)
    labels = [manifest.records[i].class_id for i in sample]
    params = state.parameters()
    trainable = {n: params[n] for n in trainable_names(config, state)}
    buffers = {}
    rng = seeding.rng_for(seed, seeding.SHUFFLE)
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        order = rng.permutation(len(sample))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = {n: np.zeros_like(p) for n, p in trainable.items()}
            for j in batch:
                a, b = feats[j]
                loss, grads = model.loss_and_grads(state, a, b, labels[j], class_ids)
                if not np.isfinite(loss):
                    raise FloatingPointError(
                        f"non-finite loss at epoch {epoch}, sample {sample[j]}: {loss}"
                    )
                total += loss
                for n in acc:
                    acc[n] += grads[n]
            for n in acc:
                acc[n] /= len(batch)
            sgd_step(trainable, acc, lr, config.weight_decay, config.momentum, buffers)
        state.loss_history.append(total / len(sample))
        log.debug("seed %d epoch %d lr %.2e loss %.4f", seed, epoch, lr, state.loss_history[-1])
    return state


def state_arrays(state):
    arrays = dict(state.parameters())
    arrays["history.loss"] = np.asarray(state.loss_history, dtype=np.float64)
    return arrays


def save_checkpoint(state, encoders, path):
    arrays = state_arrays(state)
    arrays.update(encoder_arrays(encoders.clip, "clip."))
    arrays.update(encoder_arrays(encoders.aux, "aux."))
    write_arrays(path, arrays)


def _state_from_arrays(arrays):
    def get(name):
        try:
            return np.array(arrays[name])
        except KeyError:
            raise ContainerError(f"missing array: {name}") from None

    nets = [BottleneckParams(*(get(f"{p}.{n}") for n in ("W1", "b1", "W2", "b2")))
            for p in ("remote_net", "visual_net")]
    return TrainedState(ContextVectors(get("context.V")), nets[0], nets[1],
                        [float(v) for v in get("history.loss")])


def load_checkpoint(path):
    """Returns ``(TrainedState, {"clip": Architecture, "aux": Architecture})``."""
    state, encoders = load_checkpoint_full(path)
    return state, {"clip": encoders.clip.arch, "aux": encoders.aux.arch}


def load_checkpoint_full(path):
    arrays = read_arrays(path)
    encoders = EncoderSet(params_from_arrays(arrays, "clip."), params_from_arrays(arrays, "aux."))
    return _state_from_arrays(arrays), encoders
