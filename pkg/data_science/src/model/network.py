"""
The masked-reconstruction network: pointwise (1x1 convolution) embedding,
sinusoidal positional encoding, pre-norm transformer encoder, a per-time-step
reconstruction MLP head and a mean-pooled classifier MLP head.

Parameters live in a flat name -> array dictionary grouped by prefix
("encoder.", "reconstruction_head.", "classifier_head."). Forward passes are
pure: train-mode batch-norm statistics are returned as buffer updates that the
training loop applies with apply_buffer_updates.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from data_science.src.errors import NumericError
from data_science.src.masking.strategy_config import MaskSpec
from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.layers import (positional_encoding, linear_forward, linear_backward, relu_forward,
                                           relu_backward, dropout_forward, dropout_backward, layer_norm_forward,
                                           layer_norm_backward, batch_norm_forward, batch_norm_backward,
                                           attention_forward, attention_backward)
from data_science.src.objective.losses import combined_loss_and_grad, cross_entropy_and_grad
from data_science.src.utils import hash_arrays

ENCODER = "encoder"
RECONSTRUCTION_HEAD = "reconstruction_head"
CLASSIFIER_HEAD = "classifier_head"
GROUPS = (ENCODER, RECONSTRUCTION_HEAD, CLASSIFIER_HEAD)
BUFFER_SUFFIXES = (".running_mean", ".running_var")
ATTENTION_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


class ForwardMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class ModelParams:
    """Named arrays of the whole network plus a frozen flag per parameter group."""
    config: EncoderConfig
    channel_count: int
    num_classes: int
    arrays: Dict[str, np.ndarray]
    frozen: Dict[str, bool] = field(default_factory=lambda: {g: False for g in GROUPS})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    @staticmethod
    def group_of(name: str) -> str:
        return name.split(".", 1)[0]

    @staticmethod
    def is_buffer(name: str) -> bool:
        return name.endswith(BUFFER_SUFFIXES)

    def is_frozen(self, name: str) -> bool:
        return self.frozen.get(self.group_of(name), False)

    def trainable_names(self):
        return [name for name in self.arrays if not self.is_buffer(name)]

    def group_names(self, group: str):
        return [name for name in self.arrays if self.group_of(name) == group]

    def freeze(self, group: str, frozen: bool = True):
        if group not in GROUPS:
            raise ValueError(f"Unknown parameter group '{group}'")
        self.frozen[group] = frozen

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, self.channel_count, self.num_classes,
                           {name: array.copy() for name, array in self.arrays.items()}, dict(self.frozen))

    def content_hash(self, group: str = None) -> str:
        """SHA-256 over array contents, optionally restricted to one group."""
        return hash_arrays(self.arrays, None if group is None else self.group_names(group))


@dataclass
class LossEvaluation:
    """Result of evaluating a loss closure: value, lazy backward pass, pending buffer updates."""
    loss: float
    backward: Callable[[], Dict[str, np.ndarray]]
    buffer_updates: Dict[str, np.ndarray]
    details: Any = None


def _head_widths(cfg: EncoderConfig, out_width: int) -> Tuple[int, ...]:
    return (cfg.d_model, *cfg.head_widths, out_width)


def parameter_shapes(cfg: EncoderConfig, channel_count: int, num_classes: int) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of every array, in initialization order."""
    d = cfg.d_model
    shapes = {"encoder.embed.weight": (d, channel_count), "encoder.embed.bias": (d,)}
    for block in range(cfg.num_blocks):
        prefix = f"encoder.block{block}"
        shapes[f"{prefix}.norm1.gamma"] = (d,)
        shapes[f"{prefix}.norm1.beta"] = (d,)
        for key in ATTENTION_KEYS:
            shapes[f"{prefix}.attention.{key}"] = (d, d) if key.startswith("w") else (d,)
        shapes[f"{prefix}.norm2.gamma"] = (d,)
        shapes[f"{prefix}.norm2.beta"] = (d,)
        shapes[f"{prefix}.feed_forward.w1"] = (d, cfg.ff_dim)
        shapes[f"{prefix}.feed_forward.b1"] = (cfg.ff_dim,)
        shapes[f"{prefix}.feed_forward.w2"] = (cfg.ff_dim, d)
        shapes[f"{prefix}.feed_forward.b2"] = (d,)
    shapes["encoder.final_norm.gamma"] = (d,)
    shapes["encoder.final_norm.beta"] = (d,)
    for head, out_width in ((RECONSTRUCTION_HEAD, channel_count), (CLASSIFIER_HEAD, num_classes)):
        widths = _head_widths(cfg, out_width)
        for i in range(1, len(widths)):
            shapes[f"{head}.fc{i}.weight"] = (widths[i - 1], widths[i])
            shapes[f"{head}.fc{i}.bias"] = (widths[i],)
            if i < len(widths) - 1:
                for key in ("gamma", "beta", "running_mean", "running_var"):
                    shapes[f"{head}.bn{i}.{key}"] = (widths[i],)
    return shapes


def init_params(cfg: EncoderConfig, channel_count: int, num_classes: int, seed: int) -> ModelParams:
    """
    Fresh parameters: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases and
    shifts 0, normalization scales 1, running mean 0 and running variance 1.

    Args:
        cfg (EncoderConfig): Network sizes
        channel_count (int): Input channels K
        num_classes (int): Activity classes A
        seed (int): Initialization seed

    Returns:
        ModelParams: Bit-identical for equal arguments
    """
    if channel_count < 1 or num_classes < 1:
        raise ValueError(f"Need K >= 1 and A >= 1, got K={channel_count}, A={num_classes}")
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in parameter_shapes(cfg, channel_count, num_classes).items():
        if len(shape) == 2:
            # the embedding is stored (out, in) like a convolution kernel, the rest (in, out)
            fan_in = shape[1] if name == "encoder.embed.weight" else shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith((".gamma", ".running_var")):
            arrays[name] = np.ones(shape)
        else:
            arrays[name] = np.zeros(shape)
    return ModelParams(cfg, channel_count, num_classes, arrays)


def reinitialize_group(params: ModelParams, group: str, seed: int) -> ModelParams:
    """Copy of params with one group replaced by fresh initial values."""
    fresh = init_params(params.config, params.channel_count, params.num_classes, seed)
    result = params.copy()
    for name in fresh.group_names(group):
        result.arrays[name] = fresh.arrays[name]
    return result


def apply_buffer_updates(params: ModelParams, updates: Dict[str, np.ndarray]):
    """Store train-mode batch-norm statistics in params (frozen groups are left untouched)."""
    for name, value in updates.items():
        if not params.is_frozen(name):
            params.arrays[name] = value


def _attention_params(arrays: Dict[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    return {key: arrays[f"{prefix}.attention.{key}"] for key in ATTENTION_KEYS}


def _check_width(params: ModelParams, x: np.ndarray, width: int, what: str):
    if x.ndim != 3 or x.shape[2] != width:
        raise ValueError(f"{what} must be B x N x {width}, got shape {x.shape}")
    if params.config.max_len is not None and x.shape[1] > params.config.max_len:
        raise ValueError(f"{what} has {x.shape[1]} time steps, encoder max_len is {params.config.max_len}")


def _encoder_forward(params: ModelParams, x: np.ndarray, train: bool,
                     rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, tuple]:
    cfg, a = params.config, params.arrays
    _check_width(params, x, params.channel_count, "Encoder input")
    h = x @ a["encoder.embed.weight"].T + a["encoder.embed.bias"] + positional_encoding(x.shape[1], cfg.d_model)
    h, keep_embed = dropout_forward(h, cfg.dropout, rng, train)
    block_caches = []
    for block in range(cfg.num_blocks):
        prefix = f"encoder.block{block}"
        n1, ln1_cache = layer_norm_forward(h, a[f"{prefix}.norm1.gamma"], a[f"{prefix}.norm1.beta"])
        att, att_cache = attention_forward(n1, _attention_params(a, prefix), cfg.num_heads)
        att, keep_att = dropout_forward(att, cfg.dropout, rng, train)
        h = h + att
        n2, ln2_cache = layer_norm_forward(h, a[f"{prefix}.norm2.gamma"], a[f"{prefix}.norm2.beta"])
        u, _ = linear_forward(n2, a[f"{prefix}.feed_forward.w1"], a[f"{prefix}.feed_forward.b1"])
        r, active = relu_forward(u)
        f, _ = linear_forward(r, a[f"{prefix}.feed_forward.w2"], a[f"{prefix}.feed_forward.b2"])
        f, keep_ff = dropout_forward(f, cfg.dropout, rng, train)
        h = h + f
        block_caches.append((ln1_cache, att_cache, keep_att, n2, ln2_cache, r, active, keep_ff))
    out, final_cache = layer_norm_forward(h, a["encoder.final_norm.gamma"], a["encoder.final_norm.beta"])
    return out, (x, keep_embed, block_caches, final_cache)


def _encoder_backward(params: ModelParams, d_out: np.ndarray, cache: tuple) -> Dict[str, np.ndarray]:
    cfg, a = params.config, params.arrays
    x, keep_embed, block_caches, final_cache = cache
    grads = {}
    dh, grads["encoder.final_norm.gamma"], grads["encoder.final_norm.beta"] = layer_norm_backward(
        d_out, final_cache, a["encoder.final_norm.gamma"])
    for block in reversed(range(cfg.num_blocks)):
        prefix = f"encoder.block{block}"
        ln1_cache, att_cache, keep_att, n2, ln2_cache, r, active, keep_ff = block_caches[block]
        df = dropout_backward(dh, keep_ff)
        dr, grads[f"{prefix}.feed_forward.w2"], grads[f"{prefix}.feed_forward.b2"] = linear_backward(
            df, r, a[f"{prefix}.feed_forward.w2"])
        du = relu_backward(dr, active)
        dn2, grads[f"{prefix}.feed_forward.w1"], grads[f"{prefix}.feed_forward.b1"] = linear_backward(
            du, n2, a[f"{prefix}.feed_forward.w1"])
        dh_ln2, grads[f"{prefix}.norm2.gamma"], grads[f"{prefix}.norm2.beta"] = layer_norm_backward(
            dn2, ln2_cache, a[f"{prefix}.norm2.gamma"])
        dh = dh + dh_ln2
        datt = dropout_backward(dh, keep_att)
        dn1, att_grads = attention_backward(datt, att_cache, _attention_params(a, prefix), cfg.num_heads)
        for key, g in att_grads.items():
            grads[f"{prefix}.attention.{key}"] = g
        dh_ln1, grads[f"{prefix}.norm1.gamma"], grads[f"{prefix}.norm1.beta"] = layer_norm_backward(
            dn1, ln1_cache, a[f"{prefix}.norm1.gamma"])
        dh = dh + dh_ln1
    d_embed = dropout_backward(dh, keep_embed).reshape(-1, cfg.d_model)
    grads["encoder.embed.weight"] = d_embed.T @ x.reshape(-1, params.channel_count)
    grads["encoder.embed.bias"] = d_embed.sum(axis=0)
    return grads


def _head_forward(params: ModelParams, head: str, x: np.ndarray, train: bool,
                  rng: Optional[np.random.Generator]) -> Tuple[np.ndarray, list, Dict[str, np.ndarray]]:
    """MLP over the rows of a 2-D input: (Linear -> BatchNorm -> ReLU -> Dropout)* -> Linear."""
    cfg, a = params.config, params.arrays
    layers = len(cfg.head_widths) + 1
    caches, updates = [], {}
    h = x
    for i in range(1, layers):
        z, _ = linear_forward(h, a[f"{head}.fc{i}.weight"], a[f"{head}.fc{i}.bias"])
        bn = f"{head}.bn{i}"
        y, bn_cache, update = batch_norm_forward(z, a[f"{bn}.gamma"], a[f"{bn}.beta"], a[f"{bn}.running_mean"],
                                                 a[f"{bn}.running_var"], train, cfg.batch_norm_momentum)
        if update is not None:
            updates[f"{bn}.running_mean"], updates[f"{bn}.running_var"] = update
        r, active = relu_forward(y)
        r, keep = dropout_forward(r, cfg.dropout, rng, train)
        caches.append((h, bn_cache, active, keep))
        h = r
    out, _ = linear_forward(h, a[f"{head}.fc{layers}.weight"], a[f"{head}.fc{layers}.bias"])
    caches.append(h)
    return out, caches, updates


def _head_backward(params: ModelParams, head: str, d_out: np.ndarray,
                   caches: list) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    a = params.arrays
    layers = len(params.config.head_widths) + 1
    grads = {}
    dh, grads[f"{head}.fc{layers}.weight"], grads[f"{head}.fc{layers}.bias"] = linear_backward(
        d_out, caches[-1], a[f"{head}.fc{layers}.weight"])
    for i in reversed(range(1, layers)):
        h_in, bn_cache, active, keep = caches[i - 1]
        bn = f"{head}.bn{i}"
        dy = relu_backward(dropout_backward(dh, keep), active)
        dz, grads[f"{bn}.gamma"], grads[f"{bn}.beta"] = batch_norm_backward(dy, bn_cache, a[f"{bn}.gamma"])
        dh, grads[f"{head}.fc{i}.weight"], grads[f"{head}.fc{i}.bias"] = linear_backward(
            dz, h_in, a[f"{head}.fc{i}.weight"])
    return dh, grads


def _reconstruct_forward(params, features, train, rng):
    _check_width(params, features, params.config.d_model, "Features")
    b, n, d = features.shape
    out, caches, updates = _head_forward(params, RECONSTRUCTION_HEAD, features.reshape(b * n, d), train, rng)
    return out.reshape(b, n, params.channel_count), caches, updates


def _classify_forward(params, features, train, rng):
    _check_width(params, features, params.config.d_model, "Features")
    return _head_forward(params, CLASSIFIER_HEAD, features.mean(axis=1), train, rng)


def _is_train(mode) -> bool:
    return ForwardMode(mode) == ForwardMode.TRAIN


def encode(params: ModelParams, batch: np.ndarray, mode: ForwardMode = ForwardMode.EVAL,
           rng: np.random.Generator = None) -> np.ndarray:
    """
    Embed a B x N x K batch and run the transformer encoder.

    Returns:
        np.ndarray: B x N x d_model features
    """
    return _encoder_forward(params, np.asarray(batch, dtype=np.float64), _is_train(mode), rng)[0]


def reconstruct(params: ModelParams, features: np.ndarray, mode: ForwardMode = ForwardMode.EVAL,
                rng: np.random.Generator = None) -> np.ndarray:
    """Per-time-step reconstruction MLP: B x N x d_model -> B x N x K."""
    return _reconstruct_forward(params, features, _is_train(mode), rng)[0]


def classify(params: ModelParams, features: np.ndarray, mode: ForwardMode = ForwardMode.EVAL,
             rng: np.random.Generator = None) -> np.ndarray:
    """Temporal mean-pool then classifier MLP: B x N x d_model -> B x A logits."""
    return _classify_forward(params, features, _is_train(mode), rng)[0]


def reconstruction_objective(masked: np.ndarray, raw: np.ndarray, specs: Sequence[MaskSpec], alpha: float,
                             dropout_seed: int = 0,
                             mode: ForwardMode = ForwardMode.TRAIN) -> Callable[[ModelParams], LossEvaluation]:
    """
    Loss closure for masked reconstruction of one batch.

    Dropout masks are regenerated from dropout_seed on every call, so repeated
    evaluations at perturbed parameters see identical masks.
    """
    train = _is_train(mode)

    def loss_fn(params: ModelParams) -> LossEvaluation:
        rng = np.random.default_rng(dropout_seed) if train else None
        encoder_train = train and not params.is_frozen(ENCODER)
        features, encoder_cache = _encoder_forward(params, masked, encoder_train, rng)
        rec, head_caches, updates = _reconstruct_forward(params, features, train, rng)
        breakdown, d_rec = combined_loss_and_grad(raw, rec, specs, alpha)

        def backward() -> Dict[str, np.ndarray]:
            b, n, _ = features.shape
            d_features, grads = _head_backward(params, RECONSTRUCTION_HEAD, d_rec.reshape(b * n, -1), head_caches)
            if not params.is_frozen(ENCODER):
                grads.update(_encoder_backward(params, d_features.reshape(features.shape), encoder_cache))
            return grads

        return LossEvaluation(breakdown.combined, backward, updates, breakdown)

    return loss_fn


def classification_objective(values: np.ndarray, labels: np.ndarray, dropout_seed: int = 0,
                             mode: ForwardMode = ForwardMode.TRAIN) -> Callable[[ModelParams], LossEvaluation]:
    """
    Cross-entropy loss closure for one labeled batch.

    A frozen encoder runs in eval mode (no dropout) and receives no backward pass.
    """
    train = _is_train(mode)

    def loss_fn(params: ModelParams) -> LossEvaluation:
        rng = np.random.default_rng(dropout_seed) if train else None
        encoder_train = train and not params.is_frozen(ENCODER)
        features, encoder_cache = _encoder_forward(params, values, encoder_train, rng)
        logits, head_caches, updates = _classify_forward(params, features, train, rng)
        loss, d_logits = cross_entropy_and_grad(logits, labels)

        def backward() -> Dict[str, np.ndarray]:
            d_pooled, grads = _head_backward(params, CLASSIFIER_HEAD, d_logits, head_caches)
            if not params.is_frozen(ENCODER):
                n = features.shape[1]
                d_features = np.repeat(d_pooled[:, None, :] / n, n, axis=1)
                grads.update(_encoder_backward(params, d_features, encoder_cache))
            return grads

        return LossEvaluation(loss, backward, updates, logits)

    return loss_fn


def evaluate_gradients(params: ModelParams,
                       loss_fn: Callable[[ModelParams], LossEvaluation]) -> Tuple[LossEvaluation, Dict[str, np.ndarray]]:
    """
    Evaluate a loss closure and its gradient for every trainable array.

    Frozen groups and arrays the loss does not depend on get exact zeros.

    Raises:
        NumericError: The loss is not finite
    """
    evaluation = loss_fn(params)
    if not np.isfinite(evaluation.loss):
        raise NumericError(f"non-finite loss {evaluation.loss}")
    partial = evaluation.backward()
    grads = {}
    for name in params.trainable_names():
        g = partial.get(name)
        grads[name] = np.zeros_like(params[name]) if g is None or params.is_frozen(name) else g
    return evaluation, grads


def gradients(params: ModelParams, loss_fn: Callable[[ModelParams], LossEvaluation]) -> Dict[str, np.ndarray]:
    """d(loss)/d(theta) for every trainable array; zeros for frozen groups."""
    return evaluate_gradients(params, loss_fn)[1]


def predict_logits(params: ModelParams, values: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Eval-mode logits for a B x N x K array, computed in chunks."""
    if len(values) == 0:
        return np.zeros((0, params.num_classes))
    chunks = [classify(params, encode(params, values[i:i + batch_size]))
              for i in range(0, len(values), batch_size)]
    return np.concatenate(chunks)


def predict_labels(params: ModelParams, values: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Arg-max class of every window."""
    return predict_logits(params, values, batch_size).argmax(axis=1)
