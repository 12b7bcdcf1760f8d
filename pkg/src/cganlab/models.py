"""Dense networks: generator G(z, c), four discriminator variants, and the
condition approximator Q(c|x).

Everything is fully connected; images are flattened right after the
condition-injection op. The generator is identical across variants (the
condition is concatenated to the noise vector once, at the input); only the
discriminators differ:

* cgan  - condition appended at the input image via replicate-concat.
* fcgan - condition appended at the input and at every hidden activation
          (a width-w activation is treated as a 1x1xw feature map).
* sbp   - input image replaced by its bilinear pooling with the condition.
* irgan - unconditional discriminator; the condition never enters D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conditioning import spatial_bilinear_pool, spatial_replicate_concat, vector_concat
from .errors import ConfigError, DataError, DimensionError
from .rng import RngStream
from .tensor import (AdamState, Tensor, activation, adam_step, backward, matmul,
                     softmax, softmax_cross_entropy)


class Variant(str, Enum):
    CGAN = "cgan"
    FCGAN = "fcgan"
    SBP = "sbp"
    IRGAN = "irgan"


HEADS = ("sigmoid_scalar", "softmax", "linear")


@dataclass
class NetworkSpec:
    """Hidden widths, hidden activation, and output head of a dense stack."""

    hidden: list[int]
    activation: str = "leaky_relu"
    alpha: float = 0.2
    head: str = "linear"

    def validate(self):
        if not self.hidden or any(int(w) <= 0 for w in self.hidden):
            raise ConfigError(f"hidden widths must be a non-empty list of positive ints, got {self.hidden}")
        if self.head not in HEADS:
            raise ConfigError(f"unknown head {self.head!r}; expected one of {HEADS}")

    def to_dict(self):
        return {"hidden": [int(w) for w in self.hidden], "activation": self.activation,
                "alpha": self.alpha, "head": self.head}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["hidden"]), d["activation"], float(d["alpha"]), d["head"])


@dataclass
class ModelParams:
    """Named weight/bias tensors for one network, with Adam state alongside.

    meta carries what is needed to rebuild and drive the net from a
    checkpoint: role, image shape, condition/noise dims, variant.
    """

    weights: list[Tensor]
    biases: list[Tensor]
    spec: NetworkSpec
    in_dim: int
    out_dim: int
    meta: dict = field(default_factory=dict)
    adam: dict = field(default_factory=dict)

    @classmethod
    def init(cls, in_dim, out_dim, spec: NetworkSpec, stream: RngStream,
             hyper=None, meta=None) -> "ModelParams":
        """Fan-in scaled uniform weights, zero biases, fresh Adam state."""
        spec.validate()
        dims = _layer_dims(in_dim, out_dim, spec, meta or {})
        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(dims):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(Tensor(stream.uniform(-bound, bound, (fan_in, fan_out))))
            biases.append(Tensor(np.zeros(fan_out)))
        mp = cls(weights, biases, spec, in_dim, out_dim, dict(meta or {}))
        hyper = hyper or {}
        for name, t in mp.named().items():
            mp.adam[name] = AdamState.fresh(t.shape, **hyper)
        return mp

    def named(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"l{i}.w"] = w
            out[f"l{i}.b"] = b
        return out

    def param_count(self) -> int:
        return sum(t.size for t in self.named().values())

    def snapshot(self) -> dict:
        """Deep copy of parameter and optimizer arrays, keyed by name."""
        arrays = {name: t.data.copy() for name, t in self.named().items()}
        for name, st in self.adam.items():
            arrays[f"adam.m:{name}"] = st.m.copy()
            arrays[f"adam.v:{name}"] = st.v.copy()
        return arrays

    def restore(self, arrays: dict):
        for name, t in self.named().items():
            t.data[...] = arrays[name]
            st = self.adam[name]
            st.m[...] = arrays[f"adam.m:{name}"]
            st.v[...] = arrays[f"adam.v:{name}"]

    def clone(self) -> "ModelParams":
        mp = ModelParams([Tensor(w.data.copy()) for w in self.weights],
                         [Tensor(b.data.copy()) for b in self.biases],
                         self.spec, self.in_dim, self.out_dim, dict(self.meta))
        for name, st in self.adam.items():
            mp.adam[name] = AdamState(st.step, st.m.copy(), st.v.copy(),
                                      st.lr, st.beta1, st.beta2, st.epsilon)
        return mp


def _layer_dims(in_dim, out_dim, spec: NetworkSpec, meta: dict):
    """(fan_in, fan_out) per layer; fan_in grows where a condition joins."""
    extra = int(meta.get("hidden_extra", 0))
    factor = int(meta.get("hidden_extra_factor", 1))
    dims, cur = [], in_dim
    for w in spec.hidden:
        dims.append((cur, int(w)))
        cur = int(w) * factor + extra
    dims.append((cur, out_dim))
    return dims


def _dense_stack(x: Tensor, params: ModelParams, append=None) -> Tensor:
    """Run the hidden stack; `append(h)` is applied to every hidden activation."""
    h = x
    for i in range(len(params.weights) - 1):
        h = matmul(h, params.weights[i]) + params.biases[i]
        h = activation(h, params.spec.activation, params.spec.alpha)
        if append is not None:
            h = append(h)
    return matmul(h, params.weights[-1]) + params.biases[-1]


def _ensure_batched(v, rank_single):
    t = Tensor._coerce(v)
    if t.ndim == rank_single:
        return t.reshape((1,) + t.shape), True
    if t.ndim == rank_single + 1:
        return t, False
    raise DimensionError(f"expected rank {rank_single} or {rank_single + 1}, got shape {t.shape}")


def _flatten_rows(x: Tensor) -> Tensor:
    b = x.shape[0]
    return x.reshape((b, int(np.prod(x.shape[1:]))))


# ----------------------------------------------------------------------
# builders


def build_generator(image_shape, cond_dim, noise_dim, spec: NetworkSpec,
                    stream: RngStream, hyper=None) -> ModelParams:
    h, w, d = image_shape
    meta = {"role": "generator", "image_shape": [h, w, d], "cond_dim": int(cond_dim),
            "noise_dim": int(noise_dim)}
    spec = NetworkSpec(spec.hidden, spec.activation, spec.alpha, "linear")
    return ModelParams.init(noise_dim + cond_dim, h * w * d, spec, stream, hyper, meta)


def build_discriminator(image_shape, cond_dim, spec: NetworkSpec, variant: Variant,
                        stream: RngStream, hyper=None, sbp_hidden=False) -> ModelParams:
    h, w, d = image_shape
    variant = Variant(variant)
    m = int(cond_dim)
    if variant in (Variant.CGAN, Variant.FCGAN):
        in_dim = h * w * (d + m)
    elif variant is Variant.SBP:
        in_dim = h * w * (d * m)
    else:
        in_dim = h * w * d
    meta = {"role": "discriminator", "image_shape": [h, w, d], "cond_dim": m,
            "variant": variant.value, "sbp_hidden": bool(sbp_hidden)}
    if variant is Variant.FCGAN:
        meta["hidden_extra"] = m
    elif variant is Variant.SBP and sbp_hidden:
        meta["hidden_extra_factor"] = m
    spec = NetworkSpec(spec.hidden, spec.activation, spec.alpha, "sigmoid_scalar")
    return ModelParams.init(in_dim, 1, spec, stream, hyper, meta)


def build_approximator(image_shape, cond_dim, spec: NetworkSpec,
                       stream: RngStream, hyper=None) -> ModelParams:
    h, w, d = image_shape
    meta = {"role": "approximator", "image_shape": [h, w, d], "cond_dim": int(cond_dim)}
    spec = NetworkSpec(spec.hidden, spec.activation, spec.alpha, "softmax")
    return ModelParams.init(h * w * d, int(cond_dim), spec, stream, hyper, meta)


# ----------------------------------------------------------------------
# forward passes


def generator_forward(z, c, params: ModelParams) -> Tensor:
    """G(z, c): noise and condition concatenated, dense stack, tanh image."""
    zb, single = _ensure_batched(z, 1)
    cb, _ = _ensure_batched(c, 1)
    if zb.shape[0] != cb.shape[0]:
        raise DimensionError(f"batch sizes disagree: noise {zb.shape} vs condition {cb.shape}")
    h, w, d = params.meta["image_shape"]
    x = vector_concat(zb, cb)
    if x.shape[1] != params.in_dim:
        raise DimensionError(f"generator expects input width {params.in_dim}, got {x.shape[1]}")
    out = _dense_stack(x, params)
    img = activation(out, "tanh").reshape((zb.shape[0], h, w, d))
    return img.reshape((h, w, d)) if single else img


def discriminator_forward(x, c, params: ModelParams, variant=None) -> Tensor:
    """D(x[, c]) as a probability in (0, 1); shape [b] (scalar if unbatched)."""
    variant = Variant(variant or params.meta["variant"])
    xb, single = _ensure_batched(x, 3)
    m = params.meta["cond_dim"]
    if variant is Variant.IRGAN:
        h0 = _flatten_rows(xb)
        append = None
    else:
        cb, _ = _ensure_batched(c, 1)
        if cb.shape[1] != m:
            raise DimensionError(f"condition width {cb.shape[1]} != expected {m}")
        if variant is Variant.CGAN:
            h0 = _flatten_rows(spatial_replicate_concat(xb, cb))
            append = None
        elif variant is Variant.FCGAN:
            h0 = _flatten_rows(spatial_replicate_concat(xb, cb))

            def append(hid, cc=cb):
                return _flatten_rows(spatial_replicate_concat(
                    hid.reshape((hid.shape[0], 1, 1, hid.shape[1])), cc))

        else:  # SBP
            h0 = _flatten_rows(spatial_bilinear_pool(xb, cb))
            if params.meta.get("sbp_hidden"):
                def append(hid, cc=cb):
                    return _flatten_rows(spatial_bilinear_pool(
                        hid.reshape((hid.shape[0], 1, 1, hid.shape[1])), cc))
            else:
                append = None
    if h0.shape[1] != params.in_dim:
        raise DimensionError(
            f"discriminator({variant.value}) expects input width {params.in_dim}, got {h0.shape[1]}")
    logits = _dense_stack(h0, params, append)
    prob = activation(logits, "sigmoid").reshape((xb.shape[0],))
    return prob.reshape(()) if single else prob


def approximator_forward(x, params: ModelParams) -> Tensor:
    """Q(c|x): softmax distribution over conditions, shape [b, m]."""
    xb, single = _ensure_batched(x, 3)
    h0 = _flatten_rows(xb)
    if h0.shape[1] != params.in_dim:
        raise DimensionError(f"approximator expects input width {params.in_dim}, got {h0.shape[1]}")
    logits = _dense_stack(h0, params)
    probs = softmax(logits)
    return probs.reshape((probs.shape[1],)) if single else probs


# ----------------------------------------------------------------------
# approximator pretraining


def classifier_accuracy(params: ModelParams, images: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows where argmax Q(x) matches the one-hot label."""
    probs = approximator_forward(Tensor(images), params)
    return float(np.mean(probs.data.argmax(axis=1) == labels.argmax(axis=1)))


def pretrain_approximator(train, valid, spec: NetworkSpec, budget: int,
                          stream: RngStream, batch_size=64, hyper=None,
                          eval_every=100):
    """Train Q by cross-entropy and keep the best-validation snapshot.

    Returns (params, history) where history records per-step losses and the
    periodic validation accuracies. A budget of 0 returns the untouched
    initial parameters.
    """
    if train.count == 0 or valid.count == 0:
        raise DataError("pretraining needs non-empty train and validation sets")
    if train.cond_dim != valid.cond_dim:
        raise DataError(f"label widths disagree: {train.cond_dim} vs {valid.cond_dim}")
    params = build_approximator(train.image_shape, train.cond_dim, spec,
                                stream.split("init-q"), hyper)
    history = {"loss": [], "val_acc": []}
    best = params.snapshot()
    best_acc = classifier_accuracy(params, valid.images, valid.labels)
    history["val_acc"].append((0, best_acc))
    batch_size = min(batch_size, train.count)
    per_epoch = train.count // batch_size
    for i in range(int(budget)):
        epoch, bi = divmod(i, per_epoch)
        if bi == 0:
            order = stream.split(f"epoch-{epoch}").permutation(train.count)
        idx = order[bi * batch_size:(bi + 1) * batch_size]
        xb = Tensor(train.images[idx])
        yb = train.labels[idx]
        logits = _dense_stack(_flatten_rows(xb), params)
        loss = softmax_cross_entropy(logits, yb)
        backward(loss)
        for name, t in params.named().items():
            adam_step(t, t.grad, params.adam[name])
            t.grad = None
        history["loss"].append(loss.item())
        if (i + 1) % eval_every == 0 or i + 1 == int(budget):
            acc = classifier_accuracy(params, valid.images, valid.labels)
            history["val_acc"].append((i + 1, acc))
            if acc > best_acc:
                best_acc = acc
                best = params.snapshot()
    params.restore(best)
    history["best_val_acc"] = best_acc
    return params, history
