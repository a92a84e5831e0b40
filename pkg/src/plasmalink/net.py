"""Symmetry-constrained autoencoder for joint demodulation and fading tracking.

Received samples that carry constellation symbol x_k lie near a 1-D curve
(the fading trajectory scaled/rotated by x_k). The model learns that curve
with one encoder per symbol, mapping an IQ pair to a scalar curve coordinate,
and a single decoder shared by all symbols mapping the coordinate back to IQ.

Sharing works because the per-symbol curves are rigid copies of one another:
the decoder emits a canonical curve point in polar form (radius squashed by a
sigmoid so it stays in (0, 1), angle unconstrained) and a fixed per-symbol
matrix T_k lifts it onto symbol k's curve. For x_k = re + j*im,

    T_k = [[re, -im],
           [im,  re]]

which is multiplication by x_k in IQ coordinates. The transforms encode the
constellation symmetry exactly and are never trained.

Everything here is plain numpy with hand-written backprop; model and
optimizer updates are functional (new objects out, inputs untouched).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import NonFiniteError
from .link import Constellation
from .seeding import role_rng

__all__ = [
    "DenseLayer",
    "Mlp",
    "SmnModel",
    "AdamState",
    "symbol_transforms",
    "init_model",
    "mlp_forward",
    "mlp_backward",
    "project",
    "project_all",
    "encode",
    "decode_curve",
    "weighted_loss",
    "loss_and_gradients",
    "collect_params",
    "with_params",
    "init_adam",
    "adam_step",
    "reset_optimizer",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (fan_out, fan_in)
    bias: np.ndarray     # (fan_out,)


@dataclass(frozen=True)
class Mlp:
    """Fully connected stack; tanh after every layer except the last."""

    layers: tuple[DenseLayer, ...]

    def widths(self) -> tuple[int, ...]:
        return (self.layers[0].weights.shape[1],
                *(layer.weights.shape[0] for layer in self.layers))


@dataclass(frozen=True)
class SmnModel:
    """K encoders (IQ -> curve coordinate), one shared polar decoder."""

    encoders: tuple[Mlp, ...]
    decoder: Mlp
    transforms: np.ndarray  # (K, 2, 2), fixed, never trained
    noise_variance: float

    @property
    def order(self) -> int:
        return len(self.encoders)


def symbol_transforms(constellation: Constellation) -> np.ndarray:
    """Stack of per-symbol IQ multiplication matrices, shape (K, 2, 2)."""
    re = constellation.points.real
    im = constellation.points.imag
    t = np.empty((constellation.order, 2, 2))
    t[:, 0, 0] = re
    t[:, 0, 1] = -im
    t[:, 1, 0] = im
    t[:, 1, 1] = re
    return t


def _init_mlp(widths, rng, std) -> Mlp:
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        layers.append(DenseLayer(
            weights=std * rng.standard_normal((fan_out, fan_in)),
            bias=std * rng.standard_normal(fan_out)))
    return Mlp(layers=tuple(layers))


def init_model(constellation: Constellation, rng_seed: int,
               hidden_units: int = 4, init_std: float = 0.1,
               noise_variance: float = 1.0) -> SmnModel:
    """Fresh model with all weights and biases drawn from N(0, init_std^2)."""
    rng = role_rng(rng_seed, "init")
    encoders = tuple(_init_mlp((2, hidden_units, 1), rng, init_std)
                     for _ in range(constellation.order))
    decoder = _init_mlp((1, hidden_units, 2), rng, init_std)
    return SmnModel(encoders=encoders, decoder=decoder,
                    transforms=symbol_transforms(constellation),
                    noise_variance=float(noise_variance))


def mlp_forward(mlp: Mlp, x: np.ndarray):
    """Returns (output, cache); cache holds per-layer activations."""
    a = x
    cache = [a]
    last = len(mlp.layers) - 1
    for idx, layer in enumerate(mlp.layers):
        z = a @ layer.weights.T + layer.bias
        a = z if idx == last else np.tanh(z)
        cache.append(a)
    return a, cache


def mlp_backward(mlp: Mlp, cache, g_out):
    """Backprop dL/d(output) through the stack.

    Returns (dL/d(input), [(dL/dW, dL/db) per layer]). tanh derivative is
    recovered from the cached activation as 1 - a^2.
    """
    grads: list = [None] * len(mlp.layers)
    last = len(mlp.layers) - 1
    g = g_out
    for idx in range(last, -1, -1):
        a_prev, a = cache[idx], cache[idx + 1]
        g_z = g if idx == last else g * (1.0 - a * a)
        grads[idx] = (g_z.T @ a_prev, g_z.sum(axis=0))
        g = g_z @ mlp.layers[idx].weights
    return g, grads


def _sigmoid(x):
    # split by sign so the exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _curve_forward(model: SmnModel, k: int, y: np.ndarray):
    """Forward pass of curve k for batched IQ rows; keeps all caches."""
    lam, enc_cache = mlp_forward(model.encoders[k], y)
    u, dec_cache = mlp_forward(model.decoder, lam)
    rho = _sigmoid(u[:, 0:1])
    phi = u[:, 1:2]
    cos, sin = np.cos(phi), np.sin(phi)
    cart = np.hstack([rho * cos, rho * sin])
    proj = cart @ model.transforms[k].T
    return proj, (enc_cache, dec_cache, rho, cos, sin)


def project(model: SmnModel, k: int, y: np.ndarray) -> np.ndarray:
    """Project IQ points onto symbol k's learned curve.

    Accepts a single (2,) point or an (m, 2) batch and mirrors the shape.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    proj, _ = _curve_forward(model, k, y[None, :] if single else y)
    return proj[0] if single else proj


def project_all(model: SmnModel, y: np.ndarray) -> np.ndarray:
    """Projections onto every curve, shape (m, K, 2)."""
    y = np.asarray(y, dtype=float)
    out = np.empty((y.shape[0], model.order, 2))
    for k in range(model.order):
        out[:, k, :] = project(model, k, y)
    return out


def encode(model: SmnModel, k: int, y: np.ndarray) -> np.ndarray:
    """Curve coordinates of IQ rows under symbol k's encoder, shape (m,)."""
    lam, _ = mlp_forward(model.encoders[k], np.asarray(y, dtype=float))
    return lam[:, 0]


def decode_curve(model: SmnModel, lam_grid: np.ndarray) -> np.ndarray:
    """Sample every symbol curve at the given coordinates.

    Returns (K, len(lam_grid), 2); row k is T_k applied to the canonical
    curve, so the K polylines are rigid copies of one another.
    """
    lam = np.asarray(lam_grid, dtype=float).reshape(-1, 1)
    u, _ = mlp_forward(model.decoder, lam)
    rho = _sigmoid(u[:, 0:1])
    phi = u[:, 1:2]
    cart = np.hstack([rho * np.cos(phi), rho * np.sin(phi)])
    return np.stack([cart @ t.T for t in model.transforms])


def _check_batch(model, y, w):
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.ndim != 2 or y.shape[1] != 2:
        raise ValueError(f"y must be (m, 2), got {y.shape}")
    if w.shape != (y.shape[0], model.order):
        raise ValueError(f"w must be ({y.shape[0]}, {model.order}), "
                         f"got {w.shape}")
    return y, w


def weighted_loss(model: SmnModel, y: np.ndarray, w: np.ndarray) -> float:
    """(1/m) sum_i sum_k w_ik ||y_i - proj_k(y_i)||^2."""
    y, w = _check_batch(model, y, w)
    proj = project_all(model, y)
    d2 = np.sum((y[:, None, :] - proj) ** 2, axis=2)
    return float(np.mean(np.sum(w * d2, axis=1)))


def collect_params(model: SmnModel) -> list:
    """Trainable arrays in a fixed order (encoders by symbol, then decoder)."""
    params = []
    for enc in model.encoders:
        for layer in enc.layers:
            params += [layer.weights, layer.bias]
    for layer in model.decoder.layers:
        params += [layer.weights, layer.bias]
    return params


def with_params(model: SmnModel, params) -> SmnModel:
    """New model with the parameter arrays swapped in (collect order)."""
    it = iter(params)

    def rebuild(mlp):
        layers = []
        for _ in mlp.layers:
            layers.append(DenseLayer(weights=next(it), bias=next(it)))
        return Mlp(layers=tuple(layers))

    encoders = tuple(rebuild(e) for e in model.encoders)
    decoder = rebuild(model.decoder)
    return replace(model, encoders=encoders, decoder=decoder)


def loss_and_gradients(model: SmnModel, y: np.ndarray, w: np.ndarray):
    """Weighted reconstruction loss and its gradients, collect_params order.

    The shared decoder accumulates gradient contributions from every symbol
    curve; the fixed transforms get none. Raises NonFiniteError if anything
    overflows to NaN/Inf.
    """
    y, w = _check_batch(model, y, w)
    m = y.shape[0]

    loss = 0.0
    enc_grads = []
    dec_grads = [(np.zeros_like(layer.weights), np.zeros_like(layer.bias))
                 for layer in model.decoder.layers]
    for k in range(model.order):
        proj, (enc_cache, dec_cache, rho, cos, sin) = _curve_forward(model, k, y)
        resid = proj - y
        loss += float(np.dot(w[:, k], np.sum(resid ** 2, axis=1))) / m

        g_proj = (2.0 / m) * w[:, k:k + 1] * resid
        g_cart = g_proj @ model.transforms[k]
        g_rho = g_cart[:, 0:1] * cos + g_cart[:, 1:2] * sin
        g_phi = rho * (-g_cart[:, 0:1] * sin + g_cart[:, 1:2] * cos)
        g_u = np.hstack([g_rho * rho * (1.0 - rho), g_phi])
        g_lam, dgrads = mlp_backward(model.decoder, dec_cache, g_u)
        dec_grads = [(aw + gw, ab + gb)
                     for (aw, ab), (gw, gb) in zip(dec_grads, dgrads)]
        _, egrads = mlp_backward(model.encoders[k], enc_cache, g_lam)
        enc_grads.append(egrads)

    flat = []
    for egrads in enc_grads:
        for gw, gb in egrads:
            flat += [gw, gb]
    for gw, gb in dec_grads:
        flat += [gw, gb]

    if not np.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in flat):
        raise NonFiniteError("loss or gradient overflowed to NaN/Inf")
    return loss, flat


@dataclass(frozen=True)
class AdamState:
    step: int
    first_moment: tuple
    second_moment: tuple


def init_adam(params) -> AdamState:
    return AdamState(step=0,
                     first_moment=tuple(np.zeros_like(p) for p in params),
                     second_moment=tuple(np.zeros_like(p) for p in params))


def reset_optimizer(state: AdamState) -> AdamState:
    """Zeroed moments and step count, same shapes; erases all history."""
    return AdamState(
        step=0,
        first_moment=tuple(np.zeros_like(m) for m in state.first_moment),
        second_moment=tuple(np.zeros_like(v) for v in state.second_moment))


def adam_step(params, grads, state: AdamState, learning_rate: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update; returns (new_params, new_state)."""
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m1, v in zip(params, grads, state.first_moment,
                           state.second_moment):
        m1 = beta1 * m1 + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m1 / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        new_p.append(p - learning_rate * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m1)
        new_v.append(v)
    return new_p, AdamState(step=t, first_moment=tuple(new_m),
                            second_moment=tuple(new_v))


def save_model(path, model: SmnModel) -> None:
    """Checkpoint to npz; layer arrays keyed by role, symbol and depth."""
    arrays = {
        "transforms": model.transforms,
        "noise_variance": np.asarray(model.noise_variance),
        "order": np.asarray(model.order),
        "encoder_depth": np.asarray(len(model.encoders[0].layers)),
        "decoder_depth": np.asarray(len(model.decoder.layers)),
    }
    for k, enc in enumerate(model.encoders):
        for idx, layer in enumerate(enc.layers):
            arrays[f"enc{k}_w{idx}"] = layer.weights
            arrays[f"enc{k}_b{idx}"] = layer.bias
    for idx, layer in enumerate(model.decoder.layers):
        arrays[f"dec_w{idx}"] = layer.weights
        arrays[f"dec_b{idx}"] = layer.bias
    np.savez(path, **arrays)


def load_model(path) -> SmnModel:
    data = np.load(path)
    order = int(data["order"])
    enc_depth = int(data["encoder_depth"])
    dec_depth = int(data["decoder_depth"])
    encoders = tuple(
        Mlp(layers=tuple(DenseLayer(weights=data[f"enc{k}_w{i}"],
                                    bias=data[f"enc{k}_b{i}"])
                         for i in range(enc_depth)))
        for k in range(order))
    decoder = Mlp(layers=tuple(DenseLayer(weights=data[f"dec_w{i}"],
                                          bias=data[f"dec_b{i}"])
                               for i in range(dec_depth)))
    return SmnModel(encoders=encoders, decoder=decoder,
                    transforms=data["transforms"],
                    noise_variance=float(data["noise_variance"]))
