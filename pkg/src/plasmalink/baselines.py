"""Reference receivers to compare the curve model against.

genie_ml gets the true per-sample gain and lower-bounds the achievable SER;
pilot_interp_ml is the classical estimate-then-slice receiver; the
supervised classifier learns a decision boundary from pilot pairs alone and
shows what labeled data by itself buys. qpsk_theory_ser closes the loop as
an independent sanity check of the noise calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .link import Constellation, Frame, ReceivedSequence
from .seeding import role_rng

__all__ = [
    "BaselineResult",
    "DnnTrainConfig",
    "genie_ml",
    "pilot_interp_ml",
    "supervised_dnn",
    "qpsk_theory_ser",
]


@dataclass(frozen=True)
class BaselineResult:
    name: str
    decisions: np.ndarray                  # (m,) symbol indices
    channel_estimate: np.ndarray | None = None  # (m,) complex, if produced


def _ml_decide(samples: np.ndarray, gains: np.ndarray,
               constellation: Constellation) -> np.ndarray:
    """argmin_k |y_i - h_i x_k|^2 per sample."""
    d = np.abs(samples[:, None] - gains[:, None]
               * constellation.points[None, :]) ** 2
    return np.argmin(d, axis=1)


def genie_ml(received: ReceivedSequence,
             constellation: Constellation) -> BaselineResult:
    """ML decisions with the true channel gain handed over."""
    decisions = _ml_decide(received.samples, received.true_gains,
                           constellation)
    return BaselineResult(name="genie_ml", decisions=decisions,
                          channel_estimate=received.true_gains.copy())


def pilot_interp_ml(received: ReceivedSequence, frame: Frame,
                    constellation: Constellation) -> BaselineResult:
    """Channel from pilots (h = y/x), linear I/Q interpolation, then ML.

    Interpolation is per quadrature; outside the pilot span the estimate
    holds the edge value (numpy interp's constant extrapolation).
    """
    pilots = frame.pilot_positions
    if len(pilots) < 2:
        raise ConfigError("pilot interpolation needs at least 2 pilots")
    h_pilot = received.samples[pilots] / constellation.points[
        frame.symbols[pilots]]
    idx = np.arange(len(received))
    h = (np.interp(idx, pilots, h_pilot.real)
         + 1j * np.interp(idx, pilots, h_pilot.imag))
    decisions = _ml_decide(received.samples, h, constellation)
    return BaselineResult(name="pilot_interp_ml", decisions=decisions,
                          channel_estimate=h)


@dataclass(frozen=True)
class DnnTrainConfig:
    hidden_units: int = 16
    steps: int = 2000
    learning_rate: float = 1e-3
    init_std: float = 0.1


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def supervised_dnn(received: ReceivedSequence, frame: Frame,
                   constellation: Constellation, rng_seed: int,
                   config: DnnTrainConfig = DnnTrainConfig()) -> BaselineResult:
    """Pilot-trained softmax classifier (2 -> hidden -> hidden -> K).

    tanh hidden layers, cross-entropy loss, full-batch Adam over the pilot
    (sample, label) pairs only; the payload is never seen in training.
    """
    rng = role_rng(rng_seed, "dnn")
    k = constellation.order
    h = config.hidden_units
    shapes = [(h, 2), (h,), (h, h), (h,), (k, h), (k,)]
    params = [config.init_std * rng.standard_normal(s) for s in shapes]

    x_train = received.iq()[frame.pilot_positions]
    labels = frame.symbols[frame.pilot_positions]
    n = len(labels)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0

    def forward(params, x):
        w1, b1, w2, b2, w3, b3 = params
        a1 = np.tanh(x @ w1.T + b1)
        a2 = np.tanh(a1 @ w2.T + b2)
        logits = a2 @ w3.T + b3
        return a1, a2, logits

    # Adam state
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]
    b1c, b2c, eps = 0.9, 0.999, 1e-8
    for t in range(1, config.steps + 1):
        a1, a2, logits = forward(params, x_train)
        probs = _softmax(logits)
        # mean cross-entropy gradient
        g_logits = (probs - onehot) / n
        w1, b1, w2, b2, w3, b3 = params
        g_w3 = g_logits.T @ a2
        g_b3 = g_logits.sum(axis=0)
        g_a2 = g_logits @ w3
        g_z2 = g_a2 * (1.0 - a2 * a2)
        g_w2 = g_z2.T @ a1
        g_b2 = g_z2.sum(axis=0)
        g_a1 = g_z2 @ w2
        g_z1 = g_a1 * (1.0 - a1 * a1)
        g_w1 = g_z1.T @ x_train
        g_b1 = g_z1.sum(axis=0)
        grads = [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]
        for i, (p, g) in enumerate(zip(params, grads)):
            mom[i] = b1c * mom[i] + (1 - b1c) * g
            vel[i] = b2c * vel[i] + (1 - b2c) * g * g
            mhat = mom[i] / (1 - b1c ** t)
            vhat = vel[i] / (1 - b2c ** t)
            params[i] = p - config.learning_rate * mhat / (np.sqrt(vhat) + eps)

    _, _, logits = forward(params, received.iq())
    return BaselineResult(name="supervised_dnn",
                          decisions=np.argmax(logits, axis=1))


def qpsk_theory_ser(es_n0_db: float) -> float:
    """Coherent Gray-QPSK symbol error rate over AWGN, 2Q(sqrt(g)) - Q^2."""
    gamma = 10.0 ** (es_n0_db / 10.0)
    q = 0.5 * math.erfc(math.sqrt(gamma / 2.0))
    return 2.0 * q - q * q
