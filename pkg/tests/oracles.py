"""Independent reference computations used to freeze expected test values.

Nothing here imports streamnet. Scalar cases use the ``math`` module step by
step; the tracking oracle uses ``scipy.signal.lfilter`` for the decay filter.

Run ``python tests/oracles.py`` to print the frozen values.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter


def scalar_step(x, s, *, W, W_s, alpha, b, lam, act=math.tanh):
    z = W * x + alpha * W_s * s + b
    y = act(z)
    return z, y, lam * s + (1 - lam) * y


def scalar_network(xs, layers):
    """Chain of scalar layers; each layer is a dict of scalar_step kwargs."""
    states = [0.0] * len(layers)
    outputs = []
    for x in xs:
        h = x
        for i, layer in enumerate(layers):
            _, h, states[i] = scalar_step(h, states[i], **layer)
        outputs.append(h)
    return outputs, states


def scalar_fixed_point(x, *, W, W_s, alpha, b, lam):
    """Root of s - (lam s + (1 - lam) tanh(W x + alpha W_s s + b))."""
    g = lambda s: s - (lam * s + (1 - lam) * math.tanh(W * x + alpha * W_s * s + b))
    return brentq(g, -1.0, 1.0, xtol=1e-15, rtol=1e-15)


def scalar_lag_sensitivity(xs, k, h, **params):
    def last_y(seq):
        s = 0.0
        y = None
        for x in seq:
            _, y, s = scalar_step(x, s, **params)
        return y

    bumped = list(xs)
    bumped[len(xs) - 1 - k] += h
    return abs(last_y(bumped) - last_y(xs)) / h


def half_life(lam):
    t, s = 0, 1.0
    while s > 0.5:
        s *= lam
        t += 1
    return t


def tracking_mse(*, seed, steps, transient, lam, omega, amplitude, noise_std):
    """Tracking MSE pair from a direct filter evaluation of the noisy stream."""
    rng = np.random.default_rng(seed)
    t = np.arange(steps)
    clean = amplitude * np.sin(omega * t)
    noisy = clean + noise_std * rng.standard_normal((steps, 1))[:, 0]
    ema = lfilter([1 - lam], [1, -lam], noisy)
    gain = (1 - lam) / abs(1 - lam * cmath.exp(-1j * omega))
    w = slice(transient, steps)
    return (
        float(np.mean((ema[w] / gain - clean[w]) ** 2)),
        float(np.mean((noisy[w] - clean[w]) ** 2)),
    )


def tracking_mse_expected(*, lam, omega, amplitude, noise_std):
    """Large-window expectation: residual phase lag plus filtered noise power."""
    lag = cmath.phase((1 - lam) / (1 - lam * cmath.exp(-1j * omega)))
    gain = (1 - lam) / abs(1 - lam * cmath.exp(-1j * omega))
    noise = noise_std**2 * (1 - lam) / (1 + lam) / gain**2
    return amplitude**2 * (1 - math.cos(lag)) + noise, noise_std**2


REFERENCE_TRACKING = dict(
    seed=0, steps=3000, transient=500, lam=0.9, omega=2 * math.pi / 500, amplitude=1.0, noise_std=0.3
)


if __name__ == "__main__":
    print("neuron_step example:", scalar_step(1.0, 0.2, W=0.5, W_s=0.25, alpha=1.0, b=0.1, lam=0.8))
    print("stateless tanh(0.6):", math.tanh(0.6))
    print("half-life 0.99:", half_life(0.99))
    p = dict(W=0.5, W_s=0.5, alpha=1.0, b=0.0, lam=0.9)
    print("fixed point x=0.5:", scalar_fixed_point(0.5, **p))
    xs = [math.sin(0.3 * i) for i in range(20)]
    print("lag sensitivity k=1:", scalar_lag_sensitivity(xs, 1, 1e-6, **p))
    print("tracking realised:", tracking_mse(**REFERENCE_TRACKING))
    ref = {k: v for k, v in REFERENCE_TRACKING.items() if k in ("lam", "omega", "amplitude", "noise_std")}
    print("tracking expected:", tracking_mse_expected(**ref))
    mc = np.mean([tracking_mse(**{**REFERENCE_TRACKING, "seed": s}) for s in range(200)], axis=0)
    print("tracking Monte-Carlo mean over 200 seeds:", mc)
