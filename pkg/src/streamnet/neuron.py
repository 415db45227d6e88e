"""Stream neuron step kernel and the stateless baseline.

One step maps ``(x_t, s_{t-1}) -> (y_t, s_t)``::

    z_t = W x_t + alpha * (W_s s_{t-1}) + b
    y_t = sigma(z_t)
    s_t = lam * s_{t-1} + (1 - lam) * y_t

The state update is evaluated literally in that form. Rewriting it as
``s + (1 - lam) * (y - s)`` changes the rounding pattern and breaks the
exact contraction checks in :mod:`streamnet.analysis`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import FLOAT, ActivationKind, NeuronParams, as_vector, check_lambda
from .errors import DimensionMismatch, NonFiniteValue


@dataclass(frozen=True)
class NeuronState:
    """Persistent state ``s_t`` and the number of steps taken to reach it.

    Use :meth:`zeros` or :meth:`initial` to build one from user data; the raw
    constructor trusts its arguments (it is on the per-step hot path).
    """

    s: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "NeuronState":
        return cls.initial(np.zeros(n, dtype=FLOAT))

    @classmethod
    def initial(cls, s, step: int = 0) -> "NeuronState":
        s = np.array(as_vector(s, "initial state"), copy=True)
        s.setflags(write=False)
        if step < 0:
            raise ValueError("step counter must be non-negative")
        return cls(s, int(step))

    def __eq__(self, other):
        if not isinstance(other, NeuronState):
            return NotImplemented
        return self.step == other.step and np.array_equal(self.s, other.s)

    __hash__ = None


@dataclass(frozen=True)
class StepOutput:
    y: np.ndarray
    next_state: NeuronState


def _check_step_dims(p: NeuronParams, s: np.ndarray, x: np.ndarray) -> None:
    if x.shape[0] != p.n_in:
        raise DimensionMismatch(f"input has dimension {x.shape[0]}, layer expects {p.n_in}")
    if s.shape != (p.n_out,):
        raise DimensionMismatch(f"state has shape {s.shape}, layer expects ({p.n_out},)")


def neuron_step(p: NeuronParams, state: NeuronState, x) -> StepOutput:
    """Advance one layer of stream neurons by one input.

    Raises :class:`NonFiniteValue` instead of returning a contaminated state.
    """
    x = as_vector(x, "x")
    s = state.s
    _check_step_dims(p, s, x)
    lam = p.lam
    with np.errstate(over="ignore", invalid="ignore"):
        z = p.W @ x + p.alpha * (p.W_s @ s) + p.b
        y = p.activation(z)
        s_next = lam * s + (1.0 - lam) * y
    if not (np.isfinite(z).all() and np.isfinite(s_next).all()):
        raise NonFiniteValue(f"non-finite intermediate at step {state.step + 1}")
    y.setflags(write=False)
    s_next.setflags(write=False)
    return StepOutput(y, NeuronState(s_next, state.step + 1))


def stateless_step(p: NeuronParams, x) -> np.ndarray:
    """Memoryless map ``sigma(W x + b)``: no state is read or written."""
    x = as_vector(x, "x")
    if x.shape[0] != p.n_in:
        raise DimensionMismatch(f"input has dimension {x.shape[0]}, layer expects {p.n_in}")
    with np.errstate(over="ignore", invalid="ignore"):
        z = p.W @ x + p.b
        y = p.activation(z)
    if not np.isfinite(z).all():
        raise NonFiniteValue("non-finite pre-activation in stateless step")
    return y


def state_update_only(lam: float, s_prev, y) -> np.ndarray:
    """``lam * s_prev + (1 - lam) * y``, elementwise over arrays of equal shape.

    Leading axes are treated as independent states, so a stack of state
    pairs can be advanced in one call.
    """
    lam = check_lambda(lam)
    s_prev = np.asarray(s_prev, dtype=FLOAT)
    y = np.asarray(y, dtype=FLOAT)
    if s_prev.shape != y.shape:
        raise DimensionMismatch(f"state shape {s_prev.shape} does not match output shape {y.shape}")
    return lam * s_prev + (1.0 - lam) * y


_ACT_CODES = {
    ActivationKind.IDENTITY: 0,
    ActivationKind.TANH: 1,
    ActivationKind.SIGMOID: 2,
    ActivationKind.RELU: 3,
}


@njit(cache=True)
def _scan_kernel(W, W_s, b, alpha, lam, act, s, xs):
    n_out, n_in = W.shape
    one_minus = 1.0 - lam
    z = np.empty(n_out)
    peak = 0.0
    for i in range(n_out):
        peak = max(peak, abs(s[i]))
    for t in range(xs.shape[0]):
        for i in range(n_out):
            acc = 0.0
            for j in range(n_in):
                acc += W[i, j] * xs[t, j]
            fb = 0.0
            for j in range(n_out):
                fb += W_s[i, j] * s[j]
            z[i] = acc + alpha * fb + b[i]
        for i in range(n_out):
            zi = z[i]
            if not np.isfinite(zi):
                return s, peak, t
            if act == 0:
                y = zi
            elif act == 1:
                y = np.tanh(zi)
            elif act == 2:
                if zi >= 0.0:
                    y = 1.0 / (1.0 + np.exp(-zi))
                else:
                    e = np.exp(zi)
                    y = e / (1.0 + e)
            else:
                y = zi if zi > 0.0 else 0.0
            s_new = lam * s[i] + one_minus * y
            if not np.isfinite(s_new):
                return s, peak, t
            s[i] = s_new
            a = abs(s_new)
            if a > peak:
                peak = a
    return s, peak, -1


def neuron_scan(p: NeuronParams, state: NeuronState, xs) -> tuple[NeuronState, float]:
    """Run one layer over a block of inputs with a compiled loop.

    Returns the final state and the largest ``|s|`` element seen, including
    the starting state. Used by long probes where per-step Python overhead
    dominates; agrees with repeated :func:`neuron_step` up to summation order.
    """
    xs = np.ascontiguousarray(xs, dtype=FLOAT)
    if xs.ndim != 2 or xs.shape[1] != p.n_in:
        raise DimensionMismatch(f"input block must have shape (n, {p.n_in}), got {xs.shape}")
    if state.s.shape != (p.n_out,):
        raise DimensionMismatch(f"state has shape {state.s.shape}, layer expects ({p.n_out},)")
    s = np.array(state.s, dtype=FLOAT, copy=True)
    s, peak, bad = _scan_kernel(p.W, p.W_s, p.b, p.alpha, p.lam, _ACT_CODES[p.activation], s, xs)
    if bad >= 0:
        raise NonFiniteValue(f"non-finite intermediate at step {state.step + bad + 1}")
    s.setflags(write=False)
    return NeuronState(s, state.step + xs.shape[0]), float(peak)
