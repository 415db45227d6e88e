"""Numeric building blocks: vectors, matrices, activations and neuron parameters.

Vectors and matrices are plain ``float64`` numpy arrays. Arrays held by
:class:`NeuronParams` are copied and frozen (``writeable=False``) so a params
value can be shared between threads and streams without defensive copies.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, InvalidInput, LambdaOutOfRange, NonFiniteValue

FLOAT = np.float64


def as_vector(values, name: str = "vector", *, check_finite: bool = True) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 array (no copy when already one)."""
    arr = np.asarray(values, dtype=FLOAT)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if check_finite and not np.isfinite(arr).all():
        raise NonFiniteValue(f"{name} contains non-finite values")
    return arr


def as_matrix(values, name: str = "matrix", *, check_finite: bool = True) -> np.ndarray:
    arr = np.asarray(values, dtype=FLOAT)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if check_finite and not np.isfinite(arr).all():
        raise NonFiniteValue(f"{name} contains non-finite values")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=FLOAT, copy=True)
    out.setflags(write=False)
    return out


class ActivationKind(enum.Enum):
    IDENTITY = "identity"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    RELU = "relu"

    @classmethod
    def parse(cls, value) -> "ActivationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise InvalidInput(f"unknown activation {value!r} (expected one of: {names})") from None

    @property
    def bound(self) -> float | None:
        """Magnitude bound M on the output, or ``None`` for unbounded kinds."""
        return 1.0 if self in (ActivationKind.TANH, ActivationKind.SIGMOID) else None

    @property
    def is_bounded(self) -> bool:
        return self.bound is not None

    @property
    def zero_at_origin(self) -> bool:
        return self is not ActivationKind.SIGMOID

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self is ActivationKind.IDENTITY:
            return z
        if self is ActivationKind.TANH:
            return np.tanh(z)
        if self is ActivationKind.SIGMOID:
            return expit(z)
        return np.maximum(z, 0.0)


def activation_apply(kind: ActivationKind, z) -> np.ndarray:
    """Apply ``kind`` elementwise to a finite vector ``z``."""
    kind = ActivationKind.parse(kind)
    try:
        z = as_vector(z, "z")
    except NonFiniteValue as exc:
        raise InvalidInput(str(exc)) from None
    return kind(z)


@dataclass(frozen=True, eq=False)
class NeuronParams:
    """Parameters of one layer of stream neurons.

    ``W`` maps inputs (out x in), ``W_s`` feeds the previous state back
    (out x out), ``alpha`` scales that feedback and ``lam`` is the decay
    factor in ``[0, 1)``. Construction validates; an invalid instance cannot
    exist.
    """

    W: np.ndarray
    W_s: np.ndarray
    b: np.ndarray
    alpha: float
    lam: float
    activation: ActivationKind = ActivationKind.TANH

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "activation", ActivationKind.parse(self.activation))
        set_(self, "W", _frozen(np.asarray(self.W, dtype=FLOAT)))
        set_(self, "W_s", _frozen(np.asarray(self.W_s, dtype=FLOAT)))
        set_(self, "b", _frozen(np.atleast_1d(np.asarray(self.b, dtype=FLOAT))))
        set_(self, "alpha", float(self.alpha))
        set_(self, "lam", float(self.lam))
        validate_params(self)

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @classmethod
    def seeded(
        cls,
        n_in: int,
        n_out: int,
        *,
        seed: int | np.random.Generator,
        alpha: float = 1.0,
        lam: float = 0.9,
        activation=ActivationKind.TANH,
        scale: float = 0.5,
    ) -> "NeuronParams":
        """Draw W, W_s and b uniformly from ``[-scale, scale]``."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        W = rng.uniform(-scale, scale, size=(n_out, n_in))
        W_s = rng.uniform(-scale, scale, size=(n_out, n_out))
        b = rng.uniform(-scale, scale, size=n_out)
        return cls(W, W_s, b, alpha, lam, activation)

    def replace(self, **changes) -> "NeuronParams":
        fields = dict(W=self.W, W_s=self.W_s, b=self.b, alpha=self.alpha, lam=self.lam,
                      activation=self.activation)
        fields.update(changes)
        return NeuronParams(**fields)

    def __eq__(self, other):
        if not isinstance(other, NeuronParams):
            return NotImplemented
        return (
            self.activation is other.activation
            and self.alpha == other.alpha
            and self.lam == other.lam
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.W_s, other.W_s)
            and np.array_equal(self.b, other.b)
        )

    __hash__ = None


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not (0.0 <= lam < 1.0):
        raise LambdaOutOfRange(f"decay factor must lie in [0, 1), got {lam!r}")
    return lam


def validate_params(p: NeuronParams) -> None:
    """Raise on the first violated NeuronParams invariant, return ``None`` if valid.

    Order of checks: decay range, shapes, finiteness.
    """
    check_lambda(p.lam)
    W, W_s, b = (np.asarray(a) for a in (p.W, p.W_s, p.b))
    if W.ndim != 2 or W.size == 0:
        raise DimensionMismatch(f"W must be a non-empty matrix, got shape {W.shape}")
    if W_s.ndim != 2 or b.ndim != 1:
        raise DimensionMismatch(f"W_s must be 2-D and b 1-D, got {W_s.shape} and {b.shape}")
    out = W.shape[0]
    if W_s.shape != (out, out) or b.shape[0] != out:
        raise DimensionMismatch(
            f"inconsistent shapes: W {W.shape}, W_s {W_s.shape}, b {b.shape}"
        )
    for name, value in (("W", W), ("W_s", W_s), ("b", b), ("alpha", p.alpha)):
        if not np.isfinite(value).all():
            raise NonFiniteValue(f"{name} contains non-finite values")
