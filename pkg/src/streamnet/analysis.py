"""Probes for the structural guarantees and the three stream experiments.

* :func:`contraction_probe`: two states driven by one shared output sequence
  must close their gap by exactly ``lam`` per step.
* :func:`bound_probe`: with a bounded activation and a bounded start the
  state never leaves ``[-M, M]``.
* :func:`lag_sensitivity`: finite-difference dependence of ``y_t`` on
  ``x_{t-k}``; identically zero for the stateless model.
* :func:`phase_trajectory` / :func:`classify_attractor`: delay-embedded
  state trajectories and a fixed-point / limit-cycle detector.
* :func:`retention_curve`: free decay of the state under zero drive.
* :func:`tracking_experiment`: noisy sinusoid tracking with and without state.

Floating-point tolerances are expressed in ulps of the magnitude that sets
the rounding error of the step (the largest operand), not of the possibly
tiny difference being checked.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .core import FLOAT, ActivationKind, NeuronParams, as_vector, check_lambda
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyTrajectory,
    InvalidActivation,
    InvalidInput,
    LagOutOfRange,
    UnboundedActivation,
)
from .executor import NetworkSpec, run_stream
from .neuron import NeuronState, neuron_scan, neuron_step, state_update_only, stateless_step
from .streams import SignalKind, SignalSpec, fused_consumption_guard, make_signal_source


def ulps(actual, expected, unit_of) -> np.ndarray:
    """``|actual - expected|`` measured in ulps of ``|unit_of|``."""
    unit = np.spacing(np.abs(np.asarray(unit_of, dtype=FLOAT)))
    return np.abs(np.asarray(actual, dtype=FLOAT) - np.asarray(expected, dtype=FLOAT)) / unit


# -- contraction ---------------------------------------------------------------


@dataclass(frozen=True)
class ContractionReport:
    """Gap between two trajectories fed the same outputs.

    ``gaps[t]`` is ``||s_a_t - s_b_t||`` (leading axis: time; trailing axes
    index independent pairs when a batch was probed). ``ratios[t-1]`` is
    ``gaps[t] / gaps[t-1]`` and NaN wherever the previous gap is zero.
    """

    lam: float
    gaps: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)
    max_abs_deviation: float
    max_step_ulps: float
    max_closed_form_ulps: float

    @property
    def expected_ratio(self) -> float:
        return self.lam

    def holds(self, tol_ulps: float = 64.0) -> bool:
        return self.max_step_ulps <= tol_ulps

    def to_dict(self) -> dict:
        return {
            "probe": "contraction",
            "lambda": self.lam,
            "steps": int(self.gaps.shape[0] - 1),
            "pairs": int(np.prod(self.gaps.shape[1:], dtype=int)),
            "max_abs_deviation": self.max_abs_deviation,
            "max_step_ulps": self.max_step_ulps,
            "max_closed_form_ulps": self.max_closed_form_ulps,
        }


def contraction_probe(lam: float, s_a, s_b, y_seq) -> ContractionReport:
    """Evolve ``s_a`` and ``s_b`` through :func:`state_update_only` on ``y_seq``.

    ``s_a``/``s_b`` are vectors of shape ``(d,)`` or stacks ``(n, d)`` of
    independent pairs. ``y_seq`` has shape ``(T, d)`` (shared by every pair)
    or ``(T, n, d)``.

    Two error measures are reported, both in ulps of the largest operand
    magnitude: the one-step deviation ``|gap_t - lam * gap_{t-1}|`` and the
    deviation from the closed form ``lam**t * gap_0``.
    """
    lam = check_lambda(lam)
    a = np.array(s_a, dtype=FLOAT)
    b = np.array(s_b, dtype=FLOAT)
    if a.ndim == 0 or a.shape != b.shape:
        raise DimensionMismatch(f"state shapes differ: {a.shape} vs {b.shape}")
    ys = np.asarray(y_seq, dtype=FLOAT)
    if ys.ndim < 1 or ys.shape[-1] != a.shape[-1] or ys.ndim - 1 > a.ndim:
        raise DimensionMismatch(f"output sequence shape {ys.shape} incompatible with states {a.shape}")
    gap0 = np.linalg.norm(a - b, axis=-1)
    if np.any(gap0 == 0):
        raise DegenerateInput("the two starting states must differ")

    steps = ys.shape[0]
    gaps = np.empty((steps + 1,) + gap0.shape)
    gaps[0] = gap0
    scale_run = np.maximum(np.abs(a).max(axis=-1), np.abs(b).max(axis=-1))
    step_ulps = 0.0
    abs_dev = 0.0
    for t in range(steps):
        y = np.broadcast_to(ys[t], a.shape)
        scale = np.maximum.reduce([np.abs(a).max(axis=-1), np.abs(b).max(axis=-1), np.abs(y).max(axis=-1)])
        a = state_update_only(lam, a, y)
        b = state_update_only(lam, b, y)
        scale = np.maximum.reduce([scale, np.abs(a).max(axis=-1), np.abs(b).max(axis=-1)])
        scale_run = np.maximum(scale_run, scale)
        gaps[t + 1] = np.linalg.norm(a - b, axis=-1)
        expected = lam * gaps[t]
        dev = np.abs(gaps[t + 1] - expected)
        abs_dev = max(abs_dev, float(dev.max()))
        step_ulps = max(step_ulps, float((dev / np.spacing(scale)).max()))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(gaps[:-1] > 0, gaps[1:] / gaps[:-1], np.nan)
    powers = lam ** np.arange(steps + 1, dtype=FLOAT)
    closed = powers.reshape((-1,) + (1,) * gap0.ndim) * gap0
    closed_ulps = float((np.abs(gaps - closed) / np.spacing(scale_run)).max())
    return ContractionReport(lam, gaps, ratios, abs_dev, step_ulps, closed_ulps)


# -- boundedness ----------------------------------------------------------------

_SCAN_BLOCK = 1024


def bound_probe(
    params: NeuronParams,
    source: Iterator,
    steps: int,
    *,
    bound: float | None = None,
    initial: NeuronState | None = None,
) -> float:
    """Largest ``|s|`` element seen while running ``params`` over ``source``.

    Unbounded activations (identity, ReLU) are refused unless ``bound`` is
    given. Inputs are pulled in blocks of at most 1024 and the block buffer is
    overwritten after each compiled scan, so no processed input outlives its
    block.
    """
    m = params.activation.bound if bound is None else float(bound)
    if m is None:
        raise UnboundedActivation(
            f"{params.activation.value} is unbounded; pass an explicit bound to probe it"
        )
    state = initial if initial is not None else NeuronState.zeros(params.n_out)
    if np.abs(state.s).max() > m:
        raise InvalidInput(f"initial state exceeds the bound {m}")
    peak = float(np.abs(state.s).max())
    buf = np.zeros((_SCAN_BLOCK, params.n_in))
    done = 0
    exhausted = False
    while done < steps and not exhausted:
        want = min(_SCAN_BLOCK, steps - done)
        n = 0
        while n < want:
            try:
                buf[n] = next(source)
            except StopIteration:
                exhausted = True
                break
            n += 1
        if n == 0:
            break
        state, block_peak = neuron_scan(params, state, buf[:n])
        buf[:n] = 0.0
        peak = max(peak, block_peak)
        done += n
    return peak


# -- retention -----------------------------------------------------------------


@dataclass(frozen=True)
class RetentionCurve:
    lam: float
    states: np.ndarray = field(repr=False)  # (steps + 1, d), row t is s_t
    norms: np.ndarray = field(repr=False)

    @property
    def s0(self) -> np.ndarray:
        return self.states[0]

    def closed_form(self) -> np.ndarray:
        t = np.arange(self.states.shape[0], dtype=FLOAT)
        return (self.lam**t)[:, None] * self.s0

    def half_life(self) -> int | None:
        """First ``t`` with ``||s_t|| <= 0.5 ||s_0||``, ``None`` if never reached."""
        hits = np.nonzero(self.norms <= 0.5 * self.norms[0])[0]
        return int(hits[0]) if hits.size else None

    def step_ulps(self) -> float:
        """Worst one-step deviation of ``s_t`` from ``lam * s_{t-1}``."""
        if self.states.shape[0] < 2:
            return 0.0
        prev = self.states[:-1]
        expected = self.lam * prev
        mask = expected != 0
        if not mask.any():
            return float(np.abs(self.states[1:]).max() / np.spacing(0.0)) if np.any(self.states[1:]) else 0.0
        return float(ulps(self.states[1:][mask], expected[mask], expected[mask]).max())

    def closed_form_ulps_per_step(self) -> float:
        """Worst ``|s_t - lam**t s_0|`` in ulps of the closed form, divided by ``t``."""
        cf = self.closed_form()[1:]
        got = self.states[1:]
        t = np.arange(1, got.shape[0] + 1, dtype=FLOAT)[:, None] * np.ones_like(got)
        mask = cf != 0
        if not mask.any():
            return 0.0 if not np.any(got) else math.inf
        return float((ulps(got[mask], cf[mask], cf[mask]) / t[mask]).max())

    def to_dict(self) -> dict:
        return {
            "probe": "retention",
            "lambda": self.lam,
            "steps": int(self.states.shape[0] - 1),
            "half_life": self.half_life(),
            "step_ulps": self.step_ulps(),
            "closed_form_ulps_per_step": self.closed_form_ulps_per_step(),
        }


def retention_curve(lam: float, s0, steps: int, activation=ActivationKind.TANH) -> RetentionCurve:
    """Free decay from ``s0`` under zero input, zero bias and no feedback.

    With ``sigma(0) == 0`` every step reduces to ``s_t = lam * s_{t-1}``.
    Activations with ``sigma(0) != 0`` (sigmoid) would inject a constant
    drive and are refused.
    """
    lam = check_lambda(lam)
    activation = ActivationKind.parse(activation)
    if not activation.zero_at_origin:
        raise InvalidActivation(f"{activation.value}(0) != 0; decay would be biased")
    s0 = as_vector(s0, "s0")
    d = s0.shape[0]
    params = NeuronParams(np.zeros((d, 1)), np.zeros((d, d)), np.zeros(d), 0.0, lam, activation)
    state = NeuronState.initial(s0)
    states = np.empty((steps + 1, d))
    states[0] = s0
    zero = np.zeros(1)
    for t in range(1, steps + 1):
        state = neuron_step(params, state, zero).next_state
        states[t] = state.s
    return RetentionCurve(lam, states, np.linalg.norm(states, axis=1))


# -- stateless collapse ----------------------------------------------------------


class Model(enum.Enum):
    STATEFUL = "stateful"
    STATELESS = "stateless"


@dataclass(frozen=True)
class SensitivityReport:
    lag: int
    perturbation: float
    stateless: float | None = None
    stateful: float | None = None
    stateless_bitwise_identical: bool | None = None

    def to_dict(self) -> dict:
        return {
            "probe": "collapse",
            "lag": self.lag,
            "perturbation": self.perturbation,
            "stateless": self.stateless,
            "stateful": self.stateful,
            "stateless_bitwise_identical": self.stateless_bitwise_identical,
        }


def _final_output(model: Model, params: NeuronParams, inputs: np.ndarray) -> np.ndarray:
    if model is Model.STATELESS:
        y = None
        for x in inputs:
            y = stateless_step(params, x)
        return y
    state = NeuronState.zeros(params.n_out)
    y = None
    for x in inputs:
        out = neuron_step(params, state, x)
        y, state = out.y, out.next_state
    return y


def _sensitivity(model: Model, params, inputs, k, h) -> tuple[float, bool]:
    t = inputs.shape[0] - 1
    base = _final_output(model, params, inputs)
    worst = 0.0
    identical = True
    for j in range(inputs.shape[1]):
        bumped = inputs.copy()
        bumped[t - k, j] += h
        y = _final_output(model, params, bumped)
        identical &= bool(np.array_equal(y, base))
        worst = max(worst, float(np.linalg.norm(y - base)) / h)
    return worst, identical


def _sensitivity_inputs(params: NeuronParams, base_inputs, k: int, h: float) -> np.ndarray:
    inputs = np.array(base_inputs, dtype=FLOAT)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.ndim != 2 or inputs.shape[1] != params.n_in:
        raise DimensionMismatch(f"inputs must have shape (T, {params.n_in}), got {inputs.shape}")
    if not (h > 0 and math.isfinite(h)):
        raise InvalidInput(f"perturbation must be positive, got {h}")
    t = inputs.shape[0] - 1
    if k < 1 or t < k:
        raise LagOutOfRange(f"lag {k} needs 1 <= k <= {t}")
    return inputs


def lag_sensitivity(model, params: NeuronParams, base_inputs, k: int, h: float = 1e-6) -> SensitivityReport:
    """``max_j ||y_t(x_{t-k} + h e_j) - y_t(x)|| / h`` with ``t`` the last index.

    Both runs start from the zero state.
    """
    model = Model(model) if not isinstance(model, Model) else model
    inputs = _sensitivity_inputs(params, base_inputs, k, h)
    value, identical = _sensitivity(model, params, inputs, k, h)
    if model is Model.STATELESS:
        return SensitivityReport(k, h, stateless=value, stateless_bitwise_identical=identical)
    return SensitivityReport(k, h, stateful=value)


def collapse_probe(params: NeuronParams, base_inputs, k: int, h: float = 1e-6) -> SensitivityReport:
    """Stateless and stateful sensitivities side by side."""
    inputs = _sensitivity_inputs(params, base_inputs, k, h)
    less, identical = _sensitivity(Model.STATELESS, params, inputs, k, h)
    full, _ = _sensitivity(Model.STATEFUL, params, inputs, k, h)
    return SensitivityReport(k, h, less, full, identical)


# -- phase space -----------------------------------------------------------------


@dataclass(frozen=True)
class PhaseExperiment:
    params: NeuronParams
    signal: SignalSpec
    steps: int = 2000
    burn_in: int = 500
    eps_fp: float | None = None
    eps_rec: float | None = None
    min_period: int = 3

    def __post_init__(self):
        if self.steps <= self.burn_in + 1:
            raise InvalidInput("steps must exceed burn_in + 1")
        if self.signal.dimension != self.params.n_in:
            raise DimensionMismatch("signal dimension must match the neuron input dimension")


@dataclass(frozen=True)
class PhaseTrajectory:
    points: np.ndarray = field(repr=False)  # (n, 2)
    t: np.ndarray = field(repr=False)  # step index of each point
    state_enabled: bool
    consumed: int
    steps: int


def _phase_points(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # states: (n, d) with row i = s after step i
    if states.shape[1] == 1:
        s = states[:, 0]
        return np.column_stack([s[:-1], s[1:]]), np.arange(1, s.shape[0])
    return states[:, :2].copy(), np.arange(states.shape[0])


def phase_trajectory(config: PhaseExperiment, state_enabled: bool) -> PhaseTrajectory:
    """Post-burn-in phase points of one neuron driven by ``config.signal``.

    Scalar state is delay-embedded as ``(s_{t-1}, s_t)``; vector state uses
    its first two components. With state disabled the neuron runs as the
    stateless map and its reported state is identically zero.
    """
    p = config.params
    source = fused_consumption_guard(make_signal_source(config.signal, config.steps))
    keep_from = config.burn_in
    if p.n_out == 1:
        keep_from -= 1  # need s_{burn_in - 1} as the first delay coordinate
    kept = np.zeros((config.steps - keep_from, p.n_out))

    if state_enabled:
        def sink(rec):
            if rec.t >= keep_from:
                kept[rec.t - keep_from] = rec.s

        summary = run_stream(NetworkSpec.single(p), NetworkSpec.single(p).zero_state(), source, sink)
        steps = summary.steps
    else:
        steps = 0
        for x in source:
            stateless_step(p, x)
            steps += 1
    points, idx = _phase_points(kept)
    return PhaseTrajectory(points, idx + keep_from, state_enabled, source.count, steps)


class Attractor(enum.Enum):
    FIXED_POINT = "FixedPoint"
    LIMIT_CYCLE = "LimitCycle"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class AttractorVerdict:
    classification: Attractor
    diameter: float
    recurrence_distance: float | None
    period: int | None
    eps_fp: float
    eps_rec: float
    centroid: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "diameter": self.diameter,
            "recurrence_distance": self.recurrence_distance,
            "period": self.period,
            "eps_fp": self.eps_fp,
            "eps_rec": self.eps_rec,
            "centroid": list(self.centroid),
        }


_PDIST_LIMIT = 3000


def trajectory_diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance between trajectory points."""
    pts = np.unique(np.asarray(points, dtype=FLOAT), axis=0)
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > _PDIST_LIMIT and pts.shape[1] == 2:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:
            # Degenerate (collinear) cloud: the extremes along the line suffice.
            far = pts[np.argmax(np.linalg.norm(pts - pts[0], axis=1))]
            return float(np.linalg.norm(pts - far, axis=1).max())
    if pts.shape[0] > _PDIST_LIMIT:
        return float(max(np.linalg.norm(pts[i + 1:] - pts[i], axis=1).max() for i in range(pts.shape[0] - 1)))
    return float(pdist(pts).max())


def classify_attractor(
    trajectory,
    eps_fp: float | None = None,
    eps_rec: float | None = None,
    min_period: int = 3,
) -> AttractorVerdict:
    """Label a phase trajectory as a fixed point, a limit cycle or neither.

    Fixed point: diameter <= ``eps_fp`` (default ``1e-6 * (1 + max|coord|)``).
    Limit cycle: some lag ``p >= min_period`` with at least one full repeat
    such that every point is within ``eps_rec`` (default ``1e-3 * diameter``)
    of the point ``p`` steps later. The smallest such ``p`` is the period.
    """
    pts = np.asarray(trajectory, dtype=FLOAT)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise EmptyTrajectory("cannot classify an empty trajectory")
    scale = float(np.abs(pts).max())
    diameter = trajectory_diameter(pts)
    eps_fp = 1e-6 * (1.0 + scale) if eps_fp is None else float(eps_fp)
    eps_rec = 1e-3 * diameter if eps_rec is None else float(eps_rec)
    if eps_fp <= 0 or (diameter > eps_fp and eps_rec <= 0):
        raise InvalidInput("thresholds must be positive")
    centroid = tuple(float(c) for c in pts.mean(axis=0))
    if diameter <= eps_fp:
        return AttractorVerdict(Attractor.FIXED_POINT, diameter, None, None, eps_fp, eps_rec, centroid)
    n = pts.shape[0]
    for p in range(max(1, min_period), n // 2 + 1):
        dist = np.linalg.norm(pts[p:] - pts[:-p], axis=1).max()
        if dist <= eps_rec:
            return AttractorVerdict(Attractor.LIMIT_CYCLE, diameter, float(dist), p, eps_fp, eps_rec, centroid)
    return AttractorVerdict(Attractor.UNCLASSIFIED, diameter, None, None, eps_fp, eps_rec, centroid)


# -- tracking --------------------------------------------------------------------


def ema_gain(lam: float, omega: float) -> float:
    """Magnitude response of ``s_t = lam s_{t-1} + (1 - lam) x_t`` at ``omega``."""
    return (1.0 - lam) / abs(1.0 - lam * cmath.exp(-1j * omega))


def passthrough_params(dim: int, lam: float = 0.0) -> NeuronParams:
    """Identity neuron (``W = I``, no feedback, no bias): ``y_t = x_t``."""
    return NeuronParams(np.eye(dim), np.zeros((dim, dim)), np.zeros(dim), 0.0, lam, ActivationKind.IDENTITY)


@dataclass(frozen=True)
class TrackingExperiment:
    signal: SignalSpec = field(
        default_factory=lambda: SignalSpec(
            SignalKind.NOISY_SINUSOID, amplitude=1.0, frequency=2 * math.pi / 500, noise_std=0.3, seed=0
        )
    )
    lam: float = 0.9
    steps: int = 3000
    transient: int = 500

    def __post_init__(self):
        check_lambda(self.lam)
        if self.steps <= self.transient:
            raise InvalidInput("steps must exceed the transient")

    @property
    def gain(self) -> float:
        return ema_gain(self.lam, self.signal.frequency)


@dataclass(frozen=True)
class TrackingReport:
    mse_stateful: float
    mse_stateless: float
    transient: int
    window: int
    gain: float
    consumed: tuple[int, int]
    steps: tuple[int, int]
    t: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    stateless_output: np.ndarray = field(repr=False)
    stateful_output: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "probe": "tracking",
            "mse_stateful": self.mse_stateful,
            "mse_stateless": self.mse_stateless,
            "stateful_better": self.mse_stateful < self.mse_stateless,
            "transient": self.transient,
            "window": self.window,
            "gain": self.gain,
        }

    def same_as(self, other: "TrackingReport") -> bool:
        return (
            self.mse_stateful == other.mse_stateful
            and self.mse_stateless == other.mse_stateless
            and np.array_equal(self.stateful_output, other.stateful_output)
            and np.array_equal(self.stateless_output, other.stateless_output)
        )


def tracking_experiment(config: TrackingExperiment) -> TrackingReport:
    """Track the clean sinusoid behind a noisy stream, with and without state.

    Without state the output is the raw pass-through of each noisy sample.
    With state the readout is the decayed state ``s_t`` divided by the decay
    filter's gain at the signal frequency, which undoes its amplitude loss.
    Both models see bit-identical noise (fresh sources, same seed).
    """
    sig = config.signal
    n, d = config.steps, sig.dimension
    reference = np.empty((n, d))
    stateless_out = np.empty((n, d))
    stateful_out = np.empty((n, d))

    plain = passthrough_params(d)
    src_less = fused_consumption_guard(make_signal_source(sig, n))
    steps_less = 0
    for x in src_less:
        stateless_out[steps_less] = stateless_step(plain, x)
        reference[steps_less] = src_less.reference
        steps_less += 1

    spec = NetworkSpec.single(passthrough_params(d, config.lam))
    src_full = fused_consumption_guard(make_signal_source(sig, n))
    gain = config.gain

    def sink(rec):
        stateful_out[rec.t] = rec.s / gain

    summary = run_stream(spec, spec.zero_state(), src_full, sink)

    w = slice(config.transient, n)
    mse_full = float(np.mean((stateful_out[w] - reference[w]) ** 2))
    mse_less = float(np.mean((stateless_out[w] - reference[w]) ** 2))
    return TrackingReport(
        mse_stateful=mse_full,
        mse_stateless=mse_less,
        transient=config.transient,
        window=n - config.transient,
        gain=gain,
        consumed=(src_full.count, src_less.count),
        steps=(summary.steps, steps_less),
        t=np.arange(n),
        reference=reference,
        stateless_output=stateless_out,
        stateful_output=stateful_out,
    )
