"""Acceptance gate: one test per criterion, each at its stated tolerance and time budget.

A pass/fail line per criterion is printed in the terminal summary (see conftest.py).
"""

import enum
import time

import numpy as np
import pytest

from oracles import REFERENCE_TRACKING, half_life, tracking_mse
from streamnet.analysis import (
    Attractor,
    TrackingExperiment,
    bound_probe,
    classify_attractor,
    collapse_probe,
    contraction_probe,
    lag_sensitivity,
    phase_trajectory,
    retention_curve,
    tracking_experiment,
)
from streamnet.cli import bench
from streamnet.config import ExperimentConfig
from streamnet.core import NeuronParams
from streamnet.executor import (
    NetworkSpec,
    load_snapshot,
    run_stream,
    save_snapshot,
)
from streamnet.neuron import NeuronState
from streamnet.streams import IterableSource, SignalSpec, fused_consumption_guard, make_signal_source

EPS = np.finfo(np.float64).eps

# Frozen from tests/oracles.py (independent filter evaluation of the same seeded noise).
TRACKING_STATEFUL = 0.011313303929809792
TRACKING_STATELESS = 0.08835611791970041


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        print(f"runtime {self.elapsed:.2f} s (budget {self.seconds} s)")


@pytest.mark.criterion("1. contraction within 64 ulps")
def test_contraction():
    rng = np.random.default_rng(0)
    with Budget(5) as b:
        for lam in (0.0, 0.25, 0.5, 0.9, 0.999):
            sa = rng.uniform(-1, 1, (1000, 8))
            sb = rng.uniform(-1, 1, (1000, 8))
            ys = rng.uniform(-1, 1, (100, 1000, 8))
            rep = contraction_probe(lam, sa, sb, ys)
            print(f"lambda={lam}: max step deviation {rep.max_step_ulps:.1f} ulps")
            assert rep.gaps.shape == (101, 1000)
            assert rep.holds(64)
    assert b.elapsed < 5


@pytest.mark.criterion("2. boundedness |s| <= 1 + 4 eps")
def test_boundedness():
    rng = np.random.default_rng(1)
    limit = 1.0 + 4 * EPS
    worst = 0.0
    with Budget(60) as b:
        for _ in range(100):
            n_in, n_out = (int(v) for v in rng.integers(1, 5, size=2))
            params = NeuronParams(
                rng.uniform(-2, 2, (n_out, n_in)),
                rng.uniform(-2, 2, (n_out, n_out)),
                rng.uniform(-2, 2, n_out),
                rng.uniform(-2, 2),
                rng.uniform(0.0, 1.0),
                "tanh",
            )
            sig = SignalSpec("white_noise", noise_std=3.0, dimension=n_in, seed=int(rng.integers(2**31)))
            src = fused_consumption_guard(make_signal_source(sig))
            worst = max(worst, bound_probe(params, src, 100_000, initial=NeuronState.zeros(n_out)))
            assert src.count == 100_000
    print(f"max |s| = {worst!r}")
    assert worst <= limit
    assert b.elapsed < 60


@pytest.mark.criterion("3. stateless collapse")
def test_stateless_collapse():
    rng = np.random.default_rng(2)
    scalar = NeuronParams([[0.5]], [[0.5]], [0.1], 1.0, 0.9, "tanh")
    vector = NeuronParams.seeded(3, 4, seed=rng, alpha=1.0, lam=0.9)
    with Budget(5) as b:
        for params in (scalar, vector):
            xs = rng.uniform(-1, 1, (32, params.n_in))
            for k in (1, 2, 5, 10):
                rep = collapse_probe(params, xs, k, 1e-6)
                assert rep.stateless_bitwise_identical
                assert rep.stateless == 0.0
            full = lag_sensitivity("stateful", params, xs, 1, 1e-6)
            print(f"n_out={params.n_out}: stateful sensitivity at k=1 is {full.stateful:.3e}")
            assert full.stateful > 0.0
    assert b.elapsed < 5


@pytest.mark.criterion("4. phase dichotomy")
def test_phase_dichotomy():
    with Budget(10) as b:
        exp = ExperimentConfig().phase_experiment()
        on = phase_trajectory(exp, True)
        off = phase_trajectory(exp, False)
        v_on = classify_attractor(on.points, exp.eps_fp, exp.eps_rec, exp.min_period)
        v_off = classify_attractor(off.points, exp.eps_fp, exp.eps_rec, exp.min_period)
    print(f"enabled: {v_on.classification.value}, diameter {v_on.diameter:.4f}, period {v_on.period}")
    print(f"disabled: {v_off.classification.value}, centroid {v_off.centroid}")
    assert v_on.classification is Attractor.LIMIT_CYCLE
    assert v_on.diameter > 10 * v_on.eps_fp
    assert v_off.classification is Attractor.FIXED_POINT
    assert v_off.centroid == (0.0, 0.0)
    assert on.consumed == on.steps == off.consumed == off.steps == exp.steps
    assert b.elapsed < 10


@pytest.mark.criterion("5. retention within 8 ulps per step, half-life 69")
def test_retention():
    with Budget(2) as b:
        curves = {lam: retention_curve(lam, [1.0], 1000) for lam in (0.5, 0.9, 0.99)}
    for lam, curve in curves.items():
        print(f"lambda={lam}: step {curve.step_ulps():.2f} ulps, "
              f"closed form {curve.closed_form_ulps_per_step():.3f} ulps/step")
        assert curve.states.shape == (1001, 1)
        assert curve.step_ulps() <= 8
        assert curve.closed_form_ulps_per_step() <= 8
    assert half_life(0.99) == 69
    assert curves[0.99].half_life() == 69
    assert b.elapsed < 2


@pytest.mark.criterion("6. tracking MSE stateful < stateless")
def test_tracking():
    with Budget(10) as b:
        rep = tracking_experiment(TrackingExperiment())
    print(f"MSE stateful {rep.mse_stateful:.6f}, stateless {rep.mse_stateless:.6f}, window {rep.window}")
    assert rep.window >= 2000
    assert rep.mse_stateful < rep.mse_stateless
    assert rep.mse_stateful == pytest.approx(TRACKING_STATEFUL, rel=0.01)
    assert rep.mse_stateless == pytest.approx(TRACKING_STATELESS, rel=0.01)
    assert rep.consumed == rep.steps == (3000, 3000)
    # The frozen values agree with the oracle recomputed here.
    assert tracking_mse(**REFERENCE_TRACKING) == pytest.approx((TRACKING_STATEFUL, TRACKING_STATELESS), rel=1e-9)
    assert b.elapsed < 10


def _float_leaves(obj, seen=None):
    """Every float reachable from an engine object (arrays, scalars, nested dataclasses)."""
    seen = set() if seen is None else seen
    if id(obj) in seen:
        return
    seen.add(id(obj))
    if isinstance(obj, (type, enum.Enum)):
        return
    if isinstance(obj, np.ndarray):
        yield from obj.ravel().tolist()
    elif isinstance(obj, float):
        yield obj
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            yield from _float_leaves(v, seen)
    elif hasattr(obj, "__dict__") or hasattr(obj, "__dataclass_fields__"):
        for name in getattr(obj, "__dataclass_fields__", None) or vars(obj):
            yield from _float_leaves(getattr(obj, name), seen)


@pytest.mark.criterion("7. irreversibility")
def test_irreversibility():
    with Budget(10) as b:
        rng = np.random.default_rng(7)
        spec = NetworkSpec((NeuronParams.seeded(2, 4, seed=rng), NeuronParams.seeded(4, 2, seed=rng)))
        # Inputs lie outside the tanh range, so no retained value can equal one by accident.
        inputs = rng.uniform(2.0, 3.0, (1000, 2))
        input_values = set(inputs.ravel().tolist())

        guard = fused_consumption_guard(IterableSource(inputs.copy()))
        straight = run_stream(spec, spec.zero_state(), guard)
        assert guard.count == straight.steps == 1000

        guard = fused_consumption_guard(IterableSource(inputs.copy()))
        first = run_stream(spec, spec.zero_state(), guard, limit=500)
        blob = save_snapshot(spec, first.final_state).to_bytes()
        resumed = run_stream(spec, load_snapshot(spec, blob), guard)
        assert guard.count == first.steps + resumed.steps == 1000
        assert resumed.final_state.step == straight.final_state.step == 1000
        for a, c in zip(resumed.final_state.layers, straight.final_state.layers):
            assert a.s.tobytes() == c.s.tobytes()

        # Snapshot size depends on state dimensions only, and no 8-byte window decodes to an input.
        assert len(blob) == 8 + 4 + 32 + 4 + (4 + 4 * 8) + (4 + 2 * 8) + 8
        for offset in range(8):
            n = (len(blob) - offset) // 8
            window = np.frombuffer(blob, dtype="<f8", count=n, offset=offset)
            assert input_values.isdisjoint(window.tolist())

        for obj in (spec, straight, resumed, first):
            assert input_values.isdisjoint(_float_leaves(obj))
        # The walker does reach retained state, so the audit is not vacuous.
        assert set(straight.final_state.flat().tolist()) <= set(_float_leaves(straight))
        assert set(spec.layers[0].W.ravel().tolist()) <= set(_float_leaves(spec))

        # Consumption guard counts on the experiment runs.
        exp = ExperimentConfig().phase_experiment()
        for enabled in (True, False):
            traj = phase_trajectory(exp, enabled)
            assert traj.consumed == traj.steps == exp.steps
        rep = tracking_experiment(TrackingExperiment())
        assert rep.consumed == rep.steps
    assert b.elapsed < 10


@pytest.mark.slow
@pytest.mark.criterion("8. constant-cost execution")
def test_constant_cost():
    with Budget(120) as b:
        rep = bench(ExperimentConfig())
    print({k: rep[k] for k in ("steps", "early_mean_ns", "late_mean_ns", "late_over_early",
                               "memory_bytes_at_probe", "memory_bytes_at_end")})
    assert rep["steps"] == rep["consumed"] == 1_001_000
    assert rep["memory_probe_step"] == 1000
    assert rep["memory_identical"]
    assert rep["late_over_early"] <= 2.0
    assert b.elapsed < 120
