import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamnet.errors import InvalidSpec, IoError, ParseError, StreamMisuse
from streamnet.streams import (
    CsvSink,
    IterableSource,
    JsonlSink,
    SignalKind,
    SignalSpec,
    StepRecord,
    fused_consumption_guard,
    make_signal_source,
    open_record_source,
)


def drain(source):
    return [x.tolist() for x in source]


def test_constant_signal():
    src = make_signal_source(SignalSpec(SignalKind.CONSTANT, amplitude=1.0), length=3)
    assert drain(src) == [[1.0], [1.0], [1.0]]
    with pytest.raises(StopIteration):
        next(src)


def test_sinusoid_quarter_period_samples():
    src = make_signal_source(SignalSpec("sinusoid", amplitude=1.0, frequency=math.pi / 2), length=5)
    values = [x[0] for x in src]
    np.testing.assert_allclose(values, [0.0, 1.0, 0.0, -1.0, 0.0], atol=1e-15)


def test_step_signal_onset():
    src = make_signal_source(SignalSpec("step", amplitude=2.0, onset=2), length=4)
    assert drain(src) == [[0.0], [0.0], [2.0], [2.0]]


def test_noisy_sinusoid_is_seeded():
    spec = SignalSpec("noisy_sinusoid", noise_std=0.5, seed=42, frequency=0.1, dimension=2)
    a = np.array(drain(make_signal_source(spec, 3000)))
    b = np.array(drain(make_signal_source(spec, 3000)))
    assert a.tobytes() == b.tobytes()
    other = np.array(drain(make_signal_source(SignalSpec("noisy_sinusoid", noise_std=0.5, seed=43,
                                                         frequency=0.1, dimension=2), 3000)))
    assert not np.array_equal(a, other)


def test_noise_matches_single_block_draw():
    # Block-wise generation must equal one bulk draw from the same generator.
    spec = SignalSpec("white_noise", noise_std=2.0, seed=9, dimension=3)
    got = np.array(drain(make_signal_source(spec, 2500)))
    want = 2.0 * np.random.default_rng(9).standard_normal((2500, 3))
    assert np.array_equal(got, want)


def test_reference_tracks_clean_value():
    spec = SignalSpec("noisy_sinusoid", noise_std=0.3, seed=1, frequency=0.2)
    src = make_signal_source(spec, 10)
    for t, x in enumerate(src):
        assert src.reference[0] == pytest.approx(math.sin(0.2 * t), abs=1e-15)
        assert x[0] != src.reference[0]
    assert src.reference is None


def test_unbounded_length_keeps_going():
    src = make_signal_source(SignalSpec("constant"))
    for _ in range(5000):
        next(src)
    assert src.position == 5000


@pytest.mark.parametrize(
    "kwargs",
    [dict(noise_std=-1.0), dict(dimension=0), dict(frequency=math.inf), dict(kind="square")],
)
def test_invalid_signal_specs(kwargs):
    with pytest.raises(InvalidSpec):
        SignalSpec(**kwargs)


@settings(max_examples=50)
@given(
    kind=st.sampled_from(list(SignalKind)),
    seed=st.integers(0, 2**31),
    n=st.integers(0, 2100),
)
def test_generator_determinism_and_monotonicity(kind, seed, n):
    spec = SignalSpec(kind, noise_std=0.4, seed=seed, frequency=0.3)
    a, b = make_signal_source(spec, n), make_signal_source(spec, n)
    positions = []
    for x, y in zip(a, b):
        assert x.tobytes() == y.tobytes()
        positions.append(a.position)
    assert positions == list(range(1, n + 1))
    for _ in range(3):
        with pytest.raises(StopIteration):
            next(a)


def test_record_source_reads_lines(tmp_path):
    path = tmp_path / "in.txt"
    path.write_text("0.1\n0.2\n")
    assert drain(open_record_source(path)) == [[0.1], [0.2]]


def test_record_source_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("")
    assert drain(open_record_source(path)) == []


def test_record_source_separators():
    src = open_record_source(io.StringIO("1, 2 3\n\n4,5,6\n"))
    assert drain(src) == [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]


def test_record_source_bad_line_number(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("0.1\nabc\n0.3\n")
    src = open_record_source(path)
    assert next(src).tolist() == [0.1]
    with pytest.raises(ParseError) as info:
        next(src)
    assert info.value.line == 2


def test_record_source_rejects_non_finite_and_ragged():
    with pytest.raises(ParseError) as info:
        drain(open_record_source(io.StringIO("1\nnan\n")))
    assert info.value.line == 2
    with pytest.raises(ParseError) as info:
        drain(open_record_source(io.StringIO("1 2\n3\n")))
    assert info.value.line == 2


def test_record_source_missing_file(tmp_path):
    with pytest.raises(IoError):
        open_record_source(tmp_path / "nope.txt")


def test_guard_counts_full_drain():
    guard = fused_consumption_guard(IterableSource([[1.0], [2.0], [3.0]]))
    assert len(drain(guard)) == 3
    assert guard.count == 3


def test_guard_over_empty_source():
    guard = fused_consumption_guard(IterableSource([]))
    assert drain(guard) == []
    assert guard.count == 0


def test_guard_after_drain_returns_end_then_faults():
    guard = fused_consumption_guard(IterableSource([[1.0]]))
    drain(guard)
    with pytest.raises(StopIteration):
        next(guard)
    assert guard.count == 1
    with pytest.raises(StreamMisuse):
        next(guard)


def test_guard_exposes_reference():
    src = make_signal_source(SignalSpec("noisy_sinusoid", noise_std=0.1), 2)
    guard = fused_consumption_guard(src)
    next(guard)
    assert guard.reference is src.reference


def test_csv_sink_header_and_rows():
    buf = io.StringIO()
    sink = CsvSink(buf, y_dim=1, s_dim=2)
    sink(StepRecord(0, np.array([0.5]), np.array([0.1, 0.2])))
    sink(StepRecord(1, np.array([0.25]), np.array([0.3, 0.4]), np.array([1.0])))
    assert buf.getvalue().splitlines() == [
        "t,y0,s0,s1,r",
        "0,0.5,0.1,0.2,",
        "1,0.25,0.3,0.4,1.0",
    ]


def test_jsonl_sink():
    buf = io.StringIO()
    sink = JsonlSink(buf)
    sink(StepRecord(3, np.array([0.5]), np.array([0.1])))
    assert json.loads(buf.getvalue()) == {"t": 3, "y": [0.5], "s": [0.1], "r": None}


def test_step_record_has_no_input_field():
    import dataclasses

    assert [f.name for f in dataclasses.fields(StepRecord)] == ["t", "y", "s", "r"]
