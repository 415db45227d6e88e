"""Network-level stream execution.

A network is a feed-forward stack of stream-neuron layers. Within one stream
step every layer advances exactly once and layer ``k`` consumes layer
``k - 1``'s output from the same step, so the whole network still maps
``(x_t, s_{t-1}) -> (y_t, s_t)``.

The engine keeps nothing but the spec and the current state. Inputs are
pulled from the source one at a time and dropped after the step; sinks see
``(t, y_t, s_t)`` only.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .core import FLOAT, NeuronParams, as_vector
from .errors import (
    CorruptSnapshot,
    DigestMismatch,
    DimensionMismatch,
    InvalidSpec,
    NonFiniteValue,
    VersionUnsupported,
)
from .neuron import NeuronState, neuron_step
from .streams import StepRecord


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[NeuronParams, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise InvalidSpec("a network needs at least one layer")
        for k, layer in enumerate(layers):
            if not isinstance(layer, NeuronParams):
                raise InvalidSpec(f"layer {k} is not a NeuronParams value")
        for k in range(1, len(layers)):
            if layers[k].n_in != layers[k - 1].n_out:
                raise DimensionMismatch(
                    f"layer {k} expects {layers[k].n_in} inputs, layer {k - 1} emits {layers[k - 1].n_out}"
                )

    @classmethod
    def single(cls, params: NeuronParams) -> "NetworkSpec":
        return cls((params,))

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    @property
    def state_dim(self) -> int:
        return sum(p.n_out for p in self.layers)

    @cached_property
    def digest(self) -> bytes:
        """SHA-256 over a canonical little-endian encoding of every layer."""
        h = hashlib.sha256(b"STNNSPEC")
        h.update(struct.pack("<I", len(self.layers)))
        for p in self.layers:
            name = p.activation.value.encode("ascii")
            h.update(struct.pack("<IIdd", p.n_out, p.n_in, p.alpha, p.lam))
            h.update(struct.pack("<I", len(name)) + name)
            for arr in (p.W, p.W_s, p.b):
                h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.digest()

    def zero_state(self) -> "NetworkState":
        return NetworkState(tuple(NeuronState.zeros(p.n_out) for p in self.layers), 0)

    def __hash__(self):
        return hash(self.digest)

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        return self.digest == other.digest


@dataclass(frozen=True)
class NetworkState:
    layers: tuple[NeuronState, ...]
    step: int = 0

    def flat(self) -> np.ndarray:
        """All layer states concatenated, first layer first."""
        if len(self.layers) == 1:
            return self.layers[0].s
        return np.concatenate([st.s for st in self.layers])

    def digest(self) -> str:
        h = hashlib.sha256(struct.pack("<Q", self.step))
        for st in self.layers:
            h.update(np.ascontiguousarray(st.s, dtype="<f8").tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, NetworkState):
            return NotImplemented
        return self.step == other.step and len(self.layers) == len(other.layers) and all(
            a == b for a, b in zip(self.layers, other.layers)
        )

    __hash__ = None


def check_state(spec: NetworkSpec, state: NetworkState) -> None:
    if len(state.layers) != len(spec.layers):
        raise DimensionMismatch(
            f"state has {len(state.layers)} layers, network has {len(spec.layers)}"
        )
    for k, (p, st) in enumerate(zip(spec.layers, state.layers)):
        if st.s.shape != (p.n_out,):
            raise DimensionMismatch(f"layer {k} state has shape {st.s.shape}, expected ({p.n_out},)")
        if st.step != state.step:
            raise InvalidSpec(f"layer {k} step counter {st.step} != network counter {state.step}")
        if not np.isfinite(st.s).all():
            raise NonFiniteValue(f"layer {k} state contains non-finite values")


def network_step(spec: NetworkSpec, state: NetworkState, x) -> tuple[np.ndarray, NetworkState]:
    if len(state.layers) != len(spec.layers):
        raise DimensionMismatch(
            f"state has {len(state.layers)} layers, network has {len(spec.layers)}"
        )
    h = as_vector(x, "x")
    advanced = []
    for p, st in zip(spec.layers, state.layers):
        out = neuron_step(p, st, h)
        advanced.append(out.next_state)
        h = out.y
    return h, NetworkState(tuple(advanced), state.step + 1)


def engine_memory_bytes(spec: NetworkSpec, state: NetworkState) -> int:
    """Bytes of numeric data the engine holds: parameters plus current state."""
    total = 0
    for p in spec.layers:
        total += p.W.nbytes + p.W_s.nbytes + p.b.nbytes + 2 * FLOAT().nbytes
    for st in state.layers:
        total += st.s.nbytes
    return total


@dataclass(frozen=True)
class RunSummary:
    steps: int
    final_state: NetworkState = field(repr=False)
    final_state_digest: str
    step_time_min_ns: int
    step_time_mean_ns: float
    step_time_max_ns: int
    memory_bytes: int
    window_means_ns: tuple[float | None, ...] = ()

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "final_state_digest": self.final_state_digest,
            "step_time_ns": {
                "min": self.step_time_min_ns,
                "mean": self.step_time_mean_ns,
                "max": self.step_time_max_ns,
            },
            "memory_bytes": self.memory_bytes,
            "window_means_ns": list(self.window_means_ns),
        }


Sink = Callable[[StepRecord], None]


def run_stream(
    spec: NetworkSpec,
    initial: NetworkState,
    source: Iterator,
    sink: Sink | None = None,
    limit: int | None = None,
    timing_windows: Sequence[tuple[int, int]] = (),
) -> RunSummary:
    """Drive the network over ``source`` until it ends or ``limit`` steps ran.

    Each element is pulled exactly once and never before the previous step
    finished. ``timing_windows`` are half-open ``(start, stop)`` ranges of
    zero-based step indices whose mean step time is reported separately.

    A numeric fault raises :class:`NonFiniteValue` whose ``summary`` holds
    the last good state; source failures propagate unchanged.
    """
    check_state(spec, initial)
    if limit is not None and limit < 0:
        raise ValueError("limit must be non-negative")
    windows = [(int(a), int(b)) for a, b in timing_windows]
    window_sum = [0] * len(windows)
    window_n = [0] * len(windows)

    clock = time.perf_counter_ns
    state = initial
    steps = 0
    t_min = t_max = t_sum = 0

    def summary() -> RunSummary:
        return RunSummary(
            steps=steps,
            final_state=state,
            final_state_digest=state.digest(),
            step_time_min_ns=t_min,
            step_time_mean_ns=(t_sum / steps) if steps else 0.0,
            step_time_max_ns=t_max,
            memory_bytes=engine_memory_bytes(spec, state),
            window_means_ns=tuple(
                (s / n) if n else None for s, n in zip(window_sum, window_n)
            ),
        )

    while limit is None or steps < limit:
        try:
            x = next(source)
        except StopIteration:
            break
        t0 = clock()
        try:
            y, nxt = network_step(spec, state, x)
        except NonFiniteValue as exc:
            raise NonFiniteValue(f"aborted at step index {steps}: {exc}", summary=summary()) from exc
        dt = clock() - t0
        del x
        if steps == 0 or dt < t_min:
            t_min = dt
        if dt > t_max:
            t_max = dt
        t_sum += dt
        for i, (a, b) in enumerate(windows):
            if a <= steps < b:
                window_sum[i] += dt
                window_n[i] += 1
        state = nxt
        steps += 1
        if sink is not None:
            sink(StepRecord(steps - 1, y, state.flat()))
    return summary()


# -- snapshots ---------------------------------------------------------------

MAGIC = b"STNNSNAP"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<8sI32sI")


@dataclass(frozen=True)
class Snapshot:
    """Persisted state: format version, spec digest, layer states, step counter.

    Binary layout (little-endian): magic ``STNNSNAP``, u32 version, 32-byte
    SHA-256 spec digest, u32 layer count, then per layer u32 dimension and
    that many f64 values, then u64 step counter.
    """

    version: int
    digest: bytes
    states: tuple[np.ndarray, ...]
    step: int

    def to_bytes(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, self.version, self.digest, len(self.states))]
        for s in self.states:
            parts.append(struct.pack("<I", s.shape[0]))
            parts.append(np.ascontiguousarray(s, dtype="<f8").tobytes())
        parts.append(struct.pack("<Q", self.step))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Snapshot":
        data = bytes(data)
        if len(data) < _HEADER.size:
            raise CorruptSnapshot("snapshot shorter than its header")
        magic, version, digest, n_layers = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptSnapshot("bad magic; not a streamnet snapshot")
        if version != SNAPSHOT_VERSION:
            raise VersionUnsupported(f"snapshot version {version} (supported: {SNAPSHOT_VERSION})")
        off = _HEADER.size
        states = []
        for k in range(n_layers):
            if off + 4 > len(data):
                raise CorruptSnapshot(f"truncated before layer {k} dimension")
            (dim,) = struct.unpack_from("<I", data, off)
            off += 4
            end = off + 8 * dim
            if dim == 0 or end > len(data):
                raise CorruptSnapshot(f"layer {k} state truncated or empty")
            s = np.frombuffer(data, dtype="<f8", count=dim, offset=off).astype(FLOAT)
            if not np.isfinite(s).all():
                raise CorruptSnapshot(f"layer {k} state contains non-finite values")
            states.append(s)
            off = end
        if off + 8 != len(data):
            raise CorruptSnapshot("snapshot length does not match its layer table")
        (step,) = struct.unpack_from("<Q", data, off)
        return cls(version, digest, tuple(states), step)


def save_snapshot(spec: NetworkSpec, state: NetworkState) -> Snapshot:
    check_state(spec, state)
    return Snapshot(
        SNAPSHOT_VERSION,
        spec.digest,
        tuple(np.array(st.s, dtype=FLOAT, copy=True) for st in state.layers),
        state.step,
    )


def load_snapshot(spec: NetworkSpec, snapshot: Snapshot | bytes) -> NetworkState:
    if not isinstance(snapshot, Snapshot):
        snapshot = Snapshot.from_bytes(snapshot)
    if snapshot.version != SNAPSHOT_VERSION:
        raise VersionUnsupported(f"snapshot version {snapshot.version}")
    if snapshot.digest != spec.digest:
        raise DigestMismatch("snapshot was taken from a different network")
    if len(snapshot.states) != len(spec.layers):
        raise CorruptSnapshot("layer count differs from the network")
    layers = []
    for k, (p, s) in enumerate(zip(spec.layers, snapshot.states)):
        if s.shape != (p.n_out,):
            raise CorruptSnapshot(f"layer {k} state has {s.shape[0]} values, expected {p.n_out}")
        layers.append(NeuronState.initial(s, snapshot.step))
    return NetworkState(tuple(layers), snapshot.step)


def write_snapshot(path, spec: NetworkSpec, state: NetworkState) -> None:
    with open(path, "wb") as fh:
        fh.write(save_snapshot(spec, state).to_bytes())


def read_snapshot(path, spec: NetworkSpec) -> NetworkState:
    with open(path, "rb") as fh:
        return load_snapshot(spec, fh.read())
