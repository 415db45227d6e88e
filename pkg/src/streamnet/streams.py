"""Forward-only input sources and step-record sinks.

Every source is a single-pass iterator: an element is handed out at most
once, in generation order, and exhaustion is absorbing. Sources never keep
already-yielded elements around; a generator may precompute a fixed-size
block of *future* samples, which is the environment's business and bounded
in size.
"""

from __future__ import annotations

import enum
import io
import json
import math
import re
import sys
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

import numpy as np

from .core import FLOAT
from .errors import InvalidSpec, IoError, ParseError, StreamMisuse

_BLOCK = 1024


class StreamSource:
    """Base class for forward-only sources.

    Subclasses implement :meth:`_produce`, returning the next vector or
    ``None`` at the end of the stream. The base class guarantees that once
    ``None`` has been seen, the source never produces again.
    """

    def __init__(self):
        self._exhausted = False
        self.position = 0

    def __iter__(self) -> Iterator[np.ndarray]:
        return self

    def __next__(self) -> np.ndarray:
        if self._exhausted:
            raise StopIteration
        item = self._produce()
        if item is None:
            self._exhausted = True
            self._release()
            raise StopIteration
        self.position += 1
        return item

    @property
    def exhausted(self) -> bool:
        return self._exhausted

    def _produce(self) -> np.ndarray | None:
        raise NotImplementedError

    def _release(self) -> None:
        pass


class IterableSource(StreamSource):
    """Adapt any iterable of vectors (lists, generators) to a source."""

    def __init__(self, items: Iterable):
        super().__init__()
        self._it = iter(items)

    def _produce(self):
        try:
            item = next(self._it)
        except StopIteration:
            return None
        arr = np.atleast_1d(np.asarray(item, dtype=FLOAT))
        return arr

    def _release(self):
        self._it = iter(())


class SignalKind(enum.Enum):
    CONSTANT = "constant"
    STEP = "step"
    SINUSOID = "sinusoid"
    NOISY_SINUSOID = "noisy_sinusoid"
    WHITE_NOISE = "white_noise"

    @classmethod
    def parse(cls, value) -> "SignalKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"noisysinusoid": "noisy_sinusoid", "whitenoise": "white_noise"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise InvalidSpec(f"unknown signal kind {value!r}") from None


@dataclass(frozen=True)
class SignalSpec:
    """Synthetic test signal.

    ``frequency`` is angular (radians per step). ``onset`` is the first step at
    which a ``step`` signal is on. Noise is Gaussian from numpy's PCG64
    generator seeded with ``seed``.
    """

    kind: SignalKind = SignalKind.SINUSOID
    amplitude: float = 1.0
    frequency: float = 2 * math.pi / 50
    phase: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    dimension: int = 1
    onset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SignalKind.parse(self.kind))
        for name in ("amplitude", "frequency", "phase", "noise_std"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidSpec(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)
        if self.noise_std < 0:
            raise InvalidSpec(f"noise_std must be >= 0, got {self.noise_std}")
        if int(self.dimension) < 1:
            raise InvalidSpec(f"dimension must be >= 1, got {self.dimension}")
        if int(self.onset) < 0:
            raise InvalidSpec(f"onset must be >= 0, got {self.onset}")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "onset", int(self.onset))
        object.__setattr__(self, "seed", int(self.seed))

    def clean(self, t: np.ndarray) -> np.ndarray:
        """Noise-free reference values at step indices ``t`` (1-D)."""
        t = np.asarray(t, dtype=FLOAT)
        kind = self.kind
        if kind is SignalKind.CONSTANT:
            values = np.full(t.shape, self.amplitude)
        elif kind is SignalKind.STEP:
            values = np.where(t >= self.onset, self.amplitude, 0.0)
        elif kind in (SignalKind.SINUSOID, SignalKind.NOISY_SINUSOID):
            values = self.amplitude * np.sin(self.frequency * t + self.phase)
        else:
            values = np.zeros(t.shape)
        return np.repeat(values[:, None], self.dimension, axis=1)

    @property
    def noisy(self) -> bool:
        return self.kind in (SignalKind.NOISY_SINUSOID, SignalKind.WHITE_NOISE)


class SignalSource(StreamSource):
    """Deterministic generator for a :class:`SignalSpec`.

    ``reference`` holds the clean value behind the most recently yielded
    element, for evaluation code that sits outside the engine.
    """

    def __init__(self, spec: SignalSpec, length: int | None = None):
        super().__init__()
        if length is not None and length < 0:
            raise InvalidSpec(f"length must be >= 0, got {length}")
        self.spec = spec
        self.length = length
        self.reference: np.ndarray | None = None
        self._rng = np.random.default_rng(spec.seed) if spec.noisy else None
        self._t0 = 0
        self._clean = np.empty((0, spec.dimension))
        self._values = np.empty((0, spec.dimension))
        self._i = 0

    def _refill(self) -> None:
        n = _BLOCK
        if self.length is not None:
            n = min(n, self.length - self._t0)
        t = np.arange(self._t0, self._t0 + n)
        clean = self.spec.clean(t)
        values = clean
        if self._rng is not None:
            values = clean + self.spec.noise_std * self._rng.standard_normal((n, self.spec.dimension))
        clean.setflags(write=False)
        values.setflags(write=False)
        self._clean, self._values, self._i = clean, values, 0
        self._t0 += n

    def _produce(self):
        if self._i >= self._values.shape[0]:
            if self.length is not None and self._t0 >= self.length:
                return None
            self._refill()
        i = self._i
        self._i = i + 1
        self.reference = self._clean[i]
        return self._values[i]

    def _release(self):
        self.reference = None
        self._clean = self._values = np.empty((0, self.spec.dimension))


def make_signal_source(spec: SignalSpec, length: int | None = None) -> SignalSource:
    return SignalSource(spec, length)


_SPLIT = re.compile(r"[,\s]+")


def parse_record_line(line: str, lineno: int) -> np.ndarray | None:
    """Parse one whitespace/comma separated vector; ``None`` for blank lines."""
    text = line.strip()
    if not text:
        return None
    try:
        values = [float(tok) for tok in _SPLIT.split(text) if tok]
    except ValueError:
        raise ParseError(lineno, f"not a numeric vector: {text!r}") from None
    if not all(math.isfinite(v) for v in values):
        raise ParseError(lineno, f"non-finite value in {text!r}")
    return np.asarray(values, dtype=FLOAT)


class RecordSource(StreamSource):
    """Line-delimited numeric vectors from a text stream, read lazily.

    Blank lines are skipped. A line whose dimension differs from the first
    record is a :class:`ParseError`.
    """

    def __init__(self, handle: TextIO, *, close: bool = False, name: str = "<stream>"):
        super().__init__()
        self._handle = handle
        self._close = close
        self.name = name
        self.lineno = 0
        self.dimension: int | None = None

    def _produce(self):
        while True:
            try:
                line = self._handle.readline()
            except OSError as exc:
                raise IoError(f"{self.name}: {exc}") from exc
            except UnicodeDecodeError as exc:
                raise ParseError(self.lineno + 1, f"undecodable bytes ({exc.reason})") from None
            if not line:
                return None
            self.lineno += 1
            vec = parse_record_line(line, self.lineno)
            if vec is None:
                continue
            if self.dimension is None:
                self.dimension = vec.shape[0]
            elif vec.shape[0] != self.dimension:
                raise ParseError(
                    self.lineno, f"expected {self.dimension} values, found {vec.shape[0]}"
                )
            return vec

    def _release(self):
        if self._close:
            self._handle.close()


def open_record_source(path) -> RecordSource:
    """Open ``path`` (or ``"-"`` / ``None`` for standard input) as a source."""
    if path is None or str(path) == "-":
        return RecordSource(sys.stdin, name="<stdin>")
    if isinstance(path, io.TextIOBase):
        return RecordSource(path, name=getattr(path, "name", "<stream>"))
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc.strerror or exc}") from exc
    return RecordSource(handle, close=True, name=str(path))


class ConsumptionGuard(StreamSource):
    """Counts elements pulled through it and flags polling of a dead source.

    Returning end-of-stream twice is tolerated (a drain loop followed by one
    more check); any retrieval after that raises :class:`StreamMisuse`.
    """

    def __init__(self, source: Iterator):
        super().__init__()
        self.source = source
        self.count = 0
        self.end_returns = 0

    def __next__(self):
        if self.end_returns >= 2:
            raise StreamMisuse(
                f"source polled again after end-of-stream was returned {self.end_returns} times"
            )
        try:
            item = next(self.source)
        except StopIteration:
            self.end_returns += 1
            self._exhausted = True
            raise
        self.count += 1
        self.position = self.count
        return item

    @property
    def reference(self):
        return getattr(self.source, "reference", None)


def fused_consumption_guard(source: Iterator) -> ConsumptionGuard:
    return ConsumptionGuard(source)


@dataclass(frozen=True)
class StepRecord:
    """What the engine reports per step. Deliberately has no input field."""

    t: int
    y: np.ndarray
    s: np.ndarray
    r: np.ndarray | None = None


def _fmt(v: float) -> str:
    return repr(float(v))


class CsvSink:
    """Write step records as CSV with header ``t,y0..,s0..,r``."""

    def __init__(self, handle: TextIO, y_dim: int, s_dim: int, r_dim: int = 1):
        self.handle = handle
        self.r_dim = r_dim
        cols = ["t"]
        cols += [f"y{i}" for i in range(y_dim)]
        cols += [f"s{i}" for i in range(s_dim)]
        cols += ["r"] if r_dim <= 1 else [f"r{i}" for i in range(r_dim)]
        handle.write(",".join(cols) + "\n")
        self.records = 0

    def __call__(self, rec: StepRecord) -> None:
        parts = [str(rec.t)]
        parts += [_fmt(v) for v in rec.y]
        parts += [_fmt(v) for v in rec.s]
        if rec.r is None:
            parts += [""] * max(self.r_dim, 1)
        else:
            parts += [_fmt(v) for v in np.atleast_1d(rec.r)]
        self.handle.write(",".join(parts) + "\n")
        self.records += 1


class JsonlSink:
    """Write step records as line-delimited JSON objects."""

    def __init__(self, handle: TextIO, *args, **kwargs):
        self.handle = handle
        self.records = 0

    def __call__(self, rec: StepRecord) -> None:
        obj = {
            "t": rec.t,
            "y": [float(v) for v in rec.y],
            "s": [float(v) for v in rec.s],
            "r": None if rec.r is None else [float(v) for v in np.atleast_1d(rec.r)],
        }
        self.handle.write(json.dumps(obj) + "\n")
        self.records += 1


def make_sink(fmt: str, handle: TextIO, y_dim: int, s_dim: int, r_dim: int = 1):
    fmt = fmt.lower()
    if fmt == "csv":
        return CsvSink(handle, y_dim, s_dim, r_dim)
    if fmt == "jsonl":
        return JsonlSink(handle)
    raise ValueError(f"unknown output format {fmt!r} (expected csv or jsonl)")


def with_reference(sink, source):
    """Wrap ``sink`` so each record carries the source's clean reference value.

    The reference comes from the environment (the generator), not the engine.
    """

    def attach(rec: StepRecord) -> None:
        sink(StepRecord(rec.t, rec.y, rec.s, getattr(source, "reference", None)))

    return attach
