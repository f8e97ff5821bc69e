"""File formats, source synthesis and mixing for separation experiments.

Supported media: CSV tables, 16-bit PCM WAV and binary PGM (P5, maxval 255).
Every randomized routine draws from numpy's PCG64 bit generator seeded
through ``numpy.random.SeedSequence``; outputs are pure functions of the
inputs and the seed.
"""

import math
import struct
import wave
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptHeader,
    DimensionMismatch,
    EmptyColumn,
    InputError,
    ParseError,
    RaggedRows,
    RetryExhausted,
    ShapeMismatch,
    UnsupportedFormat,
)

KINDS = ("csv", "wav", "image", "synthetic", "bootstrap")
SOURCE_KINDS = ("uniform", "laplace", "sine_mixture", "bimodal")
PCM_SCALE = 32768


def make_rng(seed):
    """The package-wide generator: PCG64 seeded through SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _substreams(seed, n):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class SignalBundle:
    data: np.ndarray
    kind: str
    sample_rate: int = None
    image_shape: tuple = None
    names: list = None
    descriptors: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.kind not in KINDS:
            raise InputError(f"unknown bundle kind {self.kind!r}")
        if self.kind == "wav" and (self.sample_rate is None or self.sample_rate <= 0):
            raise InputError("wav bundles need a positive sample rate")
        if self.kind == "image":
            if self.image_shape is None:
                raise InputError("image bundles need image_shape")
            h, w = self.image_shape
            if h * w != self.data.shape[0]:
                raise DimensionMismatch(f"{self.data.shape[0]} pixels do not fit a {h}x{w} image")


# -- CSV ---------------------------------------------------------------------

def _parse_row(line, lineno):
    values = []
    for field_no, token in enumerate(line.split(","), start=1):
        try:
            v = float(token)
        except ValueError:
            raise ParseError(f"line {lineno}, field {field_no}: not a number: {token.strip()!r}") from None
        if not math.isfinite(v):
            raise ParseError(f"line {lineno}, field {field_no}: non-finite value")
        values.append(v)
    return values


def load_csv(path):
    """Read a comma-separated numeric table; a non-numeric first line is a header."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    names = None
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if lineno == 1:
            try:
                row = _parse_row(line, lineno)
            except ParseError:
                names = [t.strip() for t in line.split(",")]
                width = len(names)
                continue
        else:
            row = _parse_row(line, lineno)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise RaggedRows(f"line {lineno}: expected {width} fields, found {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return SignalBundle(np.array(rows), "csv", names=names, descriptors={"path": str(path)})


def format_row(values):
    return ",".join(repr(float(v)) for v in values)


def save_csv(bundle, path, names=None):
    """Write a table with shortest round-trip float formatting and LF endings."""
    data = bundle.data if isinstance(bundle, SignalBundle) else np.asarray(bundle, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if names is None and isinstance(bundle, SignalBundle):
        names = bundle.names
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if names:
            fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(format_row(row) + "\n")


# -- WAV ---------------------------------------------------------------------

_PCM = 1
_EXTENSIBLE = 0xFFFE


def load_wav(path):
    """Read a 16-bit PCM RIFF/WAVE file; samples scaled to [-1, 1), channels as columns."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: byte 0: missing RIFF/WAVE signature")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, pos)
        body = pos + 8
        if body + size > len(raw):
            raise CorruptHeader(f"{path}: byte {pos}: chunk {cid!r} runs past end of file")
        if cid == b"fmt ":
            if size < 16:
                raise CorruptHeader(f"{path}: byte {pos}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", raw, body)
            if fmt[0] == _EXTENSIBLE and size >= 40:
                sub = struct.unpack_from("<H", raw, body + 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = (body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise CorruptHeader(f"{path}: no fmt chunk")
    tag, channels, rate, _, block, bits = fmt
    if tag != _PCM:
        raise UnsupportedFormat(f"{path}: format tag {tag:#x} is not PCM")
    if bits != 16:
        raise UnsupportedFormat(f"{path}: {bits}-bit samples, only 16-bit is supported")
    if channels < 1 or rate <= 0 or block != 2 * channels:
        raise CorruptHeader(f"{path}: inconsistent fmt chunk (channels={channels}, rate={rate})")
    if payload is None:
        raise CorruptHeader(f"{path}: no data chunk")
    start, size = payload
    n = size // block
    samples = np.frombuffer(raw, dtype="<i2", count=n * channels, offset=start)
    data = samples.reshape(n, channels).astype(float) / PCM_SCALE
    return SignalBundle(data, "wav", sample_rate=rate, descriptors={"path": str(path)})


def save_wav(bundle, path, rate=None):
    data = bundle.data if isinstance(bundle, SignalBundle) else np.asarray(bundle, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if rate is None:
        rate = getattr(bundle, "sample_rate", None)
    if not rate or rate <= 0:
        raise InputError("a positive sample rate is required")
    q = np.clip(np.round(data * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(data.shape[1])
        wf.setsampwidth(2)
        wf.setframerate(int(rate))
        wf.writeframes(q.tobytes())


# -- PGM ---------------------------------------------------------------------

def _pgm_header(raw, path):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(raw):
            raise CorruptHeader(f"{path}: byte {pos}: header truncated")
        c = raw[pos:pos + 1]
        if c == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end + 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
                pos += 1
            tokens.append((raw[start:pos], start))
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise CorruptHeader(f"{path}: byte {pos}: expected whitespace after header")
    return tokens, pos + 1


def load_image_gray(path):
    """Read a binary PGM; pixels flattened row-major into one column in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] != b"P5":
        raise UnsupportedFormat(f"{path}: byte 0: not a binary PGM (P5) file")
    tokens, offset = _pgm_header(raw, path)
    values = []
    for tok, at in tokens[1:]:
        try:
            values.append(int(tok))
        except ValueError:
            raise CorruptHeader(f"{path}: byte {at}: bad header field {tok!r}") from None
    width, height, maxval = values
    if width <= 0 or height <= 0:
        raise CorruptHeader(f"{path}: non-positive image size {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: maxval {maxval}, only 255 is supported")
    if len(raw) - offset < width * height:
        raise CorruptHeader(f"{path}: byte {len(raw)}: pixel data truncated, "
                            f"expected {width * height} bytes from byte {offset}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=offset)
    return SignalBundle(pixels.astype(float)[:, None] / 255.0, "image",
                        image_shape=(height, width), descriptors={"path": str(path)})


def save_image_gray(bundle, path, column=0):
    """Write one column of an image bundle as P5; values are clipped to [0, 1]."""
    h, w = bundle.image_shape
    col = bundle.data[:, column]
    if col.size != h * w:
        raise DimensionMismatch(f"{col.size} values do not fit a {h}x{w} image")
    pixels = np.round(np.clip(col, 0.0, 1.0) * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def to_unit_range(col, reference=None):
    """Orient and min-max rescale a separated component for display as an image.

    ICA loses sign and scale. With a reference the sign makes the result
    correlate positively with it; otherwise the sign puts the median at or
    below 0.5.
    """
    col = np.asarray(col, dtype=float)
    if reference is not None:
        if np.dot(col - col.mean(), np.asarray(reference) - np.mean(reference)) < 0:
            col = -col
    span = np.ptp(col)
    if span == 0:
        return np.zeros_like(col)
    out = (col - col.min()) / span
    if reference is None and np.median(out) > 0.5:
        out = 1.0 - out
    return out


# -- mixing and synthesis ----------------------------------------------------

@dataclass
class MixSpec:
    A: np.ndarray
    seed: int = None
    condition_bound: float = None

    @property
    def condition(self):
        return float(np.linalg.cond(self.A))


def random_mixing_matrix(d, seed, condition_bound=20.0, max_tries=1000):
    """Standard normal ``d x d`` matrix, redrawn until its condition number fits the bound."""
    if d < 2:
        raise InputError("mixing needs at least two dimensions")
    rng = make_rng(seed)
    for _ in range(max_tries):
        A = rng.standard_normal((d, d))
        if np.linalg.cond(A) <= condition_bound:
            return MixSpec(A=A, seed=seed, condition_bound=condition_bound)
    raise RetryExhausted(f"no {d}x{d} matrix with condition <= {condition_bound} in {max_tries} draws")


def mix(S, spec):
    """Apply the mixing matrix to every row: ``X = S @ A.T``."""
    S = np.asarray(S, dtype=float)
    A = spec.A if isinstance(spec, MixSpec) else np.asarray(spec, dtype=float)
    if S.ndim != 2 or S.shape[1] != A.shape[1]:
        raise ShapeMismatch(f"cannot mix {S.shape} data with a {A.shape} matrix")
    return S @ A.T


def bootstrap_sources(column_data, n_samples, seed):
    """Resample each column with replacement from its own substream.

    Columns are independent by construction, whatever the dependence of the
    inputs they were drawn from.
    """
    cols = [np.asarray(c, dtype=float).ravel() for c in column_data]
    for i, c in enumerate(cols):
        if c.size == 0:
            raise EmptyColumn(f"column {i} is empty")
    streams = _substreams(seed, len(cols))
    data = np.column_stack([rng.choice(c, size=n_samples, replace=True) for rng, c in zip(streams, cols)])
    return SignalBundle(data, "bootstrap", descriptors={"seed": seed, "n_samples": n_samples})


_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)


def _column(kind, k, c, rng):
    if kind == "uniform":
        return rng.uniform(-math.sqrt(3), math.sqrt(3), k)
    if kind == "laplace":
        return rng.laplace(0.0, 1 / math.sqrt(2), k)
    if kind == "bimodal":
        mu = 0.9
        signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
        return signs * mu + rng.normal(0.0, math.sqrt(1 - mu * mu), k)
    # two sines per column at irrational cycle counts, distinct across columns
    t = np.arange(k) / k
    p, q = _PRIMES[(2 * c) % len(_PRIMES)], _PRIMES[(2 * c + 1) % len(_PRIMES)]
    f1 = (11 + 23 * c) * math.sqrt(p) + rng.uniform(0, 1)
    f2 = (17 + 29 * c) * math.sqrt(q) + rng.uniform(0, 1)
    ph = rng.uniform(0, 2 * math.pi, 2)
    return np.sin(2 * math.pi * f1 * t + ph[0]) + np.sin(2 * math.pi * f2 * t + ph[1])


def synth_sources(kind, k, d, seed):
    """``d`` independent zero-mean unit-variance columns of a non-Gaussian family."""
    if kind not in SOURCE_KINDS:
        raise InputError(f"unknown source kind {kind!r}; choose from {SOURCE_KINDS}")
    if k < d + 1:
        raise InputError("need at least d + 1 samples")
    streams = _substreams(seed, d)
    data = np.column_stack([_column(kind, k, c, rng) for c, rng in enumerate(streams)])
    return SignalBundle(data, "synthetic", names=[f"s{c}" for c in range(d)],
                        descriptors={"family": kind, "seed": seed})
