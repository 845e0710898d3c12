"""MIT-BIH style record ingestion.

Supports the WFDB text header layout, format-212 binary signals and a CSV
annotation fallback ("sample_index,symbol" per line). Only format 212 is
accepted; everything else is rejected with a typed error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AnnotationOutOfRange,
    ChannelLengthMismatch,
    MalformedHeader,
    MalformedLine,
    NonMonotoneIndex,
    TruncatedData,
    UnsupportedFormat,
)


@dataclass(frozen=True)
class SignalSpec:
    format_code: int
    adc_gain: float
    adc_zero: int


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    num_signals: int
    sampling_rate_hz: float
    samples_per_signal: int
    signals: tuple[SignalSpec, ...]


@dataclass(frozen=True)
class Annotation:
    sample_index: int
    symbol: str


@dataclass
class Record:
    header: RecordHeader
    signals: np.ndarray  # (num_signals, samples_per_signal), millivolts
    annotations: list[Annotation] = field(default_factory=list)


def _parse_gain(token: str) -> float:
    # WFDB gain field may carry a baseline "(...)" and units "/mV" suffix
    token = token.split("(")[0].split("/")[0]
    return float(token)


def parse_header(text: str) -> RecordHeader:
    """Parse WFDB header text into a RecordHeader."""
    if not text.strip():
        raise MalformedHeader("empty header")
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    record_fields = lines[0].split()
    if len(record_fields) < 4:
        raise MalformedHeader(f"record line needs 4 fields, got {len(record_fields)}")
    name = record_fields[0].split("/")[0]
    try:
        num_signals = int(record_fields[1])
        fs = float(record_fields[2].split("/")[0])
        num_samples = int(record_fields[3])
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric record line field: {exc}") from exc
    if num_signals < 1:
        raise MalformedHeader(f"num_signals must be >= 1, got {num_signals}")
    if fs <= 0:
        raise MalformedHeader(f"sampling rate must be positive, got {fs}")
    if num_samples < 0:
        raise MalformedHeader(f"negative sample count {num_samples}")
    if len(lines) < 1 + num_signals:
        raise MalformedHeader(
            f"header declares {num_signals} signals but has {len(lines) - 1} signal lines"
        )
    specs = []
    for ln in lines[1 : 1 + num_signals]:
        f = ln.split()
        if len(f) < 5:
            raise MalformedHeader(f"signal line needs >= 5 fields: {ln!r}")
        try:
            fmt = int(f[1].split("x")[0].split(":")[0].split("+")[0])
            gain = _parse_gain(f[2])
            adc_zero = int(f[4])
        except ValueError as exc:
            raise MalformedHeader(f"non-numeric signal line field in {ln!r}") from exc
        if fmt != 212:
            raise UnsupportedFormat(f"format {fmt} not supported (only 212)")
        specs.append(SignalSpec(format_code=fmt, adc_gain=gain, adc_zero=adc_zero))
    return RecordHeader(
        record_name=name,
        num_signals=num_signals,
        sampling_rate_hz=fs,
        samples_per_signal=num_samples,
        signals=tuple(specs),
    )


def decode_format212(data: bytes, num_signals: int, num_samples: int) -> np.ndarray:
    """Decode format-212 bytes into an int (num_signals, num_samples) matrix.

    Two 12-bit two's-complement samples per 3 bytes, channel-major per frame.
    """
    total = num_signals * num_samples
    needed = (total * 3 + 1) // 2
    if len(data) < needed:
        raise TruncatedData(f"need {needed} bytes for {total} samples, got {len(data)}")
    if total == 0:
        return np.zeros((num_signals, 0), dtype=np.int64)
    buf = np.frombuffer(data[:needed], dtype=np.uint8).astype(np.int64)
    npairs = total // 2
    flat = np.empty(total, dtype=np.int64)
    if npairs:
        b = buf[: npairs * 3].reshape(npairs, 3)
        flat[0 : 2 * npairs : 2] = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
        flat[1 : 2 * npairs : 2] = b[:, 2] | ((b[:, 1] & 0xF0) << 4)
    if total % 2:
        b0, b1 = buf[npairs * 3], buf[npairs * 3 + 1]
        flat[-1] = b0 | ((b1 & 0x0F) << 8)
    flat[flat > 2047] -= 4096
    return flat.reshape(num_samples, num_signals).T.copy()


def encode_format212(samples: np.ndarray) -> bytes:
    """Inverse of decode_format212; samples must be in [-2048, 2047]."""
    samples = np.asarray(samples, dtype=np.int64)
    if samples.min(initial=0) < -2048 or samples.max(initial=0) > 2047:
        raise ValueError("sample out of 12-bit range")
    flat = samples.T.reshape(-1) & 0xFFF
    total = flat.size
    npairs = total // 2
    out = np.zeros((total * 3 + 1) // 2, dtype=np.uint8)
    if npairs:
        s1 = flat[0 : 2 * npairs : 2]
        s2 = flat[1 : 2 * npairs : 2]
        grp = out[: npairs * 3].reshape(npairs, 3)
        grp[:, 0] = s1 & 0xFF
        grp[:, 1] = ((s1 >> 8) & 0x0F) | (((s2 >> 8) & 0x0F) << 4)
        grp[:, 2] = s2 & 0xFF
    if total % 2:
        s1 = flat[-1]
        out[npairs * 3] = s1 & 0xFF
        out[npairs * 3 + 1] = (s1 >> 8) & 0x0F
    return out.tobytes()


def parse_annotations_csv(text: str) -> list[Annotation]:
    """Parse "sample_index,symbol" lines into a sorted annotation list."""
    annotations: list[Annotation] = []
    prev = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2 or len(parts[1].strip()) != 1:
            raise MalformedLine(f"line {lineno}: expected 'index,symbol', got {raw!r}")
        try:
            idx = int(parts[0])
        except ValueError as exc:
            raise MalformedLine(f"line {lineno}: non-integer index {parts[0]!r}") from exc
        if idx < 0:
            raise MalformedLine(f"line {lineno}: negative index {idx}")
        if idx <= prev:
            raise NonMonotoneIndex(f"line {lineno}: index {idx} not above {prev}")
        prev = idx
        annotations.append(Annotation(sample_index=idx, symbol=parts[1].strip()))
    return annotations


def load_record(header_path, signal_path, annotation_path) -> Record:
    """Load header + format-212 signal + CSV annotations into a Record."""
    with open(header_path, encoding="utf-8") as fh:
        header = parse_header(fh.read())
    with open(signal_path, "rb") as fh:
        raw = decode_format212(fh.read(), header.num_signals, header.samples_per_signal)
    signals = np.empty(raw.shape, dtype=np.float64)
    for ch, spec in enumerate(header.signals):
        if spec.adc_gain == 0:
            raise MalformedHeader(f"channel {ch} has zero adc_gain")
        signals[ch] = (raw[ch] - spec.adc_zero) / spec.adc_gain
    if signals.shape[1] != header.samples_per_signal:
        raise ChannelLengthMismatch(
            f"decoded {signals.shape[1]} samples, header says {header.samples_per_signal}"
        )
    with open(annotation_path, encoding="utf-8") as fh:
        annotations = parse_annotations_csv(fh.read())
    for ann in annotations:
        if ann.sample_index >= header.samples_per_signal:
            raise AnnotationOutOfRange(
                f"annotation at {ann.sample_index} beyond {header.samples_per_signal} samples"
            )
    return Record(header=header, signals=signals, annotations=annotations)
