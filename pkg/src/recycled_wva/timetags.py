"""Time-tag streams and their text file format.

File layout (UTF-8)::

    # key=value            one header line per metadata entry
    # ...
    1234,L,1               timestamp_ns,detector,pass_index
    1238,R,2
    50021,L,-              '-' marks an unknown pass (dark count)
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

LEFT, RIGHT = 0, 1
UNKNOWN_PASS = 0
_DET_CODE = {"L": LEFT, "R": RIGHT}
_DET_NAME = ("L", "R")


@dataclass(eq=False)
class TimeTagSet:
    """Time-ordered detection records plus the configuration that produced them."""

    timestamps: np.ndarray
    detectors: np.ndarray
    passes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        self.detectors = np.ascontiguousarray(self.detectors, dtype=np.uint8)
        self.passes = np.ascontiguousarray(self.passes, dtype=np.int16)
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}
        n = self.timestamps.size
        if self.detectors.size != n or self.passes.size != n:
            raise ValueError("record arrays differ in length")
        if n and np.any(np.diff(self.timestamps) < 0):
            raise ValueError("timestamps must be nondecreasing")
        if n and (self.detectors.max() > RIGHT or self.passes.min() < 0):
            raise ValueError("invalid detector id or pass index")
        for arr in (self.timestamps, self.detectors, self.passes):
            arr.setflags(write=False)

    @classmethod
    def empty(cls, metadata=None) -> "TimeTagSet":
        return cls(np.empty(0, np.int64), np.empty(0, np.uint8), np.empty(0, np.int16),
                   dict(metadata or {}))

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TimeTagSet):
            return NotImplemented
        return (np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.detectors, other.detectors)
                and np.array_equal(self.passes, other.passes)
                and self.metadata == other.metadata)

    @property
    def photon_mask(self) -> np.ndarray:
        """Records with a known pass index (i.e. not dark counts)."""
        return self.passes != UNKNOWN_PASS

    def counts(self) -> tuple[int, int]:
        right = int(np.count_nonzero(self.detectors))
        return len(self) - right, right


def _open_for(dest, mode):
    if isinstance(dest, (str, os.PathLike)):
        return open(dest, mode, encoding="utf-8", newline="\n"), True
    return dest, False


def format_timetags(tags: TimeTagSet) -> str:
    buf = io.StringIO()
    for key, value in tags.metadata.items():
        if "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata entry {key!r} cannot be written")
        buf.write(f"# {key}={value}\n")
    passes = ["-" if p == UNKNOWN_PASS else str(p) for p in tags.passes.tolist()]
    dets = [_DET_NAME[d] for d in tags.detectors.tolist()]
    buf.writelines(f"{t},{d},{p}\n" for t, d, p in zip(tags.timestamps.tolist(), dets, passes))
    return buf.getvalue()


def write_timetags(tags: TimeTagSet, destination) -> None:
    fh, owned = _open_for(destination, "w")
    try:
        fh.write(format_timetags(tags))
    finally:
        if owned:
            fh.close()


def read_timetags(source) -> TimeTagSet:
    fh, owned = _open_for(source, "r")
    try:
        text = fh.read()
    finally:
        if owned:
            fh.close()
    return parse_timetags(text)


def parse_timetags(text: str) -> TimeTagSet:
    metadata = {}
    ts, dets, passes = [], [], []
    in_header = True
    last = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            if not in_header:
                raise FormatError("header line after first record", lineno)
            body = line[1:].lstrip(" ")
            key, sep, value = body.partition("=")
            if not sep or not key:
                raise FormatError(f"header is not key=value: {line!r}", lineno)
            metadata[key] = value
            continue
        if not line.strip():
            raise FormatError("blank line", lineno)
        in_header = False
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"expected 3 comma-separated fields, got {len(parts)}", lineno)
        try:
            t = int(parts[0])
        except ValueError:
            raise FormatError(f"timestamp is not an integer: {parts[0]!r}", lineno) from None
        if last is not None and t < last:
            raise FormatError(f"timestamp {t} precedes {last}", lineno)
        last = t
        det = _DET_CODE.get(parts[1])
        if det is None:
            raise FormatError(f"detector must be L or R, got {parts[1]!r}", lineno)
        if parts[2] == "-":
            p = UNKNOWN_PASS
        else:
            try:
                p = int(parts[2])
            except ValueError:
                raise FormatError(f"pass index is not an integer: {parts[2]!r}", lineno) from None
            if p < 1:
                raise FormatError(f"pass index must be >= 1, got {p}", lineno)
        ts.append(t)
        dets.append(det)
        passes.append(p)
    return TimeTagSet(np.array(ts, dtype=np.int64), np.array(dets, dtype=np.uint8),
                      np.array(passes, dtype=np.int16), metadata)
