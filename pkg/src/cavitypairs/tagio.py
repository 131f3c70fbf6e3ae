"""Time-tag streams and their binary file format.

One file per channel, little-endian::

    offset  size  field
    0       4     magic b"TTAG"
    4       2     format version (uint16, = 1)
    6       4     quantization step in ps (uint32)
    10      1     channel id (uint8)
    11      5     reserved, zero
    16      8*N   timestamps in ps (uint64), nondecreasing
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import TagFormatError

MAGIC = b"TTAG"
VERSION = 1
HEADER = struct.Struct("<4sHIB5s")
HEADER_SIZE = HEADER.size
RECORD_SIZE = 8
TAG_DTYPE = np.dtype("<u8")


@dataclass
class TagStream:
    channel_id: int
    tags: np.ndarray
    quantization_ps: int = 40

    def __post_init__(self):
        self.tags = np.asarray(self.tags, dtype=np.uint64)

    def __len__(self):
        return self.tags.size

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (self.channel_id == other.channel_id
                and self.quantization_ps == other.quantization_ps
                and np.array_equal(self.tags, other.tags))

    def first_unsorted_index(self):
        """Index of the first tag smaller than its predecessor, or None."""
        bad = np.flatnonzero(self.tags[1:] < self.tags[:-1])
        return int(bad[0]) + 1 if bad.size else None

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("channel,timestamp_ps\n")
            for t in self.tags.tolist():
                fh.write(f"{self.channel_id},{t}\n")


def header_bytes(channel_id, quantization_ps):
    return HEADER.pack(MAGIC, VERSION, quantization_ps, channel_id, bytes(5))


def write_tags(stream: TagStream, path):
    """Write ``stream`` to ``path``; rejects out-of-order tags."""
    bad = stream.first_unsorted_index()
    if bad is not None:
        raise TagFormatError("timestamps not nondecreasing",
                             HEADER_SIZE + RECORD_SIZE * bad)
    with open(path, "wb") as fh:
        fh.write(header_bytes(stream.channel_id, stream.quantization_ps))
        fh.write(stream.tags.astype(TAG_DTYPE, copy=False).tobytes())


def read_header(fh):
    raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TagFormatError("truncated header", len(raw))
    magic, version, quant, channel, reserved = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TagFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise TagFormatError(f"unsupported format version {version}", 4)
    if reserved != bytes(5):
        raise TagFormatError("reserved header bytes are not zero", 11)
    return channel, quant


def read_tags(path, validate=True) -> TagStream:
    """Read a tag file written by :func:`write_tags`.

    Raises :class:`TagFormatError` with the byte offset of the first
    problem: bad header, partial trailing record, decreasing timestamp, or
    timestamp off the quantization grid.
    """
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        channel, quant = read_header(fh)
        payload = size - HEADER_SIZE
        n = payload // RECORD_SIZE
        if payload % RECORD_SIZE:
            raise TagFormatError("truncated record", HEADER_SIZE + n * RECORD_SIZE)
        tags = np.fromfile(fh, dtype=TAG_DTYPE, count=n)
    if tags.size != n:
        raise TagFormatError("file shorter than expected", HEADER_SIZE + tags.size * RECORD_SIZE)
    stream = TagStream(channel, tags.astype(np.uint64, copy=False), quant)
    if validate:
        bad = stream.first_unsorted_index()
        if bad is not None:
            raise TagFormatError("timestamp decreases", HEADER_SIZE + RECORD_SIZE * bad)
        if quant > 1 and n:
            off = np.flatnonzero(tags % np.uint64(quant))
            if off.size:
                raise TagFormatError(f"timestamp not a multiple of {quant} ps",
                                     HEADER_SIZE + RECORD_SIZE * int(off[0]))
    return stream
