"""Binary container for resampled signal patches.

Layout (all little-endian):
  magic "TXNP1" | version u16 | sample count u64 | N u16 | d f32 |
  C u16 | flags u16
then per record:
  position 3xf32 | frame i,j 6xf32 | face u32 |
  mask bitset ceil(N*N/8) bytes | values N*N*C f32

The file length is exactly computable from the header, and a
write/read round trip reproduces records bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MAGIC = b"TXNP1"
VERSION = 1
_HEADER = struct.Struct("<HQHfHH")  # version, count, N, d, C, flags


@dataclass
class PatchRecord:
    position: np.ndarray   # (3,) f32
    frame_i: np.ndarray    # (3,) f32
    frame_j: np.ndarray    # (3,) f32
    face: int
    mask: np.ndarray       # (N, N) bool
    values: np.ndarray     # (N, N, C) f32


@dataclass
class PatchDataset:
    N: int
    d: float
    C: int
    flags: int
    records: list[PatchRecord]

    @classmethod
    def from_patches(cls, samples, patches, N: int, d: float, C: int,
                     flags: int = 0) -> "PatchDataset":
        records = []
        for sample, patch in zip(samples, patches):
            records.append(PatchRecord(
                position=sample.position.astype(np.float32),
                frame_i=patch.frame_i.astype(np.float32),
                frame_j=patch.frame_j.astype(np.float32),
                face=int(sample.face),
                mask=patch.mask.copy(),
                values=patch.values.astype(np.float32)))
        return cls(N=N, d=float(d), C=C, flags=flags, records=records)

    def record_size(self) -> int:
        mask_bytes = (self.N * self.N + 7) // 8
        return 9 * 4 + 4 + mask_bytes + self.N * self.N * self.C * 4

    def expected_file_size(self) -> int:
        return len(MAGIC) + _HEADER.size + len(self.records) \
            * self.record_size()

    def values_array(self) -> np.ndarray:
        """(K, N, N, C) float32 stack of all record values."""
        if not self.records:
            return np.zeros((0, self.N, self.N, self.C), dtype=np.float32)
        return np.stack([r.values for r in self.records])

    def masks_array(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.N, self.N), dtype=bool)
        return np.stack([r.mask for r in self.records])

    def save(self, path):
        mask_bytes = (self.N * self.N + 7) // 8
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_HEADER.pack(VERSION, len(self.records), self.N,
                                 self.d, self.C, self.flags))
            for r in self.records:
                f.write(r.position.astype("<f4").tobytes())
                f.write(r.frame_i.astype("<f4").tobytes())
                f.write(r.frame_j.astype("<f4").tobytes())
                f.write(struct.pack("<I", r.face))
                packed = np.packbits(r.mask.reshape(-1), bitorder="little")
                f.write(packed[:mask_bytes].tobytes())
                f.write(r.values.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "PatchDataset":
        with open(path, "rb") as f:
            data = f.read()
        if data[:len(MAGIC)] != MAGIC:
            raise DataError(f"bad magic in {path}")
        version, count, N, d, C, flags = _HEADER.unpack_from(data, len(MAGIC))
        if version != VERSION:
            raise DataError(f"unsupported version {version} in {path}")
        ds = cls(N=N, d=d, C=C, flags=flags, records=[])
        expected = len(MAGIC) + _HEADER.size + count * ds.record_size()
        if len(data) != expected:
            raise DataError(
                f"file size {len(data)} != expected {expected} in {path}")
        pos = len(MAGIC) + _HEADER.size
        mask_bytes = (N * N + 7) // 8
        for _ in range(count):
            floats = np.frombuffer(data, dtype="<f4", count=9, offset=pos)
            pos += 36
            (face,) = struct.unpack_from("<I", data, pos)
            pos += 4
            packed = np.frombuffer(data, dtype=np.uint8, count=mask_bytes,
                                   offset=pos)
            pos += mask_bytes
            mask = np.unpackbits(packed, count=N * N, bitorder="little") \
                .astype(bool).reshape(N, N)
            values = np.frombuffer(data, dtype="<f4", count=N * N * C,
                                   offset=pos).reshape(N, N, C).copy()
            pos += N * N * C * 4
            ds.records.append(PatchRecord(
                position=floats[0:3].copy(), frame_i=floats[3:6].copy(),
                frame_j=floats[6:9].copy(), face=int(face), mask=mask,
                values=values))
        return ds
