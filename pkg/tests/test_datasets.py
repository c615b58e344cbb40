import numpy as np
import pytest

from meshtex.datasets import MAGIC, PatchDataset, PatchRecord
from meshtex.errors import DataError


def random_dataset(rng, count=5, N=6, C=3):
    records = []
    for _ in range(count):
        records.append(PatchRecord(
            position=rng.standard_normal(3).astype(np.float32),
            frame_i=np.array([1, 0, 0], dtype=np.float32),
            frame_j=np.array([0, 1, 0], dtype=np.float32),
            face=int(rng.integers(0, 1000)),
            mask=rng.random((N, N)) > 0.3,
            values=rng.standard_normal((N, N, C)).astype(np.float32)))
    return PatchDataset(N=N, d=0.004, C=C, flags=0, records=records)


def test_roundtrip_bit_identical(tmp_path, rng):
    ds = random_dataset(rng)
    path = tmp_path / "patches.bin"
    ds.save(path)
    loaded = PatchDataset.load(path)
    assert loaded.N == ds.N and loaded.C == ds.C
    assert np.float32(loaded.d) == np.float32(ds.d)
    for a, b in zip(ds.records, loaded.records):
        assert np.array_equal(a.position.astype(np.float32), b.position)
        assert np.array_equal(a.mask, b.mask)
        assert np.array_equal(a.values.astype(np.float32), b.values)
        assert a.face == b.face
    # write-back is byte-identical
    path2 = tmp_path / "again.bin"
    loaded.save(path2)
    assert path.read_bytes() == path2.read_bytes()


def test_file_size_formula(tmp_path, rng):
    ds = random_dataset(rng, count=7, N=10, C=1)
    path = tmp_path / "p.bin"
    ds.save(path)
    assert path.stat().st_size == ds.expected_file_size()


def test_magic_check(tmp_path, rng):
    ds = random_dataset(rng, count=1)
    path = tmp_path / "p.bin"
    ds.save(path)
    raw = bytearray(path.read_bytes())
    assert bytes(raw[:5]) == MAGIC
    raw[0] = ord("X")
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError, match="magic"):
        PatchDataset.load(path)


def test_truncation_detected(tmp_path, rng):
    ds = random_dataset(rng, count=3)
    path = tmp_path / "p.bin"
    ds.save(path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(DataError, match="size"):
        PatchDataset.load(path)


def test_empty_dataset(tmp_path):
    ds = PatchDataset(N=4, d=0.01, C=1, flags=0, records=[])
    path = tmp_path / "empty.bin"
    ds.save(path)
    loaded = PatchDataset.load(path)
    assert loaded.records == []
    assert loaded.N == 4
    assert loaded.values_array().shape == (0, 4, 4, 1)
