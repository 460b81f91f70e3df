import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings

from kinepipe.archive import decode, encode, read_intermediate, write_intermediate
from kinepipe.errors import ArchiveError

from strategies import named_arrays


def _same(a, b):
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].dtype == b[k].dtype and a[k].shape == b[k].shape
        assert a[k].tobytes() == b[k].tobytes()


def test_layout_matches_hand_encoding():
    arr = np.array([[1.5, -2.0]], dtype="<f8")
    payload = arr.tobytes()
    expected = (b"KIA1" + struct.pack("<I", 1) + struct.pack("<H", 2) + b"kp"
                + struct.pack("<BB", 1, 2) + struct.pack("<QQ", 1, 2) + payload
                + struct.pack("<I", zlib.crc32(payload)))
    assert encode({"kp": arr}) == expected


def test_round_trip_file(tmp_path, rng):
    arrays = {
        "a": rng.normal(size=(3, 4)),
        "b": rng.normal(size=7).astype(np.float32),
        "c": rng.integers(0, 2**32, size=(2, 2), dtype=np.uint32),
    }
    path = write_intermediate(tmp_path / "x.kia", arrays)
    _same(arrays, read_intermediate(path))


def test_empty_archive(tmp_path):
    path = write_intermediate(tmp_path / "e.kia", {})
    assert path.read_bytes() == b"KIA1\x00\x00\x00\x00"
    assert read_intermediate(path) == {}


def test_corrupt_payload_byte(tmp_path, rng):
    path = write_intermediate(tmp_path / "x.kia", {"a": rng.normal(size=10)})
    data = bytearray(path.read_bytes())
    data[-10] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ArchiveError, match="checksum"):
        read_intermediate(path)


@pytest.mark.parametrize("mutate, message", [
    (lambda d: b"KIA2" + d[4:], "magic"),
    (lambda d: d[:-3], "truncated"),
    (lambda d: d + b"\x00", "trailing"),
    (lambda d: d[:2], "truncated"),
])
def test_malformed(mutate, message):
    data = encode({"a": np.arange(3, dtype=np.float64)})
    with pytest.raises(ArchiveError, match=message):
        decode(mutate(data))


def test_unknown_dtype_tag():
    data = bytearray(encode({"a": np.arange(3, dtype=np.float64)}))
    data[4 + 4 + 2 + 1] = 9
    with pytest.raises(ArchiveError, match="dtype tag"):
        decode(bytes(data))


def test_unsupported_dtype():
    with pytest.raises(ArchiveError, match="unsupported dtype"):
        encode({"a": np.arange(3, dtype=np.int64)})


def test_missing_file(tmp_path):
    with pytest.raises(ArchiveError, match="not found"):
        read_intermediate(tmp_path / "nope.kia")


def test_duplicate_names_rejected():
    one = encode({"a": np.zeros(1)})
    body = one[8:]
    with pytest.raises(ArchiveError, match="duplicate"):
        decode(b"KIA1" + struct.pack("<I", 2) + body + body)


@settings(max_examples=200, deadline=None)
@given(named_arrays())
def test_round_trip_property(arrays):
    _same(arrays, decode(encode(arrays)))
