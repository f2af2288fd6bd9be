import struct

import pytest

from redseis.denoiser import decode_weights, encode_weights, load_weights, save_weights
from redseis.errors import FormatError
from conftest import random_bundle


def test_round_trip_bitwise(tmp_path, bundle):
    p = tmp_path / "w.dncw"
    save_weights(bundle, p)
    first = p.read_bytes()
    back = load_weights(p)
    assert back.equals(bundle)
    save_weights(back, p)
    assert p.read_bytes() == first


def test_header():
    data = encode_weights(random_bundle(depth=3, band=(0.5, 1.0)))
    magic, version, depth, lo, hi = struct.unpack_from("<4sIIff", data)
    assert (magic, version, depth, lo, hi) == (b"DNCW", 1, 3, 0.5, 1.0)


def test_every_truncation_is_reported(bundle):
    data = encode_weights(bundle)
    for cut in range(0, len(data), 37):
        with pytest.raises(FormatError) as e:
            decode_weights(data[:cut])
        assert e.value.offset is not None and e.value.offset <= cut


def test_bad_magic_version_kind_trailing(bundle):
    data = encode_weights(bundle)
    with pytest.raises(FormatError) as e:
        decode_weights(b"NOPE" + data[4:])
    assert e.value.offset == 0
    with pytest.raises(FormatError) as e:
        decode_weights(data[:4] + struct.pack("<I", 7) + data[8:])
    assert e.value.offset == 4
    bad = bytearray(data)
    bad[20] = 9  # first layer kind byte
    with pytest.raises(FormatError) as e:
        decode_weights(bytes(bad))
    assert e.value.offset == 20
    with pytest.raises(FormatError) as e:
        decode_weights(data + b"xx")
    assert e.value.offset == len(data)


def test_structurally_invalid_network(bundle):
    data = bytearray(encode_weights(bundle))
    struct.pack_into("<I", data, 8, 1)  # claim depth 1, leaving the rest as trailing bytes
    with pytest.raises(FormatError):
        decode_weights(bytes(data))


def test_load_names_path(tmp_path):
    p = tmp_path / "x.dncw"
    p.write_bytes(b"DNCW")
    with pytest.raises(FormatError) as e:
        load_weights(p)
    assert str(p) in str(e.value)
