import json

import numpy as np
import pytest

from mpsexc.errors import ShapeMismatchError, ValidationError
from mpsexc.io import (
    channel_from_dict,
    channel_to_dict,
    decode_complex,
    encode_complex,
    mps_from_dict,
    mps_to_dict,
    read_channel,
    read_mps,
    save_channel,
    save_mps,
)
from mpsexc.models import aklt_family, pauli_tensor


def test_complex_round_trip(rng):
    a = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
    np.testing.assert_array_equal(decode_complex(json.loads(json.dumps(encode_complex(a)))), a)


def test_decode_rejects_bare_numbers():
    with pytest.raises(ShapeMismatchError):
        decode_complex([1.0, 2.0, 3.0])


def test_mps_file_round_trip(tmp_path):
    m = aklt_family(0.4)
    save_mps(m, tmp_path / "m.json")
    r = read_mps(str(tmp_path / "m.json"))
    assert (r.d, r.D) == (m.d, m.D)
    np.testing.assert_array_equal(r.matrices, m.matrices)


def test_channel_file_round_trip(tmp_path):
    ch = pauli_tensor().channel()
    save_channel(ch, tmp_path / "c.json")
    r = read_channel(str(tmp_path / "c.json"))
    assert r.dim == 2
    np.testing.assert_array_equal(r.matrix, ch.matrix)
    assert channel_from_dict(channel_to_dict(ch)).dim == 2


@pytest.mark.parametrize("spec,d,D", [("pauli", 4, 2), ("aklt", 3, 2), ("aklt:0.5", 3, 2), ("ghz", 2, 2),
                                      ("pauli:0.25,0.25,0.25,0.25", 4, 2)])
def test_builtins(spec, d, D):
    m = read_mps(spec)
    assert (m.d, m.D) == (d, D)


def test_errors(tmp_path):
    with pytest.raises(ValidationError):
        read_mps("nonexistent-model")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError):
        read_mps(str(bad))
    with pytest.raises(ValidationError):
        read_channel(str(bad))
    with pytest.raises(ValidationError):
        read_channel(str(tmp_path / "missing.json"))
    with pytest.raises(ValidationError):
        mps_from_dict({"d": 2})
    doc = mps_to_dict(pauli_tensor())
    doc["d"] = 3
    with pytest.raises(ShapeMismatchError):
        mps_from_dict(doc)
