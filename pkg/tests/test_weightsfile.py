import struct

import numpy as np
import pytest

from localprop import core, weightsfile
from localprop.architectures import NetworkSpec, build_graph


@pytest.mark.parametrize("spec", [NetworkSpec("mlp", (2, 3, 4), 2),
                                  NetworkSpec("rnn", (1, 3), 1, seq_len=4, supervision="all")])
def test_round_trip_is_exact(spec, tmp_path):
    weights = core.init_weights(build_graph(spec), 3)
    path = tmp_path / "w.lpw"
    weightsfile.save(path, spec, weights)
    spec2, w2 = weightsfile.load(path)
    assert spec2 == spec
    assert set(w2.w) == set(weights.w) and set(w2.u) == set(weights.u)
    for l in weights.w:
        assert np.array_equal(w2.w[l], weights.w[l])
    for l in weights.u:
        assert np.array_equal(w2.u[l], weights.u[l])


def test_layout_header():
    spec = NetworkSpec("mlp", (1, 1), 1, bias=False)
    weights = core.WeightStore({0: np.array([[1.5]]), 1: np.array([[-2.0]])}, {})
    blob = weightsfile.dumps(spec, weights)
    assert blob[:8] == b"LPWEIGHT"
    version, n = struct.unpack("<II", blob[8:16])
    assert version == 1
    pos = 16 + n
    assert struct.unpack("<I", blob[pos:pos + 4]) == (2,)
    assert blob[pos + 4:pos + 5] == b"W"
    assert struct.unpack("<III", blob[pos + 5:pos + 17]) == (0, 1, 1)
    assert struct.unpack("<d", blob[pos + 17:pos + 25]) == (1.5,)
    assert blob.endswith(struct.pack("<d", -2.0))


@pytest.mark.parametrize("mangle, msg", [
    (lambda b: b"NOTAFILE" + b[8:], "magic"),
    (lambda b: b[:8] + struct.pack("<I", 9) + b[12:], "version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b + b"\0", "trailing"),
])
def test_corrupt_files_rejected(mangle, msg):
    spec = NetworkSpec("mlp", (2, 2), 1)
    blob = weightsfile.dumps(spec, core.init_weights(build_graph(spec), 0))
    with pytest.raises(weightsfile.WeightsFileError, match=msg):
        weightsfile.loads(mangle(blob))
