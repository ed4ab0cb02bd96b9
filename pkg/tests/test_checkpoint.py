import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from conftest import tiny_config
from adgsyn.checkpoint import MAGIC, decode, encode, load_checkpoint, manifest_path, save_checkpoint
from adgsyn.errors import CheckpointError
from adgsyn.model import ADGSyn, load_model, save_model

tensors = st.dictionaries(
    st.text("abcdefgh.", min_size=1, max_size=12),
    st.one_of(arrays(np.float32, array_shapes(max_dims=3, max_side=4)),
              arrays(np.float16, array_shapes(max_dims=3, max_side=4))),
    max_size=5,
)


@given(tensors)
def test_round_trip_is_bitwise(d):
    back = decode(encode(d))
    assert list(back) == list(d)
    for k in d:
        assert back[k].dtype == d[k].dtype
        np.testing.assert_array_equal(back[k].view(np.uint8), d[k].view(np.uint8))


def test_header_layout():
    blob = encode({"w": np.zeros((2, 3), np.float32)})
    assert blob[:8] == MAGIC
    assert struct.unpack_from("<II", blob, 8) == (1, 1)
    # name_len, name, precision, ndim, dims, nbytes, payload
    assert len(blob) == 16 + 2 + 1 + 2 + 8 + 8 + 24


@pytest.mark.parametrize("mutate", [
    lambda b: b"XX" + b[2:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:8] + struct.pack("<I", 9) + b[12:],
    lambda b: b[:20],
])
def test_corrupt_blobs_raise(mutate):
    blob = encode({"w": np.ones(3, np.float32)})
    with pytest.raises(CheckpointError):
        decode(mutate(blob))


def test_manifest_checksum(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.arange(4, dtype=np.float32)}, {"note": "x"})
    manifest = json.loads(manifest_path(path).read_text())
    assert manifest["note"] == "x" and manifest["entries"][0]["shape"] == [4]
    path.write_bytes(path.read_bytes()[:-4] + np.float32([7]).tobytes())
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    assert load_checkpoint(path, verify=False)[0]["a"][-1] == 7


def test_model_round_trip(tmp_path):
    cfg = tiny_config(graph_layer="gcn", encoder_mode="concat")
    model = ADGSyn(cfg, seed=3)
    save_model(model, tmp_path / "model.ckpt", {"epoch": 5})
    back, manifest = load_model(tmp_path / "model.ckpt")
    assert back.config == model.config and manifest["epoch"] == 5
    for (n, p), (m, q) in zip(model.named_parameters(), back.named_parameters()):
        assert n == m
        np.testing.assert_array_equal(p.data, q.data)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")
