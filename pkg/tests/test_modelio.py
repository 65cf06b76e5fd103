"""Save/load round trips and the failure modes of the model file format."""

import json

import numpy as np
import pytest

from oblivinfer.errors import BlobError, ChecksumError, ParseError
from oblivinfer.runtime import load_model, load_spec, mlp_graph, save_model


@pytest.fixture
def saved(tmp_path, tiny_mlp):
    path = str(tmp_path / "m.json")
    blob = save_model(tiny_mlp, path)
    return path, blob


def test_round_trip_bitwise(saved, tiny_mlp):
    path, _ = saved
    g = load_model(path)
    assert g.name == tiny_mlp.name
    assert g.input_shape == tiny_mlp.input_shape
    assert len(g.layers) == len(tiny_mlp.layers)
    for pa, pb in zip(g.params, tiny_mlp.params):
        assert set(pa) == set(pb)
        for role in pa:
            assert pa[role].tobytes() == pb[role].tobytes()
            assert pa[role].dtype == np.float32


def test_overwrite_refused_without_force(saved, tiny_mlp):
    path, _ = saved
    with pytest.raises(FileExistsError):
        save_model(tiny_mlp, path)
    save_model(tiny_mlp, path, force=True)


def test_load_spec_has_zero_params(saved):
    path, _ = saved
    g = load_spec(path)
    for layer_params in g.params:
        for arr in layer_params.values():
            assert not arr.any()


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ParseError, match="not valid JSON"):
        load_model(str(path))


def test_wrong_format_tag(saved):
    path, _ = saved
    doc = json.load(open(path))
    doc["format"] = "somebody-elses-format"
    json.dump(doc, open(path, "w"))
    with pytest.raises(ParseError, match="format tag"):
        load_model(path)


def test_missing_key(saved):
    path, _ = saved
    doc = json.load(open(path))
    del doc["layers"]
    json.dump(doc, open(path, "w"))
    with pytest.raises(ParseError, match="layers"):
        load_model(path)


def test_param_order_mismatch(saved):
    path, _ = saved
    doc = json.load(open(path))
    doc["param_order"][0]["role"] = "scale"
    json.dump(doc, open(path, "w"))
    with pytest.raises(ParseError, match="param_order"):
        load_model(path)


def test_truncated_blob(saved):
    path, blob = saved
    raw = open(blob, "rb").read()
    open(blob, "wb").write(raw[:-8])
    with pytest.raises(BlobError, match="bytes"):
        load_model(path)


def test_corrupted_blob(saved):
    path, blob = saved
    raw = bytearray(open(blob, "rb").read())
    raw[17] ^= 0xFF
    open(blob, "wb").write(bytes(raw))
    with pytest.raises(ChecksumError, match="sha256"):
        load_model(path)


def test_explicit_weights_path(tmp_path, tiny_mlp):
    path = str(tmp_path / "m.json")
    blob = save_model(tiny_mlp, path)
    moved = str(tmp_path / "elsewhere.bin")
    import shutil
    shutil.move(blob, moved)
    g = load_model(path, weights_path=moved)
    assert g.params[0]["weight"].tobytes() == tiny_mlp.params[0]["weight"].tobytes()


def test_bad_layer_entry(tmp_path, tiny_mlp):
    path = str(tmp_path / "m.json")
    save_model(tiny_mlp, path)
    doc = json.load(open(path))
    doc["layers"][1] = "relu"
    json.dump(doc, open(path, "w"))
    with pytest.raises(ParseError, match="layer 1"):
        load_spec(path)


def test_save_creates_parent_dirs(tmp_path, tiny_mlp):
    path = str(tmp_path / "deep" / "nest" / "m.json")
    save_model(tiny_mlp, path)
    assert load_model(path).name == tiny_mlp.name
