import json
import struct

import numpy as np
import pytest

from shuffleformer import (CheckpointError, ModelConfig, Rng, Tensor,
                           load_checkpoint, load_tensor, model_forward,
                           named_parameters, read_container, save_checkpoint,
                           save_tensor, write_container, init_model_params)


def small_config(**overrides):
    base = dict(channels=8, depths=(2,), num_classes=4, resolution=16,
                window=2, head_dim=4)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def saved(tmp_path):
    cfg = small_config()
    params = init_model_params(cfg, Rng(0))
    path = tmp_path / "model.sfc"
    save_checkpoint(path, params, cfg)
    return path, params, cfg


class TestContainer:
    def test_round_trip_arrays(self, tmp_path):
        path = tmp_path / "t.sfc"
        rng = Rng(0)
        tensors = {"a": rng.normal((3, 4), dtype=np.float32),
                   "b": rng.normal((2,), dtype=np.float64)}
        write_container(path, tensors, {"kind": "misc"})
        meta, loaded = read_container(path)
        assert meta == {"kind": "misc"}
        for name in tensors:
            assert loaded[name].dtype == tensors[name].dtype
            assert np.array_equal(loaded[name], tensors[name])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.sfc"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(CheckpointError):
            read_container(path)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "bad.sfc"
        path.write_bytes(b"SHFCONT1" + struct.pack("<II", 99, 0))
        with pytest.raises(CheckpointError):
            read_container(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.sfc"
        write_container(path, {"a": np.zeros(10, dtype=np.float32)}, {})
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(CheckpointError):
            read_container(path)


class TestCheckpoint:
    def test_save_load_save_byte_identical(self, saved, tmp_path):
        path, params, cfg = saved
        loaded, cfg2, _ = load_checkpoint(path)
        again = tmp_path / "again.sfc"
        save_checkpoint(again, loaded, cfg2)
        assert path.read_bytes() == again.read_bytes()

    def test_loaded_model_reproduces_logits(self, saved):
        path, params, cfg = saved
        loaded, cfg2, _ = load_checkpoint(path)
        x = Tensor(Rng(5).normal((2, 3, 16, 16)))
        a = model_forward(x, params, cfg).data
        b = model_forward(x, loaded, cfg2).data
        assert a.tobytes() == b.tobytes()

    def test_tampered_shape_rejected_with_name(self, saved, tmp_path):
        path, _, _ = saved
        raw = bytearray(path.read_bytes())
        header_len = struct.unpack("<I", raw[12:16])[0]
        header = json.loads(raw[16:16 + header_len].decode())
        target = next(e for e in header["tensors"] if e["name"] == "head.bias")
        target["shape"] = [999]
        target["nbytes"] = 999 * 4
        new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        bad = tmp_path / "tampered.sfc"
        bad.write_bytes(raw[:12] + struct.pack("<I", len(new_header)) + new_header
                        + raw[16 + header_len:] + b"\x00" * (999 * 4))
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(bad)
        assert "head.bias" in str(err.value)

    def test_missing_parameter_rejected(self, saved, tmp_path):
        path, params, cfg = saved
        state = {name: t.data for name, t in named_parameters(params)}
        state.pop("head.weight")
        bad = tmp_path / "missing.sfc"
        write_container(bad, state, {"kind": "model", "config": cfg.to_dict(),
                                     "shuffle_perms": {}})
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(bad)
        assert "head.weight" in str(err.value) or "running" in str(err.value)

    def test_unexpected_parameter_rejected(self, saved, tmp_path):
        path, params, cfg = saved
        meta, tensors = read_container(path)
        tensors["sneaky.extra"] = np.zeros(3, dtype=np.float32)
        bad = tmp_path / "extra.sfc"
        write_container(bad, tensors, meta)
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(bad)
        assert "sneaky.extra" in str(err.value)

    def test_random_mode_perms_survive_round_trip(self, tmp_path):
        cfg = small_config(shuffle_mode="random")
        params = init_model_params(cfg, Rng(3))
        path = tmp_path / "rand.sfc"
        save_checkpoint(path, params, cfg)
        loaded, cfg2, _ = load_checkpoint(path)
        x = Tensor(Rng(4).normal((1, 3, 16, 16)))
        a = model_forward(x, params, cfg).data
        b = model_forward(x, loaded, cfg2).data
        assert a.tobytes() == b.tobytes()

    def test_wrong_kind_rejected(self, tmp_path):
        path = tmp_path / "t.sfc"
        save_tensor(path, np.zeros((2, 2), dtype=np.float32))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


class TestTensorIO:
    def test_tensor_round_trip(self, tmp_path):
        path = tmp_path / "x.sfc"
        arr = Rng(0).normal((2, 3, 4, 4), dtype=np.float32)
        save_tensor(path, arr, extra_meta={"note": "input"})
        loaded, meta = load_tensor(path)
        assert np.array_equal(loaded, arr)
        assert meta["note"] == "input"

    def test_model_container_is_not_a_tensor(self, saved):
        path, _, _ = saved
        with pytest.raises(CheckpointError):
            load_tensor(path)
