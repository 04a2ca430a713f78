import numpy as np
import pytest

import corrpose.nn.autodiff as ad
from corrpose.nn.autodiff import Tensor
from corrpose.nn.checkpoint import (
    CheckpointCorruptError,
    CheckpointShapeError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from corrpose.nn.models import LatentField, field_forward
from corrpose.nn.optim import Adam


class TestAdam:
    def test_zero_gradient_leaves_params(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam([{"params": {"p": p}, "lr": 0.1}])
        p.grad = np.zeros(2)
        opt.step()
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_first_step_magnitude_is_lr(self):
        # constant gradient g: bias-corrected moments give update ~ lr * sign(g)
        p = Tensor(np.array([0.0]), requires_grad=True)
        lr = 3e-4
        opt = Adam([{"params": {"p": p}, "lr": lr}])
        p.grad = np.array([0.7])
        opt.step()
        assert np.isclose(abs(p.data[0]), lr, rtol=1e-5)

    def test_descends_quadratic(self):
        p = Tensor(np.array([2.0, -3.0]), requires_grad=True)
        opt = Adam([{"params": {"p": p}, "lr": 0.05}])
        for _ in range(500):
            opt.zero_grad()
            loss = ad.tsum(ad.square(p))
            loss.backward()
            opt.step()
        assert np.abs(p.data).max() < 1e-2

    def test_two_runs_bit_identical(self, rng):
        def run():
            p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
            opt = Adam([{"params": {"p": p}, "lr": 0.01}])
            local = np.random.default_rng(5)
            for _ in range(100):
                opt.zero_grad()
                w = Tensor(local.normal(size=3))
                ad.tsum(ad.square(ad.mul(p, w))).backward()
                opt.step()
            return p.data
        assert np.array_equal(run(), run())

    def test_per_group_learning_rates(self):
        a = Tensor(np.array([1.0]), requires_grad=True)
        b = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam([{"params": {"a": a}, "lr": 1e-2}, {"params": {"b": b}, "lr": 1e-4}])
        a.grad = np.array([1.0])
        b.grad = np.array([1.0])
        opt.step()
        assert np.isclose(1.0 - a.data[0], 1e-2, rtol=1e-5)
        assert np.isclose(1.0 - b.data[0], 1e-4, rtol=1e-5)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        tensors = {"w": rng.normal(size=(4, 5)),
                   "b": rng.normal(size=3).astype(np.float32),
                   "step": np.array([17], dtype=np.int64)}
        meta = {"version_tag": "x", "embed_dim": 12}
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, tensors, meta)
        back, meta2 = load_checkpoint(path)
        assert meta2 == meta
        for k in tensors:
            assert back[k].dtype == tensors[k].dtype
            assert np.array_equal(back[k], tensors[k])

    def test_field_roundtrip_same_forward(self, tmp_path, rng):
        field = LatentField(embed_dim=6, hidden=8, layers=2, seed=1)
        pts = rng.uniform(-0.4, 0.4, size=(10, 3))
        before = field_forward(field, pts)
        path = tmp_path / "f.ckpt"
        save_checkpoint(path, field.state_dict(), {})
        other = LatentField(embed_dim=6, hidden=8, layers=2, seed=999)
        other.load_state_dict(load_checkpoint(path)[0])
        after = field_forward(other, pts)
        assert np.array_equal(before, after)

    def test_truncated_file_is_corrupt(self, tmp_path, rng):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, {"w": rng.normal(size=(8, 8))}, {})
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)

    def test_flipped_byte_is_corrupt(self, tmp_path, rng):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, {"w": rng.normal(size=(8, 8))}, {})
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path, rng):
        import struct
        import zlib
        path = tmp_path / "v.ckpt"
        save_checkpoint(path, {"w": rng.normal(size=2)}, {})
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 4, 99)  # bump version field
        body = bytes(blob[4:-4])
        struct.pack_into("<I", blob, len(blob) - 4, zlib.crc32(body) & 0xFFFFFFFF)
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    def test_shape_mismatch_names_tensor(self, tmp_path):
        field_a = LatentField(embed_dim=6, hidden=8, layers=2, seed=1)
        field_b = LatentField(embed_dim=12, hidden=8, layers=2, seed=1)
        path = tmp_path / "s.ckpt"
        save_checkpoint(path, field_a.state_dict(), {})
        with pytest.raises(CheckpointShapeError) as exc:
            field_b.load_state_dict(load_checkpoint(path)[0])
        assert "field.w2" in str(exc.value)

    def test_adam_state_roundtrip(self, tmp_path):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        opt = Adam([{"params": {"p": p}, "lr": 0.01}])
        p.grad = np.array([0.5, -0.5])
        opt.step()
        path = tmp_path / "opt.ckpt"
        save_checkpoint(path, opt.state_dict(), {})
        opt2 = Adam([{"params": {"p": p}, "lr": 0.01}])
        opt2.load_state_dict(load_checkpoint(path)[0])
        assert opt2.step_count == 1
        assert np.array_equal(opt2._m["p"], opt._m["p"])
        assert np.array_equal(opt2._v["p"], opt._v["p"])
