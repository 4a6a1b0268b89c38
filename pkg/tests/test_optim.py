"""Adam update rule, He initialization, and VXSN checkpoint round-trips."""

import numpy as np
import pytest

from voxsnap.tensor import AdamState, Tensor, adam_step, he_init
from voxsnap.tensor.checkpoint import CheckpointError, load_tensors, save_tensors


class TestAdam:
    def test_first_step_bias_corrected(self):
        # param 0, grad 3, lr 0.1: m_hat=3, v_hat=9 -> step = -0.1*3/(sqrt(9)+eps)
        p = Tensor(np.array([0.0]), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1, beta1=0.5)
        adam_step([p], [np.array([3.0])], state)
        expected = -0.1 * 3.0 / (3.0 + 1e-8)
        assert abs(p.data[0] - expected) < 1e-12
        assert state.t == 1

    def test_zero_grad_keeps_params(self):
        p = Tensor(np.arange(4.0), requires_grad=True)
        state = AdamState.for_params([p], lr=0.05)
        adam_step([p], [np.zeros(4)], state)
        assert np.array_equal(p.data, np.arange(4.0))

    def test_constant_grad_step_bound(self):
        # with bias correction each step moves at most ~lr per coordinate
        p = Tensor(np.zeros(3), requires_grad=True)
        state = AdamState.for_params([p], lr=0.01)
        g = np.array([5.0, -2.0, 0.5])
        adam_step([p], [g], state)
        adam_step([p], [g], state)
        assert np.all(np.abs(p.data) <= 2 * 0.01 + 1e-9)
        assert state.t == 2

    def test_shape_mismatch_rejected(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1)
        with pytest.raises(ValueError, match="shape"):
            adam_step([p], [np.zeros(4)], state)

    def test_reads_param_grad_when_grads_omitted(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([1.0, -1.0])
        state = AdamState.for_params([p], lr=0.1)
        adam_step([p], None, state)
        assert p.data[0] < 0 < p.data[1]


class TestHeInit:
    @pytest.mark.parametrize("fan_in,expected_std", [(2, 1.0), (8, 0.5)])
    def test_std_matches_fan_in(self, fan_in, expected_std):
        rng = np.random.default_rng(123)
        t = he_init((100_000,), fan_in, rng)
        # std of sample std ~ sigma/sqrt(2n)
        sigma3 = 3 * expected_std / np.sqrt(2 * 100_000)
        assert abs(t.data.std() - expected_std) < sigma3
        assert abs(t.data.mean()) < 3 * expected_std / np.sqrt(100_000)

    def test_fixed_seed_bit_identical(self):
        a = he_init((4, 4, 3, 3, 3), 27, np.random.default_rng(7))
        b = he_init((4, 4, 3, 3, 3), 27, np.random.default_rng(7))
        assert np.array_equal(a.data, b.data)

    def test_requires_positive_fan_in(self):
        with pytest.raises(ValueError):
            he_init((3,), 0, np.random.default_rng(0))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        tensors = {
            "gen.fc.w": rng.normal(size=(8, 16)),
            "gen.fc.w.m": np.zeros((8, 16)),
            "gen.fc.w.v": np.abs(rng.normal(size=(8, 16))),
            "adam.t": np.array(12.0),
            "disc.block1.conv.k": rng.normal(size=(4, 1, 4, 4, 4)),
        }
        path = tmp_path / "model.vxsn"
        save_tensors(path, tensors)
        loaded = load_tensors(path)
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert loaded[name].shape == tensors[name].shape
            assert np.array_equal(loaded[name], tensors[name]), name

    def test_scalar_rank_zero(self, tmp_path):
        path = tmp_path / "s.vxsn"
        save_tensors(path, {"adam.t": np.array(5.0)})
        loaded = load_tensors(path)
        assert loaded["adam.t"].shape == ()
        assert loaded["adam.t"] == 5.0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.vxsn"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_tensors(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.vxsn"
        save_tensors(path, {"w": np.ones((4, 4))})
        raw = path.read_bytes()
        path.write_bytes(raw[:-9])
        with pytest.raises(CheckpointError, match="truncated"):
            load_tensors(path)

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        path = tmp_path / "a.vxsn"
        save_tensors(path, {"x": np.ones(3)})
        assert [p.name for p in tmp_path.iterdir()] == ["a.vxsn"]
