"""voxel-ops: binarization, postprocessing, perturbation, VXGB codec."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxsnap import voxel
from voxsnap.voxel import ContinuousGrid, VoxelFormatError, VoxelGrid

from oracles import flood_fill_components


def random_grid(rng, dims=8, density=0.2) -> VoxelGrid:
    return VoxelGrid(rng.random((dims, dims, dims)) < density)


class TestBinarize:
    def test_all_zeros_empty(self):
        g = voxel.binarize(ContinuousGrid(np.zeros((4, 4, 4))), 0.5)
        assert g.count == 0

    def test_all_ones_full(self):
        g = voxel.binarize(ContinuousGrid(np.ones((4, 4, 4))), 0.5)
        assert g.count == 64

    def test_boundary_rule_inclusive(self):
        vals = np.zeros((4, 4, 4))
        vals[0, 0, 0], vals[0, 0, 1], vals[0, 0, 2] = 0.49, 0.5, 0.51
        g = voxel.binarize(ContinuousGrid(vals), 0.5)
        assert not g.occupancy[0, 0, 0]
        assert g.occupancy[0, 0, 1]
        assert g.occupancy[0, 0, 2]

    @pytest.mark.parametrize("threshold", [0.0, 1.0, -0.1, 1.5])
    def test_threshold_range(self, threshold):
        with pytest.raises(ValueError):
            voxel.binarize(ContinuousGrid(np.zeros((2, 2, 2))), threshold)

    def test_continuous_grid_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ContinuousGrid(np.full((2, 2, 2), 1.2))


class TestRemoveSmallComponents:
    def test_single_blob_unchanged(self):
        occ = np.zeros((6, 6, 6), dtype=bool)
        occ[2:5, 2:5, 2:5] = True
        g = VoxelGrid(occ)
        assert voxel.remove_small_components(g, 0.25) == g

    def test_isolated_voxel_removed(self):
        occ = np.zeros((4, 4, 4), dtype=bool)
        occ[0:2, 0:2, 0:2] = True  # 8-voxel cube
        occ[3, 3, 3] = True  # lone corner
        out = voxel.remove_small_components(VoxelGrid(occ), 0.25, connectivity=26)
        assert not out.occupancy[3, 3, 3]
        assert out.count == 8

    def test_equal_components_tie_keeps_both(self):
        occ = np.zeros((8, 8, 8), dtype=bool)
        occ[0:2, 0:2, 0:2] = True
        occ[5:7, 5:7, 5:7] = True
        out = voxel.remove_small_components(VoxelGrid(occ), 0.5)
        assert out.count == 16

    def test_empty_input(self):
        g = VoxelGrid.empty(4)
        assert voxel.remove_small_components(g) == g

    @pytest.mark.parametrize("connectivity", [6, 18, 26])
    def test_against_flood_fill_oracle(self, connectivity):
        rng = np.random.default_rng(5)
        for trial in range(20):
            g = random_grid(rng, dims=8, density=0.15)
            min_fraction = rng.random()
            out = voxel.remove_small_components(g, min_fraction, connectivity)
            comps = flood_fill_components(g.occupancy, connectivity)
            expected = np.zeros_like(g.occupancy)
            if comps:
                largest = max(len(c) for c in comps)
                for comp in comps:
                    if len(comp) >= min_fraction * largest:
                        for cell in comp:
                            expected[cell] = True
            assert np.array_equal(out.occupancy, expected), f"trial {trial}"

    def test_fixed_point_subset_largest_survives(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            g = random_grid(rng, dims=8, density=0.12)
            out = voxel.remove_small_components(g, 0.3)
            assert np.all(out.occupancy <= g.occupancy)  # never adds
            assert voxel.remove_small_components(out, 0.3) == out  # fixed point
            comps = flood_fill_components(g.occupancy, 26)
            if comps:
                largest = max(comps, key=len)
                assert all(out.occupancy[c] for c in largest)


class TestSymmetrize:
    def test_symmetric_grid_fixed_point(self):
        rng = np.random.default_rng(2)
        half = rng.random((6, 6, 3)) < 0.4
        occ = np.concatenate([half, half[:, :, ::-1]], axis=2)
        g = VoxelGrid(occ)
        for axis in "XYZ":
            if axis == "X":
                assert voxel.symmetrize(g, axis) == g

    def test_low_half_doubles(self):
        occ = np.zeros((4, 4, 4), dtype=bool)
        occ[1, 2, 0], occ[3, 0, 1] = True, True  # only x < 2
        out = voxel.symmetrize(VoxelGrid(occ), "X", "low")
        assert out.count == 4
        assert out.occupancy[1, 2, 3] and out.occupancy[3, 0, 2]

    @pytest.mark.parametrize("axis", ["X", "Y", "Z"])
    @pytest.mark.parametrize("keep", ["low", "high"])
    def test_mirror_exact_and_idempotent(self, axis, keep):
        rng = np.random.default_rng(7)
        g = random_grid(rng, dims=6, density=0.3)
        out = voxel.symmetrize(g, axis, keep)
        ax = {"X": 2, "Y": 1, "Z": 0}[axis]
        assert np.array_equal(out.occupancy, np.flip(out.occupancy, axis=ax))
        assert voxel.symmetrize(out, axis, keep) == out

    def test_odd_extent_rejected(self):
        with pytest.raises(ValueError, match="even"):
            voxel.symmetrize(VoxelGrid(np.zeros((5, 5, 5), dtype=bool)), "X")


class TestDropVoxels:
    def test_fraction_zero_identity(self):
        g = random_grid(np.random.default_rng(1))
        assert voxel.drop_voxels(g, 0.0, np.random.default_rng(0)) is g

    def test_fraction_one_empties(self):
        g = random_grid(np.random.default_rng(2))
        assert voxel.drop_voxels(g, 1.0, np.random.default_rng(0)).count == 0

    def test_floor_counting(self):
        occ = np.zeros((4, 4, 4), dtype=bool)
        occ.ravel()[:9] = True
        out = voxel.drop_voxels(VoxelGrid(occ), 0.5, np.random.default_rng(3))
        assert out.count == 5  # floor(4.5) = 4 dropped

    def test_deterministic_and_subset(self):
        g = random_grid(np.random.default_rng(4), density=0.5)
        a = voxel.drop_voxels(g, 0.37, np.random.default_rng(11))
        b = voxel.drop_voxels(g, 0.37, np.random.default_rng(11))
        assert a == b
        assert np.all(a.occupancy <= g.occupancy)


class TestVxgbCodec:
    @pytest.mark.parametrize("dims", [8, 16, 32, 64])
    def test_round_trip(self, dims):
        g = random_grid(np.random.default_rng(dims), dims=dims, density=0.3)
        assert voxel.decode(voxel.encode(g)) == g

    def test_empty_grid_payload_arithmetic(self):
        data = voxel.encode(VoxelGrid.empty(8))
        assert len(data) == 20 + 64  # header + 512 bits
        assert data[20:] == b"\x00" * 64

    def test_bad_magic(self):
        data = voxel.encode(VoxelGrid.empty(8))
        with pytest.raises(VoxelFormatError, match="magic"):
            voxel.decode(b"XXXX" + data[4:])

    def test_truncated(self):
        data = voxel.encode(VoxelGrid.empty(16))
        with pytest.raises(VoxelFormatError, match="truncated"):
            voxel.decode(data[:-3])

    def test_non_cubic_rejected(self):
        import struct

        data = voxel.VXGB_MAGIC + struct.pack("<IIII", 1, 4, 4, 5) + b"\x00" * 10
        with pytest.raises(VoxelFormatError, match="cubic"):
            voxel.decode(data)

    def test_json_round_trip_base64(self):
        g = random_grid(np.random.default_rng(77), dims=16)
        assert voxel.grid_from_json(voxel.grid_to_json(g)) == g

    def test_json_accepts_nested_lists(self):
        g = random_grid(np.random.default_rng(78), dims=4)
        nested = g.occupancy.astype(int).tolist()
        assert voxel.grid_from_json(nested) == g

    def test_json_rejects_garbage(self):
        with pytest.raises(VoxelFormatError):
            voxel.grid_from_json("not-base64!!!")
        with pytest.raises(VoxelFormatError):
            voxel.grid_from_json([[0, 2]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([6, 18, 26]), st.floats(0.0, 1.0))
def test_component_removal_properties(seed, connectivity, min_fraction):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, dims=6, density=rng.uniform(0.05, 0.5))
    out = voxel.remove_small_components(g, min_fraction, connectivity)
    assert np.all(out.occupancy <= g.occupancy)
    assert voxel.remove_small_components(out, min_fraction, connectivity) == out
    comps = flood_fill_components(g.occupancy, connectivity)
    if comps:
        largest = max(comps, key=len)
        assert all(out.occupancy[cell] for cell in largest)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from("XYZ"), st.sampled_from(["low", "high"]))
def test_symmetrize_properties(seed, axis, keep):
    rng = np.random.default_rng(seed)
    g = random_grid(rng, dims=8, density=0.35)
    out = voxel.symmetrize(g, axis, keep)
    ax = {"X": 2, "Y": 1, "Z": 0}[axis]
    assert np.array_equal(out.occupancy, np.flip(out.occupancy, axis=ax))
    assert voxel.symmetrize(out, axis, keep) == out
