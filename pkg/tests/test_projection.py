"""Projection ops: dissimilarity/realism, two-stage snap, refinement
monotonicity, baseline descent, and projection training."""

import numpy as np
import pytest

from voxsnap import voxel
from voxsnap.dataset import build_dataset
from voxsnap.models.nets import state_arrays
from voxsnap.projection import (
    ProjTrainConfig,
    SnapConfig,
    dissimilarity,
    gradient_baseline_project,
    project_network,
    realism,
    refine_latent,
    snap,
    train_projection,
)
from voxsnap.projection.core import generate_grid
from voxsnap.projection.evals import (
    baseline_comparison,
    delete_top_third,
    feature_mode_split,
    latent_distance_correlation,
    projection_report,
    spearman_correlation,
)
from voxsnap.voxel import VoxelGrid


def random_grid(rng, dims=8, density=0.25):
    return VoxelGrid(rng.random((dims, dims, dims)) < density)


class TestDissimilarity:
    def test_identical_inputs_zero(self, tiny_nets):
        _, disc, _ = tiny_nets
        g = random_grid(np.random.default_rng(0))
        assert dissimilarity(g, g, disc) == 0.0

    def test_symmetric_nonnegative(self, tiny_nets):
        _, disc, _ = tiny_nets
        rng = np.random.default_rng(1)
        for _ in range(5):
            a, b = random_grid(rng), random_grid(rng)
            dab = dissimilarity(a, b, disc)
            assert dab >= 0.0
            assert dab == dissimilarity(b, a, disc)

    def test_triangle_inequality(self, tiny_nets):
        _, disc, _ = tiny_nets
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b, c = (random_grid(rng) for _ in range(3))
            assert dissimilarity(a, c, disc) <= (
                dissimilarity(a, b, disc) + dissimilarity(b, c, disc) + 1e-9
            )


class TestRealism:
    def test_in_unit_interval_and_deterministic(self, tiny_nets):
        _, disc, _ = tiny_nets
        g = random_grid(np.random.default_rng(3))
        r1, r2 = realism(g, disc), realism(g, disc)
        assert 0.0 < r1 < 1.0
        assert r1 == r2


class TestProjectNetwork:
    def test_output_in_tanh_box(self, tiny_nets):
        _, _, proj = tiny_nets
        rng = np.random.default_rng(4)
        for _ in range(5):
            z = project_network(proj, random_grid(rng))
            assert z.shape == (proj.latent_dim,)
            assert np.all(np.abs(z) <= 1.0)

    def test_empty_grid_is_valid_input(self, tiny_nets):
        _, _, proj = tiny_nets
        z = project_network(proj, VoxelGrid.empty(8))
        assert np.all(np.isfinite(z))


class TestRefineLatent:
    def test_zero_steps_returns_start(self, tiny_nets):
        gen, disc, _ = tiny_nets
        x = random_grid(np.random.default_rng(5))
        z0 = np.random.default_rng(6).standard_normal(gen.latent_dim)
        res = refine_latent(z0, x, gen, disc, SnapConfig(refine_steps=0))
        assert np.array_equal(res.z, z0)
        assert res.steps_taken == 0
        assert res.f_initial == res.f_final

    def test_dissimilarity_only_never_increases(self, tiny_nets):
        gen, disc, _ = tiny_nets
        rng = np.random.default_rng(7)
        x = random_grid(rng)
        z0 = rng.standard_normal(gen.latent_dim)
        cfg = SnapConfig(lambda1=1.0, lambda2=0.0, refine_steps=8, refine_lr=0.1)
        res = refine_latent(z0, x, gen, disc, cfg)
        assert res.f_final <= res.f_initial
        d0 = dissimilarity(x, generate_grid(gen, z0), disc)
        d1 = dissimilarity(x, generate_grid(gen, res.z), disc)
        assert d1 <= d0 + 1e-9

    def test_realism_only_never_decreases_score(self, tiny_nets):
        gen, disc, _ = tiny_nets
        rng = np.random.default_rng(8)
        x = random_grid(rng)
        z0 = rng.standard_normal(gen.latent_dim)
        cfg = SnapConfig(lambda1=0.0, lambda2=1.0, refine_steps=8, refine_lr=0.1)
        res = refine_latent(z0, x, gen, disc, cfg)
        r0 = realism(generate_grid(gen, z0), disc)
        r1 = realism(generate_grid(gen, res.z), disc)
        assert r1 >= r0 - 1e-12

    def test_monotone_over_random_trials(self, tiny_nets):
        gen, disc, _ = tiny_nets
        rng = np.random.default_rng(9)
        for _ in range(20):
            x = random_grid(rng, density=rng.uniform(0.05, 0.6))
            z0 = rng.standard_normal(gen.latent_dim) * rng.uniform(0.5, 3.0)
            cfg = SnapConfig(
                lambda1=rng.uniform(0, 2),
                lambda2=rng.uniform(0, 2),
                refine_steps=int(rng.integers(1, 6)),
                refine_lr=rng.uniform(0.01, 0.5),
            )
            res = refine_latent(z0, x, gen, disc, cfg)
            assert res.f_final <= res.f_initial
            assert res.steps_taken <= cfg.refine_steps


class TestGradientBaseline:
    def test_zero_steps(self, tiny_nets):
        gen, disc, _ = tiny_nets
        z0 = np.zeros(gen.latent_dim)
        res = gradient_baseline_project(random_grid(np.random.default_rng(1)), gen, disc, z0, 0, 0.1)
        assert np.array_equal(res.z, z0)

    def test_endpoint_objective_bounded_by_start(self, tiny_nets):
        gen, disc, _ = tiny_nets
        rng = np.random.default_rng(10)
        x = random_grid(rng)
        z0 = rng.standard_normal(gen.latent_dim)
        res = gradient_baseline_project(x, gen, disc, z0, 6, 0.1)
        assert res.f_final <= res.f_initial
        # baseline objective IS the dissimilarity
        assert res.f_final == pytest.approx(
            dissimilarity(x, generate_grid(gen, res.z), disc), abs=1e-9
        )


class TestSnap:
    def test_result_contract(self, tiny_nets):
        gen, disc, proj = tiny_nets
        x = random_grid(np.random.default_rng(11))
        cfg = SnapConfig(refine_steps=3)
        res = snap(x, gen, disc, proj, cfg)
        assert res.grid.dims == 8
        assert res.z_initial.shape == (gen.latent_dim,)
        assert res.z_final.shape == (gen.latent_dim,)
        for key in (
            "dissimilarity_initial",
            "dissimilarity_final",
            "realism_initial",
            "realism_final",
            "wall_time",
        ):
            assert np.isfinite(res.metrics[key]), key
        assert 0 <= res.metrics["steps_taken"] <= 3

    def test_zero_steps_keeps_projection(self, tiny_nets):
        gen, disc, proj = tiny_nets
        x = random_grid(np.random.default_rng(12))
        res = snap(x, gen, disc, proj, SnapConfig(refine_steps=0))
        assert np.array_equal(res.z_initial, res.z_final)
        assert res.metrics["dissimilarity_initial"] == res.metrics["dissimilarity_final"]

    def test_symmetrize_flag_enforced(self, tiny_nets):
        gen, disc, proj = tiny_nets
        x = random_grid(np.random.default_rng(13))
        res = snap(x, gen, disc, proj, SnapConfig(refine_steps=1, symmetrize=True))
        occ = res.grid.occupancy
        assert np.array_equal(occ, occ[:, :, ::-1])

    def test_resolution_mismatch_rejected(self, tiny_nets):
        gen, disc, proj = tiny_nets
        with pytest.raises(ValueError, match="resolution"):
            snap(VoxelGrid.empty(16), gen, disc, proj, SnapConfig(refine_steps=0))

    def test_json_payload_round_trips(self, tiny_nets):
        gen, disc, proj = tiny_nets
        x = random_grid(np.random.default_rng(14))
        res = snap(x, gen, disc, proj, SnapConfig(refine_steps=1))
        payload = res.to_json_dict()
        assert voxel.grid_from_json(payload["grid"]) == res.grid
        assert len(payload["z_initial"]) == gen.latent_dim
        assert isinstance(payload["metrics"]["steps_taken"], int)

    def test_deterministic_across_calls(self, tiny_nets):
        gen, disc, proj = tiny_nets
        x = random_grid(np.random.default_rng(15))
        cfg = SnapConfig(refine_steps=4)
        a = snap(x, gen, disc, proj, cfg)
        b = snap(x, gen, disc, proj, cfg)
        assert a.grid == b.grid
        assert np.array_equal(a.z_final, b.z_final)
        assert a.metrics["dissimilarity_final"] == b.metrics["dissimilarity_final"]


class TestTrainProjection:
    def test_zero_epochs_untouched_models(self, tiny_nets, tiny_dataset):
        gen, disc, _ = tiny_nets
        before_g = {k: v.copy() for k, v in state_arrays(gen).items()}
        proj, log = train_projection(
            tiny_dataset, gen, disc, ProjTrainConfig(epochs=0, batch_size=8, seed=2)
        )
        assert log.records == []
        for k, v in state_arrays(gen).items():
            assert np.array_equal(v, before_g[k])

    def test_short_run_moves_proj_only(self, tiny_nets, tiny_dataset, tmp_path):
        gen, disc, _ = tiny_nets
        g_before = {k: v.copy() for k, v in state_arrays(gen).items()}
        d_before = {k: v.copy() for k, v in state_arrays(disc).items()}
        cfg = ProjTrainConfig(epochs=2, batch_size=8, lr=5e-4, seed=3)
        proj, log = train_projection(tiny_dataset, gen, disc, cfg, checkpoint_dir=tmp_path)
        assert len(log.records) == 2 * (24 // 8)
        assert all(np.isfinite(r.loss) for r in log.records)
        # frozen-net assertion: bit identical before/after
        for k, v in state_arrays(gen).items():
            assert np.array_equal(v, g_before[k])
        for k, v in state_arrays(disc).items():
            assert np.array_equal(v, d_before[k])
        assert (tmp_path / "proj.vxsn").exists()

    def test_config_defaults_match_training_recipe(self):
        cfg = ProjTrainConfig(epochs=1)
        assert cfg.lr == 0.0005
        assert cfg.batch_size == 50
        assert cfg.drop_fraction == 0.5


class TestEvals:
    def test_correlation_rows_and_zero_radius(self, tiny_nets):
        gen, disc, proj = tiny_nets
        rng = np.random.default_rng(16)
        grids = [random_grid(rng) for _ in range(2)]
        rows = latent_distance_correlation(grids, gen, proj, disc, 3, [0.0, 1.0], rng)
        assert len(rows) == 2 * 2 * 3
        for row in rows:
            if row["radius"] == 0.0:
                x = grids[row["shape_index"]]
                z0 = project_network(proj, x)
                expected = dissimilarity(generate_grid(gen, z0), x, disc)
                assert row["dissimilarity"] == pytest.approx(expected, abs=1e-9)
                assert row["distance"] == 0.0

    def test_spearman_on_monotone_rows(self):
        rows = [{"distance": float(i), "dissimilarity": float(i * 2 + 1)} for i in range(10)]
        assert spearman_correlation(rows) == pytest.approx(1.0)

    def test_projection_report_shape(self, tiny_nets):
        gen, disc, proj = tiny_nets
        rng = np.random.default_rng(17)
        grids = [random_grid(rng) for _ in range(3)]
        rows, summary = projection_report(
            grids, gen, disc, proj, SnapConfig(refine_steps=2), 0.5, rng
        )
        assert len(rows) == 3
        assert set(summary) == {
            "dissimilarity_network",
            "realism_network",
            "dissimilarity_full",
            "realism_full",
        }

    def test_projection_report_empty_heldout(self, tiny_nets):
        gen, disc, proj = tiny_nets
        with pytest.raises(ValueError, match="empty"):
            projection_report([], gen, disc, proj, SnapConfig(), 0.5, np.random.default_rng(0))

    def test_delete_top_third(self):
        g = VoxelGrid(np.ones((9, 9, 9), dtype=bool))
        out = delete_top_third(g)
        assert out.occupancy[:6].all()
        assert not out.occupancy[6:].any()

    def test_baseline_comparison_rows(self, tiny_nets, tiny_dataset):
        gen, disc, proj = tiny_nets
        rows = baseline_comparison(
            tiny_dataset.grids("heldout")[:2], gen, disc, proj, SnapConfig(refine_steps=2)
        )
        assert len(rows) == 2
        for row in rows:
            assert 0 < row["realism_snap"] < 1
            assert 0 < row["realism_baseline"] < 1

    def test_feature_mode_split_separated_clusters(self):
        rng = np.random.default_rng(18)
        a = rng.normal(0.0, 0.1, size=(20, 16))
        b = rng.normal(5.0, 0.1, size=(12, 16))
        labels = feature_mode_split(np.concatenate([a, b]), np.random.default_rng(0))
        assert set(labels[:20]) != set(labels[20:])
        assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1
