"""Snap service HTTP contract (in-process via TestClient)."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from voxsnap import voxel
from voxsnap.models import io as model_io
from voxsnap.service import create_app, load_bundles
from voxsnap.tensor import AdamState
from voxsnap.voxel import VoxelGrid


@pytest.fixture(scope="module")
def bundle_dir(tmp_path_factory, tiny_nets):
    gen, disc, proj = tiny_nets
    root = tmp_path_factory.mktemp("models")
    d = root / "chair"
    d.mkdir()
    model_io.save_net(d / "gen.vxsn", gen, AdamState.for_params(list(gen.params().values()), 0.1))
    model_io.save_net(d / "disc.vxsn", disc)
    model_io.save_net(d / "proj.vxsn", proj)
    model_io.update_bundle_meta(
        d,
        category="chair",
        resolution=8,
        latent_dim=4,
        base_channels=4,
        snap_defaults={"refine_steps": 2, "refine_lr": 0.1},
    )
    return root


@pytest.fixture(scope="module")
def client(bundle_dir):
    bundles = load_bundles(bundle_dir)
    app = create_app(bundles, max_concurrent_refine=2)
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def sample_grid(dims=8, seed=0):
    rng = np.random.default_rng(seed)
    return VoxelGrid(rng.random((dims, dims, dims)) < 0.3)


class TestHealth:
    def test_inventory(self, client):
        r = client.get("/api/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert body["models"] == [{"category": "chair", "resolution": 8, "latent_dim": 4}]

    def test_no_models(self):
        app = create_app({})
        with TestClient(app) as c:
            body = c.get("/api/health").json()
            assert body["status"] == "ok" and body["models"] == []

    def test_repeated_calls_identical(self, client):
        assert client.get("/api/health").content == client.get("/api/health").content


class TestSnapEndpoint:
    def test_happy_path(self, client):
        g = sample_grid()
        r = client.post("/api/snap", json={"category": "chair", "grid": voxel.grid_to_json(g)})
        assert r.status_code == 200
        body = r.json()
        out = voxel.grid_from_json(body["grid"])
        assert out.dims == 8
        assert len(body["z_initial"]) == 4 and len(body["z_final"]) == 4
        assert all(np.isfinite(v) for v in body["metrics"].values())
        assert body["request_id"] == r.headers["X-Request-Id"]

    def test_round_trip_grid_encoding(self, client):
        g = sample_grid(seed=5)
        payload = voxel.grid_to_json(g)
        assert voxel.grid_to_json(voxel.grid_from_json(payload)) == payload

    def test_nested_list_grid_accepted(self, client):
        g = sample_grid(seed=6)
        r = client.post(
            "/api/snap",
            json={"category": "chair", "grid": g.occupancy.astype(int).tolist()},
        )
        assert r.status_code == 200

    def test_unknown_category_404(self, client):
        r = client.post("/api/snap", json={"category": "boat", "grid": []})
        assert r.status_code == 404
        body = r.json()
        assert body["code"] == "model_not_found"
        assert body["request_id"]

    def test_bad_grid_encoding_400(self, client):
        r = client.post("/api/snap", json={"category": "chair", "grid": "!!not-base64!!"})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_request"

    def test_resolution_mismatch_409(self, client):
        g = sample_grid(dims=16)
        r = client.post("/api/snap", json={"category": "chair", "grid": voxel.grid_to_json(g)})
        assert r.status_code == 409
        assert r.json()["code"] == "resolution_mismatch"

    def test_missing_field_400(self, client):
        r = client.post("/api/snap", json={"category": "chair"})
        assert r.status_code == 400
        assert r.json()["code"] == "bad_request"

    def test_lambda2_zero_override_monotone_dissimilarity(self, client):
        g = sample_grid(seed=7)
        r = client.post(
            "/api/snap",
            json={
                "category": "chair",
                "grid": voxel.grid_to_json(g),
                "overrides": {"lambda2": 0.0, "refine_steps": 5},
            },
        )
        assert r.status_code == 200
        m = r.json()["metrics"]
        assert m["dissimilarity_final"] <= m["dissimilarity_initial"] + 1e-9

    def test_unknown_override_400(self, client):
        r = client.post(
            "/api/snap",
            json={"category": "chair", "grid": voxel.grid_to_json(sample_grid()),
                  "overrides": {"nonsense": 1}},
        )
        assert r.status_code == 400
        assert "nonsense" in r.json()["message"]

    def test_internal_error_500_no_traceback(self, client, monkeypatch):
        import voxsnap.service as svc

        def boom(*a, **kw):
            raise RuntimeError("secret internals")

        monkeypatch.setattr(svc, "snap", boom)
        r = client.post(
            "/api/snap", json={"category": "chair", "grid": voxel.grid_to_json(sample_grid())}
        )
        assert r.status_code == 500
        body = r.json()
        assert body["code"] == "internal"
        assert "secret" not in body["message"]
        assert "Traceback" not in r.text


class TestGenerateEndpoint:
    def test_deterministic_with_seed(self, client):
        req = {"category": "chair", "n": 2, "seed": 11}
        a = client.post("/api/generate", json=req)
        b = client.post("/api/generate", json=req)
        assert a.status_code == 200
        assert a.json() == b.json()
        assert len(a.json()["samples"]) == 2

    def test_default_n_is_one(self, client):
        r = client.post("/api/generate", json={"category": "chair", "seed": 0})
        assert len(r.json()["samples"]) == 1

    def test_n_out_of_range_400(self, client):
        r = client.post("/api/generate", json={"category": "chair", "n": 65})
        assert r.status_code == 400

    def test_unknown_category_404(self, client):
        assert client.post("/api/generate", json={"category": "boat"}).status_code == 404


class TestInterpolateEndpoint:
    def test_equal_endpoints_constant(self, client):
        z = [0.1, -0.2, 0.3, 0.0]
        r = client.post(
            "/api/interpolate", json={"category": "chair", "z_a": z, "z_b": z, "steps": 4}
        )
        assert r.status_code == 200
        grids = r.json()["grids"]
        assert len(grids) == 4
        assert len(set(grids)) == 1

    def test_two_steps_are_binarized_endpoints(self, client, tiny_nets):
        gen, _, _ = tiny_nets
        rng = np.random.default_rng(3)
        z_a, z_b = rng.standard_normal(4), rng.standard_normal(4)
        r = client.post(
            "/api/interpolate",
            json={"category": "chair", "z_a": list(z_a), "z_b": list(z_b), "steps": 2},
        )
        from voxsnap.projection.core import generate_grid
        from voxsnap.voxel import binarize

        grids = [voxel.grid_from_json(g) for g in r.json()["grids"]]
        assert grids[0] == binarize(generate_grid(gen, z_a), 0.5)
        assert grids[1] == binarize(generate_grid(gen, z_b), 0.5)

    def test_steps_out_of_range_400(self, client):
        z = [0.0] * 4
        r = client.post(
            "/api/interpolate", json={"category": "chair", "z_a": z, "z_b": z, "steps": 17}
        )
        assert r.status_code == 400

    def test_dim_mismatch_400(self, client):
        r = client.post(
            "/api/interpolate",
            json={"category": "chair", "z_a": [0.0] * 3, "z_b": [0.0] * 4, "steps": 2},
        )
        assert r.status_code == 400


class TestRequestEnvelope:
    def test_client_request_id_echoed(self, client):
        r = client.get("/api/health", headers={"X-Request-Id": "req-123"})
        assert r.headers["X-Request-Id"] == "req-123"

    def test_oversized_request_rejected(self, client):
        r = client.post(
            "/api/snap",
            content=b"x" * 10,
            headers={"content-length": str(9 * 1024 * 1024),
                     "content-type": "application/json"},
        )
        assert r.status_code == 413
        assert r.json()["code"] == "bad_request"
