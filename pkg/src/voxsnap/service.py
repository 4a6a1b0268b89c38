"""Snap inference service.

JSON over HTTP: POST /api/snap, /api/generate, /api/interpolate and
GET /api/health.  Model bundles are loaded once at startup, frozen, and
shared read-only across request handlers; snap refinements run on a
bounded FIFO executor so CPU work stays capped while identical concurrent
requests produce identical payloads.

Every error response carries ``{"code", "message", "request_id"}`` with
code drawn from {bad_request, model_not_found, resolution_mismatch,
internal}; stack traces never leave the process.
"""

from __future__ import annotations

import logging
import uuid
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from voxsnap import __version__
from voxsnap.models import io as model_io
from voxsnap.models.gan import interpolate, sample_shapes
from voxsnap.models.nets import DiscriminatorNet, GeneratorNet, ProjectionNet, freeze
from voxsnap.projection import SnapConfig, snap
from voxsnap.voxel import (
    VoxelFormatError,
    binarize,
    grid_from_json,
    grid_to_json,
    remove_small_components,
    symmetrize,
)

log = logging.getLogger("voxsnap.service")

MAX_GENERATE = 64
MAX_INTERPOLATE_STEPS = 16
REQUEST_BYTE_LIMIT = 8 * 1024 * 1024
SNAP_TIMEOUT_S = 30.0


class ApiError(Exception):
    """Service-level error with one of the documented codes."""

    STATUS = {
        "bad_request": 400,
        "model_not_found": 404,
        "resolution_mismatch": 409,
        "internal": 500,
    }

    def __init__(self, code: str, message: str):
        assert code in self.STATUS, code
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass
class ModelBundle:
    category: str
    resolution: int
    latent_dim: int
    gen: GeneratorNet
    disc: DiscriminatorNet
    proj: ProjectionNet
    snap_defaults: SnapConfig


def load_bundle(bundle_dir) -> ModelBundle:
    bundle_dir = Path(bundle_dir)
    gen, disc, meta = model_io.load_gan(bundle_dir)
    proj = model_io.load_projection(bundle_dir)
    for net in (gen, disc, proj):
        freeze(net)
    defaults = SnapConfig(**meta.get("snap_defaults", {}))
    defaults.validate()
    return ModelBundle(
        category=meta.get("category", bundle_dir.name),
        resolution=meta["resolution"],
        latent_dim=meta["latent_dim"],
        gen=gen,
        disc=disc,
        proj=proj,
        snap_defaults=defaults,
    )


def load_bundles(model_dir) -> dict:
    """Every subdirectory carrying a bundle.json becomes a category."""
    model_dir = Path(model_dir)
    bundles = {}
    for meta_path in sorted(model_dir.glob("*/bundle.json")):
        bundle = load_bundle(meta_path.parent)
        bundles[bundle.category] = bundle
        log.info("loaded %s (%d^3, d=%d)", bundle.category, bundle.resolution, bundle.latent_dim)
    return bundles


class SnapRequest(BaseModel):
    category: str
    grid: Union[str, list]
    overrides: Optional[dict] = None


class GenerateRequest(BaseModel):
    category: str
    n: int = Field(default=1)
    seed: Optional[int] = None


class InterpolateRequest(BaseModel):
    category: str
    z_a: list
    z_b: list
    steps: int


_OVERRIDE_FIELDS = {f.name for f in fields(SnapConfig)}


def _resolve_config(bundle: ModelBundle, overrides: Optional[dict]) -> SnapConfig:
    if not overrides:
        return bundle.snap_defaults
    unknown = set(overrides) - _OVERRIDE_FIELDS
    if unknown:
        raise ApiError("bad_request", f"unknown snap config overrides: {sorted(unknown)}")
    try:
        return bundle.snap_defaults.with_overrides(**overrides)
    except (ValueError, TypeError) as exc:
        raise ApiError("bad_request", f"invalid snap config: {exc}") from exc


def create_app(
    bundles: dict,
    max_concurrent_refine: int = 4,
    static_dir=None,
) -> FastAPI:
    app = FastAPI(title="voxsnap", version=__version__)
    executor = ThreadPoolExecutor(max_workers=max_concurrent_refine)

    def get_bundle(category: str) -> ModelBundle:
        if category not in bundles:
            raise ApiError("model_not_found", f"no model loaded for category {category!r}")
        return bundles[category]

    @app.middleware("http")
    async def request_envelope(request: Request, call_next):
        request_id = request.headers.get("x-request-id") or uuid.uuid4().hex
        request.state.request_id = request_id
        length = request.headers.get("content-length")
        if length and int(length) > REQUEST_BYTE_LIMIT:
            return _error_response("bad_request", "request body too large", request_id, status=413)
        response = await call_next(request)
        response.headers["X-Request-Id"] = request_id
        return response

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return _error_response(exc.code, exc.message, request.state.request_id)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(
            "bad_request", f"invalid request: {exc.errors()[:3]}", request.state.request_id
        )

    @app.exception_handler(Exception)
    async def internal_handler(request: Request, exc: Exception):
        request_id = getattr(request.state, "request_id", "unknown")
        log.exception("internal error (request %s)", request_id)
        return _error_response("internal", "internal error", request_id)

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "models": [
                {
                    "category": b.category,
                    "resolution": b.resolution,
                    "latent_dim": b.latent_dim,
                }
                for b in bundles.values()
            ],
            "version": __version__,
        }

    @app.post("/api/snap")
    def handle_snap(req: SnapRequest, request: Request):
        bundle = get_bundle(req.category)
        cfg = _resolve_config(bundle, req.overrides)
        try:
            grid = grid_from_json(req.grid)
        except VoxelFormatError as exc:
            raise ApiError("bad_request", f"bad grid encoding: {exc}") from exc
        if grid.dims != bundle.resolution:
            raise ApiError(
                "resolution_mismatch",
                f"grid is {grid.dims}^3 but {bundle.category} runs at {bundle.resolution}^3",
            )
        future = executor.submit(snap, grid, bundle.gen, bundle.disc, bundle.proj, cfg)
        try:
            result = future.result(timeout=SNAP_TIMEOUT_S)
        except FutureTimeout:
            future.cancel()
            raise ApiError("internal", "snap timed out")
        body = result.to_json_dict()
        body["request_id"] = request.state.request_id
        return body

    @app.post("/api/generate")
    def handle_generate(req: GenerateRequest):
        bundle = get_bundle(req.category)
        if not 1 <= req.n <= MAX_GENERATE:
            raise ApiError("bad_request", f"n must be in [1, {MAX_GENERATE}], got {req.n}")
        seed = req.seed if req.seed is not None else np.random.SeedSequence().entropy
        rng = np.random.default_rng(seed)
        cfg = bundle.snap_defaults
        samples = []
        for z, cont in sample_shapes(bundle.gen, req.n, rng):
            grid = binarize(cont, cfg.threshold)
            if cfg.component_removal:
                grid = remove_small_components(grid, cfg.min_component_fraction, cfg.connectivity)
            if cfg.symmetrize:
                grid = symmetrize(grid, cfg.symmetry_axis, cfg.symmetry_keep)
            samples.append({"z": [float(v) for v in z], "grid": grid_to_json(grid)})
        return {"samples": samples}

    @app.post("/api/interpolate")
    def handle_interpolate(req: InterpolateRequest):
        bundle = get_bundle(req.category)
        if not 2 <= req.steps <= MAX_INTERPOLATE_STEPS:
            raise ApiError(
                "bad_request", f"steps must be in [2, {MAX_INTERPOLATE_STEPS}], got {req.steps}"
            )
        d = bundle.latent_dim
        if len(req.z_a) != d or len(req.z_b) != d:
            raise ApiError(
                "bad_request",
                f"latent vectors must have dimension {d}, got {len(req.z_a)}/{len(req.z_b)}",
            )
        try:
            z_a = np.asarray(req.z_a, dtype=np.float64)
            z_b = np.asarray(req.z_b, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ApiError("bad_request", f"latent vectors must be numeric: {exc}") from exc
        # intermediate shapes may legitimately fragment: binarize only
        grids = interpolate(bundle.gen, z_b, z_a, req.steps)
        cfg = bundle.snap_defaults
        return {"grids": [grid_to_json(binarize(g, cfg.threshold)) for g in grids]}

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="static")

    return app


def _error_response(code: str, message: str, request_id: str, status: int | None = None):
    return JSONResponse(
        status_code=status or ApiError.STATUS[code],
        content={"code": code, "message": message, "request_id": request_id},
        headers={"X-Request-Id": request_id},
    )
