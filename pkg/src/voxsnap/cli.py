"""voxsnap command line: dataset construction, training, evaluation,
one-shot snapping, and serving.

Option precedence is flags > environment (prefix ``VOXSNAP_``) > config
file (JSON mapping subcommand name to default options, passed via
--config).  Exit codes: 0 success, 1 usage error, 2 runtime failure.

Heavy imports happen inside subcommands so that --threads can pin the
BLAS/OpenMP pool sizes before numpy loads.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click


def _load_default_map(ctx, param, value):
    if value is None:
        return None
    try:
        ctx.default_map = json.loads(Path(value).read_text())
    except FileNotFoundError:
        raise click.BadParameter(f"config file not found: {value}")
    except json.JSONDecodeError as exc:
        raise click.BadParameter(f"config file is not valid JSON: {exc}")
    return value


@click.group(context_settings={"auto_envvar_prefix": "VOXSNAP"})
@click.option(
    "--config",
    type=click.Path(),
    callback=_load_default_map,
    expose_value=False,
    is_eager=True,
    help="JSON file with per-subcommand option defaults.",
)
@click.option("--threads", type=int, default=None, help="Cap kernel/BLAS threads.")
def cli(threads):
    if threads is not None:
        if threads < 1:
            raise click.BadParameter("--threads must be >= 1")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _set_kernel_threads():
    threads = os.environ.get("OMP_NUM_THREADS")
    if threads:
        from voxsnap import kernels

        kernels.set_num_threads(int(threads))


def _echo_step(record) -> None:
    click.echo(
        f"step={record.step} epoch={record.epoch} g_loss={record.g_loss:.5f} "
        f"d_loss={record.d_loss:.5f} acc_real={record.acc_real:.3f} "
        f"acc_fake={record.acc_fake:.3f} d_skipped={int(record.d_skipped)}"
    )


def _write_csv(path, rows: list, columns: list) -> None:
    from voxsnap.ioutil import atomic_write_text

    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in columns))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.8g}"
    return str(value)


@cli.command("make-dataset")
@click.option("--category", type=click.Choice(["chair", "table", "airplane"]), required=True)
@click.option("--n-train", type=int, default=512, show_default=True)
@click.option("--n-heldout", type=int, default=64, show_default=True)
@click.option("--dims", type=click.Choice(["8", "16", "32", "64"]), default="16", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def make_dataset_cmd(category, n_train, n_heldout, dims, seed, out):
    """Generate a procedural voxel corpus with a manifest."""
    _set_kernel_threads()
    from voxsnap.dataset import build_dataset, save_dataset
    from voxsnap.ioutil import atomic_write_text

    ds = build_dataset(category, n_train, n_heldout, int(dims), seed)
    save_dataset(ds, out)
    config = {
        "category": category,
        "n_train": n_train,
        "n_heldout": n_heldout,
        "dims": int(dims),
        "seed": seed,
    }
    atomic_write_text(Path(out) / "dataset.json", json.dumps(config, indent=2) + "\n")
    click.echo(f"wrote {len(ds)} grids to {out}")


@cli.command("train-gan")
@click.option("--data", type=click.Path(exists=True), required=True, help="Dataset directory (manifest.tsv).")
@click.option("--out", type=click.Path(), required=True, help="Model bundle directory.")
@click.option("--epochs", type=int, default=30, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--latent-dim", type=int, default=32, show_default=True)
@click.option("--lr-g", type=float, default=0.0025, show_default=True)
@click.option("--lr-d", type=float, default=2e-4, show_default=True)
@click.option("--beta1", type=float, default=0.5, show_default=True)
@click.option("--dropout", type=float, default=0.5, show_default=True)
@click.option("--base-channels", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log-every", type=int, default=10, show_default=True)
def train_gan_cmd(data, out, epochs, batch_size, latent_dim, lr_g, lr_d, beta1,
                  dropout, base_channels, seed, log_every):
    """Train the generator/discriminator pair on a dataset."""
    _set_kernel_threads()
    from voxsnap.dataset import load_manifest
    from voxsnap.models import io as model_io
    from voxsnap.models.gan import GanTrainConfig, train_gan

    ds = load_manifest(Path(data) / "manifest.tsv")
    cfg = GanTrainConfig(
        epochs=epochs, batch_size=batch_size, latent_dim=latent_dim,
        lr_g=lr_g, lr_d=lr_d, beta1=beta1, dropout_p=dropout,
        base_channels=base_channels, seed=seed,
    )
    out = Path(out)
    categories = sorted({item.category for item in ds.items})

    def on_step(record):
        if record.step % log_every == 0:
            _echo_step(record)

    gen, disc, log = train_gan(ds, cfg, checkpoint_dir=out, on_step=on_step)
    log.to_csv(out / "gan_trainlog.csv")
    model_io.update_bundle_meta(out, category=categories[0] if len(categories) == 1 else "mixed")
    click.echo(f"trained {epochs} epochs ({len(log.records)} steps); bundle at {out}")


@cli.command("train-proj")
@click.option("--model", type=click.Path(exists=True), required=True, help="Bundle with gen/disc checkpoints.")
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--epochs", type=int, default=20, show_default=True)
@click.option("--batch-size", type=int, default=50, show_default=True)
@click.option("--lr", type=float, default=0.0005, show_default=True)
@click.option("--drop-fraction", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log-every", type=int, default=10, show_default=True)
def train_proj_cmd(model, data, epochs, batch_size, lr, drop_fraction, seed, log_every):
    """Train the projection network against a frozen generator."""
    _set_kernel_threads()
    from voxsnap.dataset import load_manifest
    from voxsnap.models import io as model_io
    from voxsnap.projection import ProjTrainConfig, train_projection

    model = Path(model)
    ds = load_manifest(Path(data) / "manifest.tsv")
    gen, disc, _ = model_io.load_gan(model)
    cfg = ProjTrainConfig(
        epochs=epochs, batch_size=batch_size, lr=lr,
        drop_fraction=drop_fraction, seed=seed,
    )

    def on_step(record):
        if record.step % log_every == 0:
            click.echo(f"step={record.step} epoch={record.epoch} loss={record.loss:.5f}")

    proj, log = train_projection(ds, gen, disc, cfg, checkpoint_dir=model, on_step=on_step)
    log.to_csv(model / "proj_trainlog.csv")
    click.echo(f"projection trained; proj.vxsn written to {model}")


def _snap_options(fn):
    for deco in reversed([
        click.option("--lambda1", type=float, default=None, help="Dissimilarity weight."),
        click.option("--lambda2", type=float, default=None, help="Realism weight."),
        click.option("--refine-steps", type=int, default=None),
        click.option("--refine-lr", type=float, default=None),
        click.option("--threshold", type=float, default=None),
        click.option("--components/--no-components", "component_removal", default=None),
        click.option("--symmetrize/--no-symmetrize", "symmetrize_flag", default=None),
    ]):
        fn = deco(fn)
    return fn


def _collect_overrides(**kw) -> dict:
    mapping = {
        "lambda1": kw.get("lambda1"),
        "lambda2": kw.get("lambda2"),
        "refine_steps": kw.get("refine_steps"),
        "refine_lr": kw.get("refine_lr"),
        "threshold": kw.get("threshold"),
        "component_removal": kw.get("component_removal"),
        "symmetrize": kw.get("symmetrize_flag"),
    }
    return {k: v for k, v in mapping.items() if v is not None}


def _load_bundle_with_defaults(model):
    from voxsnap.service import load_bundle

    return load_bundle(Path(model))


@cli.command("snap")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@_snap_options
def snap_cmd(model, in_path, out, **kw):
    """Snap one VXGB grid onto the learned shape manifold."""
    _set_kernel_threads()
    from voxsnap.projection import snap
    from voxsnap.voxel import load_grid, save_grid

    bundle = _load_bundle_with_defaults(model)
    cfg = bundle.snap_defaults.with_overrides(**_collect_overrides(**kw))
    grid = load_grid(in_path)
    result = snap(grid, bundle.gen, bundle.disc, bundle.proj, cfg)
    save_grid(out, result.grid)
    payload = result.to_json_dict()
    del payload["grid"]
    click.echo(json.dumps(payload, indent=2))


@cli.command("generate")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def generate_cmd(model, n, seed, out):
    """Sample shapes from the generator and write VXGB files."""
    _set_kernel_threads()
    import numpy as np

    from voxsnap.models.gan import sample_shapes
    from voxsnap.voxel import binarize, remove_small_components, save_grid, symmetrize

    bundle = _load_bundle_with_defaults(model)
    cfg = bundle.snap_defaults
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (z, cont) in enumerate(sample_shapes(bundle.gen, n, np.random.default_rng(seed))):
        grid = binarize(cont, cfg.threshold)
        if cfg.component_removal:
            grid = remove_small_components(grid, cfg.min_component_fraction, cfg.connectivity)
        if cfg.symmetrize:
            grid = symmetrize(grid, cfg.symmetry_axis, cfg.symmetry_keep)
        save_grid(out / f"sample_{i:03d}.vxgb", grid)
    click.echo(f"wrote {n} samples to {out}")


@cli.command("interpolate")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--steps", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for sampling the two endpoints.")
@click.option("--out", type=click.Path(), required=True)
def interpolate_cmd(model, steps, seed, out):
    """Latent interpolation between two random endpoints."""
    _set_kernel_threads()
    import numpy as np

    from voxsnap.models.gan import interpolate
    from voxsnap.voxel import binarize, save_grid

    bundle = _load_bundle_with_defaults(model)
    rng = np.random.default_rng(seed)
    z_a = rng.standard_normal(bundle.latent_dim)
    z_b = rng.standard_normal(bundle.latent_dim)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, cont in enumerate(interpolate(bundle.gen, z_b, z_a, steps)):
        save_grid(out / f"interp_{i:03d}.vxgb", binarize(cont, bundle.snap_defaults.threshold))
    click.echo(f"wrote {steps} interpolation frames to {out}")


@cli.command("eval-correlation")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--n-inputs", type=int, default=16, show_default=True)
@click.option("--probes", type=int, default=32, show_default=True)
@click.option("--radii", type=str, default="0.5,1,2,4", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def eval_correlation_cmd(model, data, n_inputs, probes, radii, seed, out):
    """Latent distance vs dissimilarity probes around projected shapes."""
    _set_kernel_threads()
    import numpy as np

    from voxsnap.dataset import load_manifest
    from voxsnap.projection.evals import latent_distance_correlation, spearman_correlation

    bundle = _load_bundle_with_defaults(model)
    ds = load_manifest(Path(data) / "manifest.tsv")
    heldout = ds.grids("heldout")[:n_inputs]
    radius_set = [float(r) for r in radii.split(",")]
    rows = latent_distance_correlation(
        heldout, bundle.gen, bundle.proj, bundle.disc, probes, radius_set,
        np.random.default_rng(seed),
    )
    _write_csv(out, rows, ["shape_index", "radius", "distance", "dissimilarity"])
    rho = spearman_correlation(rows)
    click.echo(f"rows={len(rows)} spearman_rho={rho:.4f} -> {out}")


@cli.command("eval-projection")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--drop-fraction", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@_snap_options
def eval_projection_cmd(model, data, drop_fraction, seed, out, **kw):
    """Stage-one vs two-stage projection quality on dropped held-out shapes."""
    _set_kernel_threads()
    import numpy as np

    from voxsnap.dataset import load_manifest
    from voxsnap.projection.evals import projection_report

    bundle = _load_bundle_with_defaults(model)
    cfg = bundle.snap_defaults.with_overrides(**_collect_overrides(**kw))
    ds = load_manifest(Path(data) / "manifest.tsv")
    rows, summary = projection_report(
        ds.grids("heldout"), bundle.gen, bundle.disc, bundle.proj, cfg,
        drop_fraction, np.random.default_rng(seed),
    )
    columns = [
        "shape_index",
        "dissimilarity_network", "realism_network",
        "dissimilarity_full", "realism_full", "refine_steps_taken",
    ]
    summary_row = dict(summary)
    summary_row["shape_index"] = "mean"
    summary_row["refine_steps_taken"] = ""
    _write_csv(out, rows + [summary_row], columns)
    click.echo(json.dumps(summary, indent=2))


@cli.command("eval-baseline")
@click.option("--model", type=click.Path(exists=True), required=True)
@click.option("--data", type=click.Path(exists=True), required=True)
@click.option("--n", type=int, default=32, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@_snap_options
def eval_baseline_cmd(model, data, n, out, **kw):
    """Snap vs plain gradient descent after deleting each shape's top third."""
    _set_kernel_threads()
    from voxsnap.dataset import load_manifest
    from voxsnap.projection.evals import baseline_comparison

    bundle = _load_bundle_with_defaults(model)
    cfg = bundle.snap_defaults.with_overrides(**_collect_overrides(**kw))
    ds = load_manifest(Path(data) / "manifest.tsv")
    rows = baseline_comparison(ds.grids("heldout")[:n], bundle.gen, bundle.disc, bundle.proj, cfg)
    _write_csv(
        out,
        rows,
        ["shape_index", "realism_snap", "realism_baseline",
         "dissimilarity_snap", "dissimilarity_baseline"],
    )
    mean_snap = sum(r["realism_snap"] for r in rows) / len(rows)
    mean_base = sum(r["realism_baseline"] for r in rows) / len(rows)
    click.echo(f"mean_realism_snap={mean_snap:.4f} mean_realism_baseline={mean_base:.4f} -> {out}")


@cli.command("serve")
@click.option("--models", type=click.Path(exists=True), required=True, help="Directory of bundle subdirectories.")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8008, show_default=True)
@click.option("--concurrency", type=int, default=4, show_default=True, help="Concurrent refinement cap.")
@click.option("--static", type=click.Path(exists=True), default=None, help="Optional static assets directory (the voxel editor build).")
def serve_cmd(models, host, port, concurrency, static):
    """Run the snap inference service."""
    _set_kernel_threads()
    import uvicorn

    from voxsnap.service import create_app, load_bundles

    bundles = load_bundles(models)
    if not bundles:
        raise click.ClickException(f"no model bundles found under {models}")
    app = create_app(bundles, max_concurrent_refine=concurrency, static_dir=static)
    uvicorn.run(app, host=host, port=port, log_level="info")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except Exception as exc:  # runtime failure, no traceback spam
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
