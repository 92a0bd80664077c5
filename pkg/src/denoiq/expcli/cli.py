"""Command-line surface for dataset generation, training, and studies."""

import time
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from denoiq.covariance import CovarianceModel, decomposition_covariance
from denoiq.dataset import generate_split, load_dataset, save_dataset
from denoiq.expcli.config import (
    STUDY_KINDS,
    config_key_reference,
    plan_from_values,
    resolve_config,
    study_config_from_values,
)
from denoiq.expcli.studies import (
    STUDY_RUNNERS,
    SOURCE_CODES,
    check_workspace_fingerprint,
    denoise_images,
    evaluate_observers,
    read_report_csv,
    source_statistics,
    train_denoiser,
    write_manifest,
    write_report_csv,
    write_scores_csv,
    write_spectrum_csv,
    SourceData,
)
from denoiq.metrics import detection_efficiency, empirical_auc, rmse, ssim
from denoiq.neuralnet import (
    cnn_classifier_spec,
    cnn_denoiser_spec,
    linear_denoiser_spec,
    load_checkpoint,
    resnet_denoiser_spec,
    save_checkpoint,
    train_network,
)
from denoiq.observers import ScoreSet, cnn_observer_scores, dog_channels
from denoiq.phantom import render_signal_image
from denoiq.streams import LANE_INIT, SPLIT_CODES, substream

SPLIT_NAMES = ("train", "val", "test", "cov", "tune")
DENOISER_ARCHS = ("linear", "cnn", "resnet")

_EPILOG = (
    "Config file keys (every key is optional; unknown keys are errors):"
    "\n\n\b\n" + config_key_reference()
)


def common_options(fn):
    decorators = [
        click.option("--config", "config_path", default=None, metavar="PATH",
                     help="INI config file overlaying the base profile."),
        click.option("--seed", default=None, type=click.IntRange(min=0), metavar="U64",
                     help="Override [dataset] master_seed."),
        click.option("--paper-scale", is_flag=True,
                     help="Use the paper's sample counts (1e4 train, 1e5 covariance, 1e4 test)."),
        click.option("--allow-large", is_flag=True,
                     help="Permit covariance propagation past the in-memory size guard."),
        click.option("--out", "out_dir", default=".", metavar="DIR",
                     help="Directory for datasets, checkpoints, and reports."),
        click.option("--profile", default=None, type=click.Choice(["linear", "nonlinear"]),
                     help="Base profile (default: the natural one for the command)."),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _resolve(profile, config_path, seed, paper_scale, default_profile="linear"):
    try:
        return resolve_config(profile or default_profile, config_path, seed, paper_scale)
    except ValueError as exc:
        raise click.ClickException(str(exc))


def _load_split(out_dir, name):
    path = Path(out_dir) / "data" / f"{name}.tiqd"
    if not path.exists():
        # Plain split names come from `generate`; suffixed ones from `denoise`.
        stage = "generate" if name in SPLIT_CODES else "denoise"
        raise click.ClickException(f"missing dataset {path}; run `denoiq {stage}` first")
    return load_dataset(path)


def _denoiser_spec(arch, depth, dims, values):
    if arch == "linear":
        return linear_denoiser_spec(depth, dims, filters=values["study"]["linear_filters"])
    if arch == "cnn":
        return cnn_denoiser_spec(depth, dims, filters=values["study"]["cnn_filters"])
    return resnet_denoiser_spec(depth, dims, filters=values["study"]["cnn_filters"])


@click.group(epilog=_EPILOG)
@click.version_option(package_name="denoiq", prog_name="denoiq")
def main():
    """Task-based image-quality experiments for denoising networks.

    Subcommands cover the pipeline stages (generate, train-denoiser,
    denoise, estimate-cov, observer, evaluate) and the packaged studies
    (study <kind>).  Every run is reproducible from its config file and
    master seed; rerunning a study emits byte-identical CSVs.
    """


@main.command()
@common_options
@click.option("--split", "split_names", multiple=True, type=click.Choice(SPLIT_NAMES),
              help="Split(s) to generate (default: all five).")
def generate(config_path, seed, paper_scale, allow_large, out_dir, profile, split_names):
    """Generate dataset splits as .tiqd files under OUT/data/."""
    values = _resolve(profile, config_path, seed, paper_scale)
    cfg = study_config_from_values(values)
    fp = cfg.fingerprint()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    names = split_names or SPLIT_NAMES
    data_dir = Path(out_dir) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    artifacts = []
    for name in names:
        ds = generate_split(cfg, name)
        path = data_dir / f"{name}.tiqd"
        save_dataset(ds, path)
        artifacts.append(path)
        click.echo(f"wrote {path} ({len(ds)} images)")
    write_manifest(out_dir, "generate", fp, cfg.master_seed,
                   {"total": time.perf_counter() - t0}, artifacts)
    click.echo(f"config fingerprint {fp}")


@main.command("train-denoiser")
@common_options
@click.option("--arch", required=True, type=click.Choice(DENOISER_ARCHS), help="Denoiser architecture.")
@click.option("--depth", required=True, type=click.IntRange(min=2), help="Convolutional depth.")
@click.option("--loss", default=None, type=click.Choice(["mse", "perceptual"]),
              help="Training loss (default: mse; resnet uses [study] resnet_loss).")
def train_denoiser_cmd(config_path, seed, paper_scale, allow_large, out_dir, profile, arch, depth, loss):
    """Train a denoiser on OUT/data/{train,val}.tiqd; write a checkpoint."""
    values = _resolve(profile, config_path, seed, paper_scale)
    if loss is not None:
        values["study"]["resnet_loss"] = loss
    plan = plan_from_values(values, "nonlinear_depth_sweep", out_dir, allow_large)
    fp = plan.config.fingerprint()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    train_ds = _load_split(out_dir, "train")
    val_ds = _load_split(out_dir, "val")
    t0 = time.perf_counter()
    try:
        spec, result = train_denoiser(plan, arch, depth, train_ds, val_ds, loss_override=loss)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    ckpt = Path(out_dir) / "checkpoints" / f"{arch}_d{depth}.tiqw"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, spec, result.params)
    write_manifest(out_dir, f"train-denoiser {arch} d{depth}", fp, plan.config.master_seed,
                   {"total": time.perf_counter() - t0}, [ckpt])
    click.echo(f"wrote {ckpt} (best val metric {result.best_metric:.6g} at iteration {result.best_iteration})")


@main.command()
@common_options
@click.option("--arch", required=True, type=click.Choice(DENOISER_ARCHS + ("identity",)),
              help="Denoiser architecture; 'identity' passes images through unchanged.")
@click.option("--depth", default=0, type=int, help="Denoiser depth (ignored for identity).")
@click.option("--split", "split_name", default="test", type=click.Choice(SPLIT_NAMES),
              help="Which split to denoise.")
def denoise(config_path, seed, paper_scale, allow_large, out_dir, profile, arch, depth, split_name):
    """Denoise a split with a trained checkpoint; write a new .tiqd file."""
    values = _resolve(profile, config_path, seed, paper_scale)
    cfg = study_config_from_values(values)
    fp = cfg.fingerprint()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    ds = _load_split(out_dir, split_name)
    if arch == "identity":
        out_ds = ds.with_images(ds.images)
        tag = f"{split_name}_identity"
    else:
        spec = _denoiser_spec(arch, depth, ds.image_dims, values)
        ckpt = Path(out_dir) / "checkpoints" / f"{arch}_d{depth}.tiqw"
        if not ckpt.exists():
            raise click.ClickException(f"missing checkpoint {ckpt}; run `denoiq train-denoiser` first")
        try:
            params = load_checkpoint(ckpt, spec)
        except ValueError as exc:
            raise click.ClickException(str(exc))
        out_ds = ds.with_images(denoise_images(spec, params, ds.images))
        tag = f"{split_name}_{arch}_d{depth}"
    path = Path(out_dir) / "data" / f"{tag}.tiqd"
    save_dataset(out_ds, path)
    write_manifest(out_dir, f"denoise {tag}", fp, cfg.master_seed, {}, [path])
    click.echo(f"wrote {path}")


@main.command("estimate-cov")
@common_options
@click.option("--source", default="noisy", metavar="TAG",
              help="Data source: 'noisy' or a denoised tag like cnn_d3 (needs `denoise --split cov`).")
@click.option("--method", default="empirical", type=click.Choice(["empirical", "decomposition"]),
              help="Estimator; decomposition applies the measurement noise model to clean targets.")
def estimate_cov(config_path, seed, paper_scale, allow_large, out_dir, profile, source, method):
    """Estimate a covariance model from the cov split; export its spectrum."""
    values = _resolve(profile, config_path, seed, paper_scale)
    cfg = study_config_from_values(values)
    fp = cfg.fingerprint()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    name = "cov" if source == "noisy" else f"cov_{source}"
    ds = _load_split(out_dir, name)
    if method == "decomposition":
        if source != "noisy":
            raise click.ClickException(
                "decomposition models the raw measurement noise; use --method empirical for denoised sources"
            )
        model = decomposition_covariance(ds, cfg.noise)
        labels = np.asarray(ds.labels)
        flat = np.asarray(ds.targets if ds.targets is not None else ds.images).reshape(len(ds), -1)
        mean0 = flat[labels == 0].mean(axis=0)
        mean1 = flat[labels == 1].mean(axis=0)
    else:
        model, _ = source_statistics(ds.images, ds.labels)
        labels = np.asarray(ds.labels)
        flat = np.asarray(ds.images).reshape(len(ds), -1)
        mean0 = flat[labels == 0].mean(axis=0)
        mean1 = flat[labels == 1].mean(axis=0)
    cov_dir = Path(out_dir) / "cov"
    cov_dir.mkdir(parents=True, exist_ok=True)
    npz_path = cov_dir / f"{source}.npz"
    np.savez(npz_path, matrix=model.matrix, mean0=mean0, mean1=mean1,
             provenance=model.provenance, n_samples=model.n_samples, fingerprint=fp)
    spectrum_path = write_spectrum_csv(out_dir, source, model.spectrum(), fp,
                                       [f"config fingerprint {fp}; method {method}"])
    write_manifest(out_dir, f"estimate-cov {source}", fp, cfg.master_seed, {},
                   [npz_path, spectrum_path])
    click.echo(f"wrote {npz_path}")
    click.echo(f"wrote {spectrum_path}")


@main.command()
@common_options
@click.option("--kind", required=True, type=click.Choice(["ho", "rho", "cho", "npwmf", "cnn"]),
              help="Observer family.")
@click.option("--source", default="noisy", metavar="TAG",
              help="Data source tag; test/tune/train splits of that source must exist.")
@click.option("--obs-depth", default=4, type=click.IntRange(min=1),
              help="Classifier depth (cnn observer only).")
@click.option("--delta-mean", "delta_mean_kind", default=None, type=click.Choice(["analytic", "empirical"]),
              help="Signal template source (default: analytic for noisy, empirical otherwise).")
def observer(config_path, seed, paper_scale, allow_large, out_dir, profile, kind, source,
             obs_depth, delta_mean_kind):
    """Score the test split with one observer; write a scores CSV."""
    values = _resolve(profile, config_path, seed, paper_scale)
    cfg = study_config_from_values(values)
    fp = cfg.fingerprint()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    suffix = "" if source == "noisy" else f"_{source}"
    plan = plan_from_values(values, "nonlinear_depth_sweep", out_dir, allow_large)

    if kind == "cnn":
        train_ds = _load_split(out_dir, f"train{suffix}")
        val_ds = _load_split(out_dir, f"val{suffix}")
        test_ds = _load_split(out_dir, f"test{suffix}")
        cls_spec = cnn_classifier_spec(obs_depth, test_ds.image_dims, filters=plan.observer_filters)
        arch_code = SOURCE_CODES.get(source.split("_")[0], 0)
        rng = substream(cfg.master_seed, LANE_INIT, 3, obs_depth, arch_code, 0)
        result = train_network(cls_spec, train_ds, val_ds, "bce", plan.iterations, rng,
                               batch_per_class=plan.batch_per_class,
                               learning_rate=plan.learning_rate,
                               validate_every=plan.validate_every)
        sset = cnn_observer_scores(cls_spec, result.params, test_ds.images, test_ds.labels)
    else:
        test_ds = _load_split(out_dir, f"test{suffix}")
        if kind == "cho":
            train_ds = _load_split(out_dir, f"train{suffix}")
            tune_ds = test_ds  # unused by cho
        else:
            tune_ds = _load_split(out_dir, f"tune{suffix}") if kind == "rho" else test_ds
            train_ds = test_ds  # unused by ho/rho/npwmf
        npz_path = Path(out_dir) / "cov" / f"{source}.npz"
        if kind in ("ho", "rho", "npwmf"):
            if not npz_path.exists():
                raise click.ClickException(f"missing covariance {npz_path}; run `denoiq estimate-cov` first")
            stored = np.load(npz_path, allow_pickle=False)
            if str(stored["fingerprint"]) != fp:
                raise click.ClickException(
                    f"covariance {npz_path} belongs to fingerprint {stored['fingerprint']},"
                    f" current config is {fp}"
                )
            kg = CovarianceModel(matrix=stored["matrix"],
                                 mean=0.5 * (stored["mean0"] + stored["mean1"]),
                                 provenance=str(stored["provenance"]),
                                 n_samples=int(stored["n_samples"]))
            if delta_mean_kind is None:
                delta_mean_kind = "analytic" if source == "noisy" else "empirical"
            if delta_mean_kind == "analytic":
                dm = render_signal_image(cfg.signal, cfg.system).ravel()
            else:
                dm = stored["mean1"] - stored["mean0"]
        else:
            kg, dm = None, None
        channels = dog_channels(cfg.system.grid_dims, cfg.signal.center) if kind == "cho" else None
        src = SourceData(source, train_ds, tune_ds, test_ds, kg, dm)
        roster_plan = replace(plan, observers=(kind,))
        arch_code = SOURCE_CODES.get(source.split("_")[0], 0)
        try:
            evaluation = evaluate_observers(roster_plan, src, channels, arch_code, 0)
        except ValueError as exc:
            raise click.ClickException(str(exc))
        sset = evaluation[kind][0]

    roc = empirical_auc(sset)
    path = write_scores_csv(out_dir, f"{source}_{kind}", source, [sset], fp,
                            [f"config fingerprint {fp}; observer {sset.observer}"])
    write_manifest(out_dir, f"observer {kind} {source}", fp, cfg.master_seed, {}, [path])
    click.echo(f"wrote {path}")
    click.echo(f"{sset.observer}: AUC {roc.auc:.4f} (SE {roc.standard_error:.4f})")


@main.command()
@common_options
@click.option("--scores", "score_files", multiple=True, required=True, metavar="CSV",
              help="Scores CSV(s) to evaluate (repeatable).")
@click.option("--baseline", default=None, metavar="CSV",
              help="Noisy-baseline scores CSV; enables efficiency columns.")
@click.option("--denoised", default=None, metavar="TIQD",
              help="Denoised dataset for RMSE/SSIM against --reference targets.")
@click.option("--reference", default=None, metavar="TIQD",
              help="Dataset holding the clean targets (defaults to --denoised).")
@click.option("--depth", default=0, type=int, help="Depth value recorded in the metrics rows.")
def evaluate(config_path, seed, paper_scale, allow_large, out_dir, profile, score_files,
             baseline, denoised, reference, depth):
    """Summarize scores CSVs into the metrics table (AUC, SE, efficiency)."""

    def load_scores(path):
        path = Path(path)
        if not path.is_absolute() and not path.exists():
            path = Path(out_dir) / path
        if not path.exists():
            raise click.ClickException(f"missing scores CSV {path}; run `denoiq observer` first")
        _, _, rows = read_report_csv(path)
        groups: dict[tuple[str, str], list[tuple[int, float]]] = {}
        fps = set()
        for row in rows:
            fps.add(row["fingerprint"])
            key = (row["source"], row["observer"])
            groups.setdefault(key, []).append((int(row["label"]), float(row["score"])))
        if len(fps) != 1:
            raise click.ClickException(f"{path} mixes rows from different config fingerprints: {sorted(fps)}")
        out = {}
        for (source, observer), pairs in groups.items():
            labels = np.array([p[0] for p in pairs])
            scores = np.array([p[1] for p in pairs])
            out[source, observer] = ScoreSet(scores=scores, labels=labels, observer=observer)
        return out, fps.pop()

    all_sets = {}
    fps = set()
    for path in score_files:
        sets, fp = load_scores(path)
        fps.add(fp)
        all_sets.update(sets)
    base_rocs = {}
    if baseline:
        base_sets, fp = load_scores(baseline)
        fps.add(fp)
        base_rocs = {obs.split("(")[0]: empirical_auc(s) for (_, obs), s in base_sets.items()}
    if len(fps) != 1:
        raise click.ClickException(f"inputs mix config fingerprints: {sorted(fps)}")
    fp = fps.pop()
    try:
        check_workspace_fingerprint(out_dir, fp)
    except ValueError as exc:
        raise click.ClickException(str(exc))

    image_rmse = image_ssim = ""
    if denoised:
        try:
            den_ds = load_dataset(denoised)
            ref_ds = load_dataset(reference) if reference else den_ds
        except (OSError, ValueError) as exc:
            raise click.ClickException(str(exc))
        if ref_ds.targets is None:
            raise click.ClickException("reference dataset has no clean targets")
        image_rmse = rmse(den_ds.images, ref_ds.targets)
        image_ssim = ssim(den_ds.images, ref_ds.targets)

    rows = []
    for source, observer in sorted(all_sets):
        sset = all_sets[source, observer]
        roc = empirical_auc(sset)
        family = observer.split("(")[0]
        eff = ""
        # Efficiency is denoised-vs-noisy, so baseline rows keep it blank.
        if family in base_rocs and source != "noisy":
            eff = detection_efficiency(base_rocs[family], roc).efficiency
        rows.append((f"evaluate/{source}", depth, observer, roc.auc, roc.standard_error, eff,
                     image_rmse, image_ssim, fp))
    path = write_report_csv(
        Path(out_dir) / "metrics.csv",
        ("study", "depth", "observer", "auc", "se", "efficiency", "rmse", "ssim", "fingerprint"),
        rows,
        [f"config fingerprint {fp}"],
    )
    write_manifest(out_dir, "evaluate", fp, None, {}, [path])
    click.echo(f"wrote {path}")
    for row in rows:
        click.echo(f"{row[2]}: AUC {row[3]:.4f} (SE {row[4]:.4f})")


@main.command()
@common_options
@click.argument("kind", type=click.Choice(STUDY_KINDS))
def study(config_path, seed, paper_scale, allow_large, out_dir, profile, kind):
    """Run one packaged study end to end; emit CSVs and a run manifest."""
    default_profile = "linear" if kind == "linear_propagation" else "nonlinear"
    values = _resolve(profile, config_path, seed, paper_scale, default_profile)
    plan = plan_from_values(values, kind, out_dir, allow_large)
    try:
        outputs = STUDY_RUNNERS[kind](plan)
    except (ValueError, MemoryError) as exc:
        raise click.ClickException(str(exc))
    for key, value in outputs.items():
        if key == "artifacts":
            continue
        if key == "data_processing_check":
            for entry in value:
                status = "ok" if entry["within_tolerance"] else "VIOLATED"
                click.echo(
                    f"data-processing check [{status}] depth-{entry['observer_depth']} observer on"
                    f" {entry['source']}: AUC {entry['auc']:.4f} vs noisy {entry['noisy_auc']:.4f}"
                )
        else:
            click.echo(f"wrote {value}")


if __name__ == "__main__":
    main()
