"""Study runners: wire datasets, training, covariance, and observers.

Each runner consumes an :class:`~denoiq.expcli.config.ExperimentPlan`,
writes plot-ready CSVs plus a JSON run manifest into the plan's output
directory, and returns the artifact paths.  Every CSV row carries the
config fingerprint so artifacts from different configurations cannot be
mixed silently, and all randomness derives from the master seed, making
reruns byte-identical.
"""

import csv
import json
import math
import platform
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy

import denoiq
from denoiq.covariance import (
    CovarianceModel,
    class_average_covariance,
    decomposition_covariance,
    empirical_covariance,
    propagate_covariance,
    propagate_mean,
    svd_spectrum,
)
from denoiq.dataset import Dataset, generate_split
from denoiq.expcli.config import ExperimentPlan
from denoiq.metrics import RocResult, detection_efficiency, empirical_auc, rmse, ssim
from denoiq.neuralnet import (
    NetworkSpec,
    cnn_classifier_spec,
    cnn_denoiser_spec,
    linear_denoiser_spec,
    predict,
    resnet_denoiser_spec,
    save_checkpoint,
    train_network,
)
from denoiq.neuralnet.layers import conv2d_forward
from denoiq.observers import (
    ScoreSet,
    cho_scores,
    cnn_observer_scores,
    dog_channels,
    hotelling_template,
    linear_scores,
    npwmf_scores,
    rho_template,
    rho_tune_lambda,
)
from denoiq.phantom import render_signal_image
from denoiq.streams import LANE_CHO, LANE_INIT, substream

ARCH_CODES = {"linear": 0, "cnn": 1, "resnet": 2, "classifier": 3}
SOURCE_CODES = {"noisy": 0, "cnn": 1, "resnet": 2}

RESNET_LOSS_NOTE = (
    "resnet denoisers trained with a fixed random-feature perceptual loss"
    " (stand-in for a pretrained-VGG feature loss); set resnet_loss=mse to disable"
)


# -- deterministic report writing -------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".10g")
    return str(value)


def write_report_csv(path, columns, rows, header_lines=()) -> Path:
    """Write a CSV with optional leading # comment lines, stable byte-wise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_report_csv(path) -> tuple[list[str], list[str], list[dict]]:
    """Read a report CSV back as (header_lines, columns, row dicts)."""
    header_lines = []
    with open(path, newline="") as fh:
        position = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            header_lines.append(line[1:].strip())
            position = fh.tell()
            line = fh.readline()
        fh.seek(position)
        reader = csv.DictReader(fh)
        rows = list(reader)
        columns = list(reader.fieldnames or [])
    return header_lines, columns, rows


def write_manifest(out_dir, command, fingerprint, master_seed, timings, artifacts, extra=None) -> Path:
    """Write the run manifest (config echo, seed, versions, timings)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "fingerprint": fingerprint,
        "master_seed": master_seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "denoiq": denoiq.__version__,
        },
        "timings_seconds": {k: round(v, 3) for k, v in timings.items()},
        "artifacts": sorted(str(a) for a in artifacts),
    }
    if extra:
        payload.update(extra)
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def check_workspace_fingerprint(out_dir, fingerprint: str) -> None:
    """Reject mixing artifacts from different config fingerprints."""
    path = Path(out_dir) / "manifest.json"
    if not path.exists():
        return
    with open(path) as fh:
        recorded = json.load(fh).get("fingerprint")
    if recorded and recorded != fingerprint:
        raise ValueError(
            f"output directory {out_dir} holds artifacts for config fingerprint"
            f" {recorded}, but the current config has fingerprint {fingerprint};"
            " use a fresh --out directory or the original config"
        )


def write_spectrum_csv(out_dir, tag: str, spectrum, fingerprint: str, header_lines=()) -> Path:
    rows = [(i, float(s), fingerprint) for i, s in enumerate(spectrum.singular_values)]
    return write_report_csv(
        Path(out_dir) / f"spectrum_{tag}.csv",
        ("index", "singular_value", "fingerprint"),
        rows,
        header_lines,
    )


def write_scores_csv(out_dir, tag: str, source: str, score_sets, fingerprint: str,
                     header_lines=()) -> Path:
    rows = []
    for sset in score_sets:
        for i, (label, score) in enumerate(zip(sset.labels, sset.scores)):
            rows.append((i, int(label), source, sset.observer, float(score), fingerprint))
    return write_report_csv(
        Path(out_dir) / f"scores_{tag}.csv",
        ("image_index", "label", "source", "observer", "score", "fingerprint"),
        rows,
        header_lines,
    )


# -- shared study machinery ---------------------------------------------------


def _conv_prefix_features(spec: NetworkSpec, params, images, n_layers: int) -> np.ndarray:
    """Flattened activations after the first n conv layers, double precision."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None, :, :]
    for layer, p in zip(spec.layers[:n_layers], params[:n_layers]):
        if layer.kind != "conv":
            raise ValueError("feature extraction expects a purely convolutional prefix")
        w = np.asarray(p["w"], dtype=np.float64)
        b = p.get("b")
        x = conv2d_forward(x, w, None if b is None else np.asarray(b, dtype=np.float64))
    return x.reshape(len(x), -1)


def train_denoiser(
    plan: ExperimentPlan,
    arch: str,
    depth: int,
    train_ds: Dataset,
    val_ds: Dataset,
    *path,
    loss_override: str | None = None,
):
    """Train one denoiser with a per-(arch, depth) seed lane.

    Returns (spec, TrainResult).  Extra ``path`` components separate seed
    lanes when the same (arch, depth) trains more than once in a study.
    """
    dims = train_ds.image_dims
    if arch == "linear":
        spec = linear_denoiser_spec(depth, dims, filters=plan.linear_filters)
        loss = "mse"
    elif arch == "cnn":
        spec = cnn_denoiser_spec(depth, dims, filters=plan.cnn_filters)
        loss = "mse"
    elif arch == "resnet":
        spec = resnet_denoiser_spec(depth, dims, filters=plan.cnn_filters)
        loss = plan.resnet_loss
    else:
        raise ValueError(f"unknown denoiser architecture {arch!r}")
    if loss_override is not None:
        loss = loss_override
    rng = substream(plan.config.master_seed, LANE_INIT, ARCH_CODES[arch], depth, *path)
    result = train_network(
        spec,
        train_ds,
        val_ds,
        loss,
        plan.iterations,
        rng,
        batch_per_class=plan.batch_per_class,
        learning_rate=plan.learning_rate,
        validate_every=plan.validate_every,
    )
    return spec, result


def denoise_images(spec: NetworkSpec, params, images) -> np.ndarray:
    """Run a denoiser over an image stack; returns float32 (n, H, W)."""
    return predict(spec, params, np.asarray(images, dtype=np.float32))[:, 0]


@dataclass(frozen=True)
class SourceData:
    """One data source (noisy test images or a denoiser's outputs) plus stats."""

    name: str
    train: Dataset
    tune: Dataset
    test: Dataset
    kg: CovarianceModel
    delta_mean: np.ndarray


def source_statistics(cov_images, cov_labels) -> tuple[CovarianceModel, np.ndarray]:
    """Hypothesis-averaged empirical covariance and mean difference."""
    flat = np.asarray(cov_images).reshape(len(cov_images), -1)
    labels = np.asarray(cov_labels)
    k0 = empirical_covariance(flat[labels == 0])
    k1 = empirical_covariance(flat[labels == 1])
    return class_average_covariance(k0, k1), k1.mean - k0.mean


def evaluate_observers(plan: ExperimentPlan, source: SourceData, channels, source_code: int, depth_code: int):
    """Apply the plan's observer roster to one data source.

    Returns {roster kind: (ScoreSet, RocResult)}.  RHO tunes its truncation
    level on the tuning split of the same source; CHO draws fresh internal
    noise from a lane keyed by (source, depth) so reruns reproduce it.
    """
    results: dict[str, tuple[ScoreSet, RocResult]] = {}
    for kind in plan.observers:
        if kind == "ho":
            template = hotelling_template(source.kg, source.delta_mean)
            sset = linear_scores(source.test.images, source.test.labels, template)
        elif kind == "rho":
            lam = rho_tune_lambda(source.kg, source.delta_mean, source.tune.images, source.tune.labels)
            template = rho_template(source.kg, source.delta_mean, lam)
            sset = linear_scores(source.test.images, source.test.labels, template)
        elif kind == "npwmf":
            sset = npwmf_scores(source.test.images, source.test.labels, source.delta_mean)
        elif kind == "cho":
            rng = substream(plan.config.master_seed, LANE_CHO, source_code, depth_code)
            sset = cho_scores(
                source.test.images,
                source.test.labels,
                channels,
                source.train.images,
                source.train.labels,
                epsilon=plan.cho_epsilon,
                rng=rng,
            )
        elif kind == "cnn":
            sset = None  # handled by the observer-depth sweep, which trains per source
            continue
        results[kind] = (sset, empirical_auc(sset))
    return results


def _common_header(plan: ExperimentPlan, fingerprint: str, with_resnet: bool) -> list[str]:
    lines = [f"config fingerprint {fingerprint}; master seed {plan.config.master_seed}"]
    if with_resnet and plan.resnet_loss == "perceptual":
        lines.append(RESNET_LOSS_NOTE)
    return lines


# -- study runners ------------------------------------------------------------


def run_linear_propagation(plan: ExperimentPlan) -> dict:
    """Linear-denoiser study: detection performance tracked layer by layer.

    Trains a purely convolutional denoiser per configured depth, propagates
    the measurement covariance and signal template through every layer, and
    evaluates a tuned RHO at each layer output.  Emits the per-layer AUC
    table, spectrum CSVs for the input and each final-layer covariance, and
    checkpoints.
    """
    cfg = plan.config
    out = Path(plan.out_dir)
    fp = cfg.fingerprint()
    check_workspace_fingerprint(out, fp)
    dims = cfg.system.grid_dims
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    splits = {s: generate_split(cfg, s) for s in ("train", "val", "cov", "tune", "test")}
    timings["datasets"] = time.perf_counter() - t0

    k0 = decomposition_covariance(splits["cov"], cfg.noise)
    dm0 = render_signal_image(cfg.signal, cfg.system).ravel()
    header = _common_header(plan, fp, with_resnet=False)
    artifacts = [write_spectrum_csv(out, "noisy", k0.spectrum(), fp, header)]

    lam = rho_tune_lambda(k0, dm0, splits["tune"].images, splits["tune"].labels)
    noisy_scores = linear_scores(splits["test"].images, splits["test"].labels, rho_template(k0, dm0, lam))
    noisy_roc = empirical_auc(noisy_scores)
    rows = [("linear_propagation", 0, 0, noisy_scores.observer, noisy_roc.auc, noisy_roc.standard_error, fp)]
    timings["noisy_observer"] = time.perf_counter() - t0 - sum(timings.values())

    for depth in plan.denoiser_depths:
        spec, result = train_denoiser(plan, "linear", depth, splits["train"], splits["val"])
        params = result.params
        ckpt = out / "checkpoints" / f"linear_d{depth}.tiqw"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, spec, params)
        artifacts.append(ckpt)
        for layer in range(1, depth + 1):
            kd = propagate_covariance(
                k0, spec.layers[:layer], params[:layer], dims, allow_large=plan.allow_large
            )
            dmd = propagate_mean(dm0, spec.layers[:layer], params[:layer], dims)
            tune_feats = _conv_prefix_features(spec, params, splits["tune"].images, layer)
            test_feats = _conv_prefix_features(spec, params, splits["test"].images, layer)
            lam = rho_tune_lambda(kd, dmd, tune_feats, splits["tune"].labels)
            sset = linear_scores(test_feats, splits["test"].labels, rho_template(kd, dmd, lam))
            roc = empirical_auc(sset)
            rows.append(("linear_propagation", depth, layer, sset.observer, roc.auc, roc.standard_error, fp))
            if layer == depth:
                artifacts.append(write_spectrum_csv(out, f"linear_d{depth}", svd_spectrum(kd), fp, header))
    timings["per_depth"] = time.perf_counter() - t0 - sum(timings.values())

    table = write_report_csv(
        out / "linear_propagation.csv",
        ("study", "depth", "layer", "observer", "auc", "se", "fingerprint"),
        rows,
        header + ["layer 0 row is the noisy input; depth-D groups list layers 1..D"],
    )
    artifacts.append(table)
    timings["total"] = time.perf_counter() - t0
    manifest = write_manifest(out, "study linear_propagation", fp, cfg.master_seed, timings, artifacts)
    return {"table": table, "manifest": manifest, "artifacts": artifacts}


def _metrics_rows(study_tag, depth, evaluation, noisy_eval, image_rmse, image_ssim, fp):
    rows = []
    for kind, (sset, roc) in evaluation.items():
        if noisy_eval is None:
            eff = ""
        else:
            eff = detection_efficiency(noisy_eval[kind][1], roc).efficiency
        rows.append((study_tag, depth, sset.observer, roc.auc, roc.standard_error, eff, image_rmse, image_ssim, fp))
    return rows


def run_nonlinear_depth_sweep(plan: ExperimentPlan) -> dict:
    """Nonlinear-denoiser study: observers on noisy vs denoised test images.

    Trains CNN and ResNet denoisers per depth, evaluates the observer roster
    on the noisy and denoised data with matched empirical statistics, and
    emits the metrics table, a distortion-metrics table, per-source score
    exports, and covariance spectrum CSVs.
    """
    cfg = plan.config
    out = Path(plan.out_dir)
    fp = cfg.fingerprint()
    check_workspace_fingerprint(out, fp)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    splits = {s: generate_split(cfg, s) for s in ("train", "val", "cov", "tune", "test")}
    timings["datasets"] = time.perf_counter() - t0
    header = _common_header(plan, fp, with_resnet=True)
    channels = dog_channels(cfg.system.grid_dims, cfg.signal.center)

    kg, dm = source_statistics(splits["cov"].images, splits["cov"].labels)
    noisy = SourceData("noisy", splits["train"], splits["tune"], splits["test"], kg, dm)
    noisy_eval = evaluate_observers(plan, noisy, channels, SOURCE_CODES["noisy"], 0)
    noisy_rmse = rmse(splits["test"].images, splits["test"].targets)
    noisy_ssim = ssim(splits["test"].images, splits["test"].targets)
    artifacts = [
        write_spectrum_csv(out, "noisy", kg.spectrum(), fp, header),
        write_scores_csv(out, "noisy", "noisy", [s for s, _ in noisy_eval.values()], fp, header),
    ]
    metrics_rows = _metrics_rows(f"{plan.study}/noisy", 0, noisy_eval, None, noisy_rmse, noisy_ssim, fp)
    table2_rows = [(plan.study, 0, "noisy", "", noisy_rmse, noisy_ssim, fp)]
    timings["noisy_observers"] = time.perf_counter() - t0 - sum(timings.values())

    for arch in ("cnn", "resnet"):
        for depth in plan.denoiser_depths:
            spec, result = train_denoiser(plan, arch, depth, splits["train"], splits["val"])
            params = result.params
            ckpt = out / "checkpoints" / f"{arch}_d{depth}.tiqw"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, spec, params)
            artifacts.append(ckpt)

            den = {
                s: splits[s].with_images(denoise_images(spec, params, splits[s].images))
                for s in ("train", "tune", "test", "cov")
            }
            den_rmse = rmse(den["test"].images, splits["test"].targets)
            den_ssim = ssim(den["test"].images, splits["test"].targets)
            loss_name = plan.resnet_loss if arch == "resnet" else "mse"
            table2_rows.append((plan.study, depth, arch, loss_name, den_rmse, den_ssim, fp))

            kg_d, dm_d = source_statistics(den["cov"].images, den["cov"].labels)
            tag = f"{arch}_d{depth}"
            source = SourceData(tag, den["train"], den["tune"], den["test"], kg_d, dm_d)
            evaluation = evaluate_observers(plan, source, channels, SOURCE_CODES[arch], depth)
            metrics_rows.extend(
                _metrics_rows(f"{plan.study}/{arch}", depth, evaluation, noisy_eval, den_rmse, den_ssim, fp)
            )
            artifacts.append(write_spectrum_csv(out, tag, kg_d.spectrum(), fp, header))
            artifacts.append(write_scores_csv(out, tag, tag, [s for s, _ in evaluation.values()], fp, header))
    timings["denoisers"] = time.perf_counter() - t0 - sum(timings.values())

    metrics = write_report_csv(
        out / "metrics.csv",
        ("study", "depth", "observer", "auc", "se", "efficiency", "rmse", "ssim", "fingerprint"),
        metrics_rows,
        header,
    )
    table2 = write_report_csv(
        out / "table2.csv",
        ("study", "depth", "architecture", "loss", "rmse", "ssim", "fingerprint"),
        table2_rows,
        header,
    )
    artifacts += [metrics, table2]
    timings["total"] = time.perf_counter() - t0
    manifest = write_manifest(out, "study nonlinear_depth_sweep", fp, cfg.master_seed, timings, artifacts)
    return {"metrics": metrics, "table2": table2, "manifest": manifest, "artifacts": artifacts}


def run_signal_size_sweep(plan: ExperimentPlan) -> dict:
    """Signal-size study: RHO detection efficiency across signal widths.

    For each signal width the datasets regenerate, CNN denoisers retrain
    with MSE loss across the configured depths, and the efficiency of tuned
    RHO detection on denoised versus noisy images lands in one CSV.
    """
    base_cfg = plan.config
    out = Path(plan.out_dir)
    fp = base_cfg.fingerprint()
    check_workspace_fingerprint(out, fp)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    rows = []
    artifacts = []
    header = _common_header(plan, fp, with_resnet=False)
    rho_plan = replace(plan, observers=("rho",))

    for width_index, width in enumerate(plan.signal_widths):
        cfg = replace(base_cfg, signal=replace(base_cfg.signal, width=width))
        wplan = rho_plan.with_config(cfg)
        splits = {s: generate_split(cfg, s) for s in ("train", "val", "cov", "tune", "test")}
        kg, dm = source_statistics(splits["cov"].images, splits["cov"].labels)
        noisy = SourceData("noisy", splits["train"], splits["tune"], splits["test"], kg, dm)
        channels = None  # roster is RHO-only here
        noisy_eval = evaluate_observers(wplan, noisy, channels, SOURCE_CODES["noisy"], width_index)
        sset, roc = noisy_eval["rho"]
        rows.append((plan.study, width, 0, sset.observer, roc.auc, roc.standard_error, 1.0, fp))

        for depth in plan.denoiser_depths:
            spec, result = train_denoiser(wplan, "cnn", depth, splits["train"], splits["val"], width_index)
            params = result.params
            ckpt = out / "checkpoints" / f"cnn_w{width_index}_d{depth}.tiqw"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, spec, params)
            artifacts.append(ckpt)
            den = {
                s: splits[s].with_images(denoise_images(spec, params, splits[s].images))
                for s in ("train", "tune", "test", "cov")
            }
            kg_d, dm_d = source_statistics(den["cov"].images, den["cov"].labels)
            source = SourceData(f"cnn_d{depth}", den["train"], den["tune"], den["test"], kg_d, dm_d)
            evaluation = evaluate_observers(wplan, source, channels, SOURCE_CODES["cnn"], depth)
            dset, droc = evaluation["rho"]
            eff = detection_efficiency(roc, droc)
            rows.append(
                (plan.study, width, depth, dset.observer, droc.auc, droc.standard_error, eff.efficiency, fp)
            )
    timings["sweep"] = time.perf_counter() - t0

    table = write_report_csv(
        out / "size_sweep.csv",
        ("study", "width", "depth", "observer", "auc", "se", "efficiency", "fingerprint"),
        rows,
        header + ["depth 0 rows are the noisy baseline (efficiency 1 by definition)"],
    )
    artifacts.append(table)
    timings["total"] = time.perf_counter() - t0
    manifest = write_manifest(out, "study signal_size_sweep", fp, base_cfg.master_seed, timings, artifacts)
    return {"table": table, "manifest": manifest, "artifacts": artifacts}


def run_observer_depth_sweep(plan: ExperimentPlan) -> dict:
    """Classifier-observer study: AUC versus observer depth per data source.

    Trains one classifier per (observer depth, data source) where the
    sources are the noisy images plus CNN- and ResNet-denoised versions for
    each configured denoiser depth.  Reports AUCs and the data-processing
    check for the deepest observer: denoising must not raise its AUC beyond
    Monte Carlo tolerance.
    """
    cfg = plan.config
    out = Path(plan.out_dir)
    fp = cfg.fingerprint()
    check_workspace_fingerprint(out, fp)
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    splits = {s: generate_split(cfg, s) for s in ("train", "val", "test")}
    timings["datasets"] = time.perf_counter() - t0
    header = _common_header(plan, fp, with_resnet=True)
    artifacts = []

    sources: list[tuple[str, int, dict[str, Dataset]]] = [("noisy", 0, splits)]
    for arch in ("cnn", "resnet"):
        for depth in plan.denoiser_depths:
            spec, result = train_denoiser(plan, arch, depth, splits["train"], splits["val"])
            params = result.params
            ckpt = out / "checkpoints" / f"{arch}_d{depth}.tiqw"
            ckpt.parent.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, spec, params)
            artifacts.append(ckpt)
            den = {
                s: splits[s].with_images(denoise_images(spec, params, splits[s].images))
                for s in ("train", "val", "test")
            }
            sources.append((f"{arch}_d{depth}", depth, den))
    timings["denoisers"] = time.perf_counter() - t0 - sum(timings.values())

    dims = cfg.system.grid_dims
    rows = []
    auc_by = {}
    for obs_depth in plan.observer_depths:
        for name, den_depth, data in sources:
            cls_spec = cnn_classifier_spec(obs_depth, dims, filters=plan.observer_filters)
            arch_code = SOURCE_CODES.get(name.split("_")[0], 0)
            rng = substream(
                cfg.master_seed, LANE_INIT, ARCH_CODES["classifier"], obs_depth, arch_code, den_depth
            )
            result = train_network(
                cls_spec,
                data["train"],
                data["val"],
                "bce",
                plan.iterations,
                rng,
                batch_per_class=plan.batch_per_class,
                learning_rate=plan.learning_rate,
                validate_every=plan.validate_every,
            )
            sset = cnn_observer_scores(cls_spec, result.params, data["test"].images, data["test"].labels)
            roc = empirical_auc(sset)
            auc_by[(obs_depth, name)] = roc.auc
            rows.append((plan.study, obs_depth, name, den_depth, sset.observer, roc.auc, roc.standard_error, fp))
    timings["classifiers"] = time.perf_counter() - t0 - sum(timings.values())

    deepest = max(plan.observer_depths)
    dpi = []
    for name, den_depth, _ in sources[1:]:
        dpi.append(
            {
                "observer_depth": deepest,
                "source": name,
                "auc": auc_by[(deepest, name)],
                "noisy_auc": auc_by[(deepest, "noisy")],
                "within_tolerance": bool(auc_by[(deepest, name)] <= auc_by[(deepest, "noisy")] + 0.01),
            }
        )

    table = write_report_csv(
        out / "observer_sweep.csv",
        ("study", "observer_depth", "source", "denoiser_depth", "observer", "auc", "se", "fingerprint"),
        rows,
        header,
    )
    artifacts.append(table)
    timings["total"] = time.perf_counter() - t0
    manifest = write_manifest(
        out,
        "study observer_depth_sweep",
        fp,
        cfg.master_seed,
        timings,
        artifacts,
        extra={"data_processing_check": dpi},
    )
    return {"table": table, "manifest": manifest, "artifacts": artifacts, "data_processing_check": dpi}


STUDY_RUNNERS = {
    "linear_propagation": run_linear_propagation,
    "nonlinear_depth_sweep": run_nonlinear_depth_sweep,
    "signal_size_sweep": run_signal_size_sweep,
    "observer_depth_sweep": run_observer_depth_sweep,
}
