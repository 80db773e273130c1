"""Umbrella command line: dataset synthesis, ingestion, analysis, training,
evaluation, interpretability, and screening (local or against a running
service)."""
from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import synth as synth_mod
from .augment import mix_from_config
from .classifier import (
    evaluate,
    get_provider,
    load_bundle,
    resize_to_input,
    save_bundle,
    seed_sweep,
    train_head,
    update_bundle_rules,
)
from .config import load_config, with_seed
from .core import DatasetManifest, EyeRecord, ManifestEntry, PupilCrop, load_manifest, \
    load_png, mirror_left_eyes, save_manifest, save_png, split_dataset
from .errors import RedReflexError
from .imaging import PROPERTY_ORDER, compute_properties, property_class_report
from .interpret import (
    boundary_distance_report,
    fit_feedback_rules,
    occlusion_map,
    radial_report,
)
from .pipeline import FallbackDetector, detect_reflexes, process_eye, select_and_gate, \
    whiteness_map
from .service import Screener, serve as run_service
from .tsne import tsne_embed


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="TOML configuration file.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.pass_context
def main(ctx, config_path, seed):
    cfg = load_config(config_path)
    if seed is not None:
        cfg = with_seed(cfg, seed)
    ctx.obj = cfg


@main.command("synth")
@click.option("--n", "n_subjects", type=int, required=True, help="Number of subjects (2 eyes each).")
@click.option("--abnormal-frac", type=float, default=0.28, show_default=True)
@click.option("--noise", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=128, show_default=True)
@click.option("--kinds", type=str, default=",".join(synth_mod.KINDS),
              help="Comma-separated abnormality kinds.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def synth_cmd(n_subjects, abnormal_frac, noise, seed, size, kinds, out_dir):
    """Render a synthetic labeled eye dataset with ground truth."""
    config = synth_mod.SynthConfig(
        n_subjects=n_subjects, abnormal_fraction=abnormal_frac, noise_sigma=noise,
        seed=seed, image_size=size, kinds=tuple(k for k in kinds.split(",") if k))
    records, manifest = synth_mod.generate(config)
    path = synth_mod.write_dataset(records, manifest, out_dir)
    counts = manifest.label_counts()
    click.echo(f"wrote {len(records)} eyes ({counts}) to {path}")


@main.command("ingest")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--split", "split_ratios", type=str, default=None,
              help="train,val,test ratios, e.g. 0.5,0.25,0.25")
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.pass_obj
def ingest_cmd(cfg, manifest_path, out_dir, split_ratios, split_seed):
    """Mirror left eyes, localize and crop pupils, gate on reflex usability,
    and write the processed crop dataset."""
    manifest = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    crops_dir = out_dir / "crops"
    detector = FallbackDetector()
    entries, reports = [], []
    for entry in manifest.entries:
        record = EyeRecord(id=entry.id, subject_id=entry.subject_id, side=entry.side,
                           image=manifest.load_image(entry), label=entry.label)
        record = mirror_left_eyes([record])[0]
        processed = process_eye(record.image, detector, cfg.gate, source_id=entry.id)
        report = {"id": entry.id, "verdict": processed.verdict}
        if processed.crop is not None:
            report["pupil_center"] = list(processed.crop.pupil_center)
            report["pupil_radius"] = processed.crop.pupil_radius
        reports.append(report)
        if processed.verdict != "usable":
            continue
        crop_path = crops_dir / f"{entry.id}.png"
        save_png(processed.crop.image, crop_path)
        entries.append(ManifestEntry(
            id=entry.id, subject_id=entry.subject_id,
            path=str(crop_path.relative_to(out_dir)), side=entry.side,
            label=entry.label, split="unassigned",
            meta={"pupil_cx": processed.crop.pupil_center[0],
                  "pupil_cy": processed.crop.pupil_center[1],
                  "pupil_r": processed.crop.pupil_radius,
                  "eye_path": str(Path(manifest.resolve(entry)).resolve()),
                  "mirrored": record.mirrored}))
    crop_manifest = DatasetManifest(tuple(entries), root=out_dir)
    if split_ratios:
        ratios = tuple(float(r) for r in split_ratios.split(","))
        crop_manifest = split_dataset(crop_manifest, ratios, split_seed)
    save_manifest(crop_manifest, out_dir / "manifest.jsonl")
    with open(out_dir / "reports.jsonl", "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep) + "\n")
    usable = len(entries)
    click.echo(f"ingested {len(manifest)} eyes: {usable} usable, "
               f"{len(manifest) - usable} rejected -> {out_dir / 'manifest.jsonl'}")


def _crop_region_mask(image, entry):
    """Reflex-component compactness region for a crop, when geometry is known."""
    meta = entry.meta
    if "pupil_cx" not in meta:
        return None
    crop = PupilCrop(source_id=entry.id, image=image,
                     pupil_center=(meta["pupil_cx"], meta["pupil_cy"]),
                     pupil_radius=meta["pupil_r"])
    report = select_and_gate(detect_reflexes(whiteness_map(crop)), crop)
    if report.selected is None:
        return None
    comp = report.components[report.selected]
    mask = np.zeros((crop.side, crop.side), dtype=bool)
    mask[comp.pixels[:, 0], comp.pixels[:, 1]] = True
    return mask


@main.command("properties")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "csv_path", type=click.Path(dir_okay=False), required=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the per-property class-comparison JSON table.")
def properties_cmd(manifest_path, csv_path, report_path):
    """Emit the property battery as CSV (one row per image, plus label)."""
    manifest = load_manifest(manifest_path)
    rows, vectors = [], []
    for entry in manifest.entries:
        image = manifest.load_image(entry)
        vec = compute_properties(image, _crop_region_mask(image, entry))
        vectors.append((vec, entry.label))
        row = {name: getattr(vec, name) for name in PROPERTY_ORDER}
        row.update(id=entry.id, width=vec.image_size[0], height=vec.image_size[1],
                   label=entry.label)
        rows.append(row)
    fieldnames = ["id", *PROPERTY_ORDER, "width", "height", "label"]
    Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} property rows to {csv_path}")
    if report_path:
        labels = {lab for _, lab in vectors}
        if {"normal", "abnormal"} <= labels:
            report = property_class_report(vectors)
            Path(report_path).write_text(json.dumps(report.to_json(), indent=2))
            click.echo(f"wrote class report to {report_path} "
                       f"(significant: {report.significant_properties()})")
        else:
            click.echo("skipping report: need both classes present", err=True)


def _split_samples(manifest, split):
    subset = manifest.subset(split)
    return [(manifest.load_image(e), e.label) for e in subset.entries], subset


@main.command("train")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "bundle_path", type=click.Path(dir_okay=False), required=True)
@click.option("--provider", "provider_name", default="pixel-pca", show_default=True)
@click.option("--augment", "mix_name", default="none", show_default=True)
@click.pass_obj
def train_cmd(cfg, manifest_path, bundle_path, provider_name, mix_name):
    """Train the classifier head on the manifest's train/validation splits."""
    manifest = load_manifest(manifest_path)
    train_samples, _ = _split_samples(manifest, "train")
    val_samples, _ = _split_samples(manifest, "validation")
    provider = get_provider(provider_name)
    mix = mix_from_config(mix_name, cfg.augment_mixes)
    model, log = train_head(provider, train_samples, val_samples, cfg.train, mix)
    version = save_bundle(bundle_path, model, augment_mix=mix_name)
    click.echo(f"trained {provider_name} head: best epoch {log.best_epoch} "
               f"(val loss {log.best_val_loss:.4f}); bundle {bundle_path} [{version}]")
    test_samples, _ = _split_samples(manifest, "test")
    if test_samples:
        report = evaluate(model, [(resize_to_input(im), lab) for im, lab in test_samples],
                          {provider.name: provider})
        click.echo("test metrics: " + json.dumps(
            {k: round(v, 4) for k, v in report.metric_dict().items()}))


@main.command("eval")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def eval_cmd(bundle_path, manifest_path, split, out_path):
    """Evaluate a bundle on one manifest split."""
    bundle = load_bundle(bundle_path)
    manifest = load_manifest(manifest_path)
    samples, _ = _split_samples(manifest, split)
    providers = {name: get_provider(name) for name in bundle.provider_names}
    report = evaluate(bundle.model, [(resize_to_input(im), lab) for im, lab in samples],
                      providers)
    metrics = {k: round(v, 4) for k, v in report.metric_dict().items()}
    metrics["n"] = len(samples)
    click.echo(json.dumps(metrics, indent=2))
    if out_path:
        Path(out_path).write_text(json.dumps(metrics, indent=2))


@main.command("sweep")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--seeds", "n_seeds", type=int, default=10, show_default=True)
@click.option("--provider", "provider_name", default="pixel-pca", show_default=True)
@click.option("--augment", "mix_name", default="none", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_obj
def sweep_cmd(cfg, manifest_path, n_seeds, provider_name, mix_name, out_path):
    """Repeat training across seeds and summarize metrics as mean +/- std."""
    manifest = load_manifest(manifest_path)
    train_samples, _ = _split_samples(manifest, "train")
    val_samples, _ = _split_samples(manifest, "validation")
    test_samples, _ = _split_samples(manifest, "test")
    provider = get_provider(provider_name)
    mix = mix_from_config(mix_name, cfg.augment_mixes)
    summary = seed_sweep(n_seeds, provider, train_samples, val_samples, test_samples,
                         cfg.train, mix)
    rows = summary.format_rows()
    for name, row in rows.items():
        click.echo(f"{name:12s} {row}")
    if out_path:
        Path(out_path).write_text(json.dumps(
            {"seeds": list(summary.seeds), "metrics": rows}, indent=2))


@main.command("explain")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--split", default="test", show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--max-images", type=int, default=64, show_default=True)
@click.pass_obj
def explain_cmd(cfg, bundle_path, manifest_path, split, out_dir, max_images):
    """Write attention heatmaps, the radial-distribution JSON, t-SNE
    coordinates, and fit the feedback rules into the bundle."""
    bundle = load_bundle(bundle_path)
    manifest = load_manifest(manifest_path)
    subset = manifest.subset(split).entries[:max_images]
    if not subset:
        raise click.ClickException(f"no entries in split {split!r}")
    providers = {name: get_provider(name) for name in bundle.provider_names}
    out_dir = Path(out_dir)
    (out_dir / "heatmaps").mkdir(parents=True, exist_ok=True)

    images = [resize_to_input(manifest.load_image(e)) for e in subset]
    labels = [e.label for e in subset]
    report = evaluate(bundle.model, list(zip(images, labels)), providers)
    correct = (report.y_pred == report.y_true)

    maps = []
    for entry, image in zip(subset, images):
        amap = occlusion_map(bundle.model, providers, image)
        maps.append(amap)
        heat = amap.heatmap / amap.heatmap.max() * 255.0
        save_png_gray(heat, out_dir / "heatmaps" / f"{entry.id}.png")
    radial = radial_report(maps, labels, correct)
    radial_json = {
        "groups": {f"{lab}/{'correct' if c else 'incorrect'}": {
            "n": len(g.r_values), "histogram": g.histogram.tolist(),
            "median": float(np.median(g.r_values))}
            for (lab, c), g in radial.groups.items()},
        "ks": {f"{a}|{b}": {"D": r.statistic, "p": r.p_value}
               for (a, b), r in radial.ks_tests.items()},
    }
    (out_dir / "radial.json").write_text(json.dumps(radial_json, indent=2))

    provider = providers[bundle.members[0].provider_name]
    feats = np.stack([provider.embed(im) for im in images])
    perplexity = min(30.0, max(2.0, len(feats) / 4))
    tsne = tsne_embed(feats, perplexity=perplexity, seed=cfg.train.seed)
    with open(out_dir / "embedding.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "label", "correct"])
        for entry, (x, y), lab, c in zip(subset, tsne.coords, labels, correct):
            writer.writerow([entry.id, f"{x:.6f}", f"{y:.6f}", lab, bool(c)])
    try:
        boundary = boundary_distance_report(tsne.coords, labels, correct)
        click.echo(f"boundary median |distance|: correct {boundary.median_abs_correct:.3f}, "
                   f"incorrect {boundary.median_abs_incorrect:.3f}")
    except RedReflexError as exc:
        click.echo(f"boundary analysis skipped: {exc}", err=True)

    eye_paths = [e.meta.get("eye_path") for e in subset]
    if all(p and Path(p).is_file() for p in eye_paths):
        eye_props = [compute_properties(load_png(p)) for p in eye_paths]
        try:
            rules = fit_feedback_rules(
                report.confidences, eye_props,
                p_threshold=cfg.feedback.p_threshold,
                low_quantile=cfg.feedback.low_quantile,
                high_quantile=cfg.feedback.high_quantile,
                min_samples=cfg.feedback.min_samples)
            version = update_bundle_rules(bundle_path, [r.to_dict() for r in rules])
            click.echo(f"fitted {len(rules)} feedback rules into {bundle_path} [{version}]")
        except RedReflexError as exc:
            click.echo(f"feedback rules skipped: {exc}", err=True)
    else:
        click.echo("feedback rules skipped: full-eye images unavailable", err=True)
    click.echo(f"explain artifacts in {out_dir}")


def save_png_gray(values: np.ndarray, path: Path) -> None:
    from PIL import Image

    arr = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


@main.command("screen")
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), default=None,
              help="Run the pipeline in-process with this bundle.")
@click.option("--url", default=None, help="POST to a running service instead.")
@click.option("--eye", type=click.Choice(["left", "right", "auto"]), default="auto",
              show_default=True)
@click.pass_obj
def screen_cmd(cfg, image_path, bundle_path, url, eye):
    """Screen a single image file, locally or against a running service."""
    data = Path(image_path).read_bytes()
    if url:
        import httpx

        resp = httpx.post(f"{url.rstrip('/')}/screen", params={"eye": eye},
                          content=data, timeout=30.0)
        if resp.status_code != 200:
            raise click.ClickException(f"service returned {resp.status_code}: {resp.text}")
        click.echo(json.dumps(resp.json(), indent=2))
        return
    if not bundle_path:
        raise click.ClickException("provide --bundle for local screening or --url")
    screener = Screener(load_bundle(bundle_path), cfg)
    try:
        result = screener.screen_bytes(data, eye=eye)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(result.to_dict(), indent=2))


@main.command("serve")
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve_cmd(cfg, bundle_path, host, port):
    """Run the screening HTTP service."""
    if bundle_path:
        cfg = replace(cfg, service=replace(cfg.service, bundle_path=bundle_path))
    if not cfg.service.bundle_path:
        raise click.ClickException("no bundle configured ([service].bundle_path or --bundle)")
    run_service(cfg, host=host, port=port)


if __name__ == "__main__":
    main()
