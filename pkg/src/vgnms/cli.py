"""Single command-line entry point: synth, nms, eval, analyze, bench, validate.

Every subcommand is a pure function of its inputs, flags and seeds:
re-running reproduces outputs byte for byte, except for wall-clock timing
values inside bench reports. Timestamps live only in the run manifest
written beside each output. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import dataclasses
import functools
import json
from datetime import datetime, timezone
from pathlib import Path

import click

from . import __version__
from .analysis import (
    GROUPS,
    empirical_gt_nms_recall,
    histogram_csv,
    histogram_svg,
    max_iou_histogram,
    recall_bound_vg,
)
from .bench import run_bench
from .corpus_io import read_native, write_native
from .data import Detection, DetectionSet, JointDetection, JointDetectionSet, split_view_lists
from .errors import ConfigError, ToolkitError
from .evaluation import EvalConfig, evaluate
from .suppression import NmsConfig, SoftNmsConfig, soft_nms, standard_nms, vg_nms, vg_soft_nms
from .synthetic import generate_corpus, load_generator_spec, simulate_detector


def _tool_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            raise click.UsageError(str(exc)) from exc
        except ToolkitError as exc:
            raise click.ClickException(str(exc)) from exc
    return wrapper


def _write_manifest(target: Path, subcommand: str, config: dict,
                    inputs: list[str], outputs: list[str],
                    seeds: dict | None = None) -> Path:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seeds": seeds or {},
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if target.is_dir():
        path = target / "manifest.json"
    else:
        path = target.with_name(target.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _echo_load_report(report) -> None:
    for line in report.summary_lines():
        click.echo(line, err=True)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="vgnms")
def main() -> None:
    """Suppression, evaluation and occlusion analysis for joint
    pixel-based/amodal object detections."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Declarative generator config (JSON).")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--images", "n_images", type=int, default=None,
              help="Override the number of images.")
@click.option("--threads", type=int, default=1, show_default=True)
@_tool_errors
def synth(config_path: Path, out_dir: Path, seed: int | None,
          n_images: int | None, threads: int) -> None:
    """Generate a synthetic occluded ground-truth corpus; when the config
    has a "detector" section, also emit simulated joint detections."""
    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path}: config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if n_images is not None:
        raw["n_images"] = n_images
    spec = load_generator_spec(raw)

    out_dir.mkdir(parents=True, exist_ok=True)
    gt = generate_corpus(spec.scene, spec.n_images, threads=threads)
    resolved = {
        "scene": dataclasses.asdict(spec.scene),
        "n_images": spec.n_images,
        "detector": dataclasses.asdict(spec.detector) if spec.detector else None,
        "detector_seed": spec.detector_seed,
    }
    provenance = {"generator": resolved}
    gt_path = out_dir / "gt.jsonl"
    write_native(gt, gt_path, header_extra=provenance)
    outputs = [str(gt_path)]
    seeds = {"scene": spec.scene.seed}
    n_dets = None
    if spec.detector is not None:
        dets = simulate_detector(gt, spec.detector, spec.detector_seed, threads=threads)
        det_path = out_dir / "detections.jsonl"
        write_native(dets, det_path, header_extra=provenance)
        outputs.append(str(det_path))
        seeds["detector"] = spec.detector_seed
        n_dets = len(dets)
    _write_manifest(out_dir, "synth", {"given": raw, "resolved": resolved},
                    [str(config_path)], outputs, seeds)
    click.echo(f"wrote {len(gt)} objects over {spec.n_images} images to {gt_path}")
    if n_dets is not None:
        click.echo(f"wrote {n_dets} joint detections to {out_dir / 'detections.jsonl'}")


def _suppress_set(dataset, variant: str, nms_cfg: NmsConfig,
                  soft_cfg: SoftNmsConfig, box_kind: str):
    """Apply one variant per image; returns (output set, kept, total)."""
    joint = isinstance(dataset, JointDetectionSet)
    total = len(dataset)
    if variant in ("vg", "vg-soft") and not joint:
        raise ConfigError(
            f"variant {variant!r} requires joint detections (records carrying both "
            "box_pix and box_amodal); this input has a single box kind")
    kept_items: list = []
    for image_id, dets in dataset.by_image().items():
        if not dets:
            continue
        if variant == "vg":
            result = vg_nms(dets, nms_cfg)
            kept_items.extend(dets[i] for i in result.kept_indices)
        elif variant == "vg-soft":
            result = vg_soft_nms(dets, soft_cfg)
            kept_items.extend(
                JointDetection(dets[i].box_pix, dets[i].box_amodal, dets[i].label,
                               score, dets[i].image_id)
                for i, score in result.rescored)
        else:
            if joint:
                pix, amodal = split_view_lists(dets)
                flat = pix if box_kind == "pixel" else amodal
            else:
                flat = dets
            if variant == "standard":
                result = standard_nms(flat, nms_cfg)
                kept_items.extend(flat[i] for i in result.kept_indices)
            else:
                result = soft_nms(flat, soft_cfg)
                kept_items.extend(
                    Detection(flat[i].box, flat[i].label, score, flat[i].image_id)
                    for i, score in (result.rescored or ()))
    if variant in ("vg", "vg-soft"):
        out = JointDetectionSet(dataset.class_table, list(dataset.images), kept_items)
    else:
        out_kind = (box_kind if joint else dataset.box_kind)
        out = DetectionSet(dataset.class_table, list(dataset.images), kept_items,
                           box_kind=out_kind)
    return out, len(kept_items), total


@main.command()
@click.option("--detections", "det_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--variant", required=True,
              type=click.Choice(["standard", "soft", "vg", "vg-soft"]))
@click.option("--iou", "iou_threshold", type=float, default=0.45, show_default=True)
@click.option("--mode", type=click.Choice(["linear", "gaussian"]), default="gaussian",
              show_default=True, help="Soft decay mode.")
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--score-floor", type=float, default=0.001, show_default=True)
@click.option("--class-agnostic", is_flag=True,
              help="Let detections of different classes suppress each other.")
@click.option("--box-kind", type=click.Choice(["pixel", "amodal"]), default="amodal",
              show_default=True,
              help="View used by non-vg variants on joint inputs.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, path_type=Path))
@_tool_errors
def nms(det_path: Path, variant: str, iou_threshold: float, mode: str, sigma: float,
        score_floor: float, class_agnostic: bool, box_kind: str, out_path: Path) -> None:
    """Suppress a detection corpus with one of the four variants."""
    nms_cfg = NmsConfig(iou_threshold=iou_threshold, class_aware=not class_agnostic)
    soft_cfg = SoftNmsConfig(mode=mode, sigma=sigma, iou_threshold=iou_threshold,
                             score_floor=score_floor, class_aware=not class_agnostic)
    dataset, report = read_native(det_path, kind="detections")
    _echo_load_report(report)
    out_set, kept, total = _suppress_set(dataset, variant, nms_cfg, soft_cfg, box_kind)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_native(out_set, out_path)
    config = {"variant": variant, "iou_threshold": iou_threshold, "mode": mode,
              "sigma": sigma, "score_floor": score_floor,
              "class_aware": not class_agnostic, "box_kind": box_kind}
    _write_manifest(out_path, "nms", config, [str(det_path)], [str(out_path)])
    click.echo(f"kept {kept} of {total} detections ({total - kept} suppressed) -> {out_path}")


@main.command(name="eval")
@click.option("--gt", "gt_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--detections", "det_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--box-kind", type=click.Choice(["pixel", "amodal"]), default="amodal",
              show_default=True)
@click.option("--tp-iou", type=float, default=0.5, show_default=True)
@click.option("--min-side", type=float, default=20.0, show_default=True)
@click.option("--filter-detections", type=click.Choice(["on", "off"]), default="on",
              show_default=True, help="Apply the size filter to detections too.")
@click.option("--ap-mode", type=click.Choice(["all_points", "eleven_point"]),
              default="all_points", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@_tool_errors
def eval_cmd(gt_path: Path, det_path: Path, box_kind: str, tp_iou: float,
             min_side: float, filter_detections: str, ap_mode: str,
             threads: int, out_dir: Path) -> None:
    """Evaluate detections against ground truth (per-class AP, mAP, counts)."""
    gt, gt_report = read_native(gt_path, kind="gt")
    _echo_load_report(gt_report)
    dets, det_report = read_native(det_path, kind="detections")
    _echo_load_report(det_report)
    cfg = EvalConfig(tp_iou=tp_iou, min_box_side=min_side, box_kind=box_kind,
                     ap_integration=ap_mode, filter_detections=filter_detections == "on")
    report = evaluate(gt, dets, cfg, threads=threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    config = {"tp_iou": tp_iou, "min_box_side": min_side, "box_kind": box_kind,
              "ap_integration": ap_mode, "filter_detections": filter_detections == "on"}
    _write_manifest(out_dir, "eval", config, [str(gt_path), str(det_path)],
                    [str(out_dir / "report.json"), str(out_dir / "report.txt")])
    click.echo(report.to_text(), nl=False)


@main.command()
@click.option("--gt", "gt_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--group", type=click.Choice(["vehicles", "pedestrians", "both"]),
              default="both", show_default=True)
@click.option("--threshold", "t_iou", type=float, default=0.45, show_default=True)
@click.option("--bin-width", type=float, default=0.01, show_default=True)
@click.option("--min-side", type=float, default=20.0, show_default=True)
@click.option("--neighbor-scope", type=click.Choice(["group", "any"]), default="group",
              show_default=True,
              help="Whether max-IoU neighbors come from the same group only.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@_tool_errors
def analyze(gt_path: Path, group: str, t_iou: float, bin_width: float, min_side: float,
            neighbor_scope: str, threads: int, out_dir: Path) -> None:
    """Max-IoU overlap histograms and the recall ceilings of hard
    suppression versus its visibility-guided variant."""
    gt, report = read_native(gt_path, kind="gt")
    _echo_load_report(report)
    groups = ["vehicles", "pedestrians"] if group == "both" else [group]
    out_dir.mkdir(parents=True, exist_ok=True)
    n_images = max(1, len(gt.images))
    results = {}
    outputs: list[str] = []
    lines: list[str] = []
    for name in groups:
        labels = GROUPS[name]
        if not any(o.label in labels for o in gt.objects):
            lines.append(f"{name}: no objects, skipped")
            continue
        h_amodal = max_iou_histogram(gt, "amodal", name, min_box_side=min_side,
                                     bin_width=bin_width, neighbor_scope=neighbor_scope,
                                     threads=threads)
        h_pix = max_iou_histogram(gt, "pixel", name, min_box_side=min_side,
                                  bin_width=bin_width, neighbor_scope=neighbor_scope,
                                  threads=threads)
        bounds = recall_bound_vg(h_amodal, h_pix, t_iou)
        emp_amodal = empirical_gt_nms_recall(gt, "amodal", t_iou, name, min_box_side=min_side)
        emp_pix = empirical_gt_nms_recall(gt, "pixel", t_iou, name, min_box_side=min_side)
        for hist, kind in ((h_amodal, "amodal"), (h_pix, "pixel")):
            csv_path = out_dir / f"hist_{name}_{kind}.csv"
            csv_path.write_text(histogram_csv(hist), encoding="utf-8")
            outputs.append(str(csv_path))
        svg_path = out_dir / f"hist_{name}.svg"
        svg_path.write_text(histogram_svg(h_amodal, h_pix, t_iou, title=name),
                            encoding="utf-8")
        outputs.append(str(svg_path))
        results[name] = {
            "r_max": bounds.r_max,
            "r_vg": bounds.r_vg,
            "delta_percent": bounds.delta_percent,
            "kappa_tail": bounds.kappa_tail,
            "objects_per_image": h_amodal.object_count / n_images,
            "object_count": h_amodal.object_count,
            "empirical_gt_nms_recall_amodal": emp_amodal,
            "empirical_gt_nms_recall_pixel": emp_pix,
        }
        lines.append(
            f"{name}: r_max={bounds.r_max:.4f} r_vg={bounds.r_vg:.4f} "
            f"delta={bounds.delta_percent:+.2f}% "
            f"objects/image={results[name]['objects_per_image']:.2f} "
            f"empirical(amodal)={emp_amodal:.4f} empirical(pixel)={emp_pix:.4f}")
    bounds_payload = {
        "t_iou": t_iou,
        "bin_width": bin_width,
        "min_box_side": min_side,
        "neighbor_scope": neighbor_scope,
        "groups": results,
    }
    bounds_json = out_dir / "bounds.json"
    bounds_json.write_text(json.dumps(bounds_payload, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")
    bounds_txt = out_dir / "bounds.txt"
    bounds_txt.write_text("\n".join(lines) + "\n", encoding="utf-8")
    outputs.extend([str(bounds_json), str(bounds_txt)])
    _write_manifest(out_dir, "analyze",
                    {"group": group, "t_iou": t_iou, "bin_width": bin_width,
                     "min_side": min_side, "neighbor_scope": neighbor_scope},
                    [str(gt_path)], outputs)
    for line in lines:
        click.echo(line)


@main.command()
@click.option("--workload", "workload_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Native detections file (joint for the vg variants).")
@click.option("--variants", default="auto", show_default=True,
              help="Comma list of standard,soft,vg,vg-soft; auto picks all "
                   "variants the workload supports.")
@click.option("--reps", type=int, default=30, show_default=True)
@click.option("--warmup", type=int, default=5, show_default=True)
@click.option("--iou", "iou_threshold", type=float, default=0.45, show_default=True)
@click.option("--mode", type=click.Choice(["linear", "gaussian"]), default="gaussian",
              show_default=True)
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--score-floor", type=float, default=0.001, show_default=True)
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@_tool_errors
def bench(workload_path: Path, variants: str, reps: int, warmup: int,
          iou_threshold: float, mode: str, sigma: float, score_floor: float,
          out_dir: Path) -> None:
    """Time the suppression variants on one workload and report medians."""
    workload, report = read_native(workload_path, kind="detections")
    _echo_load_report(report)
    if variants == "auto":
        chosen = ("standard", "soft", "vg", "vg-soft") \
            if isinstance(workload, JointDetectionSet) else ("standard", "soft")
    else:
        chosen = tuple(v.strip() for v in variants.split(",") if v.strip())
    nms_cfg = NmsConfig(iou_threshold=iou_threshold)
    soft_cfg = SoftNmsConfig(mode=mode, sigma=sigma, iou_threshold=iou_threshold,
                             score_floor=score_floor)
    result = run_bench(workload, chosen, repetitions=reps, warmup=warmup,
                       nms_cfg=nms_cfg, soft_cfg=soft_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench.json").write_text(result.to_json() + "\n", encoding="utf-8")
    (out_dir / "bench.txt").write_text(result.to_text(), encoding="utf-8")
    _write_manifest(out_dir, "bench",
                    {"variants": list(chosen), "reps": reps, "warmup": warmup,
                     "iou_threshold": iou_threshold, "mode": mode, "sigma": sigma,
                     "score_floor": score_floor},
                    [str(workload_path)],
                    [str(out_dir / "bench.json"), str(out_dir / "bench.txt")])
    click.echo(result.to_text(), nl=False)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kind", type=click.Choice(["auto", "gt", "detections"]), default="auto",
              show_default=True)
@_tool_errors
def validate(input_path: Path, kind: str) -> None:
    """Check a native-schema file against every invariant; exits 1 when
    error-severity violations or skipped records exist."""
    dataset, report = read_native(input_path, kind=kind)
    for line in report.summary_lines():
        click.echo(line)
    n_errors = sum(1 for v in report.violations if v.severity == "error")
    n_warnings = sum(1 for v in report.violations if v.severity == "warning")
    kind_name = type(dataset).__name__
    click.echo(f"{kind_name}: {len(dataset)} records, {n_errors} errors, "
               f"{n_warnings} warnings, {report.skipped_total()} skipped")
    if n_errors or report.skipped_total():
        raise click.exceptions.Exit(1)


if __name__ == "__main__":
    main()
