"""Command-line driver for preprocessing, serving, and analysis.

Exit codes: 0 success, 2 validation error, 3 partial failure (some
inputs processed, some not), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from PIL import Image as PILImage

from .analysis import (
    CostModel,
    aggregate_element_scores,
    center_bias_profile,
    element_importance,
    estimate_cost,
    fit_power,
    format_money,
    read_elements,
    write_power_fit_csv,
    write_profile_csv,
)
from .config import ExperimentConfig, MapParams, load_config
from .errors import ClickmapError, EmptyPointSetError, ValidationError
from .imaging import blurred_variant, load_image, render_heatmap, save_image
from .maps import build_map
from .metrics import dataset_report, write_report_csv
from .store import EventLog, FilterPolicy, import_fixations

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


# -- manifest ----------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Everything an analysis run depends on, resolved to real paths.

    Stored next to the outputs, a manifest plus the event log plus a
    seed pins an analysis bit-for-bit.
    """

    config_path: Path
    log_dir: Path
    stimuli_dir: Path
    fixations: Path | None
    elements: dict[str, Path]
    map_sigma_px: float
    n_pred: int
    n_splits: int
    policy: FilterPolicy

    _FIELDS = {
        "config",
        "log_dir",
        "stimuli_dir",
        "fixations",
        "elements",
        "map_sigma_px",
        "n_pred",
        "n_splits",
        "policy",
    }

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError([f"{path}: not valid JSON ({exc})"]) from exc
        if not isinstance(raw, dict):
            raise ValidationError([f"{path}: manifest must be a JSON object"])
        problems = [f"unknown manifest field {k!r}" for k in raw if k not in cls._FIELDS]
        for required in ("config", "log_dir", "stimuli_dir", "map_sigma_px"):
            if required not in raw:
                problems.append(f"manifest missing required field {required!r}")
        if problems:
            raise ValidationError(problems)

        base = path.parent

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        policy_raw = raw.get("policy", {})
        if not isinstance(policy_raw, dict):
            raise ValidationError(["manifest field 'policy' must be an object"])
        unknown = set(policy_raw) - {"min_clicks_per_image", "participant_outlier_sd"}
        if unknown:
            raise ValidationError(
                [f"unknown policy field {k!r}" for k in sorted(unknown)]
            )
        policy = FilterPolicy(
            min_clicks_per_image=policy_raw.get("min_clicks_per_image", 2),
            participant_outlier_sd=policy_raw.get("participant_outlier_sd", 3.0),
        )

        elements_raw = raw.get("elements") or {}
        if not isinstance(elements_raw, dict):
            raise ValidationError(["manifest field 'elements' must map image id to path"])

        manifest = cls(
            config_path=resolve(raw["config"]),
            log_dir=resolve(raw["log_dir"]),
            stimuli_dir=resolve(raw["stimuli_dir"]),
            fixations=resolve(raw["fixations"]) if raw.get("fixations") else None,
            elements={k: resolve(v) for k, v in sorted(elements_raw.items())},
            map_sigma_px=float(raw["map_sigma_px"]),
            n_pred=int(raw.get("n_pred", 10)),
            n_splits=int(raw.get("n_splits", 10)),
            policy=policy,
        )
        manifest.check_paths()
        return manifest

    def check_paths(self) -> None:
        problems = []
        if not self.config_path.is_file():
            problems.append(f"config not found: {self.config_path}")
        if not self.log_dir.is_dir():
            problems.append(f"log directory not found: {self.log_dir}")
        if not self.stimuli_dir.is_dir():
            problems.append(f"stimuli directory not found: {self.stimuli_dir}")
        if self.fixations is not None and not self.fixations.is_file():
            problems.append(f"fixation file not found: {self.fixations}")
        for image_id, p in self.elements.items():
            if not p.is_file():
                problems.append(f"element file for {image_id!r} not found: {p}")
        if self.map_sigma_px <= 0:
            problems.append(f"map_sigma_px must be > 0, got {self.map_sigma_px}")
        if self.n_pred < 1:
            problems.append(f"n_pred must be >= 1, got {self.n_pred}")
        if self.n_splits < 1:
            problems.append(f"n_splits must be >= 1, got {self.n_splits}")
        if problems:
            raise ValidationError(problems)


def _apply_overrides(manifest: RunManifest, args) -> RunManifest:
    from dataclasses import replace

    policy = manifest.policy
    if args.min_clicks_per_image is not None:
        policy = FilterPolicy(
            min_clicks_per_image=args.min_clicks_per_image,
            participant_outlier_sd=policy.participant_outlier_sd,
        )
    if args.participant_outlier_sd is not None:
        sd = args.participant_outlier_sd
        value = None if sd.lower() == "none" else float(sd)
        policy = FilterPolicy(
            min_clicks_per_image=policy.min_clicks_per_image,
            participant_outlier_sd=value,
        )
    updates = {"policy": policy}
    if args.config is not None:
        updates["config_path"] = Path(args.config)
    if args.n_pred is not None:
        updates["n_pred"] = args.n_pred
    if args.n_splits is not None:
        updates["n_splits"] = args.n_splits
    if args.map_sigma_px is not None:
        updates["map_sigma_px"] = args.map_sigma_px
    manifest = replace(manifest, **updates)
    manifest.check_paths()
    return manifest


def _stamp(seed: int, policy: FilterPolicy) -> list[str]:
    return [
        f"seed={seed}",
        f"min_clicks_per_image={policy.min_clicks_per_image}",
        f"participant_outlier_sd={policy.participant_outlier_sd}",
    ]


def _image_sizes(config: ExperimentConfig, stimuli_dir: Path):
    sizes = {}
    paths = {}
    problems = []
    for image_id in config.image_ids:
        for suffix in IMAGE_SUFFIXES:
            candidate = stimuli_dir / f"{image_id}{suffix}"
            if candidate.is_file():
                with PILImage.open(candidate) as im:
                    sizes[image_id] = (im.width, im.height)
                paths[image_id] = candidate
                break
        else:
            problems.append(f"no stimulus file for {image_id!r} in {stimuli_dir}")
    if problems:
        raise ValidationError(problems)
    return sizes, paths


# -- subcommands -------------------------------------------------------


def cmd_preprocess(args) -> int:
    stimuli = Path(args.stimuli)
    if not stimuli.is_dir():
        raise ValidationError([f"stimuli directory not found: {stimuli}"])
    if args.sigma < 0:
        raise ValidationError([f"sigma must be >= 0, got {args.sigma}"])
    out = Path(args.out) if args.out else stimuli / "blurred_cache"
    out.mkdir(parents=True, exist_ok=True)
    sources = sorted(
        p for p in stimuli.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not sources:
        raise ValidationError([f"no images found in {stimuli}"])
    already = {p.name for p in out.iterdir()}

    def blur_one(src):
        return blurred_variant(src, args.sigma, out)

    failures = []
    results = {}
    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        futures = {src: pool.submit(blur_one, src) for src in sources}
        for src, future in futures.items():
            try:
                results[src] = future.result()
            except Exception as exc:  # unreadable or undecodable image
                failures.append((src, exc))

    index_path = out / "index.csv"
    with open(index_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# sigma={args.sigma}\n")
        fh.write("source,image_id,width,height,cache_file,status\n")
        for src in sources:
            if src not in results:
                continue
            cached = results[src]
            with PILImage.open(src) as im:
                width, height = im.width, im.height
            status = "cached" if cached.name in already else "computed"
            fh.write(
                f"{src.name},{src.stem},{width},{height},{cached.name},{status}\n"
            )
    for src, exc in failures:
        print(f"error: could not process {src.name}: {exc}", file=sys.stderr)
    print(f"processed {len(results)}/{len(sources)} images into {out}")
    return 3 if failures else 0


def cmd_serve(args) -> int:
    from . import service

    root = Path(args.root)
    if not root.is_dir():
        raise ValidationError([f"experiments directory not found: {root}"])
    service.run(root, host=args.host, port=args.port, seed=args.seed)
    return 0


def cmd_analyze(args) -> int:
    manifest = _apply_overrides(RunManifest.load(args.manifest), args)
    if args.out is None:
        raise ValidationError(["analyze requires --out"])
    out = Path(args.out)
    figures = out / "figures"
    heatmap_dir = figures / "heatmaps"
    for d in (out, figures, heatmap_dir):
        d.mkdir(parents=True, exist_ok=True)

    config = load_config(manifest.config_path)
    sizes, stimulus_paths = _image_sizes(config, manifest.stimuli_dir)
    log = EventLog(manifest.log_dir, config=config, image_sizes=sizes)
    kind = "click" if config.mouse_modality == "click" else "move_sample"
    stamp = _stamp(args.seed, manifest.policy)
    meta = {"clickmap-run": " ".join(stamp)}

    filtered = {}
    skipped = []
    for image_id in sorted(config.image_ids):
        try:
            filtered[image_id] = log.to_pointset(image_id, manifest.policy, kind=kind)
        except EmptyPointSetError:
            skipped.append(image_id)
    if not filtered:
        raise ValidationError(["no image has any usable events after filtering"])

    params = MapParams(map_sigma_px=manifest.map_sigma_px)
    jobs = max(args.jobs, 1)
    ids = sorted(filtered)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        built = pool.map(lambda i: build_map(filtered[i].points, params), ids)
        maps = dict(zip(ids, built))

    with open(out / "filtering.csv", "w", encoding="utf-8", newline="\n") as fh:
        for line in stamp:
            fh.write(f"# {line}\n")
        fh.write("image_id,n_total,n_kept,removed_fraction,dropped_participants\n")
        for image_id in ids:
            fr = filtered[image_id]
            dropped = ";".join(fr.dropped_participants)
            fh.write(
                f"{image_id},{fr.n_total},{fr.n_kept},"
                f"{fr.removed_fraction!r},{dropped}\n"
            )

    from . import plots

    for image_id in ids:
        plots.save_heatmap_figure(
            load_image(stimulus_paths[image_id]),
            maps[image_id],
            heatmap_dir / f"{image_id}.png",
            title=image_id,
            metadata=meta,
        )

    notes = []
    if manifest.fixations is not None:
        imported = import_fixations(manifest.fixations, sizes)
        pairs = {
            image_id: (filtered[image_id].points, imported.per_image[image_id])
            for image_id in ids
            if image_id in imported.per_image
        }
        if not pairs:
            raise ValidationError(["fixation file covers none of the logged images"])
        available = min(len(clicks.participants) for clicks, _ in pairs.values())
        n_pred = min(manifest.n_pred, available)
        if n_pred < manifest.n_pred:
            print(
                f"warning: n_pred capped at {n_pred} "
                f"(fewest participants on any image)",
                file=sys.stderr,
            )
        report = dataset_report(
            pairs, params, n_pred=n_pred, n_splits=manifest.n_splits,
            base_seed=args.seed,
        )
        write_report_csv(report, out / "report.csv", comments=stamp)
        plots.save_score_bars(report, figures / "scores.png", metadata=meta)

        if n_pred >= 4:
            samples = []
            for n in range(1, n_pred + 1):
                sub = dataset_report(
                    pairs, params, n_pred=n, n_splits=manifest.n_splits,
                    base_seed=args.seed,
                )
                samples.append((n, sub.aggregate.nss))
            fit = fit_power(samples, seed=args.seed)
            write_power_fit_csv(fit, out / "power_fit.csv", comments=stamp)
            plots.save_convergence_figure(
                samples, fit, figures / "convergence.png", metadata=meta
            )
        else:
            notes.append(f"power fit skipped: needs >= 4 participant counts, have {n_pred}")
    else:
        with open(out / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
            for line in stamp:
                fh.write(f"# {line}\n")
            fh.write("# metrics_unavailable=no fixation data\n")
            fh.write("image_id,n_pred,cc,nss,ioc_nss,normalized_nss\n")
        notes.append("metrics unavailable: no fixation data")

    if manifest.elements:
        rows = []
        label_scores = []
        for image_id, elements_path in manifest.elements.items():
            if image_id not in maps:
                notes.append(f"elements for {image_id!r} skipped: no usable events")
                continue
            annotations = read_elements(elements_path)
            labels = {el.element_id: el.label for el in annotations}
            for element_id, score in element_importance(maps[image_id], annotations):
                rows.append((image_id, element_id, labels[element_id], score))
                label_scores.append((labels[element_id], score))
        with open(out / "elements.csv", "w", encoding="utf-8", newline="\n") as fh:
            for line in stamp:
                fh.write(f"# {line}\n")
            fh.write("image_id,element_id,label,score\n")
            for image_id, element_id, label, score in rows:
                fh.write(f"{image_id},{element_id},{label},{score!r}\n")
            if label_scores:
                for label, mean in aggregate_element_scores(label_scores):
                    fh.write(f"ALL,,{label},{mean!r}\n")

    shapes = {m.values.shape for m in maps.values()}
    if len(shapes) == 1:
        profile = center_bias_profile([maps[i] for i in ids])
        write_profile_csv(profile, out / "center_bias.csv", comments=stamp)
        plots.save_center_bias_figure(profile, figures / "center_bias.png", metadata=meta)
    else:
        notes.append("center-bias profile skipped: images differ in size")

    echo = {
        "seed": args.seed,
        "config": str(manifest.config_path),
        "log_dir": str(manifest.log_dir),
        "stimuli_dir": str(manifest.stimuli_dir),
        "fixations": None if manifest.fixations is None else str(manifest.fixations),
        "elements": {k: str(v) for k, v in manifest.elements.items()},
        "map_sigma_px": manifest.map_sigma_px,
        "n_pred": manifest.n_pred,
        "n_splits": manifest.n_splits,
        "policy": {
            "min_clicks_per_image": manifest.policy.min_clicks_per_image,
            "participant_outlier_sd": manifest.policy.participant_outlier_sd,
        },
        "images_analyzed": ids,
        "images_skipped": skipped,
    }
    (out / "run_manifest.json").write_text(
        json.dumps(echo, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    for note in notes:
        print(f"note: {note}")
    for image_id in skipped:
        print(f"warning: {image_id} skipped: no usable events", file=sys.stderr)
    print(f"analyzed {len(ids)} image{'s' if len(ids) != 1 else ''} into {out}")
    return 3 if skipped else 0


def cmd_export_heatmaps(args) -> int:
    manifest = _apply_overrides(RunManifest.load(args.manifest), args)
    if args.out is None:
        raise ValidationError(["export-heatmaps requires --out"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    config = load_config(manifest.config_path)
    sizes, stimulus_paths = _image_sizes(config, manifest.stimuli_dir)
    log = EventLog(manifest.log_dir, config=config, image_sizes=sizes)
    kind = "click" if config.mouse_modality == "click" else "move_sample"
    params = MapParams(map_sigma_px=manifest.map_sigma_px)
    text = {"clickmap-run": " ".join(_stamp(args.seed, manifest.policy))}

    skipped = []
    written = 0
    for image_id in sorted(config.image_ids):
        try:
            fr = log.to_pointset(image_id, manifest.policy, kind=kind)
        except EmptyPointSetError:
            skipped.append(image_id)
            continue
        amap = build_map(fr.points, params)
        overlay = render_heatmap(
            amap.values, load_image(stimulus_paths[image_id]), alpha=args.alpha
        )
        save_image(overlay, out / f"{image_id}_heatmap.png", text=text)
        written += 1
    for image_id in skipped:
        print(f"warning: {image_id} skipped: no usable events", file=sys.stderr)
    print(f"wrote {written} heatmap{'s' if written != 1 else ''} to {out}")
    if written == 0:
        raise ValidationError(["no image has any usable events after filtering"])
    return 3 if skipped else 0


def cmd_cost(args) -> int:
    lo, hi = args.participants
    model = CostModel(
        time_per_image_s=args.time_per_image_s,
        images_per_task=args.images_per_task,
        participants=(lo, hi),
        rate_per_min=args.rate_per_min,
    )
    estimate = estimate_cost(model, task_price=args.task_price)
    header = (
        "time_per_image_s",
        "images_per_task",
        "task_price",
        "participants",
        "per_image",
    )
    row = (
        f"{args.time_per_image_s:g}",
        str(args.images_per_task),
        format_money(estimate.task_price),
        f"{lo}-{hi}",
        f"{format_money(estimate.per_image_lo)}-{format_money(estimate.per_image_hi)}",
    )
    widths = [max(len(h), len(v)) for h, v in zip(header, row)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    print("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return 0


# -- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed recorded in outputs")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers")
    common.add_argument("--config", help="override the experiment config path")

    manifest_overrides = argparse.ArgumentParser(add_help=False)
    manifest_overrides.add_argument("--manifest", required=True, help="run manifest JSON")
    manifest_overrides.add_argument("--n-pred", type=int, default=None)
    manifest_overrides.add_argument("--n-splits", type=int, default=None)
    manifest_overrides.add_argument("--map-sigma-px", type=float, default=None)
    manifest_overrides.add_argument("--min-clicks-per-image", type=int, default=None)
    manifest_overrides.add_argument(
        "--participant-outlier-sd",
        default=None,
        help="standard-deviation cutoff, or 'none' to disable",
    )

    parser = argparse.ArgumentParser(
        prog="clickmap",
        description="Mouse-contingent attention experiments and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "preprocess", parents=[common], help="blur stimuli into a cache"
    )
    p.add_argument("stimuli", help="directory of stimulus images")
    p.add_argument("--sigma", type=float, required=True, help="blur sigma in pixels")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("root", help="directory of experiment directories")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser(
        "analyze",
        parents=[common, manifest_overrides],
        help="run the full log-to-report pipeline",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser(
        "export-heatmaps",
        parents=[common, manifest_overrides],
        help="write attention overlays as PNG files",
    )
    p.add_argument("--alpha", type=float, default=0.6, help="overlay opacity at the peak")
    p.set_defaults(func=cmd_export_heatmaps)

    p = sub.add_parser("cost", parents=[common], help="price a task configuration")
    p.add_argument("--time-per-image-s", type=float, required=True)
    p.add_argument("--images-per-task", type=int, required=True)
    p.add_argument(
        "--participants", type=int, nargs=2, default=[10, 15], metavar=("LO", "HI")
    )
    p.add_argument(
        "--rate-per-min", type=float, default=0.1, help="pay rate in dollars per minute"
    )
    p.add_argument(
        "--task-price",
        default=None,
        help="advertised price per task, overriding the rate-derived one",
    )
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return 2
    except ClickmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
