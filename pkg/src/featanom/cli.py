"""Command-line entry point wiring the library into reproducible workflows.

Subcommands:

* ``import``      -- split per-category feature archives into labeled
                     train/test archives following the MVTec directory
                     convention (labels from folder names, "good" = normal).
* ``preprocess``  -- optional center crop, then bilinear resize.
* ``augment``     -- write policy-driven augmented copies of a directory of
                     images under deterministic staging names.
* ``fit``         -- fit one scorer on a training archive, save the model.
* ``score``       -- score an archive with a saved model; per-patch models
                     also emit heatmaps.
* ``bench``       -- run the subsampling robustness protocol and emit
                     CSV / JSON / SVG reports.

Every command is deterministic given its inputs and seeds; the effective
configuration is echoed into ``run.json`` in the output directory. Exit
codes: 0 success, 1 validation error (bad inputs/config), 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__, augment as aug, covariance as cov, evaluation as ev, scorers, store
from .errors import FeatanomError, FormatError, MalformedTree
from .pipeline import DEFAULT_LEVELS, global_average_pool

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation errors
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _write_run_manifest(out_dir: Path, command: str, args: dict, extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "package_version": __version__,
        "config": {k: v for k, v in args.items() if not callable(v)},
    }
    if extra:
        payload.update(extra)
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _iter_image_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise MalformedTree(f"{directory} is not a directory")
    files = sorted(p for p in directory.rglob("*") if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp"))
    if not files:
        raise MalformedTree(f"no images under {directory}")
    return files


# -- import ------------------------------------------------------------------


def cmd_import(args) -> int:
    root = Path(args.mvtec_root)
    categories = args.category or store.list_mvtec_categories(root)
    features_root = Path(args.features_root)
    out_root = Path(args.out)

    for category in categories:
        splits = store.scan_mvtec_category(root, category)
        archive_dir = features_root / category
        features = store.load_dataset(archive_dir)
        for split, samples in splits.items():
            if not samples:
                continue
            missing = [s.image_id for s in samples if s.image_id not in features.features]
            if missing:
                raise FormatError(
                    f"features archive {archive_dir} lacks {len(missing)} ids for "
                    f"{category}/{split}, e.g. {missing[:3]}"
                )
            ds = store.EmbeddingDataset(
                samples=samples,
                features={s.image_id: features.features[s.image_id] for s in samples},
                manifest={**features.manifest, "category": category, "split": split},
            )
            store.save_dataset(ds, out_root / category / split)
            print(f"{category}/{split}: {len(samples)} samples")
    _write_run_manifest(out_root, "import", vars(args))
    return EXIT_OK


# -- preprocess ----------------------------------------------------------------


def cmd_preprocess(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_dir = Path(args.input)
    for path in _iter_image_files(in_dir):
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            if args.crop:
                w, h = rgb.size
                if args.crop > w or args.crop > h:
                    raise FormatError(f"crop {args.crop} larger than image {path.name} ({w}x{h})")
                left = (w - args.crop) // 2
                top = (h - args.crop) // 2
                rgb = rgb.crop((left, top, left + args.crop, top + args.crop))
            rgb = rgb.resize((args.resize, args.resize), resample=Image.BILINEAR)
            target = out_dir / path.relative_to(in_dir)
            target.parent.mkdir(parents=True, exist_ok=True)
            rgb.save(target.with_suffix(".png"))
    _write_run_manifest(out_dir, "preprocess", vars(args))
    return EXIT_OK


# -- augment -------------------------------------------------------------------


def cmd_augment(args) -> int:
    policy = aug.load_policy(args.category, args.policy_config)
    plan = aug.AugmentationPlan(factor=args.factor, keep_originals=not args.discard_originals, seed=args.seed)
    in_dir = Path(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    files = _iter_image_files(in_dir)
    images = (_load_image(p) for p in files)
    count = 0
    for index, rep, image in aug.iter_augmented(images, policy, plan):
        image_id = store.image_id_for(files[index], in_dir)
        name = aug.staged_name(image_id, rep) + ".png"
        target = out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image, mode="RGB").save(target)
        count += 1
    print(f"wrote {count} images to {out_dir}")
    _write_run_manifest(
        out_dir,
        "augment",
        vars(args),
        extra={
            "transform_order": list(aug.TRANSFORM_ORDER),
            "flip_probability": 0.5,
            "rng": "per (seed, image index, replicate index) stream",
        },
    )
    return EXIT_OK


# -- fit / score -----------------------------------------------------------------


def _normal_feature_maps(ds: store.EmbeddingDataset) -> list[store.FeatureMapSet]:
    maps = [ds.features[s.image_id] for s in ds.samples if s.label == store.LABEL_NORMAL]
    if not maps:
        raise FormatError("training archive has no normal samples")
    return maps


def cmd_fit(args) -> int:
    ds = store.load_dataset(args.train)
    levels = tuple(args.levels) if args.levels else (DEFAULT_LEVELS if set(DEFAULT_LEVELS) <= set(ds.level_names) else ds.level_names)
    train_maps = _normal_feature_maps(ds)
    if args.method == "knn":
        vectors = [global_average_pool(fm, levels) for fm in train_maps]
        model = scorers.knn_fit(vectors, k=args.k)
    elif args.method == "mahalanobis":
        model = scorers.maha_fit(train_maps, levels, estimator=args.estimator)
    else:
        model = scorers.padim_fit(
            train_maps,
            levels,
            estimator=args.estimator,
            n_channels=args.channels,
            channel_seed=args.channel_seed,
        )
    meta = {
        "method": args.method,
        "levels": list(levels),
        "estimator": args.estimator,
        "k": args.k,
        "n_train": len(train_maps),
        "source_metadata": ds.manifest,
    }
    scorers.save_model(model, args.out, extra_meta={"provenance": meta})
    print(f"fitted {args.method} on {len(train_maps)} samples -> {args.out}")
    return EXIT_OK


def cmd_score(args) -> int:
    model = scorers.load_model(args.model)
    ds = store.load_dataset(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = ["image_id,label,defect_type,score"]
    heatmaps: dict[str, np.ndarray] = {}
    for sample in ds.samples:
        fm = ds.features[sample.image_id]
        if isinstance(model, scorers.KnnModel):
            vector = global_average_pool(fm, model.levels or None)
            score = scorers.knn_score(model, vector)
        elif isinstance(model, scorers.MahalanobisModel):
            score = scorers.maha_score(model, fm)
        else:
            result = scorers.padim_score(model, fm)
            score = result.score
            heatmaps[sample.image_id] = result.heatmap
        rows.append(f"{sample.image_id},{sample.label},{sample.defect_type},{score!r}")
    (out_dir / "scores.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    if heatmaps and args.heatmaps:
        hm_samples = []
        hm_features = {}
        for sample in ds.samples:
            hm = heatmaps[sample.image_id]
            hm_samples.append(sample)
            hm_features[sample.image_id] = store.FeatureMapSet(
                image_id=sample.image_id,
                levels={"heatmap": hm[None, :, :].astype(np.float32)},
            )
        store.save_dataset(
            store.EmbeddingDataset(samples=hm_samples, features=hm_features, manifest={"kind": "heatmaps"}),
            out_dir / "heatmaps",
        )
    if heatmaps and args.heatmap_png:
        png_dir = out_dir / "heatmap_png"
        for image_id, hm in heatmaps.items():
            target = png_dir / (image_id.replace("/", "__") + ".png")
            target.parent.mkdir(parents=True, exist_ok=True)
            scorers.heatmap_to_png(hm, target)
    _write_run_manifest(out_dir, "score", vars(args))
    print(f"scored {len(ds.samples)} samples -> {out_dir / 'scores.csv'}")
    return EXIT_OK


# -- bench -----------------------------------------------------------------------


def _method_from_config(raw: dict) -> ev.MethodConfig:
    return ev.MethodConfig(
        name=raw.get("name", raw["kind"]),
        kind=raw["kind"],
        estimator=raw.get("estimator", cov.LEDOIT_WOLF),
        k=int(raw.get("k", 1)),
    )


def _spec_from_config(config: dict) -> ev.RobustnessRunSpec:
    grid = config.get("sample_grid", "auto")
    methods = tuple(_method_from_config(m) for m in config.get("methods", [])) or ev.DEFAULT_METHODS
    return ev.RobustnessRunSpec(
        sample_grid=None if grid in ("auto", None) else [int(n) for n in grid],
        replicates=int(config.get("replicates", 5)),
        master_seed=int(config.get("master_seed", 0)),
        methods=methods,
        aug_factors=tuple(int(f) for f in config.get("aug_factors", [0])),
        keep_originals=bool(config.get("keep_originals", True)),
        levels=tuple(config["levels"]) if config.get("levels") else None,
    )


def _count_originals(archive: Path) -> int:
    ds = store.load_dataset(archive)
    return sum(
        1
        for s in ds.samples
        if s.label == store.LABEL_NORMAL and not store.is_augmented_id(s.image_id)
    )


def cmd_bench(args) -> int:
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    spec = _spec_from_config(config)
    categories = config.get("categories", [])
    if not categories:
        raise FormatError("bench config lists no categories")

    if args.dry_run:
        per_method = 0
        for entry in categories:
            n_orig = _count_originals(Path(entry["train"]))
            grid = spec.sample_grid if spec.sample_grid is not None else ev.build_sample_grid(n_orig)
            usable = [n for n in grid if n <= n_orig]
            cells = len(usable) * spec.replicates * len(spec.aug_factors)
            per_method += cells
            print(f"category {entry['name']}: {n_orig} training samples, grid {usable}, {cells} fits per method")
        print(f"planned model fits per method: {per_method}")
        print(f"planned model fits total ({len(spec.methods)} methods): {per_method * len(spec.methods)}")
        return EXIT_OK

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    combined = ev.RobustnessReport(metadata={"master_seed": spec.master_seed})
    for entry in categories:
        train_ds = store.load_dataset(entry["train"])
        test_ds = store.load_dataset(entry["test"])
        report = ev.run_robustness(train_ds, test_ds, spec, category=entry["name"], jobs=args.jobs)
        combined.extend(report)
        print(f"category {entry['name']}: {len(report.records)} records")

    ev.write_records_csv(combined, out_dir / "report.csv")
    ev.write_timings_csv(combined, out_dir / "timings.csv")
    ev.write_aggregates_json(combined, out_dir / "aggregates.json", exclusions=config.get("exclusions", ()))
    for entry in categories:
        for factor in spec.aug_factors:
            svg = out_dir / f"curves_{entry['name']}_aug{factor}.svg"
            ev.plot_auc_curves(combined, svg, category=entry["name"], aug_factor=factor)
    _write_run_manifest(
        out_dir,
        "bench",
        {"config_path": str(args.config), "jobs": args.jobs},
        extra={"config": config, "seed_derivation": "blake2b-64(master_seed|category|N|replicate)"},
    )
    print(f"reports written to {out_dir}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="featanom", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="pair MVTec-style trees with feature archives into labeled archives")
    p.add_argument("--mvtec-root", required=True)
    p.add_argument("--features-root", required=True, help="directory with one feature archive per category")
    p.add_argument("--out", required=True)
    p.add_argument("--category", action="append", help="restrict to named categories (repeatable)")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("preprocess", help="center crop (optional) then bilinear resize")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resize", type=int, default=380)
    p.add_argument("--crop", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("augment", help="write augmented copies under deterministic staging names")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--policy-config", default=None, help="JSON policy table (defaults to the shipped one)")
    p.add_argument("--factor", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--discard-originals", action="store_true")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("fit", help="fit one scorer on a training archive")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("knn", "mahalanobis", "padim"), required=True)
    p.add_argument("--estimator", choices=cov.ESTIMATORS, default=cov.LEDOIT_WOLF)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--levels", nargs="+", default=None)
    p.add_argument("--channels", type=int, default=None, help="optional random channel subset size (per-patch only)")
    p.add_argument("--channel-seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score an archive with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heatmaps", action="store_true", help="write per-image heatmap archive (per-patch models)")
    p.add_argument("--heatmap-png", action="store_true", help="also write min-max normalized 8-bit PNGs")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="run the low-data robustness protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="bench_out")
    p.add_argument("--dry-run", action="store_true", help="print planned model counts without fitting")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FeatanomError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 -- runtime failures map to exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
