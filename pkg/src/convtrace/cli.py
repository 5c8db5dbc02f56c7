"""Command line interface: synth / extract / train / eval / report.

Machine-readable artifacts go to files, logs to stderr, and stdout only
carries renders that were explicitly requested.  Exit codes: 0 success,
1 runtime failure, 2 usage error.  Every subcommand accepts --config
pointing at a TOML file whose keys mirror the long flag names; explicit
flags win over config values.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConvTraceError

log = logging.getLogger("convtrace")

PAPER_KERNEL_SIZES = (3, 4, 5, 7)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _merge_config(args: argparse.Namespace, config: dict,
                  parser_defaults: dict) -> argparse.Namespace:
    """Fill values the user did not set explicitly from the config file."""
    for key, value in config.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)
    return args


def _parse_kernel_matrix(matrix, kernel_size: int) -> dict[tuple[int, int], float]:
    """N x N nested list (row-major, t rows then s columns) -> offset dict."""
    from .em import neighborhood_offsets
    from .synth import is_causal

    offsets = neighborhood_offsets(kernel_size)
    lo_t = min(t for _, t in offsets.offsets)
    lo_s = min(s for s, _ in offsets.offsets)
    if len(matrix) != kernel_size or any(len(row) != kernel_size for row in matrix):
        raise ValueError(f"kernel matrix must be {kernel_size}x{kernel_size}")
    planted = {}
    for r, row in enumerate(matrix):
        for c, value in enumerate(row):
            if float(value) == 0.0:
                continue
            s, t = lo_s + c, lo_t + r
            if (s, t) == (0, 0):
                raise ValueError("anchor (center) weight must be 0")
            if not is_causal(s, t):
                raise ValueError(f"weight at offset ({s},{t}) is not causal; "
                                 "raster generation only supports offsets "
                                 "before the anchor")
            planted[(s, t)] = float(value)
    return planted


def cmd_synth(args) -> int:
    from .synth import CorpusSpec, SyntheticSpec, make_labeled_corpus

    with open(args.classes, "rb") as fh:
        doc = tomllib.load(fh)
    classes = doc.get("classes")
    if not isinstance(classes, dict) or len(classes) != 2:
        raise ValueError(f"{args.classes}: need a [classes.<name>] table for "
                         "exactly two classes")
    specs = []
    for name in sorted(classes):
        entry = classes[name]
        n = int(entry.get("kernel_size", 3))
        spec = SyntheticSpec(
            width=int(entry.get("width", 64)),
            height=int(entry.get("height", 64)),
            kernel_size=n,
            planted=_parse_kernel_matrix(entry["kernel"], n),
            noise_sigma=float(entry.get("noise_sigma", 0.5)),
            base=entry.get("base", "iid_gaussian"),
        )
        specs.append(CorpusSpec(name=name, template=spec))
    manifest = make_labeled_corpus(specs[0], specs[1], count=args.count,
                                   out_dir=args.out, seed=args.seed)
    log.info("wrote %d images per class under %s (manifest %s)",
             args.count, args.out, manifest)
    return 0


def cmd_extract(args) -> int:
    from .em import EmConfig
    from .features import save_features
    from .harness import extract_all, scan_corpus

    if args.kernel_size not in PAPER_KERNEL_SIZES:
        log.warning("kernel size %d is outside the evaluated grid %s; "
                    "results are uncalibrated", args.kernel_size, PAPER_KERNEL_SIZES)
    roots = _parse_corpus_args(args.corpus)
    images = scan_corpus(roots, args.max_per_class)
    cfg = EmConfig(kernel_size=args.kernel_size, rng_seed=args.seed)
    fs = extract_all(images, cfg, jobs=args.jobs)
    save_features(fs, args.out)
    log.info("wrote %d feature rows (dim %d) to %s",
             len(fs), 3 * (args.kernel_size ** 2 - 1), args.out)
    return 0


def _parse_corpus_args(items: list[str]) -> dict[str, str]:
    roots = {}
    for item in items:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise ValueError(f"--corpus expects class=dir, got {item!r}")
        if label in roots:
            raise ValueError(f"class {label!r} given twice")
        roots[label] = path
    return roots


def cmd_train(args) -> int:
    from .classifiers import save_model
    from .features import load_features, standardize
    from .harness import parse_classifier_spec, train_classifier

    spec = parse_classifier_spec(args.model)
    if args.standardize is not None:
        spec = type(spec)(kind=spec.kind, params=spec.params,
                          standardize=args.standardize)
    train = load_features(args.features)
    stats = None
    if spec.wants_standardize:
        train, stats = standardize(train)
    model = train_classifier(spec, train)
    save_model(model, args.out, standardization=stats)
    log.info("trained %s on %d records -> %s", spec.display, len(train), args.out)
    return 0


def cmd_eval(args) -> int:
    from .classifiers import evaluate, load_model, model_classes
    from .features import load_features

    model, stats = load_model(args.model)
    test = load_features(args.features)
    if stats is not None:
        test = stats.apply(test)
    report = evaluate(model, test, config={
        "model_file": str(args.model),
        "features": str(args.features),
        "standardized": stats is not None,
        "classes": model_classes(model),
    })
    out_text = report.to_json()
    if args.out:
        Path(args.out).write_text(out_text + "\n", encoding="utf-8")
        log.info("wrote report to %s", args.out)
    print(f"accuracy {report.accuracy:.2f}")
    return 0


def cmd_report(args) -> int:
    from .em import EmConfig
    from .features import load_features, save_features
    from .harness import (ExperimentConfig, extract_all, parse_classifier_spec,
                          render_table, run_experiment, scan_corpus)
    from .plots import save_accuracy_bars, save_accuracy_heatmap

    doc = _load_config(args.config)
    if "corpus" not in doc or not isinstance(doc["corpus"], dict):
        raise ValueError(f"{args.config}: missing [corpus] table (class -> directory)")
    out_dir = Path(args.out or doc.get("out_dir", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)

    # explicit flags win over config values
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    jobs = args.jobs if args.jobs is not None \
        else int(doc.get("jobs", os.cpu_count() or 1))
    cfg = ExperimentConfig(
        corpus_roots={k: str(v) for k, v in doc["corpus"].items()},
        kernel_sizes=[int(n) for n in doc.get("kernel_sizes", [3])],
        classifiers=[parse_classifier_spec(s) for s in
                     doc.get("classifiers", ["knn:k=3", "svm:kernel=linear", "lda"])],
        test_fraction=float(doc.get("test_fraction", 0.30)),
        seed=seed,
        repeats=int(doc.get("repeats", 1)),
        max_images_per_class=doc.get("max_per_class"),
        jobs=jobs,
        em_seed=int(doc.get("em_seed", 0)),
    )

    # feature CSVs are the cacheable intermediate: reuse when present
    images = scan_corpus(cfg.corpus_roots, cfg.max_images_per_class)
    cache = {}
    for n in cfg.kernel_sizes:
        cache_path = out_dir / f"features_N{n}.csv"
        if cache_path.exists():
            fs = load_features(cache_path)
            if fs.kernel_size == n and len(fs):
                cache[n] = fs
                log.info("reusing cached features %s", cache_path)
                continue
        em_cfg = EmConfig(kernel_size=n, rng_seed=cfg.em_seed)
        fs = extract_all(images, em_cfg, jobs=cfg.jobs)
        save_features(fs, cache_path)
        cache[n] = fs
    table = run_experiment(cfg, feature_cache=cache)

    md = render_table(table, "markdown")
    csv_text = render_table(table, "csv")
    (out_dir / "results.md").write_text(md, encoding="utf-8")
    (out_dir / "results.csv").write_text(csv_text, encoding="utf-8")
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    for (name, n), cell in table.cells.items():
        for rep_index, report in enumerate(cell.reports):
            safe = name.replace("/", "_").replace(" ", "_")
            path = reports_dir / f"{safe}_N{n}_rep{rep_index}.json"
            path.write_text(report.to_json() + "\n", encoding="utf-8")
    figures = out_dir / "figures"
    figures.mkdir(exist_ok=True)
    save_accuracy_heatmap(table, figures / "accuracy_heatmap.png")
    save_accuracy_bars(table, figures / "accuracy_bars.png")
    timing_lines = [f"{k}={v:.3f}s" for k, v in sorted(table.timings.items())]
    (out_dir / "timings.txt").write_text("\n".join(timing_lines) + "\n", encoding="utf-8")
    log.info("report written under %s", out_dir)
    print(md, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convtrace",
        description="Local pixel-correlation kernel extraction and classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", required=True, help="TOML file with [classes.<name>] specs")
    p.add_argument("--count", type=int, default=10, help="images per class")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract kernel features from a corpus")
    p.add_argument("--corpus", action="append", required=True,
                   metavar="CLASS=DIR", help="repeatable class=directory pair")
    p.add_argument("--kernel-size", type=int, default=3)
    p.add_argument("--out", required=True, help="output feature CSV")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--seed", type=int, default=0, help="EM kernel-init seed")
    p.add_argument("--max-per-class", type=int, default=None)
    p.add_argument("--config", default=None, help="TOML with flag defaults")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train a classifier on a feature CSV")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True,
                   help="classifier spec, e.g. knn:k=3 | svm:kernel=rbf,C=2 | lda")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file on a feature CSV")
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None, help="optional report JSON path")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="run the experiment grid from a config file")
    p.add_argument("--config", required=True, help="experiment TOML")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    if config_path and args.command != "report":
        defaults = {a.dest: a.default for a in parser._actions}
        try:
            args = _merge_config(args, _load_config(config_path), defaults)
        except OSError as exc:
            log.error("%s", exc)
            return 1
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("resolved config: %s", resolved)
    try:
        return args.func(args)
    except (ConvTraceError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
