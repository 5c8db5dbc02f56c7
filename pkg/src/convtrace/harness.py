"""End-to-end experiments: scan corpora, extract features, train, evaluate.

The experiment grid crosses kernel sizes with classifier specs; every cell
is evaluated on seeded stratified holdout splits (repeats use seed,
seed+1, ...).  Standardization statistics always come from the training
side of the split.  Everything is deterministic for a fixed config.
"""

from __future__ import annotations

import io
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (
    EvalReport,
    SvmParams,
    evaluate,
    knn_fit,
    lda_fit,
    one_vs_rest,
    svm_fit,
)
from .em import EmConfig, em_fit_rgb
from .errors import (
    AllImagesFailedError,
    ClassTooSmallError,
    ConvTraceError,
    DuplicatePathError,
    EmptyClassError,
)
from .features import FeatureSet, assemble, standardize
from .imaging import decode_image

log = logging.getLogger("convtrace")

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def scan_corpus(roots: dict[str, str | Path],
                max_per_class: int | None = None) -> list[tuple[str, str]]:
    """Collect (path, label) pairs, lexically ordered within each class."""
    seen: dict[str, str] = {}
    out: list[tuple[str, str]] = []
    for label in sorted(roots):
        root = Path(roots[label])
        if not root.is_dir():
            raise FileNotFoundError(f"class {label!r}: {root} is not a directory")
        paths = sorted(str(p) for p in root.rglob("*")
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not paths:
            raise EmptyClassError(f"class {label!r}: no PNG/JPEG files under {root}")
        if max_per_class is not None:
            paths = paths[:max_per_class]
        for p in paths:
            if p in seen:
                raise DuplicatePathError(f"{p} appears in classes "
                                         f"{seen[p]!r} and {label!r}")
            seen[p] = label
            out.append((p, label))
    return out


def _extract_one(args):
    path, label, cfg = args
    try:
        img = decode_image(path)
        estimates = em_fit_rgb(img, cfg)
        vec = assemble(estimates, label=label, source=path)
        return path, vec, None
    except (ConvTraceError, OSError) as exc:
        return path, None, f"{type(exc).__name__}: {exc}"


def extract_all(images: list[tuple[str, str]], cfg: EmConfig,
                jobs: int = 1) -> FeatureSet:
    """Per-image EM extraction; failures are skipped and logged.

    Output order always matches input order, whatever the parallelism.
    """
    if not images:
        raise ValueError("no images to extract")
    tasks = [(path, label, cfg) for path, label in images]
    if jobs <= 1:
        results = [_extract_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_one, tasks, chunksize=1))
    records = []
    failures = 0
    for path, vec, err in results:
        if vec is None:
            failures += 1
            log.warning("skipped %s: %s", path, err)
        else:
            records.append(vec)
    if not records:
        raise AllImagesFailedError(f"all {len(images)} extractions failed")
    if failures:
        log.info("extracted %d/%d images (%d skipped)",
                 len(records), len(images), failures)
    return FeatureSet(kernel_size=cfg.kernel_size, records=records)


def stratified_split(fs: FeatureSet, test_fraction: float,
                     seed: int) -> tuple[FeatureSet, FeatureSet]:
    """Seeded per-class shuffle; ceil(fraction * count) records go to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    labels = np.array(fs.labels())
    train_idx: list[int] = []
    test_idx: list[int] = []
    for name in fs.class_names:
        idx = np.flatnonzero(labels == name)
        if len(idx) < 2:
            raise ClassTooSmallError(f"class {name!r} has {len(idx)} record(s); "
                                     "cannot split")
        perm = rng.permutation(len(idx))
        n_test = int(np.ceil(test_fraction * len(idx)))
        test_idx.extend(idx[perm[:n_test]])
        train_idx.extend(idx[perm[n_test:]])
    train = FeatureSet(fs.kernel_size, [fs.records[i] for i in sorted(train_idx)])
    test = FeatureSet(fs.kernel_size, [fs.records[i] for i in sorted(test_idx)])
    return train, test


@dataclass(frozen=True)
class ClassifierSpec:
    """Parsed classifier description, e.g. knn:k=3 or svm:kernel=rbf,C=2."""

    kind: str                 # knn | svm | lda
    params: dict = field(default_factory=dict)
    standardize: bool | None = None   # None -> family default

    @property
    def wants_standardize(self) -> bool:
        if self.standardize is not None:
            return self.standardize
        return self.kind in ("svm", "lda")

    @property
    def display(self) -> str:
        if self.kind == "knn":
            return f"{self.params.get('k', 3)}-NN"
        if self.kind == "lda":
            return "LDA"
        return f"SVM-{self.params.get('kernel', 'linear')}"


def parse_classifier_spec(text: str) -> ClassifierSpec:
    head, _, rest = text.strip().partition(":")
    kind = head.strip().lower()
    if kind not in ("knn", "svm", "lda"):
        raise ValueError(f"unknown classifier {kind!r} (use knn, svm or lda)")
    params: dict = {}
    standardize_flag: bool | None = None
    if rest:
        for item in rest.split(","):
            if not item.strip():
                continue
            key, _, value = item.partition("=")
            key = key.strip().lower()
            value = value.strip()
            if not value:
                raise ValueError(f"malformed classifier option {item!r}")
            if key == "standardize":
                standardize_flag = value.lower() in ("1", "true", "yes")
            elif key in ("k", "degree", "max_passes"):
                params[key] = int(value)
            elif key in ("c", "gamma", "coef0", "shrinkage", "tol"):
                params["C" if key == "c" else key] = float(value)
            elif key == "kernel":
                params[key] = value.lower()
            else:
                raise ValueError(f"unknown classifier option {key!r}")
    return ClassifierSpec(kind=kind, params=params, standardize=standardize_flag)


def train_classifier(spec: ClassifierSpec, train: FeatureSet):
    if spec.kind == "knn":
        return knn_fit(train, spec.params.get("k", 3))
    if spec.kind == "lda":
        return lda_fit(train, spec.params.get("shrinkage", 1e-4))
    svm_params = SvmParams(
        kernel=spec.params.get("kernel", "linear"),
        C=spec.params.get("C", 1.0),
        gamma=spec.params.get("gamma"),
        degree=spec.params.get("degree", 3),
        coef0=spec.params.get("coef0", 0.0),
        tol=spec.params.get("tol", 1e-3),
        max_passes=spec.params.get("max_passes", 200),
    )
    n_classes = len(set(train.labels()))
    if n_classes == 2:
        return svm_fit(train, svm_params)
    return one_vs_rest(train, svm_params)


@dataclass
class ExperimentConfig:
    corpus_roots: dict[str, str]
    kernel_sizes: list[int]
    classifiers: list[ClassifierSpec]
    test_fraction: float = 0.30
    seed: int = 0
    repeats: int = 1
    max_images_per_class: int | None = None
    jobs: int = 1
    em_seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if len(self.corpus_roots) < 2:
            raise ValueError("need at least 2 classes")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class CellResult:
    classifier: str
    kernel_size: int
    mean_accuracy: float
    std_accuracy: float
    reports: list[EvalReport]


@dataclass
class ResultsTable:
    classifiers: list[str]                 # row order
    kernel_sizes: list[int]                # column order
    cells: dict[tuple[str, int], CellResult]
    config_echo: dict
    timings: dict[str, float] = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig,
                   feature_cache: dict[int, FeatureSet] | None = None) -> ResultsTable:
    """Full grid over kernel sizes x classifiers with repeated seeded splits.

    ``feature_cache`` may pre-supply a FeatureSet per kernel size (the CLI
    uses this to reuse feature CSVs); missing sizes are extracted here.
    """
    timings: dict[str, float] = {}
    cells: dict[tuple[str, int], CellResult] = {}
    features: dict[int, FeatureSet] = dict(feature_cache or {})

    t0 = time.perf_counter()
    images = scan_corpus(cfg.corpus_roots, cfg.max_images_per_class)
    timings["scan"] = time.perf_counter() - t0

    for n in cfg.kernel_sizes:
        if n not in features:
            t0 = time.perf_counter()
            em_cfg = EmConfig(kernel_size=n, rng_seed=cfg.em_seed)
            features[n] = extract_all(images, em_cfg, jobs=cfg.jobs)
            timings[f"extract_N{n}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for spec in cfg.classifiers:
        for n in cfg.kernel_sizes:
            fs = features[n]
            reports = []
            for rep in range(cfg.repeats):
                split_seed = cfg.seed + rep
                train, test = stratified_split(fs, cfg.test_fraction, split_seed)
                if spec.wants_standardize:
                    train, stats = standardize(train)
                    test = stats.apply(test)
                model = train_classifier(spec, train)
                report = evaluate(model, test, config={
                    "classifier": spec.display,
                    "kernel_size": n,
                    "standardize": spec.wants_standardize,
                    "split_seed": split_seed,
                    "test_fraction": cfg.test_fraction,
                })
                reports.append(report)
            accs = np.array([r.accuracy for r in reports])
            cells[(spec.display, n)] = CellResult(
                classifier=spec.display, kernel_size=n,
                mean_accuracy=float(accs.mean()),
                std_accuracy=float(accs.std()),
                reports=reports)
    timings["classify"] = time.perf_counter() - t0

    echo = {
        "classes": sorted(cfg.corpus_roots),
        "kernel_sizes": list(cfg.kernel_sizes),
        "classifiers": [s.display for s in cfg.classifiers],
        "standardize": {s.display: s.wants_standardize for s in cfg.classifiers},
        "test_fraction": cfg.test_fraction,
        "seed": cfg.seed,
        "repeats": cfg.repeats,
        "em_seed": cfg.em_seed,
        "max_images_per_class": cfg.max_images_per_class,
    }
    return ResultsTable(
        classifiers=[s.display for s in cfg.classifiers],
        kernel_sizes=list(cfg.kernel_sizes),
        cells=cells, config_echo=echo, timings=timings)


def _cell_text(cell: CellResult, repeats: int) -> str:
    if repeats > 1:
        return f"{cell.mean_accuracy:.2f} ± {cell.std_accuracy:.2f}"
    return f"{cell.mean_accuracy:.2f}"


def render_table(table: ResultsTable, fmt: str = "markdown") -> str:
    """Render mean accuracies (2 decimals) as Markdown or CSV with a config footer."""
    repeats = table.config_echo.get("repeats", 1)
    if fmt == "markdown":
        out = io.StringIO()
        header = ["Classifier"] + [f"{n}x{n}" for n in table.kernel_sizes]
        out.write("| " + " | ".join(header) + " |\n")
        out.write("|" + "---|" * len(header) + "\n")
        for name in table.classifiers:
            row = [name] + [_cell_text(table.cells[(name, n)], repeats)
                            for n in table.kernel_sizes]
            out.write("| " + " | ".join(row) + " |\n")
        out.write("\n")
        for key in sorted(table.config_echo):
            out.write(f"- {key}: {table.config_echo[key]}\n")
        return out.getvalue()
    if fmt == "csv":
        out = io.StringIO()
        out.write("classifier,kernel_size,mean_accuracy,std_accuracy\n")
        for name in table.classifiers:
            for n in table.kernel_sizes:
                cell = table.cells[(name, n)]
                out.write(f"{name},{n},{cell.mean_accuracy:.2f},{cell.std_accuracy:.2f}\n")
        for key in sorted(table.config_echo):
            out.write(f"# {key}={table.config_echo[key]}\n")
        return out.getvalue()
    raise ValueError(f"unknown table format {fmt!r} (markdown or csv)")
