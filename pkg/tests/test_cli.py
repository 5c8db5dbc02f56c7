import numpy as np
import pytest

from convtrace.cli import main
from convtrace.features import load_features

CLASSES_TOML = """
[classes.alpha]
width = 24
height = 24
kernel_size = 3
kernel = [[0.07, 0.25, 0.03], [0.25, 0.0, 0.0], [0.0, 0.0, 0.0]]
noise_sigma = 0.5
base = "iid_gaussian"

[classes.beta]
width = 24
height = 24
kernel_size = 3
kernel = [[0.25, 0.03, 0.25], [0.07, 0.0, 0.0], [0.0, 0.0, 0.0]]
noise_sigma = 0.5
base = "iid_gaussian"
"""


@pytest.fixture()
def classes_file(tmp_path):
    path = tmp_path / "classes.toml"
    path.write_text(CLASSES_TOML)
    return path


def test_synth_writes_corpus(tmp_path, classes_file):
    out = tmp_path / "corpus"
    rc = main(["synth", "--out", str(out), "--classes", str(classes_file),
               "--count", "2", "--seed", "1"])
    assert rc == 0
    assert len(list(out.rglob("*.png"))) == 4
    assert (out / "manifest.csv").exists()


def test_synth_missing_out_is_usage_error(classes_file, capsys):
    with pytest.raises(SystemExit) as info:
        main(["synth", "--classes", str(classes_file)])
    assert info.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_synth_rerun_byte_identical(tmp_path, classes_file):
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    for out in (out1, out2):
        assert main(["synth", "--out", str(out), "--classes", str(classes_file),
                     "--count", "1", "--seed", "9"]) == 0
    for f1, f2 in zip(sorted(out1.rglob("*.png")), sorted(out2.rglob("*.png"))):
        assert f1.read_bytes() == f2.read_bytes()


def test_extract_writes_features(tmp_path, corpus_dir):
    out = tmp_path / "features.csv"
    rc = main(["extract",
               "--corpus", f"alpha={corpus_dir / 'alpha'}",
               "--corpus", f"beta={corpus_dir / 'beta'}",
               "--kernel-size", "3", "--out", str(out),
               "--jobs", "1", "--max-per-class", "3"])
    assert rc == 0
    fs = load_features(out)
    assert len(fs) == 6
    assert fs.matrix().shape == (6, 24)


def test_extract_warns_on_offgrid_kernel_size(tmp_path, corpus_dir, caplog):
    out = tmp_path / "f6.csv"
    with caplog.at_level("WARNING", logger="convtrace"):
        rc = main(["extract", "--corpus", f"alpha={corpus_dir / 'alpha'}",
                   "--corpus", f"beta={corpus_dir / 'beta'}",
                   "--kernel-size", "6", "--out", str(out),
                   "--jobs", "1", "--max-per-class", "2"])
    assert rc == 0
    assert any("outside the evaluated grid" in r.message for r in caplog.records)
    assert load_features(out).matrix().shape[1] == 3 * (36 - 1)


def test_extract_nonexistent_directory(tmp_path):
    rc = main(["extract", "--corpus", "a=/nonexistent/dir",
               "--out", str(tmp_path / "f.csv")])
    assert rc == 1


def test_train_eval_memorization(tmp_path, corpus_dir, capsys):
    features = tmp_path / "f.csv"
    assert main(["extract",
                 "--corpus", f"alpha={corpus_dir / 'alpha'}",
                 "--corpus", f"beta={corpus_dir / 'beta'}",
                 "--kernel-size", "3", "--out", str(features),
                 "--jobs", "1", "--max-per-class", "4"]) == 0
    model = tmp_path / "knn.model"
    assert main(["train", "--features", str(features), "--model", "knn:k=1",
                 "--out", str(model)]) == 0
    report = tmp_path / "report.json"
    assert main(["eval", "--model", str(model), "--features", str(features),
                 "--out", str(report)]) == 0
    out = capsys.readouterr().out
    assert "accuracy 100.00" in out
    assert report.exists()


def test_eval_mismatched_kernel_size(tmp_path, corpus_dir):
    f3 = tmp_path / "f3.csv"
    f5 = tmp_path / "f5.csv"
    for n, path in ((3, f3), (5, f5)):
        assert main(["extract", "--corpus", f"alpha={corpus_dir / 'alpha'}",
                     "--corpus", f"beta={corpus_dir / 'beta'}",
                     "--kernel-size", str(n), "--out", str(path),
                     "--jobs", "1", "--max-per-class", "2"]) == 0
    model = tmp_path / "m.model"
    assert main(["train", "--features", str(f3), "--model", "knn:k=1",
                 "--out", str(model)]) == 0
    assert main(["eval", "--model", str(model), "--features", str(f5)]) == 1


def test_train_standardize_flag_roundtrip(tmp_path, corpus_dir):
    features = tmp_path / "f.csv"
    assert main(["extract", "--corpus", f"alpha={corpus_dir / 'alpha'}",
                 "--corpus", f"beta={corpus_dir / 'beta'}",
                 "--kernel-size", "3", "--out", str(features),
                 "--jobs", "1", "--max-per-class", "4"]) == 0
    model = tmp_path / "svm.model"
    assert main(["train", "--features", str(features), "--model",
                 "svm:kernel=linear", "--out", str(model)]) == 0
    from convtrace.classifiers import load_model
    _, stats = load_model(model)
    assert stats is not None  # svm standardizes by default


def test_report_full_pipeline(tmp_path, corpus_dir, capsys):
    config = tmp_path / "exp.toml"
    out_dir = tmp_path / "results"
    config.write_text(f"""
kernel_sizes = [3]
classifiers = ["knn:k=3", "svm:kernel=linear"]
test_fraction = 0.3
seed = 4
repeats = 2
jobs = 1

[corpus]
alpha = "{corpus_dir / 'alpha'}"
beta = "{corpus_dir / 'beta'}"
""")
    rc = main(["report", "--config", str(config), "--out", str(out_dir)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "| Classifier | 3x3 |" in stdout
    assert (out_dir / "results.md").exists()
    assert (out_dir / "results.csv").exists()
    csv_rows = [line.split(",") for line in
                (out_dir / "results.csv").read_text().splitlines()
                if line and not line.startswith(("#", "classifier"))]
    svm_cell = next(float(r[2]) for r in csv_rows if r[0] == "SVM-linear")
    assert svm_cell >= 95.0
    assert (out_dir / "features_N3.csv").exists()
    assert (out_dir / "figures" / "accuracy_heatmap.png").exists()
    assert (out_dir / "figures" / "accuracy_bars.png").exists()
    reports = list((out_dir / "reports").glob("*.json"))
    assert len(reports) == 4  # 2 classifiers x 1 kernel size x 2 repeats
    assert (out_dir / "timings.txt").exists()


def test_report_reuses_cached_features(tmp_path, corpus_dir, caplog):
    config = tmp_path / "exp.toml"
    out_dir = tmp_path / "results"
    config.write_text(f"""
kernel_sizes = [3]
classifiers = ["knn:k=1"]
seed = 0
jobs = 1

[corpus]
alpha = "{corpus_dir / 'alpha'}"
beta = "{corpus_dir / 'beta'}"
""")
    assert main(["report", "--config", str(config), "--out", str(out_dir)]) == 0
    first = (out_dir / "results.md").read_bytes()
    with caplog.at_level("INFO", logger="convtrace"):
        assert main(["report", "--config", str(config), "--out", str(out_dir)]) == 0
    assert any("reusing cached features" in r.message for r in caplog.records)
    assert (out_dir / "results.md").read_bytes() == first


def test_config_file_merges_under_flags(tmp_path, corpus_dir):
    cfg = tmp_path / "defaults.toml"
    cfg.write_text('kernel_size = 3\nmax_per_class = 2\njobs = 1\n')
    out = tmp_path / "f.csv"
    rc = main(["extract", "--corpus", f"alpha={corpus_dir / 'alpha'}",
               "--corpus", f"beta={corpus_dir / 'beta'}",
               "--out", str(out), "--config", str(cfg)])
    assert rc == 0
    assert len(load_features(out)) == 4  # max_per_class came from config


def test_bad_corpus_argument(tmp_path):
    rc = main(["extract", "--corpus", "missing-separator",
               "--out", str(tmp_path / "f.csv")])
    assert rc == 1
