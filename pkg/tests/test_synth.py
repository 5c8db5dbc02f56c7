import numpy as np
import pytest

from conftest import CLASS_A, CLASS_B, EXACT3, FIX3, fix_spec
from convtrace.em import EmConfig, em_fit, neighborhood_offsets, residual_map
from convtrace.em import KernelEstimate
from convtrace.errors import UnstableSpecError
from convtrace.imaging import ImagePlane
from convtrace.synth import (
    CorpusSpec,
    SyntheticSpec,
    clamped_fraction,
    effective_kernel,
    exact_relation_plane,
    generate,
    generate_rgb,
    make_labeled_corpus,
)


def test_zero_weights_gives_pure_base_noise():
    spec = SyntheticSpec(width=16, height=16, kernel_size=3, planted={},
                         noise_sigma=0.0, base="iid_uniform", rng_seed=4)
    plane, target = generate(spec)
    expected = np.random.default_rng(4).uniform(0.0, 255.0, (16, 16))
    assert np.array_equal(plane.data, expected)
    # iid noise: the no-intercept optimum only absorbs the mean, small entries
    assert np.max(np.abs(target)) <= 0.15


def test_ramp_seeded_recursion_satisfies_identity():
    # seed first row/column with a ramp, fill by the half/half causal recursion
    size = 12
    plane = np.zeros((size, size))
    plane[0, :] = np.arange(size, dtype=float)
    plane[:, 0] = np.arange(size, dtype=float)
    for y in range(1, size):
        for x in range(1, size):
            plane[y, x] = 0.5 * plane[y, x - 1] + 0.5 * plane[y - 1, x]
    offs = neighborhood_offsets(3)
    weights = np.zeros(8)
    weights[list(offs.offsets).index((-1, 0))] = 0.5
    weights[list(offs.offsets).index((0, -1))] = 0.5
    est = KernelEstimate(kernel_size=3, weights=weights, sigma=1.0,
                         iterations_run=1, converged=True)
    r = residual_map(ImagePlane(plane), est)
    assert np.allclose(r, 0.0, atol=1e-12)


def test_generate_deterministic():
    spec = fix_spec(FIX3, size=32, seed=9)
    a, _ = generate(spec)
    b, _ = generate(spec)
    assert np.array_equal(a.data, b.data)


def test_unstable_spec_detected():
    spec = SyntheticSpec(width=64, height=64, kernel_size=3,
                         planted={(-1, 0): -1.2}, noise_sigma=0.0,
                         base="iid_uniform", rng_seed=0)
    with pytest.raises(UnstableSpecError):
        generate(spec)


def test_stability_bound_enforced():
    with pytest.raises(ValueError, match="stability"):
        SyntheticSpec(width=8, height=8, kernel_size=3,
                      planted={(-1, 0): 0.9, (0, -1): 0.4}, rng_seed=0)


def test_acausal_offsets_rejected():
    with pytest.raises(ValueError, match="causal"):
        SyntheticSpec(width=8, height=8, kernel_size=3,
                      planted={(1, 0): 0.5}, rng_seed=0)


def test_offset_outside_window_rejected():
    with pytest.raises(ValueError, match="window"):
        SyntheticSpec(width=8, height=8, kernel_size=3,
                      planted={(-2, 0): 0.5}, rng_seed=0)


def test_clamping_rare_for_fixture_specs():
    for planted in (CLASS_A, CLASS_B):
        for seed in range(3):
            frac = clamped_fraction(fix_spec(planted, size=64, seed=seed))
            assert frac < 0.01


def test_effective_kernel_boundary_only_equals_planted():
    planted = {(0, -1): 0.55, (-1, -1): 0.15, (1, -1): 0.1, (-1, 0): 0.2}  # mass 1
    spec = SyntheticSpec(width=32, height=32, kernel_size=3, planted=planted,
                         noise_sigma=0.0, base="iid_uniform", rng_seed=0)
    offs = neighborhood_offsets(3)
    expected = np.array([planted.get(o, 0.0) for o in offs.offsets])
    assert np.array_equal(effective_kernel(spec), expected)


def test_effective_kernel_matches_empirical_least_squares():
    spec = fix_spec(FIX3, size=256, seed=33)
    plane, target = generate(spec)
    offs = neighborhood_offsets(3)
    data = plane.data
    X = np.empty((254 * 254, 8))
    center = data[1:255, 1:255].ravel()
    for j, (s, t) in enumerate(offs.offsets):
        X[:, j] = data[1 + t:255 + t, 1 + s:255 + s].ravel()
    empirical, *_ = np.linalg.lstsq(X, center, rcond=None)
    assert np.max(np.abs(empirical - target)) <= 0.02


def test_exact_plane_satisfies_relation():
    plane = exact_relation_plane(48, 48, EXACT3, np.random.default_rng(2))
    offs = neighborhood_offsets(3)
    target = np.array([EXACT3.get(o, 0.0) for o in offs.offsets])
    # brute-force substitution over every interior pixel
    data = plane.data
    worst = 0.0
    for y in range(1, 47):
        for x in range(1, 47):
            pred = sum(w * data[y + t, x + s] for (s, t), w in EXACT3.items())
            worst = max(worst, abs(data[y, x] - pred))
    assert worst <= 1e-9
    r = residual_map(plane, KernelEstimate(kernel_size=3, weights=target,
                                           sigma=1.0, iterations_run=1,
                                           converged=True))
    assert np.max(r) <= 1e-9


def test_exact_plane_requires_unit_sum():
    with pytest.raises(ValueError, match="sum to 1"):
        exact_relation_plane(16, 16, {(1, 0): 0.4, (-1, 0): 0.4},
                             np.random.default_rng(0))


def test_recovery_error_monotone_in_noise():
    offs = neighborhood_offsets(3)
    target = np.array([EXACT3.get(o, 0.0) for o in offs.offsets])
    medians = []
    for noise in (8.0, 2.0, 0.5):
        errs = []
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            plane = exact_relation_plane(96, 96, EXACT3, rng)
            noisy = np.clip(plane.data + rng.normal(0.0, noise, plane.data.shape),
                            0.0, 255.0)
            est = em_fit(ImagePlane(noisy), EmConfig(kernel_size=3, rng_seed=seed))
            errs.append(float(np.max(np.abs(est.weights - target))))
        medians.append(float(np.median(errs)))
    assert medians[0] > medians[1] > medians[2]


def test_generate_rgb_channels_differ():
    rgb = generate_rgb(fix_spec(FIX3, size=24), seed=5)
    assert not np.array_equal(rgb.planes[0].data, rgb.planes[1].data)


def test_corpus_layout_and_manifest(tmp_path):
    spec_a = CorpusSpec("real", fix_spec(CLASS_A, size=24))
    spec_b = CorpusSpec("fake", fix_spec(CLASS_B, size=24))
    manifest = make_labeled_corpus(spec_a, spec_b, count=1, out_dir=tmp_path, seed=3)
    pngs = sorted(tmp_path.rglob("*.png"))
    assert len(pngs) == 2
    assert {p.parent.name for p in pngs} == {"real", "fake"}
    lines = manifest.read_text().strip().splitlines()
    assert lines[0] == "path,class,seed"
    assert len(lines) == 3


def test_corpus_regeneration_byte_identical(tmp_path):
    spec_a = CorpusSpec("a", fix_spec(CLASS_A, size=24))
    spec_b = CorpusSpec("b", fix_spec(CLASS_B, size=24))
    d1, d2 = tmp_path / "one", tmp_path / "two"
    make_labeled_corpus(spec_a, spec_b, count=2, out_dir=d1, seed=7)
    make_labeled_corpus(spec_a, spec_b, count=2, out_dir=d2, seed=7)
    files1 = sorted(d1.rglob("*.png"))
    files2 = sorted(d2.rglob("*.png"))
    assert len(files1) == 4
    for f1, f2 in zip(files1, files2):
        assert f1.read_bytes() == f2.read_bytes()
