import numpy as np
import pytest

from convtrace.features import FeatureSet, FeatureVector
from convtrace.synth import CorpusSpec, SyntheticSpec, make_labeled_corpus

# stationary planted kernels (causal mass 0.6, gaussian base) used for
# recovery fixtures; targets come from synth.effective_kernel
FIX3 = {(0, -1): 0.25, (-1, 0): 0.25, (-1, -1): 0.07, (1, -1): 0.03}
FIX5 = {(0, -1): 0.20, (-1, 0): 0.20, (-1, -1): 0.05, (1, -1): 0.05,
        (0, -2): 0.04, (-2, 0): 0.04, (-2, -2): 0.01, (2, -1): 0.01}

# full-spread mixed-sign kernels whose exact-relation planes admit a
# unique window fit (weights sum to 1, support touches all window borders)
EXACT3 = {(1, 0): 0.55, (-1, 0): 0.55, (0, 1): -0.05, (0, -1): -0.05}
EXACT5 = {(2, 0): 0.55, (-2, 0): 0.55, (0, 2): -0.05, (0, -2): -0.05}

# two well-separated class kernels for corpus fixtures
CLASS_A = FIX3
CLASS_B = {(0, -1): 0.03, (-1, 0): 0.07, (-1, -1): 0.25, (1, -1): 0.25}


def fix_spec(planted, size=256, noise=0.5, seed=0, n=3):
    return SyntheticSpec(width=size, height=size, kernel_size=n, planted=planted,
                         noise_sigma=noise, base="iid_gaussian", rng_seed=seed)


def feature_set(rows, labels, kernel_size=3, sources=None):
    """Zero-pad rows to the feature dimension of ``kernel_size``."""
    dim = 3 * (kernel_size ** 2 - 1)
    records = []
    for i, (row, label) in enumerate(zip(rows, labels)):
        values = np.zeros(dim)
        row = np.asarray(row, dtype=np.float64)
        values[:row.size] = row
        source = sources[i] if sources else f"mem://{i}"
        records.append(FeatureVector(kernel_size=kernel_size, values=values,
                                     label=label, source=source))
    return FeatureSet(kernel_size=kernel_size, records=records)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """Small two-class synthetic corpus shared by harness and CLI tests."""
    root = tmp_path_factory.mktemp("corpus")
    spec_a = CorpusSpec("alpha", fix_spec(CLASS_A, size=48))
    spec_b = CorpusSpec("beta", fix_spec(CLASS_B, size=48))
    make_labeled_corpus(spec_a, spec_b, count=10, out_dir=root, seed=0)
    return root
