"""Naive classifiers over feature sets: KNN, LDA, and SMO-trained SVMs.

Every predictor is deterministic.  KNN breaks distance ties by training
order, vote ties by smaller total distance then lexical class name.  The
SVM solves the soft-margin dual with Platt-style SMO using deterministic
working-set heuristics; multi-class problems go through one-vs-rest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClassTooSmallError,
    DimensionMismatchError,
    EmptyTrainingSetError,
    KTooLargeError,
    NoConvergenceError,
    NotBinaryError,
    SingularCovarianceError,
    VersionMismatchError,
)
from .features import FeatureSet, FeatureVector

MODEL_FORMAT = "convtrace-model"
MODEL_VERSION = 1


# -- K nearest neighbors -----------------------------------------------------

@dataclass
class KnnModel:
    k: int
    X: np.ndarray
    labels: list[str]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def knn_fit(train: FeatureSet, k: int) -> KnnModel:
    if len(train) == 0:
        raise EmptyTrainingSetError("KNN needs at least one training record")
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be odd and >= 1, got {k}")
    if k > len(train):
        raise KTooLargeError(f"k={k} exceeds {len(train)} training records")
    return KnnModel(k=k, X=train.matrix(), labels=train.labels())


def knn_predict(model: KnnModel, x: np.ndarray) -> str:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(
            f"query dimension {x.shape} != training dimension {model.dim}")
    d = np.sqrt(((model.X - x) ** 2).sum(axis=1))
    order = sorted(range(len(d)), key=lambda i: (d[i], i))[:model.k]
    votes: dict[str, int] = {}
    dist_sum: dict[str, float] = {}
    for i in order:
        lab = model.labels[i]
        votes[lab] = votes.get(lab, 0) + 1
        dist_sum[lab] = dist_sum.get(lab, 0.0) + float(d[i])
    best = max(votes.values())
    tied = [lab for lab, v in votes.items() if v == best]
    tied.sort(key=lambda lab: (dist_sum[lab], lab))
    return tied[0]


# -- linear discriminant analysis --------------------------------------------

@dataclass
class LdaModel:
    classes: list[str]
    means: np.ndarray            # (C, D)
    cov_inverse: np.ndarray      # (D, D)
    log_priors: np.ndarray       # (C,)
    shrinkage: float

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def lda_fit(train: FeatureSet, shrinkage: float = 1e-4) -> LdaModel:
    """Gaussian equal-covariance discriminant with pooled, shrunk covariance.

    Shrinkage blends toward a scaled identity: (1-l)*S + l*(trace(S)/D)*I.
    """
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in [0, 1]")
    classes = sorted(set(train.labels()))
    if len(classes) < 2:
        raise ClassTooSmallError("LDA needs at least 2 classes")
    X = train.matrix()
    y = np.array(train.labels())
    n, dim = X.shape
    means = np.empty((len(classes), dim))
    priors = np.empty(len(classes))
    pooled = np.zeros((dim, dim))
    for ci, name in enumerate(classes):
        rows = X[y == name]
        if rows.shape[0] < 2:
            raise ClassTooSmallError(f"class {name!r} has {rows.shape[0]} record(s); "
                                     "LDA needs >= 2 per class")
        means[ci] = rows.mean(axis=0)
        priors[ci] = rows.shape[0] / n
        centered = rows - means[ci]
        pooled += centered.T @ centered
    pooled /= (n - len(classes))
    if shrinkage > 0.0:
        pooled = (1.0 - shrinkage) * pooled \
            + shrinkage * (np.trace(pooled) / dim) * np.eye(dim)
    try:
        cov_inverse = np.linalg.inv(pooled)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            "pooled covariance is singular; raise shrinkage") from exc
    if not np.all(np.isfinite(cov_inverse)):
        raise SingularCovarianceError("pooled covariance inverse is not finite")
    return LdaModel(classes=classes, means=means, cov_inverse=cov_inverse,
                    log_priors=np.log(priors), shrinkage=shrinkage)


def lda_scores(model: LdaModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(
            f"query dimension {x.shape} != model dimension {model.dim}")
    proj = model.cov_inverse @ model.means.T           # (D, C)
    return x @ proj - 0.5 * np.einsum("cd,dc->c", model.means, proj) + model.log_priors


def lda_predict(model: LdaModel, x: np.ndarray) -> str:
    return model.classes[int(np.argmax(lda_scores(model, x)))]


# -- support vector machine (SMO) --------------------------------------------

SVM_KERNELS = ("linear", "rbf", "poly", "sigmoid")


@dataclass
class SvmParams:
    kernel: str = "linear"
    C: float = 1.0
    gamma: float | None = None   # None -> 1/D
    degree: int = 3
    coef0: float = 0.0
    tol: float = 1e-3
    max_passes: int = 1000

    def __post_init__(self):
        if self.kernel not in SVM_KERNELS:
            raise ValueError(f"kernel must be one of {SVM_KERNELS}, got {self.kernel!r}")
        if self.C <= 0:
            raise ValueError("C must be > 0")


@dataclass
class SvmModel:
    params: SvmParams
    gamma: float
    classes: list[str]           # [negative, positive]
    support_X: np.ndarray
    dual_coef: np.ndarray        # alpha_i * y_i on support vectors
    bias: float
    weights: np.ndarray | None   # primal weights, linear kernel only

    @property
    def dim(self) -> int:
        return self.support_X.shape[1]


def _kernel_matrix(params: SvmParams, gamma: float, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    G = A @ B.T
    if params.kernel == "linear":
        return G
    if params.kernel == "rbf":
        sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * G
        return np.exp(-gamma * np.maximum(sq, 0.0))
    if params.kernel == "poly":
        return (gamma * G + params.coef0) ** params.degree
    return np.tanh(gamma * G + params.coef0)


def _smo(K: np.ndarray, y: np.ndarray, params: SvmParams):
    """Platt's SMO with deterministic second-choice heuristics.

    Returns (alpha, bias) for the decision function f(x) = sum a_i y_i K + b.
    """
    n = K.shape[0]
    C, tol = params.C, params.tol
    alpha = np.zeros(n)
    b = 0.0
    # error cache: E_i = f(x_i) - y_i
    errors = -y.astype(np.float64)

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b
        if i1 == i2:
            return False
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = errors[i1], errors[i2]
        s = y1 * y2
        if s > 0:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        else:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        if L >= H:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0.0:
            a2_new = a2 + y2 * (E1 - E2) / eta
            a2_new = min(max(a2_new, L), H)
        else:
            # non-positive curvature (possible for sigmoid): check endpoints
            f1 = y1 * E1 - a1 * k11 - s * a2 * k12
            f2 = y2 * E2 - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            obj_l = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
            obj_h = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
            if obj_l < obj_h - 1e-12:
                a2_new = L
            elif obj_l > obj_h + 1e-12:
                a2_new = H
            else:
                a2_new = a2
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        # threshold update
        b1 = E1 + y1 * (a1_new - a1) * k11 + y2 * (a2_new - a2) * k12 + b
        b2 = E2 + y1 * (a1_new - a1) * k12 + y2 * (a2_new - a2) * k22 + b
        if 0.0 < a1_new < C:
            b_new = b1
        elif 0.0 < a2_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        delta1 = y1 * (a1_new - a1)
        delta2 = y2 * (a2_new - a2)
        errors[:] += delta1 * K[i1] + delta2 * K[i2] - (b_new - b)
        alpha[i1], alpha[i2] = a1_new, a2_new
        b = b_new
        errors[i1] = _f(i1) - y[i1]
        errors[i2] = _f(i2) - y[i2]
        return True

    def _f(i: int) -> float:
        return float((alpha * y) @ K[:, i] - b)

    def examine(i2: int) -> bool:
        y2, a2, E2 = y[i2], alpha[i2], errors[i2]
        r2 = E2 * y2
        if (r2 < -tol and a2 < C) or (r2 > tol and a2 > 0):
            non_bound = np.where((alpha > 0) & (alpha < C))[0]
            if len(non_bound) > 1:
                i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - E2))])
                if take_step(i1, i2):
                    return True
            for i1 in non_bound:
                if take_step(int(i1), i2):
                    return True
            for i1 in range(n):
                if take_step(i1, i2):
                    return True
        return False

    passes = 0
    examine_all = True
    changed = 0
    while passes < params.max_passes:
        passes += 1
        changed = 0
        candidates = range(n) if examine_all else \
            [int(i) for i in np.where((alpha > 0) & (alpha < C))[0]]
        for i2 in candidates:
            if examine(i2):
                changed += 1
        if examine_all:
            if changed == 0:
                return alpha, b
            examine_all = False
        elif changed == 0:
            examine_all = True
    # compute duality gap for the error report
    w_norm_sq = float(alpha @ (K * np.outer(y, y)) @ alpha)
    margins = (alpha * y) @ K - b
    hinge = np.maximum(0.0, 1.0 - y * margins).sum()
    primal = 0.5 * w_norm_sq + C * hinge
    dual = alpha.sum() - 0.5 * w_norm_sq
    raise NoConvergenceError(
        f"SMO did not satisfy KKT within {params.max_passes} passes",
        duality_gap=primal - dual)


def svm_fit(train: FeatureSet, params: SvmParams | None = None) -> SvmModel:
    """Train a binary soft-margin SVM; classes map to -1/+1 in sorted order."""
    params = params or SvmParams()
    classes = sorted(set(train.labels()))
    if len(classes) != 2:
        raise NotBinaryError(f"binary SVM needs exactly 2 classes, got {len(classes)}")
    X = train.matrix()
    y = np.where(np.array(train.labels()) == classes[1], 1.0, -1.0)
    return _svm_fit_pm(X, y, classes, params)


def _svm_fit_pm(X: np.ndarray, y: np.ndarray, classes: list[str],
                params: SvmParams) -> SvmModel:
    gamma = params.gamma if params.gamma is not None else 1.0 / X.shape[1]
    K = _kernel_matrix(params, gamma, X, X)
    alpha, bias = _smo(K, y, params)
    sv = alpha > 1e-12
    if not np.any(sv):
        sv = np.zeros_like(sv)
        sv[0] = True  # degenerate: keep one vector so the model stays usable
    model = SvmModel(params=params, gamma=gamma, classes=list(classes),
                     support_X=X[sv], dual_coef=(alpha * y)[sv], bias=bias,
                     weights=None)
    if params.kernel == "linear":
        model.weights = model.dual_coef @ model.support_X
    return model


def svm_decision(model: SvmModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatchError(
            f"query dimension {x.shape} != model dimension {model.dim}")
    if model.weights is not None:
        return float(model.weights @ x - model.bias)
    k = _kernel_matrix(model.params, model.gamma, model.support_X, x[None, :])
    return float(model.dual_coef @ k[:, 0] - model.bias)


def svm_predict(model: SvmModel, x: np.ndarray) -> str:
    return model.classes[1] if svm_decision(model, x) >= 0.0 else model.classes[0]


# -- one vs rest -------------------------------------------------------------

@dataclass
class OneVsRestModel:
    classes: list[str]
    models: list[SvmModel] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.models[0].dim


def one_vs_rest(train: FeatureSet, params: SvmParams | None = None) -> OneVsRestModel:
    """One binary SVM per class (class vs rest); prediction is argmax decision."""
    params = params or SvmParams()
    classes = sorted(set(train.labels()))
    if len(classes) < 2:
        raise ClassTooSmallError("one-vs-rest needs at least 2 classes")
    X = train.matrix()
    labels = np.array(train.labels())
    models = []
    for name in classes:
        y = np.where(labels == name, 1.0, -1.0)
        models.append(_svm_fit_pm(X, y, ["rest", name], params))
    return OneVsRestModel(classes=classes, models=models)


def ovr_predict(model: OneVsRestModel, x: np.ndarray) -> str:
    scores = [svm_decision(m, x) for m in model.models]
    best = max(scores)
    tied = sorted(name for name, sc in zip(model.classes, scores) if sc == best)
    return tied[0]


# -- prediction dispatch and evaluation ---------------------------------------

def predict(model, x: np.ndarray) -> str:
    if isinstance(model, KnnModel):
        return knn_predict(model, x)
    if isinstance(model, LdaModel):
        return lda_predict(model, x)
    if isinstance(model, SvmModel):
        return svm_predict(model, x)
    if isinstance(model, OneVsRestModel):
        return ovr_predict(model, x)
    raise TypeError(f"unknown model type {type(model).__name__}")


def model_classes(model) -> list[str]:
    if isinstance(model, KnnModel):
        seen = []
        for lab in model.labels:
            if lab not in seen:
                seen.append(lab)
        return sorted(seen)
    return sorted(model.classes)


@dataclass
class EvalReport:
    accuracy: float                  # percent
    classes: list[str]
    per_class_recall: dict[str, float]
    confusion: np.ndarray            # rows true, cols predicted
    config: dict

    def to_json(self) -> str:
        payload = {
            "accuracy": self.accuracy,
            "classes": self.classes,
            "per_class_recall": self.per_class_recall,
            "confusion": self.confusion.tolist(),
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def evaluate(model, test: FeatureSet, config: dict | None = None) -> EvalReport:
    """Accuracy, per-class recall and confusion matrix over a test set."""
    classes = model_classes(model)
    extra = [c for c in sorted(set(test.labels())) if c not in classes]
    classes = classes + extra
    index = {name: i for i, name in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for rec in test.records:
        pred = predict(model, rec.values)
        confusion[index[rec.label], index[pred]] += 1
    total = int(confusion.sum())
    correct = int(np.trace(confusion))
    accuracy = 100.0 * correct / total if total else 0.0
    recall = {}
    for name, i in index.items():
        row = confusion[i].sum()
        if row:
            recall[name] = 100.0 * confusion[i, i] / row
    return EvalReport(accuracy=accuracy, classes=classes,
                      per_class_recall=recall, confusion=confusion,
                      config=dict(config or {}))


# -- persistence --------------------------------------------------------------

def _arr(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def save_model(model, path, standardization=None) -> None:
    """Serialize a model (and optional feature scaler) as versioned JSON."""
    if isinstance(model, KnnModel):
        kind, payload = "knn", {"k": model.k, "X": _arr(model.X), "labels": model.labels}
    elif isinstance(model, LdaModel):
        kind, payload = "lda", {
            "classes": model.classes, "means": _arr(model.means),
            "cov_inverse": _arr(model.cov_inverse),
            "log_priors": _arr(model.log_priors), "shrinkage": model.shrinkage,
        }
    elif isinstance(model, SvmModel):
        kind, payload = "svm", _svm_payload(model)
    elif isinstance(model, OneVsRestModel):
        kind, payload = "ovr", {
            "classes": model.classes,
            "models": [_svm_payload(m) for m in model.models],
        }
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": kind,
           "payload": payload}
    if standardization is not None:
        doc["standardization"] = {"means": _arr(standardization.means),
                                  "stds": _arr(standardization.stds)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _svm_payload(model: SvmModel) -> dict:
    p = model.params
    return {
        "kernel": p.kernel, "C": p.C, "gamma": model.gamma, "degree": p.degree,
        "coef0": p.coef0, "tol": p.tol, "max_passes": p.max_passes,
        "classes": model.classes, "support_X": _arr(model.support_X),
        "dual_coef": _arr(model.dual_coef), "bias": model.bias,
        "weights": None if model.weights is None else _arr(model.weights),
    }


def _svm_from_payload(payload: dict) -> SvmModel:
    params = SvmParams(kernel=payload["kernel"], C=payload["C"],
                       gamma=payload["gamma"], degree=payload["degree"],
                       coef0=payload["coef0"], tol=payload["tol"],
                       max_passes=payload["max_passes"])
    return SvmModel(params=params, gamma=payload["gamma"],
                    classes=list(payload["classes"]),
                    support_X=np.array(payload["support_X"], dtype=np.float64),
                    dual_coef=np.array(payload["dual_coef"], dtype=np.float64),
                    bias=payload["bias"],
                    weights=None if payload["weights"] is None
                    else np.array(payload["weights"], dtype=np.float64))


def load_model(path):
    """Returns (model, standardization-or-None)."""
    from .features import Standardization

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise VersionMismatchError(
            f"{path}: expected {MODEL_FORMAT} v{MODEL_VERSION}, got "
            f"{doc.get('format')!r} v{doc.get('version')!r}")
    kind = doc["kind"]
    payload = doc["payload"]
    if kind == "knn":
        model = KnnModel(k=payload["k"], X=np.array(payload["X"], dtype=np.float64),
                         labels=list(payload["labels"]))
    elif kind == "lda":
        model = LdaModel(classes=list(payload["classes"]),
                         means=np.array(payload["means"], dtype=np.float64),
                         cov_inverse=np.array(payload["cov_inverse"], dtype=np.float64),
                         log_priors=np.array(payload["log_priors"], dtype=np.float64),
                         shrinkage=payload["shrinkage"])
    elif kind == "svm":
        model = _svm_from_payload(payload)
    elif kind == "ovr":
        model = OneVsRestModel(classes=list(payload["classes"]),
                               models=[_svm_from_payload(p) for p in payload["models"]])
    else:
        raise VersionMismatchError(f"{path}: unknown model kind {kind!r}")
    std = None
    if doc.get("standardization") is not None:
        std = Standardization(
            means=np.array(doc["standardization"]["means"], dtype=np.float64),
            stds=np.array(doc["standardization"]["stds"], dtype=np.float64))
    return model, std
