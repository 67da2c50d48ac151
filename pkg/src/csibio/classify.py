"""From-scratch classifiers behind one train/predict-probability interface.

Five model families: k-nearest neighbors, Gaussian naive Bayes, a CART
decision tree (Gini impurity, midpoint thresholds), a bootstrap random
forest with sqrt-feature subsampling, and a feed-forward network with
ReLU hidden layers, softmax output, and momentum SGD.

Everything is deterministic given (spec, data, seed): bootstrap draws,
feature subsampling, network init, and batch shuffles all derive from
seeded generators; tie-breaks are resolved toward lower thresholds and
lower feature indices.

Models that need scale-comparable features (knn, gaussian_nb, mlp)
expect pre-standardized inputs; the evaluation harness owns that step.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFeature, SchemaMismatch, SingleClass
from .model import FeatureMatrix, ScoreMatrix

MODEL_KINDS = ("knn", "gaussian_nb", "decision_tree", "random_forest", "mlp")

_DEFAULTS: dict[str, dict] = {
    "knn": {"k": 5, "weights": "uniform"},
    "gaussian_nb": {"var_smoothing": 1e-9},
    "decision_tree": {"max_depth": None, "min_samples_split": 2},
    "random_forest": {
        "n_trees": 50,
        "max_depth": None,
        "min_samples_split": 2,
        "max_features": "sqrt",
        "bootstrap": True,
    },
    "mlp": {
        "hidden_layers": (64,),
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 32,
        "max_epochs": 300,
        "patience": 20,
        "tol": 1e-6,
    },
}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.hyperparams) - set(merged)
        if unknown:
            raise ValueError(f"unknown {self.kind} hyperparams: {sorted(unknown)}")
        merged.update(self.hyperparams)
        if self.kind == "mlp":
            merged["hidden_layers"] = tuple(int(h) for h in merged["hidden_layers"])
        object.__setattr__(self, "hyperparams", merged)
        self._validate()

    def _validate(self):
        hp = self.hyperparams
        if self.kind == "knn":
            if hp["k"] < 1:
                raise ValueError("knn requires k >= 1")
            if hp["weights"] not in ("uniform", "distance"):
                raise ValueError("knn weights must be 'uniform' or 'distance'")
        elif self.kind in ("decision_tree", "random_forest"):
            if hp["max_depth"] is not None and hp["max_depth"] < 1:
                raise ValueError("max_depth must be >= 1 or None for unlimited")
            if self.kind == "random_forest" and hp["n_trees"] < 1:
                raise ValueError("random_forest requires n_trees >= 1")
        elif self.kind == "mlp":
            layers = hp["hidden_layers"]
            if len(layers) < 1 or any(h < 1 for h in layers):
                raise ValueError("mlp requires >= 1 hidden layer with sizes >= 1")

    def name(self) -> str:
        return self.kind


def _validate_training(x: np.ndarray, codes: np.ndarray, n_classes: int):
    if n_classes < 2:
        raise SingleClass("training labels contain fewer than two classes")
    if not np.all(np.isfinite(x)):
        raise DegenerateFeature("feature matrix contains non-finite values")
    if x.shape[0] < n_classes:
        raise DegenerateFeature("need at least one row per class")


# --- k-nearest neighbors ----------------------------------------------------

class _Knn:
    def __init__(self, x, codes, n_classes, k, weights):
        self.x = x
        self.codes = codes
        self.n_classes = n_classes
        self.k = min(k, x.shape[0])
        self.weights = weights

    def predict_proba(self, x):
        d2 = np.sum((x[:, None, :] - self.x[None, :, :]) ** 2, axis=2)
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        probs = np.zeros((x.shape[0], self.n_classes))
        for i in range(x.shape[0]):
            idx = order[i]
            if self.weights == "distance":
                dist = np.sqrt(d2[i, idx])
                exact = dist == 0
                w = 1.0 / dist[~exact] if not exact.any() else None
                if exact.any():
                    np.add.at(probs[i], self.codes[idx[exact]], 1.0)
                else:
                    np.add.at(probs[i], self.codes[idx], w)
            else:
                np.add.at(probs[i], self.codes[idx], 1.0)
            probs[i] /= probs[i].sum()
        return probs

    def arrays(self):
        return {"x": self.x, "codes": self.codes.astype(np.int64)}

    @staticmethod
    def from_arrays(arrays, hp, n_classes):
        return _Knn(arrays["x"], arrays["codes"].astype(np.intp), n_classes,
                    hp["k"], hp["weights"])


# --- Gaussian naive Bayes ---------------------------------------------------

class _GaussianNb:
    def __init__(self, priors, means, variances):
        self.priors = priors
        self.means = means
        self.variances = variances

    @staticmethod
    def fit(x, codes, n_classes, var_smoothing):
        n, d = x.shape
        priors = np.bincount(codes, minlength=n_classes) / n
        means = np.zeros((n_classes, d))
        variances = np.zeros((n_classes, d))
        for c in range(n_classes):
            xc = x[codes == c]
            means[c] = xc.mean(axis=0)
            variances[c] = xc.var(axis=0)
        # Variance floor keeps zero-variance features usable.
        floor = var_smoothing * max(float(x.var(axis=0).max()), 1.0)
        variances += floor
        return _GaussianNb(priors, means, variances)

    def predict_proba(self, x):
        log_lik = -0.5 * (
            np.log(2.0 * np.pi * self.variances[None, :, :])
            + (x[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]
        ).sum(axis=2)
        log_post = log_lik + np.log(self.priors)[None, :]
        log_post -= log_post.max(axis=1, keepdims=True)
        probs = np.exp(log_post)
        return probs / probs.sum(axis=1, keepdims=True)

    def arrays(self):
        return {"priors": self.priors, "means": self.means, "variances": self.variances}

    @staticmethod
    def from_arrays(arrays, hp, n_classes):
        return _GaussianNb(arrays["priors"], arrays["means"], arrays["variances"])


# --- CART decision tree -----------------------------------------------------

class _Tree:
    """Flat-array binary tree: feature < 0 marks a leaf."""

    def __init__(self, feature, threshold, left, right, probs):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.probs = probs

    @staticmethod
    def fit(x, codes, n_classes, max_depth, min_samples_split, max_features, rng):
        n, d = x.shape
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        probs: list[np.ndarray] = []

        def leaf(idx):
            counts = np.bincount(codes[idx], minlength=n_classes).astype(float)
            node = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            probs.append(counts / counts.sum())
            return node

        def grow(idx, depth):
            counts = np.bincount(codes[idx], minlength=n_classes)
            if (
                (max_depth is not None and depth >= max_depth)
                or idx.shape[0] < min_samples_split
                or np.count_nonzero(counts) <= 1
            ):
                return leaf(idx)
            split = _best_split(x, codes, idx, n_classes, max_features, rng)
            if split is None:
                return leaf(idx)
            f, thr = split
            node = len(feature)
            feature.append(f)
            threshold.append(thr)
            left.append(-1)
            right.append(-1)
            probs.append(np.zeros(n_classes))
            go_left = x[idx, f] <= thr
            left[node] = grow(idx[go_left], depth + 1)
            right[node] = grow(idx[~go_left], depth + 1)
            return node

        grow(np.arange(n), 0)
        return _Tree(
            np.array(feature, dtype=np.int64),
            np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64),
            np.array(right, dtype=np.int64),
            np.vstack(probs),
        )

    def predict_proba(self, x):
        out = np.empty(x.shape[0], dtype=np.intp)
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if self.feature[node] < 0:
                out[idx] = node
                continue
            go_left = x[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], idx[go_left]))
            stack.append((self.right[node], idx[~go_left]))
        return self.probs[out]

    def arrays(self, prefix=""):
        return {
            f"{prefix}feature": self.feature,
            f"{prefix}threshold": self.threshold,
            f"{prefix}left": self.left,
            f"{prefix}right": self.right,
            f"{prefix}probs": self.probs,
        }

    @staticmethod
    def from_arrays(arrays, prefix=""):
        return _Tree(
            arrays[f"{prefix}feature"],
            arrays[f"{prefix}threshold"],
            arrays[f"{prefix}left"],
            arrays[f"{prefix}right"],
            arrays[f"{prefix}probs"],
        )


def _best_split(x, codes, idx, n_classes, max_features, rng):
    """Lowest weighted Gini cost over candidate (feature, midpoint) splits.

    Ties resolve toward the lower threshold, then the lower feature
    index (features are scanned in ascending order).
    """
    n, d = idx.shape[0], x.shape[1]
    if max_features is None or max_features >= d:
        candidates = range(d)
    else:
        candidates = np.sort(rng.choice(d, size=max_features, replace=False))
    best = None  # (cost, threshold, feature)
    onehot = np.zeros((n, n_classes))
    for f in candidates:
        col = x[idx, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        boundaries = np.flatnonzero(xs[:-1] != xs[1:])
        if boundaries.size == 0:
            continue
        onehot[:] = 0.0
        onehot[np.arange(n), codes[idx[order]]] = 1.0
        prefix = np.cumsum(onehot, axis=0)
        total = prefix[-1]
        nl = (boundaries + 1).astype(float)
        nr = n - nl
        left_counts = prefix[boundaries]
        right_counts = total[None, :] - left_counts
        gini_l = 1.0 - np.sum((left_counts / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((right_counts / nr[:, None]) ** 2, axis=1)
        cost = (nl * gini_l + nr * gini_r) / n
        thresholds = 0.5 * (xs[boundaries] + xs[boundaries + 1])
        j = np.lexsort((thresholds, cost))[0]
        key = (cost[j], thresholds[j], int(f))
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return best[2], best[1]


# --- random forest ------------------------------------------------------------

class _Forest:
    def __init__(self, trees):
        self.trees = trees

    @staticmethod
    def fit(x, codes, n_classes, hp, seed):
        n, d = x.shape
        if hp["max_features"] == "sqrt":
            max_features = max(1, int(np.sqrt(d)))
        else:
            max_features = hp["max_features"]
        trees = []
        for i in range(hp["n_trees"]):
            rng = np.random.default_rng([seed, i])
            idx = rng.integers(0, n, size=n) if hp["bootstrap"] else np.arange(n)
            trees.append(
                _Tree.fit(
                    x[idx], codes[idx], n_classes,
                    hp["max_depth"], hp["min_samples_split"], max_features, rng,
                )
            )
        return _Forest(trees)

    def predict_proba(self, x):
        acc = self.trees[0].predict_proba(x).copy()
        for tree in self.trees[1:]:
            acc += tree.predict_proba(x)
        return acc / len(self.trees)

    def arrays(self):
        out = {"n_trees": np.array([len(self.trees)], dtype=np.int64)}
        for i, tree in enumerate(self.trees):
            out.update(tree.arrays(prefix=f"t{i}_"))
        return out

    @staticmethod
    def from_arrays(arrays, hp, n_classes):
        n_trees = int(arrays["n_trees"][0])
        return _Forest([_Tree.from_arrays(arrays, prefix=f"t{i}_") for i in range(n_trees)])


# --- multi-layer perceptron ---------------------------------------------------

def mlp_init(n_features: int, hidden_layers: Sequence[int], n_classes: int,
             rng: np.random.Generator) -> list[np.ndarray]:
    """He-initialized parameter list [W0, b0, W1, b1, ...]."""
    sizes = [n_features, *hidden_layers, n_classes]
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def mlp_forward(params: list[np.ndarray], x: np.ndarray):
    """Return (softmax probabilities, list of post-ReLU activations)."""
    activations = [x]
    h = x
    n_layers = len(params) // 2
    for layer in range(n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        z = h @ w + b
        h = np.maximum(z, 0.0) if layer < n_layers - 1 else z
        activations.append(h)
    logits = activations[-1]
    logits = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(logits)
    probs = expz / expz.sum(axis=1, keepdims=True)
    return probs, activations


def mlp_loss_and_grads(params: list[np.ndarray], x: np.ndarray, codes: np.ndarray,
                       n_classes: int) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its analytic gradient for every parameter."""
    n = x.shape[0]
    probs, activations = mlp_forward(params, x)
    loss = float(-np.mean(np.log(probs[np.arange(n), codes] + 1e-300)))
    delta = probs.copy()
    delta[np.arange(n), codes] -= 1.0
    delta /= n
    grads: list[np.ndarray] = [None] * len(params)
    n_layers = len(params) // 2
    for layer in range(n_layers - 1, -1, -1):
        a_prev = activations[layer]
        grads[2 * layer] = a_prev.T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params[2 * layer].T) * (activations[layer] > 0)
    return loss, grads


class _Mlp:
    def __init__(self, params, n_classes):
        self.params = params
        self.n_classes = n_classes
        self.loss_curve: list[float] = []

    @staticmethod
    def fit(x, codes, n_classes, hp, seed):
        rng = np.random.default_rng(seed)
        params = mlp_init(x.shape[1], hp["hidden_layers"], n_classes, rng)
        velocity = [np.zeros_like(p) for p in params]
        model = _Mlp(params, n_classes)
        n = x.shape[0]
        batch = min(hp["batch_size"], n)
        best_loss = np.inf
        stale = 0
        for _epoch in range(hp["max_epochs"]):
            order = rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                _, grads = mlp_loss_and_grads(params, x[idx], codes[idx], n_classes)
                for p, v, g in zip(params, velocity, grads):
                    v *= hp["momentum"]
                    v -= hp["learning_rate"] * g
                    p += v
            loss, _ = mlp_loss_and_grads(params, x, codes, n_classes)
            model.loss_curve.append(loss)
            if loss < best_loss - hp["tol"]:
                best_loss = loss
                stale = 0
            else:
                stale += 1
                if stale >= hp["patience"]:
                    break
        return model

    def predict_proba(self, x):
        probs, _ = mlp_forward(self.params, x)
        return probs

    def arrays(self):
        out = {"n_params": np.array([len(self.params)], dtype=np.int64)}
        for i, p in enumerate(self.params):
            out[f"p{i}"] = p
        return out

    @staticmethod
    def from_arrays(arrays, hp, n_classes):
        n_params = int(arrays["n_params"][0])
        return _Mlp([arrays[f"p{i}"] for i in range(n_params)], n_classes)


_IMPLS = {
    "knn": _Knn,
    "gaussian_nb": _GaussianNb,
    "decision_tree": _Tree,
    "random_forest": _Forest,
    "mlp": _Mlp,
}


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec
    class_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    impl: object

    def predict_proba(self, matrix: FeatureMatrix) -> ScoreMatrix:
        """Score every row; true labels are carried through from the matrix."""
        if matrix.feature_names != self.feature_names:
            raise SchemaMismatch(
                f"expected features {self.feature_names}, got {matrix.feature_names}"
            )
        probs = self.impl.predict_proba(matrix.values)
        return ScoreMatrix(self.class_ids, probs, matrix.labels)


def fit(spec: ModelSpec, matrix: FeatureMatrix, y: Sequence[str] | None = None) -> TrainedModel:
    """Train one model on a feature matrix; labels default to the matrix's own."""
    labels = tuple(y) if y is not None else matrix.labels
    class_ids, codes = np.unique(np.asarray(labels), return_inverse=True)
    x = matrix.values
    _validate_training(x, codes, len(class_ids))
    hp = spec.hyperparams
    if spec.kind == "knn":
        impl = _Knn(x.copy(), codes, len(class_ids), hp["k"], hp["weights"])
    elif spec.kind == "gaussian_nb":
        impl = _GaussianNb.fit(x, codes, len(class_ids), hp["var_smoothing"])
    elif spec.kind == "decision_tree":
        impl = _Tree.fit(
            x, codes, len(class_ids), hp["max_depth"], hp["min_samples_split"],
            None, np.random.default_rng(spec.seed),
        )
    elif spec.kind == "random_forest":
        impl = _Forest.fit(x, codes, len(class_ids), hp, spec.seed)
    else:
        impl = _Mlp.fit(x, codes, len(class_ids), hp, spec.seed)
    return TrainedModel(spec, tuple(str(c) for c in class_ids), matrix.feature_names, impl)


# --- versioned binary container ----------------------------------------------

_MODEL_MAGIC = b"CSIBMDL1"


def save_model(model: TrainedModel, path) -> None:
    """Write a deterministic versioned container: JSON header + raw arrays."""
    arrays = model.impl.arrays()
    manifest = []
    blobs = []
    for name in arrays:
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<")
        blobs.append(arr.astype(dtype, copy=False).tobytes())
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype.str})
    header = {
        "format_version": 1,
        "kind": model.spec.kind,
        "hyperparams": {
            k: (list(v) if isinstance(v, tuple) else v)
            for k, v in model.spec.hyperparams.items()
        },
        "seed": model.spec.seed,
        "class_ids": list(model.class_ids),
        "feature_names": list(model.feature_names),
        "arrays": manifest,
    }
    payload = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MODEL_MAGIC))
        if magic != _MODEL_MAGIC:
            raise ValueError(f"not a model container: bad magic {magic!r}")
        (header_len,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(header_len)).decode())
        if header["format_version"] != 1:
            raise ValueError(f"unsupported model format {header['format_version']}")
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            dtype = np.dtype(entry["dtype"])
            raw = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
    hp = {
        k: (tuple(v) if isinstance(v, list) else v) for k, v in header["hyperparams"].items()
    }
    spec = ModelSpec(header["kind"], hp, header["seed"])
    n_classes = len(header["class_ids"])
    if spec.kind == "knn":
        impl = _Knn.from_arrays(arrays, spec.hyperparams, n_classes)
    elif spec.kind == "gaussian_nb":
        impl = _GaussianNb.from_arrays(arrays, spec.hyperparams, n_classes)
    elif spec.kind == "decision_tree":
        impl = _Tree.from_arrays(arrays)
    elif spec.kind == "random_forest":
        impl = _Forest.from_arrays(arrays, spec.hyperparams, n_classes)
    else:
        impl = _Mlp.from_arrays(arrays, spec.hyperparams, n_classes)
    return TrainedModel(
        spec, tuple(header["class_ids"]), tuple(header["feature_names"]), impl
    )
