"""Blob classification: four shape features and a linear SVM.

Also hosts the synthetic car/pedestrian dataset generator and two
model-inspection tools, permutation importance and second-order
accumulated local effects (ALE).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import COLS, ROWS, BoundingBox, MotionBitmap, moments
from .detector import Blob

FEATURES = ("area", "var_y", "var_x", "top_y")
CAR, PEDESTRIAN = "car", "pedestrian"
CLASSES = (CAR, PEDESTRIAN)
MODEL_VERSION = 1


@dataclass(frozen=True)
class FeatureVec:
    area: float
    var_y: float
    var_x: float
    top_y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.area, self.var_y, self.var_x, self.top_y], dtype=np.float64)


def extract_features(blob: Blob) -> FeatureVec:
    m = blob.moments
    if not m.defined or m.m00 == 0:
        raise ValueError("cannot extract features from a blob with undefined moments")
    return FeatureVec(float(m.m00), m.var_y, m.var_x, float(blob.box.y0))


# ---------------------------------------------------------------- datasets

@dataclass
class LabeledDataset:
    features: np.ndarray  # (n, 4) in FEATURES order
    labels: np.ndarray  # (n,) of "car" / "pedestrian"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, len(FEATURES))
        self.labels = np.asarray(self.labels, dtype=object)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        bad = set(self.labels.tolist()) - set(CLASSES)
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.labels == PEDESTRIAN, 1.0, -1.0)

    def class_counts(self) -> dict[str, int]:
        return {c: int((self.labels == c).sum()) for c in CLASSES}

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], dict(self.provenance))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*FEATURES, "label"])
        for row, lab in zip(self.features, self.labels):
            w.writerow([repr(float(v)) for v in row] + [lab])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LabeledDataset":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != [*FEATURES, "label"]:
            raise ValueError(f"dataset header must be {','.join(FEATURES)},label; got {header}")
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields")
            feats.append([float(v) for v in row[:4]])
            labels.append(row[4])
        return cls(np.array(feats), np.array(labels, dtype=object), {"source": "csv"})


def split_dataset(ds: LabeledDataset, train_frac: float = 0.7, seed: int = 0) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified seeded split."""
    rng = np.random.default_rng(seed)
    tr, te = [], []
    for c in CLASSES:
        idx = np.flatnonzero(ds.labels == c)
        idx = idx[rng.permutation(len(idx))]
        cut = int(round(train_frac * len(idx)))
        tr.extend(idx[:cut].tolist())
        te.extend(idx[cut:].tolist())
    return ds.subset(np.sort(tr)), ds.subset(np.sort(te))


@dataclass(frozen=True)
class SynthParams:
    """Geometry of the synthetic blobs.

    Objects stand on a ground plane: the lower a blob's bottom row, the
    closer it is and the larger it appears. Sizes are given at full scale
    (bottom row 119) and shrink linearly to ``min_scale`` at ``horizon_row``.
    """

    horizon_row: int = 40
    min_scale: float = 0.5
    ped_width: tuple[float, float] = (7.0, 12.0)
    ped_height: tuple[float, float] = (21.0, 33.0)
    car_width: tuple[float, float] = (12.0, 19.0)
    car_height: tuple[float, float] = (11.0, 19.0)
    # fraction of silhouette pixels missed: walking figures are patchy, car bodies solid
    ped_dropout: tuple[float, float] = (0.45, 0.6)
    car_dropout: tuple[float, float] = (0.0, 0.1)

    def scale(self, bottom_row: float) -> float:
        t = (bottom_row - self.horizon_row) / (ROWS - 1 - self.horizon_row)
        return self.min_scale + (1.0 - self.min_scale) * t

    def dropout(self, cls: str, rng: np.random.Generator) -> float:
        return rng.uniform(*(self.ped_dropout if cls == PEDESTRIAN else self.car_dropout))

    def size(self, cls: str, bottom_row: float, rng: np.random.Generator) -> tuple[int, int]:
        wr, hr = (self.ped_width, self.ped_height) if cls == PEDESTRIAN else (self.car_width, self.car_height)
        s = self.scale(bottom_row)
        w = max(2, int(round(s * rng.uniform(*wr))))
        h = max(2, int(round(s * rng.uniform(*hr))))
        return w, h


def render_blob(w: int, h: int, bottom_row: int, left_col: int, dropout: float,
                rng: np.random.Generator) -> tuple[MotionBitmap, BoundingBox]:
    bits = np.zeros((ROWS, COLS), dtype=np.uint8)
    y0 = bottom_row - h + 1
    patch = (rng.random((h, w)) >= dropout).astype(np.uint8)
    # keep the silhouette's extent so the box stays (w, h)
    patch[0, :] = patch[-1, :] = 1
    patch[:, 0] = patch[:, -1] = 1
    bits[y0 : bottom_row + 1, left_col : left_col + w] = patch
    return MotionBitmap(bits), BoundingBox(left_col, y0, left_col + w - 1, bottom_row)


def synth_dataset(n_per_class: int = 132, seed: int = 0, params: Optional[SynthParams] = None) -> LabeledDataset:
    if n_per_class < 2:
        raise ValueError("n_per_class must be at least 2")
    params = params or SynthParams()
    rng = np.random.default_rng(seed)
    feats, labels = [], []
    for cls in CLASSES:
        for _ in range(n_per_class):
            bottom = int(rng.integers(params.horizon_row + 20, ROWS))
            w, h = params.size(cls, bottom, rng)
            left = int(rng.integers(0, COLS - w + 1))
            bm, box = render_blob(w, h, bottom, left, params.dropout(cls, rng), rng)
            f = extract_features(Blob(box, moments(bm, box)))
            feats.append(f.as_array())
            labels.append(cls)
    prov = {"generator": "synth_dataset", "n_per_class": n_per_class, "seed": seed,
            "params": {k: getattr(params, k) for k in params.__dataclass_fields__}}
    return LabeledDataset(np.array(feats), np.array(labels, dtype=object), prov)


# ---------------------------------------------------------------- the SVM

@dataclass(frozen=True)
class SvmModel:
    weights: tuple[float, ...]
    bias: float
    norm_lo: tuple[float, ...]
    norm_hi: tuple[float, ...]
    class_names: tuple[str, str] = CLASSES  # (negative, positive)

    def __post_init__(self):
        for arr in (self.weights, self.norm_lo, self.norm_hi):
            if len(arr) != len(FEATURES):
                raise ValueError(f"model vectors must have {len(FEATURES)} entries")
        if any(lo >= hi for lo, hi in zip(self.norm_lo, self.norm_hi)):
            raise ValueError("normalisation bounds need lo < hi for every feature")
        if tuple(self.class_names) != CLASSES:
            raise ValueError(f"class_names must be {CLASSES}")

    def normalize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        lo, hi = np.asarray(self.norm_lo), np.asarray(self.norm_hi)
        return np.clip((X - lo) / (hi - lo), 0.0, 1.0)

    def margins(self, X) -> np.ndarray:
        return self.normalize(X) @ np.asarray(self.weights) + self.bias

    def predict_labels(self, X) -> np.ndarray:
        return np.where(self.margins(X) > 0, PEDESTRIAN, CAR).astype(object)

    def accuracy(self, ds: LabeledDataset) -> float:
        return float((self.predict_labels(ds.features) == ds.labels).mean())

    def to_json(self) -> str:
        return json.dumps({
            "version": MODEL_VERSION,
            "kind": "linear_svm",
            "features": list(FEATURES),
            "weights": list(self.weights),
            "bias": self.bias,
            "norm_lo": list(self.norm_lo),
            "norm_hi": list(self.norm_hi),
            "class_names": {"negative": self.class_names[0], "positive": self.class_names[1]},
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        doc = json.loads(text)
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')!r}")
        if doc.get("features") != list(FEATURES):
            raise ValueError("model feature order does not match")
        try:
            names = doc["class_names"]
            return cls(tuple(map(float, doc["weights"])), float(doc["bias"]),
                       tuple(map(float, doc["norm_lo"])), tuple(map(float, doc["norm_hi"])),
                       (names["negative"], names["positive"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed model document: {e!r}") from None


def svm_predict(model: SvmModel, f: Union[FeatureVec, np.ndarray]) -> tuple[str, float]:
    x = f.as_array() if isinstance(f, FeatureVec) else np.asarray(f, dtype=np.float64)
    margin = float(model.margins(x[None, :])[0])
    return (PEDESTRIAN if margin > 0 else CAR), margin


def svm_train(ds: LabeledDataset, lam: float = 1e-4, epochs: int = 3000, seed: int = 0,
              batch_size: Optional[int] = None) -> SvmModel:
    """Pegasos hinge-loss subgradient descent on min-max normalised features.

    Full-batch by default, so the update only sees the average loss; with
    ``batch_size`` set, each epoch draws one seeded mini-batch. The bias is an
    extra constant input and is projected together with the weights. The
    returned weights are the average of the iterates over the second half of
    training.
    """
    counts = ds.class_counts()
    if min(counts.values()) == 0:
        raise ValueError(f"training needs both classes, got {counts}")
    if lam <= 0 or epochs < 1:
        raise ValueError("lam must be positive and epochs at least 1")
    lo = ds.features.min(axis=0)
    hi = ds.features.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    X = np.clip((ds.features - lo) / (hi - lo), 0.0, 1.0)
    X = np.hstack([X, np.ones((len(X), 1))])
    y = ds.signs
    n = len(y)
    rng = np.random.default_rng(seed)
    radius = 1.0 / np.sqrt(lam)

    w = np.zeros(X.shape[1])
    avg = np.zeros_like(w)
    n_avg = 0
    for t in range(1, epochs + 1):
        if batch_size is None:
            Xb, yb = X, y
        else:
            idx = rng.choice(n, size=min(batch_size, n), replace=False)
            Xb, yb = X[idx], y[idx]
        eta = 1.0 / (lam * t)
        viol = yb * (Xb @ w) < 1.0
        grad = (yb[viol, None] * Xb[viol]).sum(axis=0) / len(yb)
        w = (1.0 - eta * lam) * w + eta * grad
        norm = np.linalg.norm(w)
        if norm > radius:
            w *= radius / norm
        if t > epochs // 2:
            avg += w
            n_avg += 1
    w = avg / n_avg
    return SvmModel(tuple(float(v) for v in w[:-1]), float(w[-1]),
                    tuple(float(v) for v in lo), tuple(float(v) for v in hi))


# ---------------------------------------------------------------- inspection

def permutation_importance(model: SvmModel, ds: LabeledDataset, repeats: int = 10,
                           seed: int = 0) -> dict[str, tuple[float, float]]:
    """Mean and std of the accuracy drop when each feature column is shuffled."""
    if repeats < 2:
        raise ValueError("repeats must be at least 2")
    rng = np.random.default_rng(seed)
    base = model.accuracy(ds)
    out = {}
    for j, name in enumerate(FEATURES):
        drops = []
        for _ in range(repeats):
            X = ds.features.copy()
            X[:, j] = X[rng.permutation(len(X)), j]
            acc = float((model.predict_labels(X) == ds.labels).mean())
            drops.append(base - acc)
        out[name] = (float(np.mean(drops)), float(np.std(drops)))
    return out


@dataclass(frozen=True)
class AleGrid:
    feature1: str
    feature2: str
    edges1: np.ndarray  # bins + 1 quantile edges
    edges2: np.ndarray
    values: np.ndarray  # (bins, bins), rows follow feature1
    counts: np.ndarray  # points per cell


def _feature_index(f: Union[int, str]) -> int:
    return FEATURES.index(f) if isinstance(f, str) else int(f)


def _fill_sparse(local: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Empty cells take the local effect of the nearest populated cell."""
    filled = local.copy()
    pop = np.argwhere(counts > 0)
    for k, l in np.argwhere(counts == 0):
        d = ((pop - (k, l)) ** 2).sum(axis=1)
        # argmin picks the first minimum; pop is in row-major order
        pk, pl = pop[int(np.argmin(d))]
        filled[k, l] = local[pk, pl]
    return filled


def ale_second_order(model: Optional[SvmModel], ds: LabeledDataset, f1: Union[int, str] = "area",
                     f2: Union[int, str] = "var_y", bins: int = 10,
                     margin_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> AleGrid:
    """Second-order ALE of the margin for a feature pair on quantile bins.

    ``margin_fn`` replaces the model's margin; it lets tests probe functions
    a linear SVM cannot express.
    """
    if len(ds) == 0:
        raise ValueError("ALE needs a non-empty dataset")
    j1, j2 = _feature_index(f1), _feature_index(f2)
    if j1 == j2:
        raise ValueError("ALE needs two distinct features")
    fn = margin_fn if margin_fn is not None else model.margins
    X = ds.features
    q = np.linspace(0.0, 1.0, bins + 1)
    z1 = np.quantile(X[:, j1], q)
    z2 = np.quantile(X[:, j2], q)
    # cell k holds (z[k-1], z[k]]; the minimum falls into the first cell
    k1 = np.clip(np.searchsorted(z1, X[:, j1], side="left"), 1, bins) - 1
    k2 = np.clip(np.searchsorted(z2, X[:, j2], side="left"), 1, bins) - 1

    def at(a, b):
        Z = X.copy()
        Z[:, j1] = a
        Z[:, j2] = b
        return fn(Z)

    delta = (at(z1[k1 + 1], z2[k2 + 1]) - at(z1[k1], z2[k2 + 1])
             - at(z1[k1 + 1], z2[k2]) + at(z1[k1], z2[k2]))
    counts = np.zeros((bins, bins), dtype=np.int64)
    sums = np.zeros((bins, bins))
    np.add.at(counts, (k1, k2), 1)
    np.add.at(sums, (k1, k2), delta)
    local = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    local = _fill_sparse(local, counts)

    acc = local.cumsum(axis=0).cumsum(axis=1)  # value at each cell's upper corner
    padded = np.zeros((bins + 1, bins + 1))
    padded[1:, 1:] = acc

    # subtract the first-order effects contained in the accumulated surface
    def main_effect(diff: np.ndarray, weights: np.ndarray) -> np.ndarray:
        tot = weights.sum(axis=1)
        mean = np.where(tot > 0, (diff * weights).sum(axis=1) / np.where(tot > 0, tot, 1), diff.mean(axis=1))
        return np.cumsum(mean)

    eff1 = main_effect(padded[1:, 1:] - padded[:-1, 1:], counts)
    eff2 = main_effect((padded[1:, 1:] - padded[1:, :-1]).T, counts.T)
    values = acc - eff1[:, None] - eff2[None, :]
    values -= (values * counts).sum() / counts.sum()
    return AleGrid(FEATURES[j1], FEATURES[j2], z1, z2, values, counts)
