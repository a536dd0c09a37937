"""Instance space, datasets, the product metric on Z = X x Y, and adversary budgets.

Everything here is immutable after construction; transformations return new
objects, so all operations are safe to call from any number of workers.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

Array = np.ndarray

_LABEL_TOKEN = "label"


def _as_readonly_vector(values) -> Array:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"feature vector must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature vector contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Instance:
    """A single example z = (x, y); ``label`` is None for unsupervised data."""

    features: Array
    label: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _as_readonly_vector(self.features))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    @property
    def dim(self) -> int:
        return int(self.features.shape[0])

    def with_features(self, features) -> "Instance":
        return Instance(features, self.label)


def _infer_label_set(labels: Sequence[int]) -> frozenset:
    values = frozenset(int(v) for v in labels)
    if values <= {-1, 1}:
        return frozenset({-1, 1})
    if values and min(values) >= 1:
        return frozenset(range(1, max(values) + 1))
    return values


@dataclass(frozen=True)
class Dataset:
    """An ordered sample (z_1, ..., z_n); the empirical distribution puts mass 1/n on each.

    ``label_set`` is None for unlabeled data, otherwise the declared finite
    label universe (binary {-1,+1} or multi-class {1..k}).
    """

    instances: tuple
    feature_dim: int
    label_set: Optional[frozenset]

    def __post_init__(self) -> None:
        if not self.instances:
            raise ValueError("dataset must be nonempty")
        object.__setattr__(self, "instances", tuple(self.instances))
        for z in self.instances:
            if z.dim != self.feature_dim:
                raise ValueError(
                    f"instance dimension {z.dim} != declared feature_dim {self.feature_dim}"
                )
            if self.label_set is None:
                if z.label is not None:
                    raise ValueError("unlabeled dataset contains a labeled instance")
            else:
                if z.label is None:
                    raise ValueError("labeled dataset contains an unlabeled instance")
                if z.label not in self.label_set:
                    raise ValueError(f"label {z.label} outside declared set {sorted(self.label_set)}")

    @classmethod
    def from_arrays(cls, X, y=None, label_set=None) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array (n, d)")
        if y is None:
            instances = tuple(Instance(row) for row in X)
            return cls(instances, X.shape[1], None)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y lengths differ")
        if label_set is None:
            label_set = _infer_label_set(y.tolist())
        instances = tuple(Instance(row, int(lbl)) for row, lbl in zip(X, y))
        return cls(instances, X.shape[1], frozenset(label_set))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Instance]:
        return iter(self.instances)

    @property
    def labeled(self) -> bool:
        return self.label_set is not None

    def features_matrix(self) -> Array:
        return np.array([z.features for z in self.instances])

    def labels_array(self) -> Array:
        if not self.labeled:
            raise ValueError("dataset is unlabeled")
        return np.array([z.label for z in self.instances], dtype=int)

    def replace_features(self, X) -> "Dataset":
        """New dataset with the same labels and new feature rows (index aligned)."""
        X = np.asarray(X, dtype=float)
        if X.shape != (len(self), self.feature_dim):
            raise ValueError("replacement feature matrix has wrong shape")
        instances = tuple(z.with_features(row) for z, row in zip(self.instances, X))
        return Dataset(instances, self.feature_dim, self.label_set)


@dataclass(frozen=True)
class ProductMetric:
    """The metric d((x,y),(x',y')) = d_X(x,x') + 1{y != y'} on Z = X x Y.

    d_X is the p-norm of the displacement (``feature_norm``), which makes it
    translation invariant.  When ``kernel_sigma`` is set, d_X is instead the
    Gaussian feature-map displacement

        d_X(x, x') = sqrt(2 - 2 exp(-||x - x'||_2^2 / sigma^2)),

    also translation invariant.  ``feature_radius`` is the radius of the
    instance ball measured in d_X (for the kernel metric this is sqrt(2)/2,
    half the feature-map diameter), so diam(Z) = 2*feature_radius + 1{labeled}.

    Only the additive combination of feature and label parts is implemented;
    the general p-th power combination is not used anywhere downstream.
    """

    feature_norm: float = 2.0
    label_indicator: bool = True
    feature_radius: float = 1.0
    kernel_sigma: Optional[float] = None

    def __post_init__(self) -> None:
        if self.feature_norm < 1:
            raise ValueError("feature_norm must be >= 1")
        if self.feature_radius < 0:
            raise ValueError("feature_radius must be >= 0")
        if self.kernel_sigma is not None and self.kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be > 0")

    def d_features(self, x: Array, x2: Array) -> float:
        x = np.asarray(x, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if x.shape != x2.shape:
            raise ValueError("feature dimension mismatch")
        if self.kernel_sigma is not None:
            sq = float(np.sum((x - x2) ** 2))
            return float(np.sqrt(max(0.0, 2.0 - 2.0 * np.exp(-sq / self.kernel_sigma**2))))
        return float(np.linalg.norm(x - x2, ord=self.feature_norm))

    def d_features_batch(self, X: Array, x: Array) -> Array:
        """Distances from each row of X to the single point x."""
        X = np.asarray(X, dtype=float)
        x = np.asarray(x, dtype=float)
        diff = X - x[None, :]
        if self.kernel_sigma is not None:
            sq = np.sum(diff * diff, axis=1)
            return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * np.exp(-sq / self.kernel_sigma**2)))
        if self.feature_norm == 2.0:
            return np.sqrt(np.sum(diff * diff, axis=1))
        return np.linalg.norm(diff, ord=self.feature_norm, axis=1)

    def distance(self, z: Instance, z2: Instance) -> float:
        """d_Z(z, z2); raises on dimension or label-convention mismatch."""
        if z.dim != z2.dim:
            raise ValueError("instance dimensions differ")
        d = self.d_features(z.features, z2.features)
        if self.label_indicator:
            if z.label is None or z2.label is None:
                raise ValueError("labeled metric applied to unlabeled instance")
            d += 1.0 if z.label != z2.label else 0.0
        return d

    def diam(self) -> float:
        """Diameter bound of Z: 2*feature_radius + label indicator."""
        return 2.0 * self.feature_radius + (1.0 if self.label_indicator else 0.0)


def distance_z(z: Instance, z2: Instance, m: ProductMetric) -> float:
    return m.distance(z, z2)


def diam_z(m: ProductMetric) -> float:
    if m.feature_radius == 0 and not m.label_indicator:
        raise ValueError("degenerate metric: zero radius and no label part")
    return m.diam()


@dataclass(frozen=True)
class AdversaryBudget:
    """Perturbation set B = {v : ||v||_q <= epsilon_b}, closed, convex, origin symmetric."""

    epsilon_b: float
    ball_norm: float = 2.0

    def __post_init__(self) -> None:
        if self.epsilon_b < 0:
            raise ValueError("epsilon_b must be >= 0")
        if self.ball_norm < 1:
            raise ValueError("ball_norm must be >= 1")

    def contains(self, v: Array, tol: float = 1e-9) -> bool:
        return float(np.linalg.norm(np.asarray(v, float), ord=self.ball_norm)) <= self.epsilon_b + tol

    def project(self, v: Array) -> Array:
        """Euclidean projection of v onto B (q in {1, 2, inf} supported exactly)."""
        v = np.asarray(v, dtype=float)
        q = self.ball_norm
        eps = self.epsilon_b
        if q == np.inf:
            return np.clip(v, -eps, eps)
        if q == 2.0:
            nrm = float(np.linalg.norm(v))
            return v if nrm <= eps else v * (eps / nrm)
        if q == 1.0:
            return _project_l1(v, eps)
        raise ValueError(f"projection onto l{q} ball not supported")

    def dx_radius(self, metric: ProductMetric, dim: int) -> float:
        """sup over v in B of d_X(v, 0): the budget radius measured in the feature metric.

        For p-norm metrics this is epsilon_b * dim**max(0, 1/p - 1/q); for the
        kernel metric it is the feature-map image of the l2 radius of B.
        """
        q = self.ball_norm
        inv_q = 0.0 if q == np.inf else 1.0 / q
        if metric.kernel_sigma is not None:
            rho2 = self.epsilon_b * dim ** max(0.0, 0.5 - inv_q)
            return float(np.sqrt(max(0.0, 2.0 - 2.0 * np.exp(-(rho2**2) / metric.kernel_sigma**2))))
        p = metric.feature_norm
        inv_p = 0.0 if p == np.inf else 1.0 / p
        return self.epsilon_b * dim ** max(0.0, inv_p - inv_q)


def _project_l1(v: Array, radius: float) -> Array:
    # Duchi et al. sorted-cumsum projection onto the l1 ball.
    if float(np.abs(v).sum()) <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    cond = u - (css - radius) / ks > 0
    k = int(ks[cond][-1])
    theta = (css[k - 1] - radius) / k
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def project_l2_ball(x: Array, radius: float) -> Array:
    x = np.asarray(x, dtype=float)
    nrm = float(np.linalg.norm(x))
    return x if nrm <= radius else x * (radius / nrm)


def clip_to_l2_ball(X: Array, radius: float) -> Array:
    """Row-wise radial clipping of X onto the l2 ball of the given radius."""
    X = np.asarray(X, dtype=float)
    norms = np.sqrt(np.sum(X * X, axis=1))
    scale = np.ones_like(norms)
    over = norms > radius
    scale[over] = radius / norms[over]
    return X * scale[:, None]


# ---------------------------------------------------------------------------
# CSV ingestion / emission.  One row per instance, feature columns x0..x{d-1},
# optional trailing "label" column.  Floats are written with repr so that a
# round trip reproduces the dataset bit for bit.
# ---------------------------------------------------------------------------

def dataset_to_csv(data: Dataset, path, header_comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        cols = [f"x{i}" for i in range(data.feature_dim)]
        if data.labeled:
            cols.append(_LABEL_TOKEN)
        writer.writerow(cols)
        for z in data:
            row = [repr(float(v)) for v in z.features]
            if data.labeled:
                row.append(str(z.label))
            writer.writerow(row)


def dataset_from_csv(path, label_set=None) -> Dataset:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError(f"{path}: empty CSV") from None
    labeled = bool(header) and header[-1].strip() == _LABEL_TOKEN
    n_features = len(header) - (1 if labeled else 0)
    if n_features < 1:
        raise ValueError(f"{path}: no feature columns")
    features, labels = [], []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}: ragged row {row}")
        features.append([float(v) for v in row[:n_features]])
        if labeled:
            labels.append(int(row[-1]))
    if labeled:
        return Dataset.from_arrays(np.array(features), np.array(labels), label_set=label_set)
    return Dataset.from_arrays(np.array(features))
