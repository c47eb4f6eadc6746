"""Label-guided recursive k-means and region geometry.

Plain k-means groups inputs purely by proximity, so one cluster can mix
labels. The label-guided variant starts with k equal to the number of
distinct labels, then re-clusters every impure cluster with k set to the
number of labels it still contains, recursing until each cluster holds a
single label. Each pure cluster becomes a Region: centroid, maximum and
average member distance, and density (members per unit average distance).

``LabelGuidedKMeans`` wraps the same core behind the scikit-learn
estimator API so the partitioner composes with pipelines and model
selection utilities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import Dataset
from .errors import ClusteringError

L1 = "l1"
L2 = "l2"
METRICS = (L1, L2)


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError("metric must be one of %s, got %r" % (METRICS, metric))
    return metric


def distance(a, b, metric: str = L2) -> float:
    """Distance between two points under the L1 or L2 norm."""
    check_metric(metric)
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if metric == L1:
        return float(np.abs(d).sum())
    return float(np.sqrt((d * d).sum()))


def point_distances(X, c, metric: str = L2) -> np.ndarray:
    """Distances from each row of X to the single point c."""
    check_metric(metric)
    D = np.asarray(X, dtype=float) - np.asarray(c, dtype=float)
    if metric == L1:
        return np.abs(D).sum(axis=1)
    return np.sqrt((D * D).sum(axis=1))


def _distance_matrix(X, centroids, metric):
    diff = X[:, None, :] - centroids[None, :, :]
    if metric == L1:
        return np.abs(diff).sum(axis=2)
    return np.sqrt((diff * diff).sum(axis=2))


def _kmeanspp_init(X, k, metric, rng):
    # classic D^2 weighting, distances under the working metric
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d = np.min(_distance_matrix(X, X[chosen], metric), axis=1)
        w = d * d
        total = w.sum()
        if total <= 0.0:
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(int(rng.choice(remaining)))
            continue
        chosen.append(int(rng.choice(n, p=w / total)))
    return X[chosen].copy()


def kmeans(
    X,
    k: int,
    metric: str = L2,
    seed: int = 0,
    max_iters: int = 100,
    init: str = "random",
    track_inertia: bool = False,
):
    """Lloyd iteration returning ``[(centroid, member_index_array), ...]``.

    Initial centroids are k distinct data points drawn uniformly by seed
    (``init="k-means++"`` switches to D^2 seeding). Each point joins its
    nearest centroid, ties toward the lowest cluster index; centroids are
    recomputed as member means; iteration stops at an assignment fixpoint
    or after ``max_iters``. Clusters emptied along the way are dropped,
    so fewer than k clusters may come back.

    With ``track_inertia=True`` returns ``(clusters, inertia_history)``
    where the history holds the within-cluster sum of squared distances
    after each assignment step.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k <= 0:
        raise ValueError("k must be positive, got %d" % k)
    if k > n:
        raise ValueError("k=%d exceeds the number of points (%d)" % (k, n))
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    check_metric(metric)
    rng = np.random.default_rng(seed)
    if init == "k-means++":
        centroids = _kmeanspp_init(X, k, metric, rng)
    elif init == "random":
        centroids = X[rng.choice(n, size=k, replace=False)].copy()
    else:
        raise ValueError("init must be 'random' or 'k-means++', got %r" % (init,))

    assign = None
    history = []
    for _ in range(max_iters):
        dist = _distance_matrix(X, centroids, metric)
        new_assign = dist.argmin(axis=1)
        used = np.unique(new_assign)
        if used.size < centroids.shape[0]:
            remap = np.full(centroids.shape[0], -1, dtype=int)
            remap[used] = np.arange(used.size)
            new_assign = remap[new_assign]
            centroids = centroids[used]
        if track_inertia:
            nearest = np.min(dist, axis=1)
            history.append(float((nearest * nearest).sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centroids = np.stack(
            [X[assign == j].mean(axis=0) for j in range(centroids.shape[0])]
        )

    clusters = [
        (centroids[j], np.flatnonzero(assign == j))
        for j in range(centroids.shape[0])
    ]
    if track_inertia:
        return clusters, history
    return clusters


@dataclass
class Region:
    """A label-pure cluster treated as a candidate safe region."""

    id: int
    centroid: np.ndarray
    member_features: np.ndarray  # (n, dim)
    member_indices: np.ndarray  # rows into the source dataset
    label: int
    metric: str
    r_max: float  # max member distance to centroid
    r_avg: float  # mean member distance to centroid
    density: float  # members / r_avg, +inf when r_avg == 0

    @property
    def member_count(self) -> int:
        return int(self.member_features.shape[0])


def region_geometry(members, metric: str = L2):
    """Centroid, max/average member distance, and density for one cluster."""
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[0] == 0:
        raise ValueError("members must be a nonempty (n, dim) array")
    cen = members.mean(axis=0)
    dists = point_distances(members, cen, metric)
    r_max = float(dists.max())
    r_avg = float(dists.mean())
    density = float("inf") if r_avg == 0.0 else members.shape[0] / r_avg
    return cen, r_max, r_avg, density


def derive_seed(parent_seed: int, cluster_id: int) -> int:
    """Stable child seed so sibling re-clustering order never matters."""
    ss = np.random.SeedSequence(int(parent_seed), spawn_key=(int(cluster_id),))
    return int(ss.generate_state(1)[0])


def _conflicting_duplicates(X, y):
    _, inverse = np.unique(X, axis=0, return_inverse=True)
    for group in range(inverse.max() + 1):
        labels = np.unique(y[inverse == group])
        if labels.size > 1:
            row = X[inverse == group][0]
            return row, labels
    return None


def label_guided_cluster(
    ds: Dataset,
    metric: str = L2,
    seed: int = 0,
    max_depth: int = 32,
    max_iters: int = 100,
    init: str = "random",
) -> list[Region]:
    """Partition a dataset into label-pure Regions.

    Runs k-means with k = number of distinct labels, then recursively
    re-clusters every impure cluster (k = its own distinct-label count)
    until all clusters are pure or ``max_depth`` is hit. Child seeds are
    derived from ``(parent seed, cluster index)`` so results do not
    depend on traversal order.

    Raises ClusteringError if purity is unreachable: either duplicate
    feature rows carry conflicting labels, or the depth budget runs out
    (the error lists the unresolved recursion node ids).
    """
    check_metric(metric)
    X, y = ds.features, ds.labels
    conflict = _conflicting_duplicates(X, y)
    if conflict is not None:
        row, labels = conflict
        raise ClusteringError(
            "duplicate points %s carry conflicting labels %s; purity unreachable"
            % (np.round(row, 6).tolist(), labels.tolist())
        )

    regions: list[Region] = []
    stuck: list[int] = []
    queue = deque([(np.arange(len(ds)), int(seed), 0, 0)])
    next_node = 1
    while queue:
        idx, node_seed, depth, node_id = queue.popleft()
        labels_here = np.unique(y[idx])
        if labels_here.size == 1:
            members = X[idx]
            cen, r_max, r_avg, density = region_geometry(members, metric)
            regions.append(
                Region(
                    id=len(regions),
                    centroid=cen,
                    member_features=members,
                    member_indices=idx,
                    label=int(labels_here[0]),
                    metric=metric,
                    r_max=r_max,
                    r_avg=r_avg,
                    density=density,
                )
            )
            continue
        if depth >= max_depth:
            stuck.append(node_id)
            continue
        clusters = kmeans(
            X[idx], int(labels_here.size), metric=metric, seed=node_seed,
            max_iters=max_iters, init=init,
        )
        for ci, (_, members) in enumerate(clusters):
            queue.append(
                (idx[members], derive_seed(node_seed, ci), depth + 1, next_node)
            )
            next_node += 1
    if stuck:
        raise ClusteringError(
            "max_depth=%d exhausted with impure clusters remaining (node ids %s)"
            % (max_depth, stuck)
        )
    return regions


class LabelGuidedKMeans(ClusterMixin, BaseEstimator):
    """Scikit-learn estimator facade over :func:`label_guided_cluster`.

    ``fit(X, y)`` computes the label-pure partition; ``labels_`` holds
    the region index of every training row and ``regions_`` the Region
    objects. ``predict(X)`` assigns new rows to the nearest region
    centroid under the working metric.
    """

    def __init__(
        self,
        metric: str = L2,
        max_iters: int = 100,
        max_depth: int = 32,
        init: str = "random",
        random_state: int = 0,
    ):
        self.metric = metric
        self.max_iters = max_iters
        self.max_depth = max_depth
        self.init = init
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer):
            if np.any(y != y.astype(int)):
                raise ValueError("labels must be integers")
            y = y.astype(int)
        if y.min() < 0:
            raise ValueError("labels must be nonnegative")
        ds = Dataset(np.asarray(X, dtype=float), y, int(y.max()) + 1)
        self.regions_ = label_guided_cluster(
            ds,
            metric=self.metric,
            seed=self.random_state,
            max_depth=self.max_depth,
            max_iters=self.max_iters,
            init=self.init,
        )
        labels = np.empty(len(ds), dtype=int)
        for region in self.regions_:
            labels[region.member_indices] = region.id
        self.labels_ = labels
        self.cluster_centers_ = np.stack([r.centroid for r in self.regions_])
        self.region_labels_ = np.array([r.label for r in self.regions_])
        self.n_features_in_ = ds.dimension
        return self

    def fit_predict(self, X, y=None):
        # ClusterMixin's version drops y, which this estimator requires
        return self.fit(X, y).labels_

    def predict(self, X):
        check_is_fitted(self, "regions_")
        X = check_array(X)
        dist = _distance_matrix(
            np.asarray(X, dtype=float), self.cluster_centers_, self.metric
        )
        return dist.argmin(axis=1)
