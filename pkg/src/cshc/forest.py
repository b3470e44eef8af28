"""Cost-sensitive hierarchical clustering: forest build and query.

Trees recursively split the validation samples so that each partition
agrees on a single best classifier; the splitting score is the gain in
max-per-child correct counts over the parent. Ensembling mirrors a
random forest: per-tree bootstrap multisets and feature subsets, both
derived from keyed substreams of one seed.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .rng import substream

FOREST_FORMAT = "cshc-forest/1"


@dataclass
class CshcConfig:
    n_trees: int = 50
    bootstrap_fraction: float = 0.8
    min_cluster_size: int = 2
    max_depth: int = 15
    min_improvement: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.bootstrap_fraction <= 1.0:
            raise ValueError("bootstrap_fraction must be in (0, 1]")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not 0.0 <= self.min_improvement < 1.0:
            raise ValueError("min_improvement must be in [0, 1)")

    def asdict(self):
        return {"n_trees": self.n_trees,
                "bootstrap_fraction": self.bootstrap_fraction,
                "min_cluster_size": self.min_cluster_size,
                "max_depth": self.max_depth,
                "min_improvement": self.min_improvement,
                "seed": self.seed}


def feature_subset_size(n_features):
    """round(2 * sqrt(F)), half rounded up, capped at F."""
    return min(n_features, int(math.floor(2.0 * math.sqrt(n_features) + 0.5)))


def bootstrap_draws(n_rows, fraction):
    """Number of with-replacement draws: ceil(fraction * rows)."""
    return max(1, int(math.ceil(fraction * n_rows - 1e-9)))


@dataclass
class ClusterNode:
    feature: int = -1
    threshold: float = 0.0
    left: "ClusterNode" = None
    right: "ClusterNode" = None
    member_rows: np.ndarray = None
    member_mult: np.ndarray = None
    correct_counts: np.ndarray = None
    size: float = 0.0

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class Tree:
    root: ClusterNode
    feature_subset: np.ndarray
    bootstrap_rows: np.ndarray
    bootstrap_mult: np.ndarray
    # flattened form for routing
    feat: np.ndarray = None
    thr: np.ndarray = None
    left: np.ndarray = None
    right: np.ndarray = None
    leaf_id: np.ndarray = None
    leaves: list = field(default_factory=list)
    leaf_counts: np.ndarray = None

    def flatten(self):
        feat, thr, left, right, leaf_id = [], [], [], [], []
        leaves = []
        stack = [(self.root, -1, False)]
        while stack:
            node, parent, is_left = stack.pop()
            i = len(feat)
            if parent >= 0:
                if is_left:
                    left[parent] = i
                else:
                    right[parent] = i
            feat.append(node.feature)
            thr.append(node.threshold)
            left.append(-1)
            right.append(-1)
            leaf_id.append(-1)
            if node.is_leaf:
                leaf_id[i] = len(leaves)
                leaves.append(node)
            else:
                stack.append((node.right, i, False))
                stack.append((node.left, i, True))
        self.feat = np.asarray(feat, dtype=np.int64)
        self.thr = np.asarray(thr, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.leaf_id = np.asarray(leaf_id, dtype=np.int64)
        self.leaves = leaves
        self.leaf_counts = np.vstack([lf.correct_counts for lf in leaves])


@dataclass
class Forest:
    trees: list
    config: CshcConfig
    n_classifiers: int
    truth: np.ndarray  # validation truth per correctness-matrix row
    n_rows: int
    n_features: int

    @property
    def n_trees(self):
        return len(self.trees)


@dataclass
class LeafBundle:
    """Per-tree leaves hit by one query point, plus their aggregation."""

    tree_leaf_ids: np.ndarray      # (T,)
    leaf_counts: np.ndarray        # (T, n) correct counts in each hit leaf
    rows: np.ndarray               # (k,) unique member rows, ascending
    mult: np.ndarray               # (k,) summed multiplicities
    aggregate_correct: np.ndarray  # (n,)
    dominant_true_class: int


def split_gain(member_rows, member_mult, feature, threshold, correct, features):
    """Gain of splitting a weighted cluster at (feature, threshold).

    Returns None for one-sided splits. Counts are multiplicity-weighted.
    """
    member_rows = np.asarray(member_rows, dtype=np.int64)
    mult = np.asarray(member_mult, dtype=np.float64)
    go_left = features[member_rows, feature] <= threshold
    if go_left.all() or not go_left.any():
        return None
    wc = mult[:, None] * correct[member_rows]
    total = wc.sum(axis=0)
    left = wc[go_left].sum(axis=0)
    return float(left.max() + (total - left).max() - total.max())


def grow_tree(member_rows, member_mult, depth, cfg, correct, features, allowed):
    """Recursively partition a weighted cluster; returns the subtree root.

    A node becomes a leaf when the depth limit is reached, no candidate
    split keeps both children at min_cluster_size, the parent's best
    count is already unbeatable (zero), or the best gain falls below
    min_improvement * parent best count.
    """
    member_rows = np.asarray(member_rows, dtype=np.int64)
    mult = np.asarray(member_mult, dtype=np.float64)
    wc = mult[:, None] * correct[member_rows]
    counts = wc.sum(axis=0)
    parent_best = counts.max()

    def leaf():
        return ClusterNode(member_rows=member_rows, member_mult=mult,
                           correct_counts=counts, size=float(mult.sum()))

    if depth >= cfg.max_depth or parent_best == 0.0:
        return leaf()
    vals = np.ascontiguousarray(features[member_rows][:, allowed])
    gain, col, thr = kernels.best_split(vals, np.ascontiguousarray(wc), mult,
                                        float(cfg.min_cluster_size))
    if col < 0 or gain < cfg.min_improvement * parent_best:
        return leaf()
    feature = int(allowed[col])
    go_left = features[member_rows, feature] <= thr
    node = ClusterNode(feature=feature, threshold=float(thr))
    node.left = grow_tree(member_rows[go_left], mult[go_left], depth + 1,
                          cfg, correct, features, allowed)
    node.right = grow_tree(member_rows[~go_left], mult[~go_left], depth + 1,
                           cfg, correct, features, allowed)
    return node


def build_forest(cm, ds, cfg):
    """Build the tree ensemble from a correctness matrix.

    Tree t draws ceil(fraction * M) bootstrap rows and a feature subset
    of size round(2*sqrt(F)) from the substream keyed by (seed, t).
    """
    if cm.n_classifiers < 2:
        raise ValueError("need at least 2 classifiers, got %d" % cm.n_classifiers)
    features = ds.features[cm.sample_indices]
    correct = cm.correct.astype(np.float64)
    M, F = features.shape
    k_feat = feature_subset_size(F)
    draws = bootstrap_draws(M, cfg.bootstrap_fraction)
    trees = []
    for t in range(cfg.n_trees):
        rng = substream(cfg.seed, t)
        picks = rng.integers(0, M, size=draws)
        counts = np.bincount(picks, minlength=M)
        rows = np.nonzero(counts)[0]
        mult = counts[rows].astype(np.float64)
        allowed = np.sort(rng.choice(F, size=k_feat, replace=False))
        root = grow_tree(rows, mult, 0, cfg, correct, features, allowed)
        tree = Tree(root=root, feature_subset=allowed,
                    bootstrap_rows=rows, bootstrap_mult=counts[rows].copy())
        tree.flatten()
        trees.append(tree)
    return Forest(trees=trees, config=cfg, n_classifiers=cm.n_classifiers,
                  truth=cm.truth.copy(), n_rows=M, n_features=F)


def _bundle_from_leaf_ids(forest, leaf_ids):
    T = forest.n_trees
    n = forest.n_classifiers
    leaf_counts = np.empty((T, n))
    row_parts, mult_parts = [], []
    for t, lid in enumerate(leaf_ids):
        lf = forest.trees[t].leaves[lid]
        leaf_counts[t] = lf.correct_counts
        row_parts.append(lf.member_rows)
        mult_parts.append(lf.member_mult)
    all_rows = np.concatenate(row_parts)
    all_mult = np.concatenate(mult_parts)
    rows, inverse = np.unique(all_rows, return_inverse=True)
    mult = np.bincount(inverse, weights=all_mult)
    class_support = np.bincount(forest.truth[rows], weights=mult)
    return LeafBundle(
        tree_leaf_ids=np.asarray(leaf_ids, dtype=np.int64),
        leaf_counts=leaf_counts,
        rows=rows,
        mult=mult,
        aggregate_correct=leaf_counts.sum(axis=0),
        dominant_true_class=int(np.argmax(class_support)),
    )


def query(forest, x):
    """LeafBundle for one feature vector (boundary values route left)."""
    x = np.asarray(x, dtype=np.float64)
    return query_batch(forest, x[None, :])[0]


def query_batch(forest, X):
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != forest.n_features:
        raise ValueError("query has %d features, forest expects %d"
                         % (X.shape[1], forest.n_features))
    leaf_ids = np.empty((X.shape[0], forest.n_trees), dtype=np.int64)
    for t, tree in enumerate(forest.trees):
        leaf_ids[:, t] = kernels.route(tree.feat, tree.thr, tree.left,
                                       tree.right, tree.leaf_id, X)
    return [_bundle_from_leaf_ids(forest, leaf_ids[q])
            for q in range(X.shape[0])]


def leaf_ranks(bundle):
    """Within-leaf classifier ranks and their cumulative sum.

    The best classifier in a leaf gets rank n, the worst rank 1; tied
    correct counts share the average of the ranks they span.
    """
    per_tree = rankdata(bundle.leaf_counts, method="average", axis=1)
    return per_tree, per_tree.sum(axis=0)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def forest_to_dict(forest):
    trees = []
    for tree in forest.trees:
        trees.append({
            "feature_subset": tree.feature_subset.tolist(),
            "bootstrap_rows": tree.bootstrap_rows.tolist(),
            "bootstrap_mult": tree.bootstrap_mult.tolist(),
            "feat": tree.feat.tolist(),
            "thr": tree.thr.tolist(),
            "left": tree.left.tolist(),
            "right": tree.right.tolist(),
            "leaf_id": tree.leaf_id.tolist(),
            "leaves": [{"rows": lf.member_rows.tolist(),
                        "mult": lf.member_mult.tolist(),
                        "counts": lf.correct_counts.tolist(),
                        "size": lf.size} for lf in tree.leaves],
        })
    return {"format": FOREST_FORMAT,
            "config": forest.config.asdict(),
            "n_classifiers": forest.n_classifiers,
            "n_rows": forest.n_rows,
            "n_features": forest.n_features,
            "truth": forest.truth.tolist(),
            "trees": trees}


def _rebuild_nodes(feat, thr, left, right, leaves_data, node=0):
    if left[node] < 0:
        lf = leaves_data[node]
        return ClusterNode(member_rows=np.asarray(lf["rows"], dtype=np.int64),
                           member_mult=np.asarray(lf["mult"], dtype=np.float64),
                           correct_counts=np.asarray(lf["counts"]),
                           size=float(lf["size"]))
    return ClusterNode(
        feature=int(feat[node]), threshold=float(thr[node]),
        left=_rebuild_nodes(feat, thr, left, right, leaves_data, left[node]),
        right=_rebuild_nodes(feat, thr, left, right, leaves_data, right[node]),
    )


def forest_from_dict(data):
    if data.get("format") != FOREST_FORMAT:
        raise ValueError("unsupported forest format %r" % data.get("format"))
    cfg = CshcConfig(**data["config"])
    trees = []
    for td in data["trees"]:
        feat = np.asarray(td["feat"], dtype=np.int64)
        thr = np.asarray(td["thr"], dtype=np.float64)
        left = np.asarray(td["left"], dtype=np.int64)
        right = np.asarray(td["right"], dtype=np.int64)
        leaf_id = np.asarray(td["leaf_id"], dtype=np.int64)
        leaves_by_node = {i: td["leaves"][leaf_id[i]]
                          for i in range(len(feat)) if leaf_id[i] >= 0}
        root = _rebuild_nodes(feat, thr, left, right, leaves_by_node)
        tree = Tree(root=root,
                    feature_subset=np.asarray(td["feature_subset"], dtype=np.int64),
                    bootstrap_rows=np.asarray(td["bootstrap_rows"], dtype=np.int64),
                    bootstrap_mult=np.asarray(td["bootstrap_mult"], dtype=np.int64))
        tree.flatten()
        trees.append(tree)
    return Forest(trees=trees, config=cfg,
                  n_classifiers=int(data["n_classifiers"]),
                  truth=np.asarray(data["truth"], dtype=np.int64),
                  n_rows=int(data["n_rows"]),
                  n_features=int(data["n_features"]))


def save_forest(forest, path):
    with open(path, "w") as fh:
        json.dump(forest_to_dict(forest), fh)


def load_forest(path):
    with open(path) as fh:
        return forest_from_dict(json.load(fh))
