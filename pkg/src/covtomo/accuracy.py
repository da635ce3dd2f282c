"""Scores a recovered tree against ground truth by triple classification.

For an ordered triple (i, j, k) of leaves, the recovered tree classifies it
correctly when the comparison "shared path of (i,j) at least as long as
shared path of (i,k)" comes out the same in both trees. The accuracy p is
the fraction of correct triples over the full |X|^3 cube, repeated indices
included; a self-share counts the leaf's full depth, which makes every
degenerate triple classify correctly in any pair of trees, so a
distinct-triples variant is reported alongside for sharper comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import NodeId, RoutingTree


def _shared_len(tree: RoutingTree, i: NodeId, j: NodeId) -> int:
    # like shared_path_length but defined on i == j as the leaf's depth
    if i == j:
        return tree.depth_links(i)
    return tree.depth_links(tree.lca(i, j))


def _check_leaves(recovered: RoutingTree, truth: RoutingTree, ids) -> None:
    for x in ids:
        if x not in recovered or not recovered.is_leaf(x):
            raise InputError(f"{x!r} is not a leaf of the recovered tree")
        if x not in truth or not truth.is_leaf(x):
            raise InputError(f"{x!r} is not a leaf of the truth tree")


def classify_triple(
    i: NodeId, j: NodeId, k: NodeId, recovered: RoutingTree, truth: RoutingTree
) -> int:
    """1 when both trees agree on whether the (i,j) shared path is at least
    as long as the (i,k) shared path, else 0."""
    _check_leaves(recovered, truth, (i, j, k))
    rec = _shared_len(recovered, i, j) >= _shared_len(recovered, i, k)
    tru = _shared_len(truth, i, j) >= _shared_len(truth, i, k)
    return 1 if rec == tru else 0


def shared_length_matrix(tree: RoutingTree, leaf_order) -> np.ndarray:
    """Matrix of pairwise shared-path lengths (links from the root to the
    LCA); the diagonal holds each leaf's depth."""
    ids = list(leaf_order)
    paths = [tree.path_from_root(x) for x in ids]
    depth = max(len(p) for p in paths)
    node_code = {}
    coded = np.full((len(ids), depth), -1, dtype=np.int64)
    for r, path in enumerate(paths):
        for d, node in enumerate(path):
            coded[r, d] = node_code.setdefault(node, len(node_code))
    # count common path-prefix nodes level by level; links = nodes - 1
    n = len(ids)
    common = np.zeros((n, n), dtype=np.int64)
    alive = np.ones((n, n), dtype=bool)
    for d in range(depth):
        col = coded[:, d]
        eq = (col[:, None] == col[None, :]) & (col[:, None] >= 0)
        alive &= eq
        common += alive
    return common - 1


def tomography_accuracy(
    recovered: RoutingTree,
    truth: RoutingTree,
    X,
    include_degenerate: bool = True,
) -> float:
    """Fraction of ordered leaf triples from X classified consistently by the
    two trees. With include_degenerate=False, triples with repeated indices
    are dropped (requires |X| >= 3)."""
    ids = sorted(set(X))
    if not ids:
        raise InputError("X must not be empty")
    _check_leaves(recovered, truth, ids)
    n = len(ids)
    p_rec = shared_length_matrix(recovered, ids)
    p_tru = shared_length_matrix(truth, ids)
    correct = 0
    for i in range(n):
        rec = p_rec[i][:, None] >= p_rec[i][None, :]
        tru = p_tru[i][:, None] >= p_tru[i][None, :]
        correct += int((rec == tru).sum())
    if include_degenerate:
        return correct / n**3
    if n < 3:
        raise InputError("distinct-triples accuracy needs at least 3 leaves")
    degenerate = n**3 - n * (n - 1) * (n - 2)
    return (correct - degenerate) / (n * (n - 1) * (n - 2))


@dataclass(frozen=True)
class AccuracyReport:
    """Aggregate triple-classification outcome for one recovered tree."""

    p: float
    p_distinct: float | None
    n_leaves: int


def score_trees(recovered: RoutingTree, truth: RoutingTree, X=None) -> AccuracyReport:
    """Convenience wrapper computing both accuracy variants over X (defaults
    to all shared leaves)."""
    ids = sorted(recovered.leaves & truth.leaves) if X is None else sorted(set(X))
    p = tomography_accuracy(recovered, truth, ids)
    p_distinct = (
        tomography_accuracy(recovered, truth, ids, include_degenerate=False)
        if len(ids) >= 3
        else None
    )
    return AccuracyReport(p=p, p_distinct=p_distinct, n_leaves=len(ids))
