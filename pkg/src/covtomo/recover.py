"""Static tomography: builds the routing tree from a DFS-ordered leaf list
and the covariance matrix by thresholded case analysis.

Leaves are processed left to right. For each new leaf the covariance with
its predecessor is compared against the predecessor pair's covariance using
the resolution threshold rho (the minimum covariance increment one extra
shared router can contribute):

* within rho        -> the new leaf shares exactly the predecessor's
                       routers: attach it as a sibling of the predecessor;
* at least rho more -> the shared path is strictly deeper: create a router
                       below the predecessor's parent holding both;
* at least rho less -> the branch point sits higher up: walk the
                       predecessor's ancestors for the farthest router whose
                       label still covers the target, attaching there or
                       inserting a hidden router just above it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .model import CovarianceMatrix, NodeId, RoutingTree


class Case(enum.Enum):
    SAME_SET = "same_set"
    DEEPER = "deeper"
    SHALLOWER = "shallower"


@dataclass(frozen=True)
class RecoveryConfig:
    """Recovery threshold: rho is the minimum single-router covariance
    increment, in ms^2."""

    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError(f"rho must be positive, got {self.rho}")


def auto_rho(cov: CovarianceMatrix, floor: float = 0.01) -> float:
    """Heuristic threshold when none is supplied: half the minimum positive
    gap between distinct covariance values in the matrix, never below
    ``floor``. Meant for clean (low-noise) matrices; noisy data wants an
    explicitly configured rho."""
    vals = np.unique(cov.values)
    gaps = np.diff(vals)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        return floor
    return max(floor, float(gaps.min()) / 2.0)


def classify_case(sigma_cur: float, sigma_prev: float, rho: float) -> Case:
    """Three-way threshold test. Boundary equalities (exactly rho apart)
    resolve to DEEPER, then SHALLOWER, matching the printed >= conditions."""
    if not rho > 0:
        raise InputError(f"rho must be positive, got {rho}")
    if sigma_cur - sigma_prev >= rho:
        return Case.DEEPER
    if sigma_prev - sigma_cur >= rho:
        return Case.SHALLOWER
    return Case.SAME_SET


def find_attachment_router(
    tree: RoutingTree, from_leaf: NodeId, sigma_target: float, rho: float
) -> tuple[NodeId, bool]:
    """Walk the leaf's ancestors toward the root and return the farthest one
    (closest to the root) whose covariance label still reaches
    ``sigma_target``, plus whether the match is within rho (an exact
    attachment point rather than evidence of a hidden router).

    Falls back to the root when no ancestor qualifies (only reachable when
    the target dips to zero or below under noise)."""
    if not tree.is_leaf(from_leaf):
        raise InputError(f"{from_leaf!r} is not a leaf")
    found = None
    for anc in tree.ancestors(from_leaf):
        if tree.router_cov.get(anc, 0.0) >= sigma_target:
            found = anc
    node = found if found is not None else tree.root
    exact = abs(tree.router_cov.get(node, 0.0) - sigma_target) < rho
    return node, exact


def _attach_shallower(
    tree: RoutingTree, prev_leaf: NodeId, new_leaf: NodeId, sigma: float, rho: float
) -> None:
    r_star, exact = find_attachment_router(tree, prev_leaf, sigma, rho)
    if exact or tree.parent(r_star) is None:
        # direct attachment; the root branch also covers the degenerate
        # negative-target fallback where no insertion point exists above
        tree.add_leaf(new_leaf, r_star)
        return
    if tree.router_cov.get(r_star, 0.0) >= sigma + rho:
        # hidden router between r_star and its parent
        parent_cov = tree.router_cov.get(tree.parent(r_star), 0.0)
        hidden = tree.insert_router_above(r_star, max(sigma, parent_cov))
        tree.add_leaf(new_leaf, hidden)
    else:
        tree.add_leaf(new_leaf, r_star)


def recover_tree(
    source: NodeId,
    ordered_leaves,
    cov: CovarianceMatrix,
    config: RecoveryConfig | None = None,
) -> RoutingTree:
    """Recover the routing tree rooted at ``source`` over leaves given in an
    estimated DFS order.

    The first two leaves bootstrap a fresh router labeled with their pair
    covariance (the case rules need a previous pair to compare against);
    every later leaf dispatches on classify_case. Router labels record the
    covariance that created them, clamped to the parent's label so the tree
    stays monotone even under measurement noise.
    """
    leaves = list(ordered_leaves)
    if not leaves:
        raise InputError("need at least one leaf")
    if len(set(leaves)) != len(leaves):
        raise InputError("duplicate leaf in order")
    for leaf in leaves:
        cov.index(leaf)  # raises InputError for unknown ids
    if config is None:
        config = RecoveryConfig(auto_rho(cov))
    rho = config.rho

    tree = RoutingTree(source)
    if len(leaves) == 1:
        tree.add_leaf(leaves[0], source)
        return tree

    sigma_prev = cov.get(leaves[0], leaves[1])
    boot = tree.add_router(source, max(sigma_prev, 0.0))
    tree.add_leaf(leaves[0], boot)
    tree.add_leaf(leaves[1], boot)

    for i in range(2, len(leaves)):
        new_leaf = leaves[i]
        prev_leaf = leaves[i - 1]
        sigma_cur = cov.get(new_leaf, prev_leaf)
        case = classify_case(sigma_cur, sigma_prev, rho)
        if case is Case.SAME_SET:
            tree.add_leaf(new_leaf, tree.parent(prev_leaf))
        elif case is Case.DEEPER:
            parent_cov = tree.router_cov.get(tree.parent(prev_leaf), 0.0)
            router = tree.insert_router_above(prev_leaf, max(sigma_cur, parent_cov))
            tree.add_leaf(new_leaf, router)
        else:
            _attach_shallower(tree, prev_leaf, new_leaf, sigma_cur, rho)
        sigma_prev = sigma_cur
    return tree
