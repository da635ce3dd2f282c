"""Core domain types shared by all modules, plus the topology queries used by
recovery and scoring.

Conventions used throughout the package:

* timestamps are integer microseconds,
* covariances are reported in ms^2 (1 ms^2 == 10^6 us^2, conversion exact),
* node ids are plain strings; hosts and routers share one namespace, and
  synthetic router ids created during inference carry the ``r`` prefix so
  they can never collide with host ids (hosts use other prefixes, e.g. ``h``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InvariantError

NodeId = str

ROUTER_ID_PREFIX = "r"


class RoutingTree:
    """Rooted routing tree: the source host at the root, hosts at the leaves,
    routers in between.

    ``router_cov`` stores, for every internal router, the delay covariance
    (ms^2) accumulated along the shared path from the root down to that
    router; the root carries 0. Along every root-to-leaf path these labels
    are non-decreasing.

    The tree is mutable through a narrow set of operations (used by the
    incremental tomography); everything else treats instances as read-only.
    Mutation is single-writer: concurrent readers are safe only between
    mutations.
    """

    def __init__(self, root: NodeId):
        self.root = root
        self._children: dict[NodeId, list[NodeId]] = {root: []}
        self._parent: dict[NodeId, NodeId] = {}
        self.router_cov: dict[NodeId, float] = {root: 0.0}
        self.leaves: set[NodeId] = set()
        self._router_seq = 1

    # ------------------------------------------------------------------
    # queries

    def __contains__(self, node: NodeId) -> bool:
        return node in self._children

    def nodes(self) -> list[NodeId]:
        return list(self._children)

    def children(self, node: NodeId) -> tuple[NodeId, ...]:
        try:
            return tuple(self._children[node])
        except KeyError:
            raise InputError(f"unknown node {node!r}") from None

    def parent(self, node: NodeId) -> NodeId | None:
        if node not in self._children:
            raise InputError(f"unknown node {node!r}")
        return self._parent.get(node)

    def is_leaf(self, node: NodeId) -> bool:
        return node in self.leaves

    def is_router(self, node: NodeId) -> bool:
        return node in self._children and node != self.root and node not in self.leaves

    def ancestors(self, node: NodeId) -> list[NodeId]:
        """Ancestors of ``node`` ordered parent first, root last."""
        out = []
        cur = self.parent(node)
        while cur is not None:
            out.append(cur)
            cur = self._parent.get(cur)
        return out

    def path_from_root(self, node: NodeId) -> list[NodeId]:
        path = self.ancestors(node)
        path.reverse()
        path.append(node)
        return path

    def depth_links(self, node: NodeId) -> int:
        return len(self.ancestors(node))

    def lca(self, i: NodeId, j: NodeId) -> NodeId:
        seen = {i}
        seen.update(self.ancestors(i))
        cur = j
        while cur not in seen:
            nxt = self._parent.get(cur)
            if nxt is None:
                raise InvariantError(f"{i!r} and {j!r} have no common ancestor")
            cur = nxt
        return cur

    def leaves_under(self, node: NodeId) -> list[NodeId]:
        """All leaf descendants of ``node`` (including ``node`` itself if a leaf)."""
        out = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur in self.leaves:
                out.append(cur)
            else:
                stack.extend(reversed(self._children[cur]))
        return out

    def new_router_id(self) -> NodeId:
        while True:
            candidate = f"{ROUTER_ID_PREFIX}{self._router_seq}"
            self._router_seq += 1
            if candidate not in self._children:
                return candidate

    # ------------------------------------------------------------------
    # mutation

    def add_leaf(self, leaf: NodeId, parent: NodeId) -> None:
        if leaf in self._children:
            raise InputError(f"node {leaf!r} already in tree")
        if parent not in self._children:
            raise InputError(f"unknown parent {parent!r}")
        if parent in self.leaves:
            raise InputError(f"cannot attach under leaf {parent!r}")
        self._children[leaf] = []
        self._children[parent].append(leaf)
        self._parent[leaf] = parent
        self.leaves.add(leaf)

    def add_router(self, parent: NodeId, cov: float, router_id: NodeId | None = None) -> NodeId:
        if parent not in self._children:
            raise InputError(f"unknown parent {parent!r}")
        if parent in self.leaves:
            raise InputError(f"cannot attach under leaf {parent!r}")
        rid = router_id if router_id is not None else self.new_router_id()
        if rid in self._children:
            raise InputError(f"node {rid!r} already in tree")
        self._children[rid] = []
        self._children[parent].append(rid)
        self._parent[rid] = parent
        self.router_cov[rid] = float(cov)
        return rid

    def insert_router_above(self, node: NodeId, cov: float, router_id: NodeId | None = None) -> NodeId:
        """Create a router in ``node``'s slot under its parent and re-hang
        ``node`` beneath it. ``node`` must not be the root."""
        parent = self.parent(node)
        if parent is None:
            raise InputError(f"cannot insert above the root {node!r}")
        rid = router_id if router_id is not None else self.new_router_id()
        if rid in self._children:
            raise InputError(f"node {rid!r} already in tree")
        slot = self._children[parent].index(node)
        self._children[parent][slot] = rid
        self._children[rid] = [node]
        self._parent[rid] = parent
        self._parent[node] = rid
        self.router_cov[rid] = float(cov)
        return rid

    def remove_leaf(self, leaf: NodeId) -> None:
        if leaf not in self.leaves:
            raise InputError(f"{leaf!r} is not a leaf of the tree")
        parent = self._parent.pop(leaf)
        self._children[parent].remove(leaf)
        del self._children[leaf]
        self.leaves.discard(leaf)

    def splice_router(self, router: NodeId) -> None:
        """Remove a router that has at most one child, reattaching the child
        (if any) to the router's parent in the same slot."""
        if not self.is_router(router):
            raise InputError(f"{router!r} is not an internal router")
        kids = self._children[router]
        if len(kids) > 1:
            raise InputError(f"router {router!r} still has {len(kids)} children")
        parent = self._parent.pop(router)
        slot = self._children[parent].index(router)
        if kids:
            child = kids[0]
            self._children[parent][slot] = child
            self._parent[child] = parent
        else:
            self._children[parent].pop(slot)
        del self._children[router]
        self.router_cov.pop(router, None)

    def copy(self) -> "RoutingTree":
        dup = RoutingTree(self.root)
        dup._children = {n: list(c) for n, c in self._children.items()}
        dup._parent = dict(self._parent)
        dup.router_cov = dict(self.router_cov)
        dup.leaves = set(self.leaves)
        dup._router_seq = self._router_seq
        return dup

    # ------------------------------------------------------------------
    # validation / serialization

    def validate(self) -> None:
        """Check structural invariants, raising InvariantError on violation."""
        seen = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node in seen:
                raise InvariantError(f"node {node!r} reached twice (cycle or duplicate edge)")
            seen.add(node)
            kids = self._children.get(node)
            if kids is None:
                raise InvariantError(f"node {node!r} missing from children map")
            for c in kids:
                if self._parent.get(c) != node:
                    raise InvariantError(f"parent map inconsistent at {c!r}")
                stack.append(c)
        if seen != set(self._children):
            raise InvariantError("tree is not connected: unreachable nodes exist")
        for node in seen:
            if node == self.root:
                continue
            if node in self.leaves:
                if self._children[node]:
                    raise InvariantError(f"leaf {node!r} has children")
            else:
                if not self._children[node]:
                    raise InvariantError(f"router {node!r} has no children")
                if node not in self.router_cov:
                    raise InvariantError(f"router {node!r} has no covariance label")
                parent = self._parent[node]
                parent_cov = self.router_cov.get(parent, 0.0)
                if self.router_cov[node] < parent_cov:
                    raise InvariantError(
                        f"covariance label decreases from {parent!r} to {node!r}"
                    )

    def to_dict(self) -> dict:
        """Nested parent-child representation used by the JSON serializers."""

        def build(node: NodeId) -> dict:
            entry: dict = {"id": node}
            if node in self.leaves:
                entry["cov"] = None
            else:
                entry["cov"] = self.router_cov.get(node, 0.0)
            entry["children"] = [build(c) for c in self._children[node]]
            return entry

        return build(self.root)

    @classmethod
    def from_dict(cls, data: dict) -> "RoutingTree":
        tree = cls(data["id"])
        tree.router_cov[tree.root] = float(data.get("cov") or 0.0)

        def build(parent: NodeId, entries: list[dict]) -> None:
            for entry in entries:
                node = entry["id"]
                kids = entry.get("children") or []
                if kids:
                    tree.add_router(parent, float(entry.get("cov") or 0.0), router_id=node)
                    build(node, kids)
                else:
                    tree.add_leaf(node, parent)

        build(tree.root, data.get("children") or [])
        return tree


# ----------------------------------------------------------------------
# measurement-side types


@dataclass(frozen=True)
class MeasurementLog:
    """Per-session record of sender timestamps and per-receiver arrivals.

    ``sender_ts[k]`` is the time (us) the k-th packet burst left the sender;
    ``arrivals[r][k]`` the arrival time (us) at receiver ``r`` (missing key =
    packet lost). ``interval_us`` is the fixed inter-burst spacing, or None
    when the sender schedule is irregular and must be read from the
    timestamps themselves.
    """

    receivers: frozenset[NodeId]
    sender_ts: dict[int, int]
    arrivals: dict[NodeId, dict[int, int]]
    n_pairs: int
    interval_us: int | None = None

    @property
    def fixed_mode(self) -> bool:
        return self.interval_us is not None

    def arrival(self, receiver: NodeId, k: int) -> int | None:
        return self.arrivals.get(receiver, {}).get(k)

    def present_indices(self, receiver: NodeId) -> list[int]:
        return sorted(self.arrivals.get(receiver, {}))

    def validate(self) -> None:
        if self.n_pairs < 1:
            raise InvariantError("log holds no packet pairs")
        if sorted(self.sender_ts) != list(range(self.n_pairs)):
            raise InvariantError("sender timestamps must cover pair indices 0..n-1")
        prev = None
        for k in range(self.n_pairs):
            ts = self.sender_ts[k]
            if prev is not None and ts <= prev:
                raise InvariantError(f"sender timestamps not strictly increasing at k={k}")
            prev = ts
        if self.fixed_mode:
            base = self.sender_ts[0]
            for k in range(self.n_pairs):
                if self.sender_ts[k] - base != k * self.interval_us:
                    raise InvariantError(f"fixed-interval contract broken at k={k}")
        for r, entries in self.arrivals.items():
            if r not in self.receivers:
                raise InvariantError(f"arrivals recorded for unknown receiver {r!r}")
            for k, ts in entries.items():
                if k not in self.sender_ts:
                    raise InvariantError(f"arrival for unknown pair index {k} at {r!r}")
                if ts < self.sender_ts[k]:
                    raise InvariantError(f"arrival before send for ({r!r}, k={k})")


@dataclass(frozen=True)
class DelaySeries:
    """Normalized delay-offset series for one receiver over an aligned set of
    pair indices; the first entry is 0 by construction."""

    receiver: NodeId
    indices: tuple[int, ...]
    values: tuple

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric matrix of pairwise path-delay covariances (ms^2) over an
    ordered list of receivers."""

    receivers: tuple[NodeId, ...]
    values: np.ndarray
    _index: dict[NodeId, int] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {r: i for i, r in enumerate(self.receivers)})
        if self.values.shape != (len(self.receivers), len(self.receivers)):
            raise InputError("covariance matrix shape does not match receiver list")

    def index(self, receiver: NodeId) -> int:
        try:
            return self._index[receiver]
        except KeyError:
            raise InputError(f"unknown receiver {receiver!r}") from None

    def get(self, a: NodeId, b: NodeId) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def restrict(self, receivers) -> "CovarianceMatrix":
        ids = tuple(receivers)
        idx = [self.index(r) for r in ids]
        return CovarianceMatrix(ids, self.values[np.ix_(idx, idx)])

    def validate(self) -> None:
        if not np.array_equal(self.values, self.values.T):
            raise InvariantError("covariance matrix is not exactly symmetric")
        if np.any(np.diag(self.values) < 0):
            raise InvariantError("negative variance on the diagonal")

    def to_dict(self) -> dict:
        return {
            "receivers": list(self.receivers),
            "values": [[float(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceMatrix":
        return cls(tuple(data["receivers"]), np.asarray(data["values"], dtype=float))


# ----------------------------------------------------------------------
# topology queries


def _require_leaf(tree: RoutingTree, node: NodeId) -> None:
    if node not in tree:
        raise InputError(f"unknown leaf id {node!r}")
    if not tree.is_leaf(node):
        raise InputError(f"{node!r} is not a leaf")


def shared_path_length(tree: RoutingTree, i: NodeId, j: NodeId) -> int:
    """Number of links on the path from the root to the lowest common
    ancestor of two distinct leaves (0 when their paths split at the root)."""
    _require_leaf(tree, i)
    _require_leaf(tree, j)
    if i == j:
        raise InputError("shared_path_length needs two distinct leaves")
    return tree.depth_links(tree.lca(i, j))


def shared_covariance(tree: RoutingTree, i: NodeId, j: NodeId) -> float:
    """Covariance implied by the tree's router labels for a leaf pair: the
    label of their lowest common ancestor. Exact when labels hold cumulative
    shared-path delay variance, as in simulator ground truth."""
    _require_leaf(tree, i)
    _require_leaf(tree, j)
    if i == j:
        raise InputError("shared_covariance needs two distinct leaves")
    return tree.router_cov[tree.lca(i, j)]


def covariance_matrix_from_tree(tree: RoutingTree, receivers=None) -> CovarianceMatrix:
    """Analytic covariance matrix for the tree's leaves. Off-diagonal entries
    come from shared_covariance; the diagonal holds the label of each leaf's
    parent (the leaf's own last-hop variance is unidentifiable from pair
    covariances and never read by the inference)."""
    ids = tuple(sorted(tree.leaves) if receivers is None else receivers)
    n = len(ids)
    values = np.zeros((n, n), dtype=float)
    for a in range(n):
        parent = tree.parent(ids[a])
        values[a, a] = tree.router_cov.get(parent, 0.0)
        for b in range(a + 1, n):
            cov = shared_covariance(tree, ids[a], ids[b])
            values[a, b] = cov
            values[b, a] = cov
    return CovarianceMatrix(ids, values)


def branching_skeleton(tree: RoutingTree) -> RoutingTree:
    """Copy of the tree with every single-child router spliced out. This is
    the maximal structure identifiable from leaf covariances: a chain of
    routers without branching is invisible to them."""
    skel = tree.copy()
    for node in list(skel.nodes()):
        if node in skel and skel.is_router(node) and len(skel.children(node)) == 1:
            skel.splice_router(node)
    return skel


def _canonical_form(tree: RoutingTree, node: NodeId):
    if tree.is_leaf(node):
        return ("leaf", node)
    return ("node", tuple(sorted(_canonical_form(tree, c) for c in tree.children(node))))


def trees_topologically_equal(t1: RoutingTree, t2: RoutingTree) -> bool:
    """True iff some relabeling of internal routers makes the trees identical
    once single-child routers are suppressed on both sides."""
    if t1.leaves != t2.leaves:
        raise InputError("trees have different leaf sets")
    if t1.root != t2.root:
        raise InputError("trees have different roots")
    s1 = branching_skeleton(t1)
    s2 = branching_skeleton(t2)
    return _canonical_form(s1, s1.root) == _canonical_form(s2, s2.root)
