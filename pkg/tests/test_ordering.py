import numpy as np
import pytest

from covtomo.errors import InputError
from covtomo.model import CovarianceMatrix, covariance_matrix_from_tree
from covtomo.ordering import dfs_order, is_valid_dfs_order

from treegen import build_tree, random_truth_tree


def caterpillar_cov():
    tree = build_tree("root", (1.0, [(4.0, ["a", "b"]), "c"]))
    return covariance_matrix_from_tree(tree)


def test_single_receiver():
    cov = CovarianceMatrix(("only",), np.zeros((1, 1)))
    assert dfs_order(cov) == ["only"]


def test_two_receivers_any_order_valid():
    cov = CovarianceMatrix(("a", "b"), np.array([[2.0, 1.0], [1.0, 2.0]]))
    order = dfs_order(cov)
    assert sorted(order) == ["a", "b"]
    assert is_valid_dfs_order(order, cov)
    assert is_valid_dfs_order(list(reversed(order)), cov)


def test_caterpillar_keeps_deep_pair_adjacent():
    cov = caterpillar_cov()
    # enumeration oracle: with cov(a,b) > cov(a,c) == cov(b,c), the valid DFS
    # orders are exactly the four that keep a and b adjacent
    from itertools import permutations

    valid = {p for p in permutations("abc") if abs(p.index("a") - p.index("b")) == 1}
    assert valid == {("a", "b", "c"), ("b", "a", "c"), ("c", "a", "b"), ("c", "b", "a")}
    order = dfs_order(cov)
    assert tuple(order) in valid


def test_is_valid_examples():
    cov = caterpillar_cov()
    assert is_valid_dfs_order(["a", "b", "c"], cov)
    assert not is_valid_dfs_order(["a", "c", "b"], cov)


def test_is_valid_rejects_non_permutation():
    cov = caterpillar_cov()
    with pytest.raises(InputError):
        is_valid_dfs_order(["a", "b"], cov)


def test_noiseless_orders_valid_on_random_trees():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        tree, _ = random_truth_tree(rng, int(rng.integers(2, 11)))
        cov = covariance_matrix_from_tree(tree)
        order = dfs_order(cov)
        assert sorted(order) == sorted(tree.leaves)
        assert is_valid_dfs_order(order, cov, tol=0.0)
        assert is_valid_dfs_order(list(reversed(order)), cov, tol=0.0)


def test_order_matches_some_true_dfs_traversal():
    # stronger than the covariance property: each subtree's leaves must be
    # contiguous in the output
    rng = np.random.default_rng(77)
    for _ in range(50):
        tree, _ = random_truth_tree(rng, int(rng.integers(3, 10)))
        order = dfs_order(covariance_matrix_from_tree(tree))
        position = {leaf: i for i, leaf in enumerate(order)}
        for node in tree.nodes():
            if tree.is_leaf(node):
                continue
            spots = sorted(position[l] for l in tree.leaves_under(node))
            assert spots == list(range(spots[0], spots[0] + len(spots)))


def test_deterministic_and_independent_of_matrix_row_order():
    rng = np.random.default_rng(5)
    tree, _ = random_truth_tree(rng, 8)
    cov = covariance_matrix_from_tree(tree)
    shuffled_ids = list(cov.receivers)
    rng.shuffle(shuffled_ids)
    shuffled = cov.restrict(shuffled_ids)
    assert dfs_order(cov) == dfs_order(cov) == dfs_order(shuffled)
