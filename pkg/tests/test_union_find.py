"""Tests for the union-find structure."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from union_find import UnionFind


def test_union_and_groups():
    uf = UnionFind(["d", "a", "c", "b"])
    uf.union("a", "c")
    uf.union("d", "b")
    assert uf.connected("a", "c")
    assert not uf.connected("a", "b")
    assert uf.groups() == [["a", "c"], ["b", "d"]]


def test_add_is_idempotent():
    uf = UnionFind()
    uf.add("x")
    uf.add("x")
    assert len(uf) == 1
    assert "x" in uf
    assert "y" not in uf


def test_matches_label_propagation_on_random_edges():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        edges = [(int(a), int(b)) for a, b in rng.integers(0, n, size=(n, 2))]
        uf = UnionFind(range(n))
        for a, b in edges:
            uf.union(a, b)

        labels = list(range(n))
        changed = True
        while changed:
            changed = False
            for a, b in edges:
                low = min(labels[a], labels[b])
                if labels[a] != low or labels[b] != low:
                    labels[a] = labels[b] = low
                    changed = True
        for a in range(n):
            for b in range(n):
                assert uf.connected(a, b) == (labels[a] == labels[b])
