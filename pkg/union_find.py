"""
Union-Find

Disjoint sets over hashable items, used for greedy threshold clustering and
for the constrained merging of the bottom-up baseline.
"""

from typing import Dict, Hashable, Iterable, List


class UnionFind:
    """Weighted quick-union by rank with path halving."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self._parent: Dict[Hashable, Hashable] = {}
        self._rank: Dict[Hashable, int] = {}
        for item in items:
            self.add(item)

    def add(self, item: Hashable) -> None:
        if item not in self._parent:
            self._parent[item] = item
            self._rank[item] = 0

    def __contains__(self, item: Hashable) -> bool:
        return item in self._parent

    def __len__(self) -> int:
        return len(self._parent)

    def find(self, item: Hashable) -> Hashable:
        """Find the set representative of item."""
        parent = self._parent
        while item != parent[item]:
            parent[item] = parent[parent[item]]  # path halving
            item = parent[item]
        return item

    def connected(self, a: Hashable, b: Hashable) -> bool:
        return self.find(a) == self.find(b)

    def union(self, a: Hashable, b: Hashable) -> Hashable:
        """Merge the sets of a and b and return the new representative."""
        i, j = self.find(a), self.find(b)
        if i == j:
            return i
        if self._rank[i] < self._rank[j]:
            i, j = j, i
        self._parent[j] = i
        if self._rank[i] == self._rank[j]:
            self._rank[i] += 1
        return i

    def groups(self) -> List[List[Hashable]]:
        """All sets, each sorted, ordered by their smallest member."""
        members: Dict[Hashable, List[Hashable]] = {}
        for item in self._parent:
            members.setdefault(self.find(item), []).append(item)
        return sorted((sorted(group) for group in members.values()), key=lambda g: g[0])
