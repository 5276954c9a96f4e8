"""Tree-structured aggregation of per-node subspaces into a global view.

Compute nodes sit only at the leaves; aggregators merge their children
bottom-up (left-to-right, deterministically) until the root holds one
subspace describing the whole cluster's workload.  Summaries flow upward
only; nothing is pushed back down during aggregation.  Nodes that want the
global view pull it explicitly and merge it into their local estimate.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import Subspace, merge_fast


class EmptyFederationError(ValueError):
    """No leaf contributed a subspace."""


@dataclass(frozen=True)
class FederationTree:
    """Aggregator tree: each aggregator maps to child aggregators or leaves.

    ``children`` maps aggregator name -> list of child names; any name not
    appearing as a key is a leaf (compute node).  The tree must be acyclic,
    rooted at ``root``, with every aggregator nonempty.
    """

    root: str
    children: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.root not in self.children:
            raise ValueError(f"root {self.root!r} must be an aggregator")
        seen: set[str] = set()

        def walk(name, trail):
            if name in trail:
                raise ValueError(f"cycle through {name!r}")
            if name in seen:
                raise ValueError(f"{name!r} reachable twice")
            seen.add(name)
            kids = self.children.get(name)
            if kids is None:
                return
            if not kids:
                raise ValueError(f"aggregator {name!r} has no children")
            for kid in kids:
                walk(kid, trail | {name})

        walk(self.root, set())
        unreachable = set(self.children) - seen
        if unreachable:
            raise ValueError(f"aggregators not reachable from root: {sorted(unreachable)}")

    def leaves(self) -> list[str]:
        """Leaf names in deterministic left-to-right order."""
        out: list[str] = []

        def walk(name):
            kids = self.children.get(name)
            if kids is None:
                out.append(name)
                return
            for kid in kids:
                walk(kid)

        walk(self.root)
        return out

    @classmethod
    def flat(cls, leaf_ids) -> "FederationTree":
        """Single aggregator over all leaves."""
        return cls(root="root", children={"root": list(leaf_ids)})


@dataclass(frozen=True)
class GlobalEstimate:
    """Root subspace plus bookkeeping about where it came from."""

    subspace: Subspace
    version: int
    contributing: frozenset


def aggregate(
    tree: FederationTree,
    latest: dict,
    version: int = 1,
) -> GlobalEstimate:
    """Merge the latest leaf snapshots up the tree into a global estimate.

    ``latest`` maps node_id -> Subspace; leaves without an entry are skipped.
    Every merge is a left-to-right fold at the target rank (the largest rank
    any contributing leaf reports).
    """
    contributing = [n for n in tree.leaves() if latest.get(n) is not None]
    if not contributing:
        raise EmptyFederationError("no leaf has a subspace yet")
    target_rank = max(latest[n].rank for n in contributing)

    def fold(name) -> Subspace | None:
        kids = tree.children.get(name)
        if kids is None:
            return latest.get(name)
        acc = None
        for kid in kids:
            sub = fold(kid)
            if sub is None:
                continue
            acc = sub if acc is None else merge_fast(acc, sub, target_rank)
        return acc

    return GlobalEstimate(fold(tree.root), version, frozenset(contributing))


def pull_global(
    est: GlobalEstimate,
    local: Subspace | None,
    rank: int | None = None,
) -> Subspace:
    """Merge the global estimate into a node's local subspace.

    With no local estimate yet (a new or transient node), this is just the
    global subspace truncated to the requested rank.
    """
    if local is None:
        return est.subspace.truncated(rank if rank is not None else est.subspace.rank)
    if local.dim != est.subspace.dim:
        raise ValueError(f"dimension mismatch: {local.dim} vs {est.subspace.dim}")
    return merge_fast(local, est.subspace, rank if rank is not None else local.rank)
