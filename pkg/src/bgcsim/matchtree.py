"""Balanced binary sum-tree over one worker's claimed gradient block.

Each node covers a half-open index range [lo, hi) of the block (1-based) and
is labelled by the sum of the claimed gradients in that range, so any two
siblings sum to their parent.  The left child takes the ceiling half of the
parent's range.  Labels are evaluated on demand from the claimed block; the
tree itself is never materialised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NodeRange:
    lo: int  # inclusive
    hi: int  # exclusive

    def __post_init__(self):
        if not 1 <= self.lo < self.hi:
            raise ValueError(f"invalid node range [{self.lo}, {self.hi})")

    @property
    def is_leaf(self) -> bool:
        return self.hi - self.lo == 1

    @property
    def leaf_index(self) -> int:
        if not self.is_leaf:
            raise ValueError(f"range [{self.lo}, {self.hi}) is not a leaf")
        return self.lo


def root_range(block_size: int) -> NodeRange:
    return NodeRange(1, block_size + 1)


def children(node: NodeRange) -> tuple[NodeRange, NodeRange]:
    """Split [lo, hi) at mid = lo + ceil((hi-lo)/2); the two halves partition it."""
    if node.is_leaf:
        raise ValueError("a leaf has no children")
    mid = node.lo + (node.hi - node.lo + 1) // 2
    return NodeRange(node.lo, mid), NodeRange(mid, node.hi)


def infer_right_label(parent_label: int, left_label: int, q: int) -> int:
    """Right sibling's label from the parent's and left sibling's, modulo q."""
    return (int(parent_label) - int(left_label)) % q


@dataclass(frozen=True)
class MatchTree:
    """Lazy view of one worker's sum-tree for a single group block."""

    group: int
    claims: np.ndarray  # (block_size, d) claimed gradients, residues mod q
    q: int

    @property
    def block_size(self) -> int:
        return self.claims.shape[0]

    def node_label(self, node: NodeRange, coord: int) -> int:
        """Sum of the coord-th coordinate of the claimed gradients in the range."""
        if node.hi > self.block_size + 1:
            raise ValueError(
                f"range [{node.lo}, {node.hi}) exceeds block size {self.block_size}"
            )
        if not 1 <= coord <= self.claims.shape[1]:
            raise ValueError(f"coordinate out of range: {coord}")
        return int(self.claims[node.lo - 1 : node.hi - 1, coord - 1].sum() % self.q)

    def root_label(self, coord: int) -> int:
        return self.node_label(root_range(self.block_size), coord)

    def root_vector(self) -> np.ndarray:
        """The worker's initial response for the group: sum of all claimed gradients."""
        return self.claims.sum(axis=0) % self.q
