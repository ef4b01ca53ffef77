"""Region quadtree used to rank areas by node density."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_DEPTH = 10


@dataclass
class QuadNode:
    x0: float
    y0: float
    x1: float
    y1: float
    depth: int
    members: np.ndarray  # indices into the point array
    children: list["QuadNode"] = field(default_factory=list)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    @property
    def density(self) -> float:
        return len(self.members) / self.area

    def is_leaf(self) -> bool:
        return not self.children


class QuadTree:
    """Split each cell into four until it holds at most one point or ``max_depth`` is reached.

    A point on a split line goes to the upper/right child.
    """

    def __init__(self, points, bounds, max_depth: int = DEFAULT_MAX_DEPTH):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.max_depth = max_depth
        b = bounds
        self.root = QuadNode(b.xmin, b.ymin, b.xmax, b.ymax, 0, np.arange(len(self.points)))
        self._split(self.root)

    def _split(self, node: QuadNode) -> None:
        if len(node.members) <= 1 or node.depth >= self.max_depth:
            return
        xm = (node.x0 + node.x1) / 2
        ym = (node.y0 + node.y1) / 2
        pts = self.points[node.members]
        right = pts[:, 0] >= xm
        top = pts[:, 1] >= ym
        for r in (False, True):
            for u in (False, True):
                sel = node.members[(right == r) & (top == u)]
                child = QuadNode(xm if r else node.x0, ym if u else node.y0,
                                 node.x1 if r else xm, node.y1 if u else ym,
                                 node.depth + 1, sel)
                node.children.append(child)
                self._split(child)

    def leaves(self) -> list[QuadNode]:
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            if n.is_leaf():
                out.append(n)
            else:
                stack.extend(n.children)
        return out

    def leaves_by_density(self) -> list[QuadNode]:
        """Densest first; ties by smallest center (x, then y)."""
        # count * 4**depth is proportional to density and exact
        return sorted(self.leaves(), key=lambda n: (-len(n.members) * 4 ** n.depth, n.center))

    def densest_leaf(self) -> QuadNode:
        return self.leaves_by_density()[0]
