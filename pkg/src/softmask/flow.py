"""Max-flow / min-cut on small explicit networks (Dinic's algorithm)."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field


@dataclass
class FlowNetwork:
    n_nodes: int
    source: int
    sink: int
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        for node in (self.source, self.sink):
            if not 0 <= node < self.n_nodes:
                raise ValueError(f"terminal {node} out of range")
        for e in self.edges:
            self._check(*e)

    def _check(self, u, v, cap):
        if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
            raise ValueError(f"edge ({u}, {v}) references a missing node")
        if not math.isfinite(cap) or cap < 0:
            raise ValueError(f"capacity must be finite and non-negative, got {cap}")

    def add_edge(self, u: int, v: int, cap: float) -> None:
        self._check(u, v, cap)
        self.edges.append((u, v, float(cap)))

    def cut_capacity(self, source_side) -> float:
        side = set(source_side)
        return sum(c for u, v, c in self.edges if u in side and v not in side)


def max_flow(net: FlowNetwork) -> tuple[float, set[int]]:
    """Return the max-flow value and the source side of a minimum cut.

    The source side is the set of nodes reachable from the source in the
    final residual graph.
    """
    n = net.n_nodes
    # residual graph as parallel arrays; edge k and k^1 are a forward/backward pair
    head: list[int] = []
    cap: list[float] = []
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v, c in net.edges:
        adj[u].append(len(head))
        head.append(v)
        cap.append(float(c))
        adj[v].append(len(head))
        head.append(u)
        cap.append(0.0)

    scale = max(cap, default=0.0)
    tiny = 1e-12 * scale
    s, t = net.source, net.sink
    total = 0.0

    while True:
        level = [-1] * n
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for k in adj[u]:
                if cap[k] > tiny and level[head[k]] < 0:
                    level[head[k]] = level[u] + 1
                    queue.append(head[k])
        if level[t] < 0:
            break

        it = [0] * n

        def push(u: int, limit: float) -> float:
            if u == t:
                return limit
            edges = adj[u]
            while it[u] < len(edges):
                k = edges[it[u]]
                v = head[k]
                if cap[k] > tiny and level[v] == level[u] + 1:
                    got = push(v, min(limit, cap[k]))
                    if got > 0:
                        cap[k] -= got
                        cap[k ^ 1] += got
                        return got
                it[u] += 1
            return 0.0

        while True:
            f = push(s, math.inf)
            if f <= 0:
                break
            total += f

    reach = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for k in adj[u]:
            v = head[k]
            if cap[k] > tiny and v not in reach:
                reach.add(v)
                queue.append(v)
    return total, reach
