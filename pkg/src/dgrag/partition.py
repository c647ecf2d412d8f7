"""Graph partitioning for an edge knowledge graph.

Pipeline: build an undirected weighted view of the KG, detect communities
with a seeded Leiden pass (local moving, refinement, aggregation, repeated
until stable), merge undersized communities into their best-connected
neighbor, then render each community to canonical text and summarize it.
"""

from __future__ import annotations

import random
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .errors import ProviderError
from .model import KnowledgeGraph, Partition, SubgraphSummary

_GAIN_EPS = 1e-12


@dataclass
class CommunityGraph:
    """Undirected weighted multigraph view over entities, integer-indexed."""

    nodes: list[str] = field(default_factory=list)
    adjacency: list[dict[int, float]] = field(default_factory=list)
    degrees: list[float] = field(default_factory=list)
    total_weight: float = 0.0  # M: each undirected edge counted once

    @classmethod
    def from_knowledge_graph(cls, kg: KnowledgeGraph, edge_weight: float = 1.0) -> "CommunityGraph":
        g = cls(nodes=sorted(kg.entities))
        index = {name: i for i, name in enumerate(g.nodes)}
        g.adjacency = [dict() for _ in g.nodes]
        for rel in sorted(kg.relations.values(), key=lambda r: r.id):
            u, v = index[rel.src], index[rel.dst]
            g.adjacency[u][v] = g.adjacency[u].get(v, 0.0) + edge_weight
            g.adjacency[v][u] = g.adjacency[v].get(u, 0.0) + edge_weight
            g.total_weight += edge_weight
        g.degrees = [sum(nbrs.values()) for nbrs in g.adjacency]
        return g

    @classmethod
    def from_edges(cls, nodes: list[str], edges: list[tuple[str, str, float]]) -> "CommunityGraph":
        g = cls(nodes=list(nodes))
        index = {name: i for i, name in enumerate(g.nodes)}
        g.adjacency = [dict() for _ in g.nodes]
        for a, b, w in edges:
            if a == b:
                raise ValueError(f"self loop on {a}")
            u, v = index[a], index[b]
            g.adjacency[u][v] = g.adjacency[u].get(v, 0.0) + w
            g.adjacency[v][u] = g.adjacency[v].get(u, 0.0) + w
            g.total_weight += w
        g.degrees = [sum(nbrs.values()) for nbrs in g.adjacency]
        return g

    def edge_list(self) -> list[tuple[int, int, float]]:
        """Each undirected edge once, (u, v, weight) with u < v."""
        out = []
        for u, nbrs in enumerate(self.adjacency):
            for v, w in nbrs.items():
                if u < v:
                    out.append((u, v, w))
        return out

    def index_of(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.nodes)}

    def export_edge_lines(self) -> list[str]:
        """Plain edge-list export: 'u\\tv\\tweight' per line, sorted."""
        lines = [f"{self.nodes[u]}\t{self.nodes[v]}\t{w:g}" for u, v, w in self.edge_list()]
        return sorted(lines)


# ---------------------------------------------------------------------------
# Modularity
# ---------------------------------------------------------------------------


def modularity(g: CommunityGraph, p: Partition, gamma: float = 1.0) -> float:
    """Q = sum over communities of [internal/(2M) - gamma*(degree_total/(2M))^2].

    Internal mass counts both directions of every within-community edge.
    An edgeless graph has Q = 0 under any partition.
    """
    if set(p.assignment) != set(g.nodes):
        raise ValueError("partition is not total over the graph's nodes")
    comm = [p.assignment[name] for name in g.nodes]
    return _modularity_int(g, comm, gamma)


def _modularity_int(g: CommunityGraph, comm: list[int], gamma: float) -> float:
    if g.total_weight <= 0.0:
        return 0.0
    two_m = 2.0 * g.total_weight
    internal: dict[int, float] = defaultdict(float)
    degree_sum: dict[int, float] = defaultdict(float)
    for u, v, w in g.edge_list():
        if comm[u] == comm[v]:
            internal[comm[u]] += 2.0 * w
    for node, k in enumerate(g.degrees):
        degree_sum[comm[node]] += k
    q = 0.0
    for c in degree_sum:
        q += internal.get(c, 0.0) / two_m - gamma * (degree_sum[c] / two_m) ** 2
    return q


# ---------------------------------------------------------------------------
# Leiden
# ---------------------------------------------------------------------------


class _Level:
    """One aggregation level: adjacency between super-nodes plus their
    internal edge mass and total degree. Sum of degrees is invariant."""

    def __init__(self, adjacency, internal, degrees, base_members):
        self.adjacency = adjacency
        self.internal = internal
        self.degrees = degrees
        self.base_members = base_members

    @property
    def n(self) -> int:
        return len(self.adjacency)


def _move_nodes(level: _Level, comm: list[int], two_m: float, gamma: float,
                rng: random.Random) -> bool:
    """Greedy local moving with a revisit queue. Mutates comm, returns whether
    anything moved. Candidate targets: current community, every community a
    neighbor belongs to, and a fresh singleton."""
    comm_degree: dict[int, float] = defaultdict(float)
    for node, c in enumerate(comm):
        comm_degree[c] += level.degrees[node]
    next_label = max(comm, default=-1) + 1

    order = list(range(level.n))
    rng.shuffle(order)
    queue = deque(order)
    queued = [True] * level.n
    moved_any = False

    while queue:
        v = queue.popleft()
        queued[v] = False
        cur = comm[v]
        k_v = level.degrees[v]
        weight_to: dict[int, float] = defaultdict(float)
        for u, w in level.adjacency[v].items():
            weight_to[comm[u]] += w

        comm_degree[cur] -= k_v
        best_c = cur
        best_gain = weight_to.get(cur, 0.0) - gamma * k_v * comm_degree[cur] / two_m
        for c in sorted(weight_to):
            if c == cur:
                continue
            gain = weight_to[c] - gamma * k_v * comm_degree[c] / two_m
            if gain > best_gain + _GAIN_EPS:
                best_c, best_gain = c, gain
        if 0.0 > best_gain + _GAIN_EPS:  # isolate into a fresh community
            best_c, best_gain = next_label, 0.0

        if best_c == cur:
            comm_degree[cur] += k_v
            continue
        if best_c == next_label:
            next_label += 1
        comm[v] = best_c
        comm_degree[best_c] += k_v
        moved_any = True
        for u in level.adjacency[v]:
            if comm[u] != best_c and not queued[u]:
                queue.append(u)
                queued[u] = True
    return moved_any


def _refine(level: _Level, comm: list[int], two_m: float, gamma: float,
            rng: random.Random) -> list[int]:
    """Split each community into well-connected sub-communities: starting from
    singletons, nodes that are still alone may merge into a neighboring
    sub-community of the same parent community when that improves quality."""
    ref = list(range(level.n))
    ref_degree = {node: level.degrees[node] for node in range(level.n)}
    ref_size = {node: 1 for node in range(level.n)}

    by_comm: dict[int, list[int]] = defaultdict(list)
    for node, c in enumerate(comm):
        by_comm[c].append(node)

    for c in sorted(by_comm):
        members = by_comm[c]
        if len(members) < 2:
            continue
        order = list(members)
        rng.shuffle(order)
        for v in order:
            if ref_size[ref[v]] != 1:
                continue
            weight_to: dict[int, float] = defaultdict(float)
            for u, w in level.adjacency[v].items():
                if comm[u] == c and ref[u] != ref[v]:
                    weight_to[ref[u]] += w
            best_r, best_gain = ref[v], 0.0
            k_v = level.degrees[v]
            for r in sorted(weight_to):
                gain = weight_to[r] - gamma * k_v * ref_degree[r] / two_m
                if gain > best_gain + _GAIN_EPS:
                    best_r, best_gain = r, gain
            if best_r != ref[v]:
                old = ref[v]
                ref_size[best_r] += ref_size.pop(old)
                ref_degree[best_r] += ref_degree.pop(old)
                ref[v] = best_r
    return ref


def _compact(labels: list[int]) -> tuple[list[int], int]:
    mapping: dict[int, int] = {}
    out = []
    for label in labels:
        if label not in mapping:
            mapping[label] = len(mapping)
        out.append(mapping[label])
    return out, len(mapping)


def _aggregate(level: _Level, groups: list[int], n_groups: int,
               comm: list[int]) -> tuple[_Level, list[int]]:
    adjacency: list[dict[int, float]] = [dict() for _ in range(n_groups)]
    internal = [0.0] * n_groups
    degrees = [0.0] * n_groups
    base_members: list[list[int]] = [[] for _ in range(n_groups)]
    group_comm = [0] * n_groups

    for node in range(level.n):
        grp = groups[node]
        internal[grp] += level.internal[node]
        degrees[grp] += level.degrees[node]
        base_members[grp].extend(level.base_members[node])
        group_comm[grp] = comm[node]

    for u in range(level.n):
        gu = groups[u]
        for v, w in level.adjacency[u].items():
            if u >= v:
                continue
            gv = groups[v]
            if gu == gv:
                internal[gu] += w
            else:
                adjacency[gu][gv] = adjacency[gu].get(gv, 0.0) + w
                adjacency[gv][gu] = adjacency[gv].get(gu, 0.0) + w
    return _Level(adjacency, internal, degrees, base_members), group_comm


def _leiden_run(g: CommunityGraph, gamma: float, rng: random.Random) -> list[int]:
    n = len(g.nodes)
    level = _Level(
        adjacency=[dict(nbrs) for nbrs in g.adjacency],
        internal=[0.0] * n,
        degrees=list(g.degrees),
        base_members=[[i] for i in range(n)],
    )
    two_m = 2.0 * g.total_weight
    if two_m <= 0.0:
        return list(range(n))
    comm = list(range(level.n))

    while True:
        moved = _move_nodes(level, comm, two_m, gamma, rng)
        comm, n_comms = _compact(comm)
        if n_comms == level.n:
            break
        ref = _refine(level, comm, two_m, gamma, rng)
        ref, n_ref = _compact(ref)
        if n_ref == level.n:
            if not moved:
                break
            # Refinement kept everything apart; aggregate on the communities
            # themselves so the pass still converges.
            ref, n_ref = list(comm), n_comms
            if n_ref == level.n:
                break
        level, comm = _aggregate(level, ref, n_ref, comm)

    assignment = [0] * n
    for node, c in enumerate(comm):
        for base in level.base_members[node]:
            assignment[base] = c
    return _compact(assignment)[0]


def _split_disconnected(g: CommunityGraph, assignment: list[int]) -> list[int]:
    """Replace every community by its connected components. Never lowers
    modularity: splitting removes no internal edges and shrinks the squared
    degree penalty."""
    out = list(assignment)
    next_label = max(out, default=-1) + 1
    by_comm: dict[int, list[int]] = defaultdict(list)
    for node, c in enumerate(out):
        by_comm[c].append(node)
    for c, members in sorted(by_comm.items()):
        member_set = set(members)
        seen: set[int] = set()
        components: list[list[int]] = []
        for start in members:
            if start in seen:
                continue
            comp = [start]
            seen.add(start)
            frontier = deque([start])
            while frontier:
                u = frontier.popleft()
                for v in g.adjacency[u]:
                    if v in member_set and v not in seen:
                        seen.add(v)
                        comp.append(v)
                        frontier.append(v)
            components.append(comp)
        for comp in components[1:]:
            for node in comp:
                out[node] = next_label
            next_label += 1
    return out


def _relabel_dense(g: CommunityGraph, assignment: list[int]) -> dict[str, int]:
    """Dense ids 0..C-1 ordered by each community's smallest node name."""
    first_member: dict[int, str] = {}
    for idx, c in enumerate(assignment):
        name = g.nodes[idx]
        if c not in first_member or name < first_member[c]:
            first_member[c] = name
    order = sorted(first_member, key=lambda c: first_member[c])
    relabel = {c: i for i, c in enumerate(order)}
    return {g.nodes[idx]: relabel[c] for idx, c in enumerate(assignment)}


def leiden_partition(g: CommunityGraph, gamma: float = 1.0, seed: int = 0,
                     restarts: int = 8) -> Partition:
    """Seeded Leiden community detection.

    Runs `restarts` independent seeded passes and keeps the best modularity;
    ties keep the earliest pass. Communities are guaranteed connected and at
    least as good as the singleton partition.
    """
    if not g.nodes:
        raise ValueError("cannot partition an empty graph")
    best_assignment: list[int] | None = None
    best_q = float("-inf")
    for attempt in range(max(1, restarts)):
        rng = random.Random(seed * 1_000_003 + attempt)
        assignment = _leiden_run(g, gamma, rng)
        assignment = _split_disconnected(g, assignment)
        q = _modularity_int(g, assignment, gamma)
        if q > best_q + _GAIN_EPS:
            best_q = q
            best_assignment = assignment
    assert best_assignment is not None
    return Partition(_relabel_dense(g, best_assignment))


# ---------------------------------------------------------------------------
# Small-community merging
# ---------------------------------------------------------------------------


def merge_small(p: Partition, g: CommunityGraph, size_threshold: int) -> Partition:
    """Fold undersized communities into the neighboring community they share
    the most edge weight with (tie: smaller community id). Undersized
    communities with no neighboring community are left alone. Runs to a
    fixed point; each merge reduces the community count so it terminates."""
    index = g.index_of()
    assignment = dict(p.assignment)

    while True:
        members: dict[int, list[str]] = defaultdict(list)
        for name, c in assignment.items():
            members[c].append(name)
        undersized = sorted(
            (c for c, m in members.items() if len(m) < size_threshold),
            key=lambda c: (len(members[c]), c),
        )
        merged = False
        for c in undersized:
            inter: dict[int, float] = defaultdict(float)
            for name in members[c]:
                u = index[name]
                for v, w in g.adjacency[u].items():
                    other = assignment[g.nodes[v]]
                    if other != c:
                        inter[other] += w
            if not inter:
                continue  # isolated on its component; stays as-is
            target = max(sorted(inter), key=lambda cc: (inter[cc], -cc))
            for name in members[c]:
                assignment[name] = target
            merged = True
            break  # recompute sizes before the next merge
        if not merged:
            break

    return Partition(_dense_by_min_member(assignment))


def _dense_by_min_member(assignment: dict[str, int]) -> dict[str, int]:
    first: dict[int, str] = {}
    for name, c in assignment.items():
        if c not in first or name < first[c]:
            first[c] = name
    order = sorted(first, key=lambda c: first[c])
    relabel = {c: i for i, c in enumerate(order)}
    return {name: relabel[c] for name, c in assignment.items()}


# ---------------------------------------------------------------------------
# Community text and summaries
# ---------------------------------------------------------------------------


def community_relations(kg: KnowledgeGraph, member_ids: set[str]) -> list:
    """Relations whose both endpoints lie inside the community."""
    rels = [r for r in kg.relations.values() if r.src in member_ids and r.dst in member_ids]
    rels.sort(key=lambda r: r.id)
    return rels


def subgraph_to_text(kg: KnowledgeGraph, member_ids) -> str:
    """Canonical plain-text rendering: sorted entity lines, then sorted
    relation lines. Byte-stable for identical communities."""
    members = set(member_ids)
    if not members:
        raise ValueError("community has no members")
    entity_lines = sorted(
        f"{kg.entities[i].name} ({kg.entities[i].type_label}): {kg.entities[i].description}"
        for i in members
    )
    relation_lines = sorted(
        f"{kg.entities[r.src].name} -- {kg.entities[r.dst].name}: {r.description}"
        for r in community_relations(kg, members)
    )
    return "\n".join(entity_lines + relation_lines)


def summarize_all(kg: KnowledgeGraph, partition: Partition, provider,
                  edge_id: str) -> list[SubgraphSummary]:
    """One summary per community, embedded and counted. Summary text is
    derived only from entity/relation names and descriptions, never from raw
    chunk text, so nothing beyond the graph's own wording leaves the edge."""
    summaries = []
    for community_id, members in sorted(partition.communities().items()):
        member_set = set(members)
        text = subgraph_to_text(kg, member_set)
        try:
            summary_text = provider.summarize(text)
            embedding = provider.embed(summary_text)
        except ProviderError as exc:
            raise ProviderError(f"summarization failed for community {community_id}: {exc}") from exc
        summary = SubgraphSummary(
            id=f"{edge_id}/{community_id}",
            edge_id=edge_id,
            community_id=community_id,
            text=summary_text,
            embedding=embedding,
            entity_count=len(members),
            relation_count=len(community_relations(kg, member_set)),
        )
        summary.check()
        summaries.append(summary)
    return summaries
