"""Graph world, regions of interest and the coverage utility.

Coverage is represented throughout as Python ``int`` bitmasks over region
ids: bit ``k`` is set when region ``k`` is observed.  Union of coverage is
``|`` and the utility of a mask is the summed value of its set bits, which
makes the global utility submodular by construction.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

SCENARIO_SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


class ScenarioKind(str, enum.Enum):
    ROADMAP = "roadmap"
    GRID = "grid"


@dataclass(frozen=True)
class Region:
    id: int
    center: tuple[float, float]
    radius: float
    value: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ScenarioError(f"region {self.id}: radius must be > 0")
        if self.value < 0:
            raise ScenarioError(f"region {self.id}: value must be >= 0")


def point_segment_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


@dataclass
class RoadmapGraph:
    vertices: list[tuple[float, float]]
    edges: list[tuple[int, int]]
    edge_regions: list[frozenset[int]]
    adjacency: list[list[tuple[int, int]]] = field(init=False, repr=False)
    edge_masks: list[int] = field(init=False, repr=False)

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ScenarioError(f"self-loop at vertex {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ScenarioError(f"duplicate edge {key}")
            seen.add(key)
        if len(self.edge_regions) != len(self.edges):
            raise ScenarioError("edge_regions must align with edges")
        # adjacency[v] = [(edge index, neighbour)], sorted by edge index
        self.adjacency = [[] for _ in self.vertices]
        for e, (i, j) in enumerate(self.edges):
            self.adjacency[i].append((e, j))
            self.adjacency[j].append((e, i))
        self.edge_masks = [_mask_of(regs) for regs in self.edge_regions]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def other_end(self, edge: int, vertex: int) -> int:
        i, j = self.edges[edge]
        if vertex == i:
            return j
        if vertex == j:
            return i
        raise ValueError(f"edge {edge} is not incident to vertex {vertex}")

    def incident_edges(self, vertex: int) -> list[tuple[int, int]]:
        return self.adjacency[vertex]


def _mask_of(region_ids: Iterable[int]) -> int:
    mask = 0
    for k in region_ids:
        mask |= 1 << k
    return mask


def mask_to_ids(mask: int) -> list[int]:
    ids = []
    k = 0
    while mask:
        if mask & 1:
            ids.append(k)
        mask >>= 1
        k += 1
    return ids


@dataclass(frozen=True)
class Path:
    agent_id: int
    start_vertex: int
    edges: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))

    def __len__(self):
        return len(self.edges)

    def end_vertex(self, graph: RoadmapGraph) -> int:
        v = self.start_vertex
        for e in self.edges:
            v = graph.other_end(e, v)
        return v

    def is_valid(self, graph: RoadmapGraph) -> bool:
        v = self.start_vertex
        for e in self.edges:
            i, j = graph.edges[e]
            if v == i:
                v = j
            elif v == j:
                v = i
            else:
                return False
        return True


def path_cost(path: Path) -> int:
    return len(path.edges)


class CoverageValue:
    """Summed region value of a coverage mask.

    Uniform region values take the popcount fast path; otherwise per-byte
    lookup tables are used.
    """

    def __init__(self, values: Sequence[float]):
        self.values = tuple(float(v) for v in values)
        self.total = float(sum(self.values))
        uniq = set(self.values)
        self._uniform = self.values[0] if len(uniq) == 1 else None
        self._tables = None
        if self._uniform is None and self.values:
            self._tables = []
            for base in range(0, len(self.values), 8):
                chunk = self.values[base : base + 8]
                table = [0.0] * 256
                for byte in range(256):
                    s = 0.0
                    for bit, v in enumerate(chunk):
                        if byte >> bit & 1:
                            s += v
                    table[byte] = s
                self._tables.append(table)

    def __call__(self, mask: int) -> float:
        if not mask:
            return 0.0
        if self._uniform is not None:
            return mask.bit_count() * self._uniform
        total = 0.0
        for table in self._tables:
            total += table[mask & 0xFF]
            mask >>= 8
            if not mask:
                break
        return total


@dataclass
class Scenario:
    graph: RoadmapGraph
    regions: list[Region]
    kind: ScenarioKind = ScenarioKind.ROADMAP
    metadata: dict = field(default_factory=dict)
    starts: list[int] = field(default_factory=list)

    def __post_init__(self):
        for k, r in enumerate(self.regions):
            if r.id != k:
                raise ScenarioError("region ids must be contiguous from 0")
        self.value = CoverageValue([r.value for r in self.regions])

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def total_value(self) -> float:
        return self.value.total

    def path_mask(self, path: Path | Sequence[int]) -> int:
        edges = path.edges if isinstance(path, Path) else path
        masks = self.graph.edge_masks
        m = 0
        for e in edges:
            m |= masks[e]
        return m

    def observed_regions(self, path: Path) -> set[int]:
        return set(mask_to_ids(self.path_mask(path)))

    def fingerprint(self) -> str:
        return json.dumps(scenario_to_dict(self), sort_keys=True)


def _segment_regions(a, b, regions: Sequence[Region], cand: Iterable[int] | None = None) -> frozenset[int]:
    ids = range(len(regions)) if cand is None else cand
    return frozenset(
        k for k in ids if point_segment_distance(regions[k].center, a, b) <= regions[k].radius
    )


def _edge_regions_vectorized(vertices: np.ndarray, edges: np.ndarray, centers: np.ndarray, radii: np.ndarray):
    """Point-to-segment test of every region against every edge, in chunks."""
    out: list[frozenset[int]] = []
    if len(edges) == 0:
        return out
    chunk = max(1, 2_000_000 // max(1, len(centers)))
    for lo in range(0, len(edges), chunk):
        e = edges[lo : lo + chunk]
        a = vertices[e[:, 0]][:, None, :]
        b = vertices[e[:, 1]][:, None, :]
        d = b - a
        seg2 = (d * d).sum(-1)
        p = centers[None, :, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = ((p - a) * d).sum(-1) / seg2
        t = np.where(seg2 > 0, np.clip(t, 0.0, 1.0), 0.0)
        proj = a + t[..., None] * d
        dist = np.sqrt(((p - proj) ** 2).sum(-1))
        hit = dist <= radii[None, :]
        for row in hit:
            out.append(frozenset(np.flatnonzero(row).tolist()))
    return out


def generate_roadmap_scenario(
    seed: int,
    area_side: float = 4000.0,
    n_regions: int = 200,
    region_radius: float = 50.0,
    region_value: float = 1.0,
    n_vertices: int = 400,
    connect_radius: float = 1275.0,
    n_agents: int = 0,
    start_mode: str = "random",
) -> Scenario:
    """Random probabilistic-roadmap world with uniformly scattered regions.

    Vertices and region centres are drawn uniformly in the square; every
    vertex pair closer than ``connect_radius`` is joined.  Regions that no
    edge passes through get a vertex at their centre (coverage repair).
    ``start_mode`` is ``"random"`` (distinct random vertices) or ``"depot"``
    (all agents at the vertex nearest the square's centre).
    """
    if min(n_regions, n_vertices) <= 0 or area_side <= 0:
        raise ScenarioError("counts and area_side must be positive")
    if connect_radius <= 0 or region_radius <= 0:
        raise ScenarioError("connect_radius and region_radius must be positive")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, area_side, size=(n_regions, 2))
    verts = rng.uniform(0.0, area_side, size=(n_vertices, 2))
    regions = [
        Region(k, (float(c[0]), float(c[1])), float(region_radius), float(region_value))
        for k, c in enumerate(centers)
    ]
    radii = np.full(n_regions, float(region_radius))

    diff = verts[:, None, :] - verts[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    ii, jj = np.nonzero(np.triu(dist <= connect_radius, k=1))
    edges = np.stack([ii, jj], axis=1) if len(ii) else np.zeros((0, 2), dtype=int)
    edge_regions = _edge_regions_vectorized(verts, edges, centers, radii)
    edge_list = [(int(i), int(j)) for i, j in edges]

    covered = set().union(*edge_regions) if edge_regions else set()
    vert_list = [(float(x), float(y)) for x, y in verts]
    added = 0
    for k in range(n_regions):
        if k in covered:
            continue
        if added >= n_regions:
            raise ScenarioError("coverage repair exceeded its vertex bound")
        c = centers[k]
        d = np.sqrt(((np.asarray(vert_list) - c) ** 2).sum(-1))
        near = [int(v) for v in np.flatnonzero(d <= connect_radius)]
        if not near:
            near = [int(np.argmin(d))]
        new_v = len(vert_list)
        vert_list.append((float(c[0]), float(c[1])))
        added += 1
        for v in near:
            if d[v] == 0.0:
                continue
            edge_list.append((v, new_v))
            regs = _segment_regions(vert_list[v], vert_list[new_v], regions)
            edge_regions.append(regs)
            covered |= regs
        if k not in covered:
            raise ScenarioError(f"coverage repair failed for region {k}")

    graph = RoadmapGraph(vert_list, edge_list, edge_regions)
    starts = _choose_starts(graph, n_agents, start_mode, area_side, rng)
    meta = dict(
        seed=seed,
        area_side=area_side,
        n_regions=n_regions,
        region_radius=region_radius,
        region_value=region_value,
        n_vertices=n_vertices,
        connect_radius=connect_radius,
        n_agents=n_agents,
        start_mode=start_mode,
        repair_vertices=added,
    )
    return Scenario(graph, regions, ScenarioKind.ROADMAP, meta, starts)


def _choose_starts(graph: RoadmapGraph, n_agents: int, mode: str, area_side: float, rng) -> list[int]:
    if n_agents <= 0:
        return []
    connected = [v for v in range(graph.n_vertices) if graph.adjacency[v]]
    if mode == "depot":
        pts = np.asarray([graph.vertices[v] for v in connected])
        d = ((pts - area_side / 2.0) ** 2).sum(-1)
        return [connected[int(np.argmin(d))]] * n_agents
    if mode != "random":
        raise ScenarioError(f"unknown start_mode {mode!r}")
    if n_agents > len(connected):
        raise ScenarioError("more agents than connected vertices")
    picks = rng.choice(len(connected), size=n_agents, replace=False)
    return [connected[int(i)] for i in picks]


def grid_cell_index(cell: tuple[int, int], cols: int) -> int:
    return cell[0] * cols + cell[1]


def generate_grid_scenario(
    rows: int,
    cols: int,
    rewards: Mapping[tuple[int, int], float],
    starts: Sequence[tuple[int, int]],
) -> Scenario:
    """4-connected grid; an edge observes the rewarded cells at both its ends.

    Counting both endpoints makes coverage a property of the edge itself, so
    a cell is observed by any edge entering or leaving it.  Agents never
    collect the reward of their own start cell without moving.
    """
    if rows <= 0 or cols <= 0:
        raise ScenarioError("grid must be non-empty")
    for r, c in list(starts) + list(rewards):
        if not (0 <= r < rows and 0 <= c < cols):
            raise ScenarioError(f"cell {(r, c)} outside {rows}x{cols} grid")
    if len(set(map(tuple, starts))) != len(starts):
        raise ScenarioError("overlapping start cells")

    vertices = [(float(c), float(-r)) for r in range(rows) for c in range(cols)]
    reward_cells = sorted(rewards)
    cell_region = {cell: k for k, cell in enumerate(reward_cells)}
    regions = [
        Region(k, vertices[grid_cell_index(cell, cols)], 0.25, float(rewards[cell]))
        for k, cell in enumerate(reward_cells)
    ]
    edges, edge_regions = [], []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                r2, c2 = r + dr, c + dc
                if r2 < rows and c2 < cols:
                    edges.append((grid_cell_index((r, c), cols), grid_cell_index((r2, c2), cols)))
                    regs = {cell_region[x] for x in ((r, c), (r2, c2)) if x in cell_region}
                    edge_regions.append(frozenset(regs))
    graph = RoadmapGraph(vertices, edges, edge_regions)
    meta = dict(rows=rows, cols=cols, rewards=[[r, c, float(v)] for (r, c), v in sorted(rewards.items())])
    return Scenario(
        graph,
        regions,
        ScenarioKind.GRID,
        meta,
        [grid_cell_index(tuple(s), cols) for s in starts],
    )


def coverage_mask(scenario: Scenario, paths: Iterable[Path], active: Iterable[int] | None = None) -> int:
    act = None if active is None else set(active)
    m = 0
    for p in paths:
        if act is None or p.agent_id in act:
            m |= scenario.path_mask(p)
    return m


def global_utility(scenario: Scenario, paths: Iterable[Path], active: Iterable[int]) -> float:
    """Value of the regions observed by at least one active agent's path."""
    return scenario.value(coverage_mask(scenario, paths, active))


def marginal_utility(
    scenario: Scenario,
    agent: int,
    own: Path,
    others: Iterable[Path],
    active: Iterable[int],
) -> float:
    act = set(active)
    others = [p for p in others if p.agent_id != agent]
    base = coverage_mask(scenario, others, act)
    own_mask = scenario.path_mask(own) if agent in act else 0
    return scenario.value(base | own_mask) - scenario.value(base)


# -- serialization -----------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    g = scenario.graph
    return {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "kind": scenario.kind.value,
        "metadata": scenario.metadata,
        "vertices": [list(v) for v in g.vertices],
        "edges": [list(e) for e in g.edges],
        "edge_regions": [sorted(r) for r in g.edge_regions],
        "regions": [
            {"id": r.id, "center": list(r.center), "radius": r.radius, "value": r.value}
            for r in scenario.regions
        ],
        "starts": list(scenario.starts),
    }


def scenario_from_dict(data: Mapping) -> Scenario:
    version = data.get("schema_version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema version {version!r}")
    graph = RoadmapGraph(
        [tuple(v) for v in data["vertices"]],
        [tuple(e) for e in data["edges"]],
        [frozenset(r) for r in data["edge_regions"]],
    )
    regions = [Region(r["id"], tuple(r["center"]), r["radius"], r["value"]) for r in data["regions"]]
    return Scenario(graph, regions, ScenarioKind(data["kind"]), dict(data["metadata"]), list(data["starts"]))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
