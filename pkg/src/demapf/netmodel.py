"""Road network model, MovingAI map/scenario ingestion and unconstrained routing.

Nodes and edges are both first-class *locations*: each one is a schedulable
resource with a length and a speed limit, and each one is owned by exactly
one Router.  The adjacency graph therefore alternates node, edge, node, ...
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

PASSABLE = frozenset(".G")
BLOCKED = frozenset("@TO")

UNBOUNDED = math.inf


class NetworkError(ValueError):
    """Raised for malformed maps, scenarios or network descriptions."""


class Unreachable(Exception):
    """No route exists between the requested nodes."""


class Kind(str, enum.Enum):
    NODE = "node"
    EDGE = "edge"


@dataclass(frozen=True)
class Location:
    id: str
    kind: Kind
    length: float = 0
    speed_limit: float = UNBOUNDED
    endpoints: tuple[str, str] | None = None

    def __post_init__(self):
        if self.length < 0:
            raise NetworkError(f"location {self.id}: negative length")
        if not self.speed_limit > 0:
            raise NetworkError(f"location {self.id}: speed limit must be positive")
        if self.kind is Kind.EDGE and self.endpoints is None:
            raise NetworkError(f"edge {self.id} has no endpoints")


@dataclass(frozen=True)
class WorldConfig:
    edge_length: float = 10
    node_length: float = 0
    t_min: int = 1
    default_speed_limit: float = UNBOUNDED

    def __post_init__(self):
        if not self.edge_length > 0:
            raise NetworkError("edge_length must be positive")
        if self.node_length < 0:
            raise NetworkError("node_length must be non-negative")
        if self.t_min < 0:
            raise NetworkError("t_min must be non-negative")
        if not self.default_speed_limit > 0:
            raise NetworkError("default_speed_limit must be positive")


@dataclass(frozen=True)
class TravellerSpec:
    id: str
    length: float
    speed: float
    source: str
    destination: str
    depart_not_before: int = 0

    def __post_init__(self):
        if not self.length > 0:
            raise NetworkError(f"traveller {self.id}: length must be positive")
        if not self.speed > 0:
            raise NetworkError(f"traveller {self.id}: speed must be positive")
        if self.source == self.destination:
            raise NetworkError(f"traveller {self.id}: source equals destination")
        if self.depart_not_before < 0:
            raise NetworkError(f"traveller {self.id}: negative departure time")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "length": self.length,
            "speed": self.speed,
            "source": self.source,
            "destination": self.destination,
            "depart_not_before": self.depart_not_before,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TravellerSpec":
        return cls(
            id=obj["id"],
            length=obj["length"],
            speed=obj["speed"],
            source=obj["source"],
            destination=obj["destination"],
            depart_not_before=obj.get("depart_not_before", 0),
        )


def node_id(row: int, col: int) -> str:
    return f"r{row}c{col}"


def edge_id(a: str, b: str) -> str:
    a, b = sorted((a, b))
    return f"{a}-{b}"


@dataclass
class RoadNetwork:
    """Locations plus a symmetric node<->edge adjacency relation.

    ``grid`` is set when the network came from a MovingAI map; it keeps the
    (height, width, passable-cell set) needed to write the map back out.
    """

    locations: dict[str, Location]
    adjacency: dict[str, tuple[str, ...]]
    grid: tuple[int, int, frozenset[tuple[int, int]]] | None = field(default=None, compare=False)

    @classmethod
    def build(
        cls,
        nodes: Iterable[Location],
        edges: Iterable[Location],
        grid=None,
    ) -> "RoadNetwork":
        locations: dict[str, Location] = {}
        adj: dict[str, list[str]] = {}
        for n in nodes:
            if n.kind is not Kind.NODE:
                raise NetworkError(f"{n.id} is not a node")
            if n.id in locations:
                raise NetworkError(f"duplicate location id {n.id}")
            locations[n.id] = n
            adj[n.id] = []
        for e in edges:
            if e.kind is not Kind.EDGE:
                raise NetworkError(f"{e.id} is not an edge")
            if e.id in locations:
                raise NetworkError(f"duplicate location id {e.id}")
            a, b = e.endpoints
            if a == b:
                raise NetworkError(f"edge {e.id} is a self loop")
            for end in (a, b):
                if end not in locations or locations[end].kind is not Kind.NODE:
                    raise NetworkError(f"edge {e.id} references unknown node {end}")
            locations[e.id] = e
            adj[e.id] = [a, b]
            adj[a].append(e.id)
            adj[b].append(e.id)
        adjacency = {k: tuple(sorted(v)) for k, v in adj.items()}
        return cls(locations, adjacency, grid)

    @classmethod
    def from_links(cls, nodes: Iterable[str], links: Iterable[tuple[str, str]],
                   cfg: WorldConfig | None = None) -> "RoadNetwork":
        """Network with the given node names and one edge per linked pair."""
        cfg = cfg or WorldConfig()
        ns = [Location(n, Kind.NODE, cfg.node_length, cfg.default_speed_limit) for n in nodes]
        es = [Location(edge_id(a, b), Kind.EDGE, cfg.edge_length, cfg.default_speed_limit,
                       tuple(sorted((a, b)))) for a, b in links]
        return cls.build(ns, es)

    @property
    def nodes(self) -> list[str]:
        return sorted(k for k, v in self.locations.items() if v.kind is Kind.NODE)

    @property
    def edges(self) -> list[str]:
        return sorted(k for k, v in self.locations.items() if v.kind is Kind.EDGE)

    def __contains__(self, loc_id: str) -> bool:
        return loc_id in self.locations

    def __getitem__(self, loc_id: str) -> Location:
        return self.locations[loc_id]

    def neighbours(self, loc_id: str) -> tuple[str, ...]:
        return self.adjacency[loc_id]

    def adjacent(self, a: str, b: str) -> bool:
        return b in self.adjacency.get(a, ())

    def edge_between(self, a: str, b: str) -> str | None:
        for e in self.adjacency[a]:
            if b in self.locations[e].endpoints:
                return e
        return None

    def restrict(self, keep: Iterable[str]) -> "RoadNetwork":
        """Sub-network induced by the location ids in ``keep``."""
        keep = set(keep)
        locations = {k: v for k, v in self.locations.items() if k in keep}
        adjacency = {k: tuple(x for x in v if x in keep) for k, v in self.adjacency.items() if k in keep}
        return RoadNetwork(locations, adjacency)

    def to_json(self) -> dict:
        def speed(v):
            return None if math.isinf(v) else v

        return {
            "nodes": [
                {"id": n, "length": self.locations[n].length,
                 "speed_limit": speed(self.locations[n].speed_limit)}
                for n in self.nodes
            ],
            "edges": [
                {"id": e, "length": self.locations[e].length,
                 "speed_limit": speed(self.locations[e].speed_limit),
                 "endpoints": list(self.locations[e].endpoints)}
                for e in self.edges
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "RoadNetwork":
        def speed(v):
            return UNBOUNDED if v is None else v

        try:
            nodes = [Location(n["id"], Kind.NODE, n.get("length", 0), speed(n.get("speed_limit")))
                     for n in obj["nodes"]]
            edges = [Location(e["id"], Kind.EDGE, e["length"], speed(e.get("speed_limit")),
                              tuple(e["endpoints"]))
                     for e in obj["edges"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"bad network JSON: {exc}") from exc
        return cls.build(nodes, edges)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _parse_header(lines: list[str]) -> tuple[int, int, int]:
    """Return (height, width, index of first grid row)."""
    fields: dict[str, str] = {}
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "map":
            break
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("type", "height", "width"):
            raise NetworkError(f"malformed map header line: {line!r}")
        fields[parts[0]] = parts[1]
    else:
        raise NetworkError("map header has no 'map' line")
    if "type" not in fields:
        raise NetworkError("map header has no 'type' line")
    try:
        height, width = int(fields["height"]), int(fields["width"])
    except (KeyError, ValueError) as exc:
        raise NetworkError("map header needs integer height and width") from exc
    if height <= 0 or width <= 0:
        raise NetworkError("map dimensions must be positive")
    return height, width, i


def parse_grid(text: str) -> tuple[int, int, frozenset[tuple[int, int]]]:
    lines = text.splitlines()
    height, width, start = _parse_header(lines)
    rows = [ln.rstrip("\r\n") for ln in lines[start:]]
    while rows and not rows[-1].strip():
        rows.pop()
    if len(rows) != height:
        raise NetworkError(f"expected {height} grid rows, found {len(rows)}")
    passable = set()
    for r, row in enumerate(rows):
        if len(row) != width:
            raise NetworkError(f"row {r} has length {len(row)}, expected {width}")
        for c, ch in enumerate(row):
            if ch in PASSABLE:
                passable.add((r, c))
            elif ch not in BLOCKED:
                raise NetworkError(f"unknown map symbol {ch!r} at row {r}, col {c}")
    if not passable:
        raise NetworkError("map has no passable cells")
    return height, width, frozenset(passable)


def grid_network(height: int, width: int, passable: Iterable[tuple[int, int]],
                 cfg: WorldConfig | None = None) -> RoadNetwork:
    cfg = cfg or WorldConfig()
    cells = frozenset(passable)
    nodes = [Location(node_id(r, c), Kind.NODE, cfg.node_length, cfg.default_speed_limit)
             for r, c in sorted(cells)]
    edges = []
    for r, c in sorted(cells):
        for nr, nc in ((r, c + 1), (r + 1, c)):
            if (nr, nc) in cells:
                a, b = node_id(r, c), node_id(nr, nc)
                edges.append(Location(edge_id(a, b), Kind.EDGE, cfg.edge_length,
                                      cfg.default_speed_limit, tuple(sorted((a, b)))))
    return RoadNetwork.build(nodes, edges, grid=(height, width, cells))


def parse_map(text: str, cfg: WorldConfig | None = None) -> RoadNetwork:
    """Build a 4-connected road network from MovingAI ``.map`` text."""
    height, width, cells = parse_grid(text)
    return grid_network(height, width, cells, cfg)


def format_map(net: RoadNetwork) -> str:
    if net.grid is None:
        raise NetworkError("network was not built from a grid map")
    height, width, cells = net.grid
    rows = ["".join("." if (r, c) in cells else "@" for c in range(width)) for r in range(height)]
    return "\n".join(["type octile", f"height {height}", f"width {width}", "map", *rows]) + "\n"


def _number(tok: str, what: str, lineno: int) -> int | float:
    try:
        v = float(tok)
    except ValueError as exc:
        raise NetworkError(f"line {lineno}: {what} {tok!r} is not a number") from exc
    return int(v) if v.is_integer() else v


def parse_scenario(text: str, net: RoadNetwork | None = None) -> list[TravellerSpec]:
    """Parse an extended MovingAI ``.scen`` file.

    Columns: bucket, map, width, height, sx, sy, gx, gy, base_cost, length,
    speed, depart_time and an optional traveller id.  Coordinates are
    (x=column, y=row).  When ``net`` is given, start and goal cells must be
    passable in it.
    """
    specs: list[TravellerSpec] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("version"):
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) not in (12, 13):
            raise NetworkError(f"line {lineno}: expected 12 or 13 columns, got {len(cols)}")
        try:
            sx, sy, gx, gy = (int(c) for c in cols[4:8])
        except ValueError as exc:
            raise NetworkError(f"line {lineno}: non-integer coordinate") from exc
        length = _number(cols[9], "length", lineno)
        speed = _number(cols[10], "speed", lineno)
        depart = _number(cols[11], "depart_time", lineno)
        if length <= 0 or speed <= 0:
            raise NetworkError(f"line {lineno}: length and speed must be positive")
        if depart < 0 or not float(depart).is_integer():
            raise NetworkError(f"line {lineno}: depart_time must be a non-negative integer")
        tid = cols[12] if len(cols) == 13 else f"a{len(specs)}"
        if tid in seen:
            raise NetworkError(f"line {lineno}: duplicate traveller id {tid!r}")
        seen.add(tid)
        src, dst = node_id(sy, sx), node_id(gy, gx)
        if net is not None:
            for name, nid in (("start", src), ("goal", dst)):
                if nid not in net or net[nid].kind is not Kind.NODE:
                    raise NetworkError(f"line {lineno}: {name} cell {nid} is blocked or off-map")
        try:
            specs.append(TravellerSpec(tid, length, speed, src, dst, int(depart)))
        except NetworkError as exc:
            raise NetworkError(f"line {lineno}: {exc}") from exc
    return specs


def format_scenario(specs: Sequence[TravellerSpec], map_name: str = "map",
                    width: int = 0, height: int = 0) -> str:
    def coords(nid: str) -> tuple[int, int]:
        r, c = nid[1:].split("c")
        return int(c), int(r)

    out = ["version 1"]
    for s in specs:
        sx, sy = coords(s.source)
        gx, gy = coords(s.destination)
        out.append("\t".join(str(v) for v in (
            0, map_name, width, height, sx, sy, gx, gy, 0,
            s.length, s.speed, s.depart_not_before, s.id)))
    return "\n".join(out) + "\n"


# -- timing primitives used by routing ---------------------------------------

def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def traversal_duration(traveller: TravellerSpec, loc: Location) -> int:
    """Ticks a traveller occupies ``loc``: ceil((L_traveller + L_loc) / min(speeds))."""
    speed = traveller.speed if math.isinf(loc.speed_limit) else min(traveller.speed, loc.speed_limit)
    return math.ceil((_exact(traveller.length) + _exact(loc.length)) / _exact(speed))


def tpp(traveller: TravellerSpec) -> int:
    """Tail lag between entering one location and clearing the previous one."""
    return math.ceil(_exact(traveller.length) / _exact(traveller.speed))


def shortest_path(net: RoadNetwork, source: str, target: str,
                  traveller: TravellerSpec) -> list[str]:
    """Least total traversal duration route, alternating node/edge ids.

    Cost counts every location on the route, source and target included.
    Equal-cost routes are resolved by the lexicographically smallest id
    sequence.  Raises :class:`Unreachable` when ``target`` cannot be reached.
    """
    for n in (source, target):
        if n not in net:
            raise NetworkError(f"unknown location {n}")
    dur = {lid: traversal_duration(traveller, loc) for lid, loc in net.locations.items()}
    heap: list[tuple[int, tuple[str, ...]]] = [(dur[source], (source,))]
    done: set[str] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        here = path[-1]
        if here in done:
            continue
        done.add(here)
        if here == target:
            return list(path)
        for nxt in net.adjacency[here]:
            if nxt not in done:
                heapq.heappush(heap, (cost + dur[nxt], path + (nxt,)))
    raise Unreachable(f"{target} is unreachable from {source}")
