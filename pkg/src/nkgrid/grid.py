"""Grid representation, JSON ingestion, synthetic networks and connectivity.

A grid is a directed multigraph. Arc order is canonical: every per-arc array in
the package is indexed in the order the arcs appear in the grid file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

KINDS = ("generator", "demand", "neutral")


class GridError(ValueError):
    """Invalid grid data; the message starts with the offending field path."""


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    pmin: float = 0.0
    pmax: float = 0.0
    dnom: float = 0.0


@dataclass(frozen=True)
class Arc:
    id: str
    tail: str
    head: str
    x: float
    u: float
    xl: float | None = None
    xu: float | None = None


Attack = frozenset
Configuration = frozenset


@dataclass(frozen=True, eq=True)
class Grid:
    """Immutable power grid with cached index arrays.

    Attributes
    ----------
    nodes, arcs : tuple
        Canonical node and arc order.
    tails, heads : ndarray of int
        Node index of every arc end.
    gens, dems : ndarray of int
        Node indices of generators and demand nodes, in node order.
    """

    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    node_index: dict = field(init=False, repr=False, compare=False)
    arc_index: dict = field(init=False, repr=False, compare=False)
    tails: np.ndarray = field(init=False, repr=False, compare=False)
    heads: np.ndarray = field(init=False, repr=False, compare=False)
    x: np.ndarray = field(init=False, repr=False, compare=False)
    u: np.ndarray = field(init=False, repr=False, compare=False)
    gens: np.ndarray = field(init=False, repr=False, compare=False)
    dems: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "arcs", tuple(self.arcs))
        _validate(self.nodes, self.arcs)
        nidx = {nd.id: k for k, nd in enumerate(self.nodes)}
        aidx = {a.id: k for k, a in enumerate(self.arcs)}
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("node_index", nidx)
        set_("arc_index", aidx)
        set_("tails", np.array([nidx[a.tail] for a in self.arcs], dtype=int))
        set_("heads", np.array([nidx[a.head] for a in self.arcs], dtype=int))
        set_("x", np.array([a.x for a in self.arcs], dtype=float))
        set_("u", np.array([a.u for a in self.arcs], dtype=float))
        set_("gens", np.array([k for k, nd in enumerate(self.nodes) if nd.kind == "generator"], dtype=int))
        set_("dems", np.array([k for k, nd in enumerate(self.nodes) if nd.kind == "demand"], dtype=int))
        for name in ("tails", "heads", "x", "u", "gens", "dems"):
            getattr(self, name).setflags(write=False)

    def __hash__(self):
        return hash((self.nodes, self.arcs))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.arcs)

    @property
    def node_ids(self) -> list[str]:
        return [nd.id for nd in self.nodes]

    @property
    def arc_ids(self) -> list[str]:
        return [a.id for a in self.arcs]

    @property
    def gen_ids(self) -> list[str]:
        return [self.nodes[k].id for k in self.gens]

    @property
    def pmin(self) -> np.ndarray:
        return np.array([self.nodes[k].pmin for k in self.gens], dtype=float)

    @property
    def pmax(self) -> np.ndarray:
        return np.array([self.nodes[k].pmax for k in self.gens], dtype=float)

    @property
    def dnom(self) -> np.ndarray:
        return np.array([self.nodes[k].dnom for k in self.dems], dtype=float)

    def incidence(self, keep: np.ndarray | None = None) -> sp.csr_matrix:
        """Signed node-arc incidence: +1 at the tail, -1 at the head.

        Columns of arcs with ``keep[k] == False`` are zero.
        """
        cols = np.arange(self.m)
        if keep is not None:
            cols = cols[np.asarray(keep, dtype=bool)]
        rows = np.concatenate([self.tails[cols], self.heads[cols]])
        vals = np.concatenate([np.ones(len(cols)), -np.ones(len(cols))])
        return sp.csr_matrix((vals, (rows, np.concatenate([cols, cols]))), shape=(self.n, self.m))

    def attack_mask(self, attack: Iterable[str]) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        for aid in attack:
            if aid not in self.arc_index:
                raise GridError(f"attack: unknown arc id {aid!r}")
            mask[self.arc_index[aid]] = True
        return mask

    def attack_from_mask(self, mask) -> frozenset:
        return frozenset(self.arcs[k].id for k in np.flatnonzero(np.asarray(mask) > 0.5))

    def config_mask(self, config: Iterable[str]) -> np.ndarray:
        """Indicator over ``self.gens`` for a configuration of generator ids."""
        pos = {self.nodes[k].id: j for j, k in enumerate(self.gens)}
        mask = np.zeros(len(self.gens), dtype=bool)
        for gid in config:
            if gid not in pos:
                raise GridError(f"configuration: {gid!r} is not a generator")
            mask[pos[gid]] = True
        return mask

    def sorted_arcs(self, attack: Iterable[str]) -> list[str]:
        """Arc ids of an attack in canonical order."""
        return sorted(attack, key=self.arc_index.__getitem__)

    def sorted_gens(self, config: Iterable[str]) -> list[str]:
        return sorted(config, key=self.node_index.__getitem__)

    def with_capacities(self, u) -> "Grid":
        u = np.broadcast_to(np.asarray(u, dtype=float), (self.m,))
        arcs = [Arc(a.id, a.tail, a.head, a.x, float(v), a.xl, a.xu) for a, v in zip(self.arcs, u)]
        return Grid(self.nodes, arcs)

    def with_resistances(self, x) -> "Grid":
        x = np.broadcast_to(np.asarray(x, dtype=float), (self.m,))
        arcs = [Arc(a.id, a.tail, a.head, float(v), a.u, a.xl, a.xu) for a, v in zip(self.arcs, x)]
        return Grid(self.nodes, arcs)

    def with_pmin(self, pmin) -> "Grid":
        pmin = np.broadcast_to(np.asarray(pmin, dtype=float), (len(self.gens),))
        nodes = list(self.nodes)
        for j, k in enumerate(self.gens):
            nd = nodes[k]
            nodes[k] = Node(nd.id, nd.kind, float(pmin[j]), nd.pmax, nd.dnom)
        return Grid(nodes, self.arcs)


def _validate(nodes, arcs):
    if not nodes:
        raise GridError("nodes: no nodes")
    seen = set()
    for k, nd in enumerate(nodes):
        path = f"nodes[{k}]"
        if nd.id in seen:
            raise GridError(f"{path}.id: duplicate node id {nd.id!r}")
        seen.add(nd.id)
        if nd.kind not in KINDS:
            raise GridError(f"{path}.kind: unknown kind {nd.kind!r}")
        vals = (nd.pmin, nd.pmax, nd.dnom)
        if not all(np.isfinite(v) for v in vals):
            raise GridError(f"{path}: non-finite value")
        if nd.kind == "generator":
            if nd.pmin < 0:
                raise GridError(f"{path}.pmin: must be nonnegative")
            if nd.pmin > nd.pmax:
                raise GridError(f"{path}.pmin: pmin {nd.pmin} exceeds pmax {nd.pmax}")
        if nd.kind == "demand" and nd.dnom < 0:
            raise GridError(f"{path}.dnom: must be nonnegative")
    aseen = set()
    for k, a in enumerate(arcs):
        path = f"arcs[{k}]"
        if a.id in aseen:
            raise GridError(f"{path}.id: duplicate arc id {a.id!r}")
        aseen.add(a.id)
        for end in ("tail", "head"):
            if getattr(a, end) not in seen:
                raise GridError(f"{path}.{end}: unknown node {getattr(a, end)!r}")
        if a.tail == a.head:
            raise GridError(f"{path}.head: self-loop at {a.tail!r}")
        if not (np.isfinite(a.x) and a.x > 0):
            raise GridError(f"{path}.x: resistance must be positive")
        if not (np.isfinite(a.u) and a.u > 0):
            raise GridError(f"{path}.u: capacity must be positive")
        if a.xl is not None and not a.xl > 0:
            raise GridError(f"{path}.xl: must be positive")
        if a.xu is not None and a.xl is not None and a.xu < a.xl:
            raise GridError(f"{path}.xu: below xl")


# -- file format ---------------------------------------------------------------


def _num(obj, key, path):
    if key not in obj:
        raise GridError(f"{path}.{key}: missing")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise GridError(f"{path}.{key}: expected a number")
    return float(v)


def parse_grid(text: str) -> Grid:
    """Parse the JSON grid format and validate every invariant."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridError(f"$: malformed JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise GridError("$: expected an object")
    raw_nodes = data.get("nodes")
    raw_arcs = data.get("arcs", [])
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise GridError("nodes: no nodes")
    if not isinstance(raw_arcs, list):
        raise GridError("arcs: expected a list")
    nodes = []
    for k, rn in enumerate(raw_nodes):
        path = f"nodes[{k}]"
        if not isinstance(rn, dict) or "id" not in rn:
            raise GridError(f"{path}.id: missing")
        kind = rn.get("kind", "neutral")
        if kind == "generator":
            nodes.append(Node(str(rn["id"]), kind, pmin=_num(rn, "pmin", path), pmax=_num(rn, "pmax", path)))
        elif kind == "demand":
            nodes.append(Node(str(rn["id"]), kind, dnom=_num(rn, "dnom", path)))
        elif kind == "neutral":
            nodes.append(Node(str(rn["id"]), kind))
        else:
            raise GridError(f"{path}.kind: unknown kind {kind!r}")
    arcs = []
    for k, ra in enumerate(raw_arcs):
        path = f"arcs[{k}]"
        if not isinstance(ra, dict):
            raise GridError(f"{path}: expected an object")
        for key in ("id", "tail", "head"):
            if key not in ra:
                raise GridError(f"{path}.{key}: missing")
        xl = _num(ra, "xl", path) if "xl" in ra else None
        xu = _num(ra, "xu", path) if "xu" in ra else None
        arcs.append(Arc(str(ra["id"]), str(ra["tail"]), str(ra["head"]),
                        _num(ra, "x", path), _num(ra, "u", path), xl, xu))
    return Grid(nodes, arcs)


def grid_to_dict(g: Grid) -> dict:
    nodes = []
    for nd in g.nodes:
        if nd.kind == "generator":
            nodes.append({"id": nd.id, "kind": nd.kind, "pmin": nd.pmin, "pmax": nd.pmax})
        elif nd.kind == "demand":
            nodes.append({"id": nd.id, "kind": nd.kind, "dnom": nd.dnom})
        else:
            nodes.append({"id": nd.id, "kind": nd.kind})
    arcs = []
    for a in g.arcs:
        d = {"id": a.id, "tail": a.tail, "head": a.head, "x": a.x, "u": a.u}
        if a.xl is not None:
            d["xl"] = a.xl
        if a.xu is not None:
            d["xu"] = a.xu
        arcs.append(d)
    return {"nodes": nodes, "arcs": arcs}


def render_grid(g: Grid) -> str:
    return json.dumps(grid_to_dict(g), indent=1) + "\n"


def load_grid(path) -> Grid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read())


# -- connectivity --------------------------------------------------------------


def component_labels(g: Grid, keep: np.ndarray | None = None) -> tuple[int, np.ndarray]:
    """Component labels of the network restricted to arcs with ``keep``.

    Labels are renumbered so component ids increase with the lowest node index.
    """
    cols = np.arange(g.m) if keep is None else np.flatnonzero(keep)
    adj = sp.csr_matrix((np.ones(len(cols)), (g.tails[cols], g.heads[cols])), shape=(g.n, g.n))
    ncomp, raw = connected_components(adj, directed=False)
    order = {}
    for lab in raw:
        order.setdefault(lab, len(order))
    return ncomp, np.array([order[lab] for lab in raw], dtype=int)


def components(g: Grid, attack: Iterable[str] = ()) -> list[frozenset]:
    """Node-id partition of the surviving network, ordered by lowest node index."""
    keep = ~g.attack_mask(attack)
    ncomp, labels = component_labels(g, keep)
    return [frozenset(g.nodes[k].id for k in np.flatnonzero(labels == c)) for c in range(ncomp)]


def is_connected(g: Grid) -> bool:
    return component_labels(g)[0] == 1


# -- synthetic networks ----------------------------------------------------------


def _place_terminals(rng, candidates, n_gens, n_demands, total_demand_range, supply_ratio):
    chosen = rng.choice(candidates, size=n_gens + n_demands, replace=False)
    gens, dems = chosen[:n_gens], chosen[n_gens:]
    lo, hi = total_demand_range
    dnom = rng.uniform(lo, hi, size=n_demands)
    share = rng.uniform(0.5, 1.5, size=n_gens)
    pmax = supply_ratio * dnom.sum() * share / share.sum()
    pmin = rng.uniform(0.0, 0.8, size=n_gens) * pmax
    return gens, dems, dnom, pmin, pmax


def _make_nodes(n, gens, dems, dnom, pmin, pmax, ids=None):
    ids = ids or [str(k + 1) for k in range(n)]
    nodes = [Node(ids[k], "neutral") for k in range(n)]
    for j, k in enumerate(gens):
        nodes[k] = Node(ids[k], "generator", pmin=float(pmin[j]), pmax=float(pmax[j]))
    for j, k in enumerate(dems):
        nodes[k] = Node(ids[k], "demand", dnom=float(dnom[j]))
    return nodes


def make_square_grid(rows: int, cols: int, n_gens: int, n_demands: int, seed: int, *,
                     capacity: float | None = None, demand_range=(1.0, 3.0),
                     supply_ratio: float = 1.5) -> Grid:
    """rows x cols lattice with unit resistances and constant capacity.

    Generators and demands sit on distinct nodes drawn uniformly without
    replacement. Nominal demands are uniform on ``demand_range``; total
    generator capacity is ``supply_ratio`` times total demand; each ``pmin`` is
    a uniform fraction in [0, 0.8] of ``pmax``. The default capacity is
    ``total demand / (2 n_gens)``.
    """
    if min(rows, cols, n_gens, n_demands) < 1:
        raise GridError("square grid: counts must be positive")
    n = rows * cols
    if n_gens + n_demands > n:
        raise GridError(f"square grid: cannot place {n_gens + n_demands} terminals on {n} nodes")
    rng = np.random.default_rng(seed)
    gens, dems, dnom, pmin, pmax = _place_terminals(rng, np.arange(n), n_gens, n_demands,
                                                    demand_range, supply_ratio)
    nodes = _make_nodes(n, gens, dems, dnom, pmin, pmax)
    if capacity is None:
        capacity = float(dnom.sum()) / (2 * n_gens)
    arcs = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                arcs.append((k, k + 1))
            if r + 1 < rows:
                arcs.append((k, k + cols))
    arcs = [Arc(str(j + 1), nodes[a].id, nodes[b].id, 1.0, float(capacity)) for j, (a, b) in enumerate(arcs)]
    return Grid(nodes, arcs)


def make_random_grid(n_nodes: int, n_arcs: int, n_gens: int, n_demands: int, seed: int, *,
                     x_range=(0.5, 2.0), capacity_range=(0.3, 1.2), demand_range=(1.0, 3.0),
                     supply_ratio: float = 1.6) -> Grid:
    """Connected random multigraph: a random spanning tree plus extra arcs.

    Capacities are drawn as fractions of total demand, so the congestion level
    does not depend on the demand scale.
    """
    if n_arcs < n_nodes - 1:
        raise GridError("random grid: too few arcs for a connected network")
    if n_gens + n_demands > n_nodes:
        raise GridError("random grid: too many terminals")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_nodes)
    pairs = [(int(perm[rng.integers(0, k)]), int(perm[k])) for k in range(1, n_nodes)]
    present = {frozenset(p) for p in pairs}
    while len(pairs) < n_arcs:
        a, b = (int(v) for v in rng.choice(n_nodes, size=2, replace=False))
        if frozenset((a, b)) in present and len(present) < n_nodes * (n_nodes - 1) // 2:
            continue
        present.add(frozenset((a, b)))
        pairs.append((a, b))
    order = rng.permutation(len(pairs))
    pairs = [pairs[k] for k in order]
    gens, dems, dnom, pmin, pmax = _place_terminals(rng, np.arange(n_nodes), n_gens, n_demands,
                                                    demand_range, supply_ratio)
    nodes = _make_nodes(n_nodes, gens, dems, dnom, pmin, pmax)
    x = rng.uniform(*x_range, size=len(pairs))
    u = rng.uniform(*capacity_range, size=len(pairs)) * dnom.sum()
    arcs = [Arc(str(j + 1), nodes[a].id, nodes[b].id, float(x[j]), float(u[j]))
            for j, (a, b) in enumerate(pairs)]
    return Grid(nodes, arcs)


def replicate(g: Grid, n_bridges: int, seed: int) -> Grid:
    """Two disjoint copies of ``g`` joined by ``n_bridges`` random cross arcs.

    Copy ids are prefixed ``A`` and ``B``; bridge arcs are ``X1, X2, ...``. Each
    bridge gets the mean resistance and mean capacity of ``g``, each perturbed
    by an independent uniform factor in [0.9, 1.1].
    """
    if n_bridges < 1:
        raise GridError("replicate: n_bridges must be at least 1")
    if not is_connected(g):
        raise GridError("replicate: grid must be connected")
    if n_bridges > g.n * g.n:
        raise GridError("replicate: more bridges than node pairs")
    rng = np.random.default_rng(seed)
    nodes, arcs = [], []
    for tag in ("A", "B"):
        nodes += [Node(tag + nd.id, nd.kind, nd.pmin, nd.pmax, nd.dnom) for nd in g.nodes]
        arcs += [Arc(tag + a.id, tag + a.tail, tag + a.head, a.x, a.u, a.xl, a.xu) for a in g.arcs]
    flat = rng.choice(g.n * g.n, size=n_bridges, replace=False)
    xm, um = float(g.x.mean()), float(g.u.mean())
    px = rng.uniform(0.9, 1.1, size=n_bridges)
    pu = rng.uniform(0.9, 1.1, size=n_bridges)
    for j, cell in enumerate(flat):
        a, b = divmod(int(cell), g.n)
        arcs.append(Arc(f"X{j + 1}", "A" + g.nodes[a].id, "B" + g.nodes[b].id, xm * px[j], um * pu[j]))
    return Grid(nodes, arcs)


def three_node_grid() -> Grid:
    """Triangle with two generators and one demand; the smallest non-trivial case."""
    nodes = [Node("1", "generator", pmin=2.0, pmax=4.0),
             Node("2", "generator", pmin=0.0, pmax=4.0),
             Node("3", "demand", dnom=6.0)]
    arcs = [Arc("1-2", "1", "2", 1.0, 1.0),
            Arc("2-3", "2", "3", 1.0, 5.0),
            Arc("1-3", "1", "3", 1.0, 3.0)]
    return Grid(nodes, arcs)


def parallel_pair_grid(u_a: float = 1.0, u_b: float = 1.0, load: float = 1.0) -> Grid:
    """Source and sink joined by two parallel unit-resistance arcs."""
    nodes = [Node("s", "generator", pmin=0.0, pmax=load), Node("t", "demand", dnom=load)]
    return Grid(nodes, [Arc("a", "s", "t", 1.0, u_a), Arc("b", "s", "t", 1.0, u_b)])


def non_monotone_grid() -> Grid:
    """Hand-built network where one removal succeeds but no pair of removals does.

    Generator 1 feeds hub 6, which splits into two low-resistance branches
    towards generators 2 and 3; each of those reaches a demand through two
    parallel arcs (capacity 10, resistance 1). Generators 2 and 3 must run at a
    fixed 8 units, so they cannot both be on.
    """
    nodes = [Node("1", "generator", pmin=1.0, pmax=6.0),
             Node("2", "generator", pmin=8.0, pmax=8.0),
             Node("3", "generator", pmin=8.0, pmax=8.0),
             Node("4", "demand", dnom=5.0),
             Node("5", "demand", dnom=5.0),
             Node("6", "neutral")]
    arcs = [Arc("1-6", "1", "6", 1.0, 6.0),
            Arc("6-2", "6", "2", 0.01, 3.2),
            Arc("6-3", "6", "3", 0.01, 3.2),
            Arc("2-4a", "2", "4", 1.0, 10.0),
            Arc("2-4b", "2", "4", 1.0, 10.0),
            Arc("3-5a", "3", "5", 1.0, 10.0),
            Arc("3-5b", "3", "5", 1.0, 10.0),
            Arc("4-5", "4", "5", 1.0, 4.0)]
    return Grid(nodes, arcs)


CHORDS_7X7 = ((1, 9), (7, 15), (6, 12), (13, 21), (43, 37), (49, 41))


def comparison_grid(seed: int = 7, capacity: float | None = None) -> Grid:
    """7x7 lattice plus six corner chords (90 arcs), 4 generators, 14 demands.

    Terminals sit on the 25 interior lattice nodes so that no generator or
    demand can be cut off by removing three arcs. Generators have ``pmin = 0``.
    """
    base = make_square_grid(7, 7, 1, 1, seed)
    rng = np.random.default_rng(seed)
    interior = np.array([r * 7 + c for r in range(1, 6) for c in range(1, 6)])
    gens, dems, dnom, _, pmax = _place_terminals(rng, interior, 4, 14, (1.0, 3.0), 1.5)
    nodes = _make_nodes(49, gens, dems, dnom, np.zeros(4), pmax)
    if capacity is None:
        capacity = float(dnom.sum()) / 8.0
    arcs = [Arc(a.id, a.tail, a.head, 1.0, capacity) for a in base.arcs]
    for j, (a, b) in enumerate(CHORDS_7X7):
        arcs.append(Arc(str(len(arcs) + 1), str(a), str(b), 1.0, capacity))
    return Grid(nodes, arcs)


DESK_TMINS = (0.3, 0.5, 0.8)


def desk_scale_cases(count: int = 54, base_seed: int = 0) -> list[tuple[str, Grid, float]]:
    """Seeded small grids (6-10 nodes, at most 14 arcs, 2-3 generators) with cycling tmin."""
    out = []
    for s in range(base_seed, base_seed + count):
        rng = np.random.default_rng(s)
        n = int(rng.integers(6, 11))
        m = int(rng.integers(n, min(14, n * (n - 1) // 2) + 1))
        ng = int(rng.integers(2, 4))
        nd = int(rng.integers(2, min(4, n - ng) + 1))
        g = make_random_grid(n, m, ng, nd, seed=s)
        out.append((f"desk-{s}", g, DESK_TMINS[s % len(DESK_TMINS)]))
    return out
