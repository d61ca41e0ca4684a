"""Bow-tie labeling, degree statistics, clustering and conditional degree tables.

Components follow the degree-based convention: ``In`` banks only lend (in-edges
only), ``Out`` banks only borrow, ``InOut`` do both, ``Isolated`` do neither. The
largest strongly connected component inside ``InOut`` is reported separately.
"""
from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Iterable

from .ledger import ZERO, Exposure, ExposureSnapshot


class Component(str, enum.Enum):
    IN = "In"
    OUT = "Out"
    INOUT = "InOut"
    ISOLATED = "Isolated"


@dataclass(frozen=True)
class BowTieLabeling:
    labels: dict[str, Component]
    scc_core: frozenset
    outstanding_by_pair: dict[tuple[Component, Component], Decimal]

    def members(self, component: Component) -> list[str]:
        return [b for b, c in self.labels.items() if c is component]

    def counts(self) -> dict[Component, int]:
        c = Counter(self.labels.values())
        return {comp: c.get(comp, 0) for comp in Component}


def label_of(in_deg: int, out_deg: int) -> Component:
    if in_deg > 0 and out_deg > 0:
        return Component.INOUT
    if in_deg > 0:
        return Component.IN
    if out_deg > 0:
        return Component.OUT
    return Component.ISOLATED


def strongly_connected_components(nodes: Iterable, succ: dict) -> list[list]:
    """Iterative Tarjan; ``succ`` maps node -> iterable of successor nodes."""
    index, low, on_stack = {}, {}, set()
    stack, out = [], []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ.get(root, ())))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ.get(w, ()))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def bow_tie_decompose(snapshot: ExposureSnapshot) -> BowTieLabeling:
    labels = {b: label_of(snapshot.in_degree(b), snapshot.out_degree(b)) for b in snapshot.banks}
    inout = {b for b, c in labels.items() if c is Component.INOUT}
    succ = {b: [t for t, _ in snapshot.successors[b] if t in inout] for b in sorted(inout)}
    comps = strongly_connected_components(sorted(inout), succ)
    core = frozenset()
    big = [c for c in comps if len(c) > 1]
    if big:
        # ties broken by smallest member id for determinism
        core = frozenset(min(big, key=lambda c: (-len(c), min(c))))
    pairs = defaultdict(lambda: ZERO)
    for e in snapshot.edges:
        pairs[(labels[e.borrower_id], labels[e.lender_id])] += e.weight
    return BowTieLabeling(labels, core, dict(pairs))


@dataclass(frozen=True)
class DegreeProfile:
    """Component-resolved degree counts.

    ``inout`` maps bank -> (k, l, r): out-edges into InOut, out-edges into In,
    and in-degree. ``out`` maps bank -> (k, l) for pure borrowers; ``in_`` maps
    bank -> r for pure lenders.
    """

    inout: dict[str, tuple[int, int, int]]
    in_: dict[str, int]
    out: dict[str, tuple[int, int]]
    in_degree_hist: dict[int, int] = field(default_factory=dict)
    out_degree_hist: dict[int, int] = field(default_factory=dict)


def _split_out(snapshot, labeling, bank):
    k = l = 0
    for t, _ in snapshot.successors[bank]:
        c = labeling.labels[t]
        if c is Component.INOUT:
            k += 1
        elif c is Component.IN:
            l += 1
    return k, l


def degree_distributions(snapshot: ExposureSnapshot, labeling: BowTieLabeling) -> DegreeProfile:
    inout, in_, out = {}, {}, {}
    for b, c in labeling.labels.items():
        if c is Component.INOUT:
            k, l = _split_out(snapshot, labeling, b)
            inout[b] = (k, l, snapshot.in_degree(b))
        elif c is Component.IN:
            in_[b] = snapshot.in_degree(b)
        elif c is Component.OUT:
            out[b] = _split_out(snapshot, labeling, b)
    in_hist = Counter(snapshot.in_degree(b) for b in snapshot.banks)
    out_hist = Counter(snapshot.out_degree(b) for b in snapshot.banks)
    return DegreeProfile(inout, in_, out, dict(sorted(in_hist.items())), dict(sorted(out_hist.items())))


def _undirected_neighbours(snapshot) -> dict[str, set]:
    nb = defaultdict(set)
    for e in snapshot.edges:
        nb[e.borrower_id].add(e.lender_id)
        nb[e.lender_id].add(e.borrower_id)
    return nb


def clustering_and_density(snapshot: ExposureSnapshot) -> tuple[float | None, float | None]:
    """Global clustering (transitivity) and link probability of the undirected projection.

    Both are computed over non-isolated banks only. Clustering is ``None`` with
    fewer than three such banks; link probability is ``None`` with fewer than two.
    """
    nb = _undirected_neighbours(snapshot)
    n = len(nb)
    n_edges = sum(len(s) for s in nb.values()) // 2
    link_p = n_edges / (n * (n - 1) / 2) if n >= 2 else None
    if n < 3:
        return None, link_p
    triangles = 0
    triples = 0
    for v, s in nb.items():
        d = len(s)
        triples += d * (d - 1) // 2
        for w in s:
            if w > v:
                triangles += sum(1 for x in nb[w] & s if x > w)
    clustering = 3 * triangles / triples if triples else 0.0
    return clustering, link_p


def count_triangles_directed(node_set: Iterable[str], snapshot: ExposureSnapshot) -> tuple[int, int]:
    """(cyclic, feed-forward) triangle counts on the subgraph induced by ``node_set``.

    T1 is the 3-cycle A->B->C->A, T2 the transitive triangle A->B, B->C, A->C.
    """
    nodes = set(node_set)
    succ = {v: {t for t, _ in snapshot.successors[v] if t in nodes} for v in nodes}
    nb = defaultdict(set)
    for v, ts in succ.items():
        for t in ts:
            nb[v].add(t)
            nb[t].add(v)
    cyclic = ffw = 0
    for a in nb:
        for b in nb[a]:
            if b <= a:
                continue
            for c in nb[a] & nb[b]:
                if c <= b:
                    continue
                tri = (a, b, c)
                outs = [sum(1 for y in tri if y in succ[x]) for x in tri]
                if outs == [1, 1, 1]:
                    cyclic += 1
                else:
                    ffw += 1
    return cyclic, ffw


@dataclass(frozen=True)
class ConditionalTables:
    """Empirical edge-conditional degree distributions and vulnerability fractions.

    Conditioning is always on the source InOut bank's ``(k, l)``. Targets are
    described by in-degree ``r`` (In targets) or ``(u, t, r)`` (InOut targets).
    Cells without edges are absent.
    """

    P_IO: dict[tuple, float]
    P_IO_In: dict[tuple, dict[int, float]]
    P_IO_IO: dict[tuple, dict[tuple, float]]
    v_IO_In: dict[tuple, float]
    v_IO_IO: dict[tuple, float]
    counts_IO_In: dict[tuple, int] = field(default_factory=dict)
    counts_IO_IO: dict[tuple, int] = field(default_factory=dict)


def _cap(x, cap):
    return x if cap is None else min(x, cap)


def conditional_tables(snapshot: ExposureSnapshot, labeling: BowTieLabeling,
                       vulnerability_fn: Callable[[Exposure], bool] | None = None,
                       degree_cap: int | None = None) -> ConditionalTables:
    """Tally edge-conditional distributions over IO->In and IO->IO edges.

    ``vulnerability_fn`` decides per edge whether it transmits a default; without
    it every edge counts as invulnerable. ``degree_cap`` lumps all degrees above
    the cap into the cap cell (an approximation the analytic model inherits).
    """
    profile = degree_distributions(snapshot, labeling)
    io = {b: tuple(_cap(x, degree_cap) for x in klr) for b, klr in profile.inout.items()}
    node_cells = Counter((k, l) for k, l, _ in io.values())
    n_io = sum(node_cells.values())
    P_IO = {cell: cnt / n_io for cell, cnt in sorted(node_cells.items())}

    n_in, v_in = defaultdict(Counter), Counter()
    n_io_io, v_io_io = defaultdict(Counter), Counter()
    for e in snapshot.edges:
        if labeling.labels[e.borrower_id] is not Component.INOUT:
            continue
        k, l, _ = io[e.borrower_id]
        tgt = labeling.labels[e.lender_id]
        vul = bool(vulnerability_fn(e)) if vulnerability_fn is not None else False
        if tgt is Component.IN:
            r = _cap(snapshot.in_degree(e.lender_id), degree_cap)
            n_in[(k, l)][r] += 1
            v_in[((k, l), r)] += vul
        elif tgt is Component.INOUT:
            utr = io[e.lender_id]
            n_io_io[(k, l)][utr] += 1
            v_io_io[((k, l), utr)] += vul

    def normalise(table):
        out = {}
        for cell in sorted(table):
            row = table[cell]
            tot = sum(row.values())
            out[cell] = {key: cnt / tot for key, cnt in sorted(row.items())}
        return out

    counts_in = {(cell, r): c for cell in sorted(n_in) for r, c in sorted(n_in[cell].items())}
    counts_io = {(cell, utr): c for cell in sorted(n_io_io) for utr, c in sorted(n_io_io[cell].items())}
    return ConditionalTables(
        P_IO=P_IO,
        P_IO_In=normalise(n_in),
        P_IO_IO=normalise(n_io_io),
        v_IO_In={key: v_in[key] / c for key, c in counts_in.items()},
        v_IO_IO={key: v_io_io[key] / c for key, c in counts_io.items()},
        counts_IO_In=counts_in,
        counts_IO_IO=counts_io,
    )


def _key(t) -> str:
    return ",".join(str(x) for x in t)


def labeling_to_json(labeling: BowTieLabeling) -> dict:
    return {
        "labels": {b: c.value for b, c in labeling.labels.items()},
        "scc_core": sorted(labeling.scc_core),
        "outstanding_by_pair": {f"{a.value},{b.value}": str(v)
                                for (a, b), v in sorted(labeling.outstanding_by_pair.items(),
                                                        key=lambda kv: (kv[0][0].value, kv[0][1].value))},
    }


def tables_to_json(tables: ConditionalTables) -> dict:
    return {
        "P_IO": {_key(c): p for c, p in tables.P_IO.items()},
        "P_IO_In": {_key(c): {str(r): p for r, p in row.items()} for c, row in tables.P_IO_In.items()},
        "P_IO_IO": {_key(c): {_key(utr): p for utr, p in row.items()} for c, row in tables.P_IO_IO.items()},
        "v_IO_In": _nested(tables.v_IO_In, str),
        "v_IO_IO": _nested(tables.v_IO_IO, _key),
    }


def _nested(flat: dict, fmt) -> dict:
    out = {}
    for (cell, target), v in flat.items():
        out.setdefault(_key(cell), {})[fmt(target)] = v
    return out


def _parse_key(s: str) -> tuple:
    return tuple(int(x) for x in s.split(","))


def tables_from_json(d: dict) -> ConditionalTables:
    return ConditionalTables(
        P_IO={_parse_key(c): p for c, p in d["P_IO"].items()},
        P_IO_In={_parse_key(c): {int(r): p for r, p in row.items()} for c, row in d["P_IO_In"].items()},
        P_IO_IO={_parse_key(c): {_parse_key(u): p for u, p in row.items()} for c, row in d["P_IO_IO"].items()},
        v_IO_In={(_parse_key(c), int(r)): v for c, row in d["v_IO_In"].items() for r, v in row.items()},
        v_IO_IO={(_parse_key(c), _parse_key(u)): v for c, row in d["v_IO_IO"].items() for u, v in row.items()},
    )
