"""Homotopy moves on topological representatives.

Every move is a pure function producing a fresh representative of the
same outer automorphism.  The geometry is handled by a pair of path
transports: a forward one rewriting old paths on the new graph, and a
backward one used to re-express the marking.  Interior points of edges
are symbolic rationals, so subdivision points coming from invariant
cores never touch floating point.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from fractions import Fraction
from typing import (Dict, FrozenSet, Iterable, List, Optional, Sequence,
                    Set, Tuple)

from .errors import (
    BadRepresentative,
    CapExceeded,
    ConePointForbidden,
    ImageNotAtZeroCell,
    ImageNotTrivial,
    NotInvariantForest,
    NothingToFold,
    NotValenceOne,
    NotValenceTwo,
    NotZeroStratum,
    PathNotInLowerStrata,
    UnsafeMove,
)
from .groups import Automorphism
from .orbigraph import Orbigraph, Subgraph, VERTEX
from .paths import Path, Turn, is_edge_item, loop_of_word, tighten
from .toprep import (
    EG,
    ConeMap,
    Marking,
    TopRep,
    classify_strata,
    maximal_filtration,
)

Item = object


# ---------------------------------------------------------------------------
# trace records


@dataclass(frozen=True)
class MoveTrace:
    """One applied move: name, parameters, and matrices before/after."""

    move: str
    details: Tuple
    before: Tuple[Tuple[int, ...], ...]
    after: Tuple[Tuple[int, ...], ...]


_RECORDER: ContextVar[Optional[List[MoveTrace]]] = ContextVar(
    "orbitrain_move_log", default=None)


@contextmanager
def record_moves():
    """Collect a MoveTrace for every move applied inside the block."""
    log: List[MoveTrace] = []
    token = _RECORDER.set(log)
    try:
        yield log
    finally:
        _RECORDER.reset(token)


def _emit(move, details, before: TopRep, after: TopRep):
    log = _RECORDER.get()
    if log is not None:
        log.append(MoveTrace(move, tuple(details),
                             before.transition_matrix().entries,
                             after.transition_matrix().entries))


# ---------------------------------------------------------------------------
# path transport


def _invert_items(graph: Orbigraph, items: Sequence[Item]) -> Tuple[Item, ...]:
    out: List[Item] = []
    for item in reversed(items):
        if is_edge_item(item):
            out.append(-item)
        else:
            c, x = item
            out.append((c, graph.group_at(c).inv(x)))
    return tuple(out)


class Transport:
    """Rewrites paths of one graph as paths of another.

    ``cell_map`` sends each source cell to a target cell; ``edge_items``
    spells out the target itinerary of every positive source edge.
    Letters travel to the mapped cell unchanged.
    """

    __slots__ = ("source", "target", "cell_map", "edge_items")

    def __init__(self, source: Orbigraph, target: Orbigraph,
                 cell_map: Dict[int, int],
                 edge_items: Dict[int, Sequence[Item]]):
        self.source = source
        self.target = target
        self.cell_map = dict(cell_map)
        self.edge_items = {e: tuple(v) for e, v in edge_items.items()}

    @classmethod
    def identity(cls, graph: Orbigraph) -> "Transport":
        return cls(graph, graph,
                   {c: c for c in graph.cells()},
                   {e: (e,) for e in graph.edges()})

    def items(self, items: Sequence[Item]) -> Tuple[Item, ...]:
        out: List[Item] = []
        for item in items:
            if is_edge_item(item):
                piece = self.edge_items[abs(item)]
                out.extend(piece if item > 0
                           else _invert_items(self.target, piece))
            else:
                c, x = item
                out.append((self.cell_map[c], x))
        return tuple(out)

    def path(self, p: Path) -> Path:
        return tighten(self.target, self.cell_map[p.start], self.items(p.items))

    def then(self, later: "Transport") -> "Transport":
        """The composite transport ``self.source -> later.target``."""
        cells = {c: later.cell_map[v] for c, v in self.cell_map.items()}
        edges = {e: later.items(v) for e, v in self.edge_items.items()}
        return Transport(self.source, later.target, cells, edges)


def _transported_marking(f: TopRep, new_graph: Orbigraph, tr: Transport,
                         rtr: Transport,
                         delta: Sequence[Item] = ()) -> Optional[Marking]:
    """Carry the marking across a move.

    The backward transport expresses each canonical generator loop of the
    new graph as an old path; reading those through the old marking gives
    the new one.  ``delta`` connects the old base to where the round trip
    lands when the move swallowed the base cell.
    """
    marking = f.marking
    if marking is None:
        return None
    W = f.graph.W
    base2 = tr.cell_map[marking.base]
    b0 = rtr.cell_map[base2]
    dpath = tighten(f.graph, marking.base, delta)
    if dpath.end != b0:
        raise BadRepresentative("marking transport lost the base cell")
    dinv = dpath.invert()
    maps = {}
    for i in range(W.n):
        images = {}
        for h in W.factors[i].nontrivial():
            loop2 = loop_of_word(new_graph, base2, ((i, h),))
            back = rtr.path(loop2)
            images[h] = (dpath * back * dinv).word()
        maps[i] = images
    rho_back = Automorphism.from_element_images(W, maps)
    return Marking(new_graph, base2, marking.nu.compose(rho_back))


def _rebuild(f: TopRep, new_graph: Orbigraph, tr: Transport, rtr: Transport,
             edge_images: Dict[int, Path], delta: Sequence[Item] = ()) -> TopRep:
    """Assemble the moved representative's cells and marking."""
    cones = {}
    for c in new_graph.cone_cells():
        old = rtr.cell_map[c]
        cm = f.cone_images[old]
        cones[c] = ConeMap(c, tr.cell_map[cm.target], cm.table)
    vertices = {}
    for c in new_graph.cells():
        if new_graph.is_cone(c):
            continue
        old = rtr.cell_map[c]
        if f.graph.is_cone(old):
            raise BadRepresentative("vertex traced back to a cone point")
        vertices[c] = tr.cell_map[f.cell_image(old)]
    marking = _transported_marking(f, new_graph, tr, rtr, delta)
    return TopRep(new_graph, edge_images, cones, vertices, marking)


# ---------------------------------------------------------------------------
# tightening and forests


def tighten_rep(f: TopRep, walks: Dict[int, Sequence[Item]]) -> TopRep:
    """Representative with the given slack edge walks normalized.

    Each walk replaces the image of its edge; everything else is kept.
    """
    images = dict(f.edge_images)
    for e, items in walks.items():
        start = f.cell_image(f.graph.src(e))
        images[e] = tighten(f.graph, start, items)
    return TopRep(f.graph, images, f.cone_images, f.vertex_images, f.marking)


def maximal_pretrivial_forest(f: TopRep) -> Subgraph:
    """Edges whose iterated images die at points.

    An edge joins once every edge its image crosses is already known to
    die and the image carries no nontrivial cone letter.
    """
    graph = f.graph
    dead: Set[int] = set()
    grown = True
    while grown:
        grown = False
        for e in graph.edges():
            if e in dead:
                continue
            p = f.edge_images[e]
            if any(not is_edge_item(item) and item[1] != 0 for item in p.items):
                continue
            if all(c in dead for c in p.crossings()):
                dead.add(e)
                grown = True
    forest = graph.subgraph(dead)
    if dead and not forest.is_forest():
        raise BadRepresentative("pretrivial edges do not form a forest")
    return forest


def maximal_invariant_forest(f: TopRep) -> Subgraph:
    """A maximal invariant forest, grown greedily in edge order."""
    graph = f.graph
    chosen: Set[int] = set()
    for e in graph.edges():
        if e in chosen:
            continue
        closure = {e}
        queue = [e]
        while queue:
            for crossed in f.edge_images[queue.pop()].crossings():
                if crossed not in closure:
                    closure.add(crossed)
                    queue.append(crossed)
        candidate = chosen | closure
        if graph.subgraph(candidate).is_forest():
            chosen = candidate
    return graph.subgraph(chosen)


def _edge_set(forest) -> Set[int]:
    if isinstance(forest, Subgraph):
        return set(forest.edges)
    return {int(e) for e in forest}


def _collapse_parts(f: TopRep, forest):
    """Graph, transports, base connector, and survivors of a collapse."""
    graph = f.graph
    edges = _edge_set(forest)
    sub = graph.subgraph(edges)
    if not sub.is_forest():
        raise NotInvariantForest("a component carries more than one cone point")
    for e in sorted(edges):
        if any(c not in edges for c in f.edge_images[e].crossings()):
            raise NotInvariantForest(
                f"image of edge {graph.edge_label(e)} leaves the forest")

    comps = sub.components()
    comp_of: Dict[int, int] = {}
    reps: Dict[int, int] = {}
    walks: Dict[int, Dict[int, Tuple[Item, ...]]] = {}
    for k, comp in enumerate(comps):
        cones = comp.cone_cells()
        rep = cones[0] if cones else min(comp.cells)
        reps[k] = rep
        walk: Dict[int, Tuple[Item, ...]] = {rep: ()}
        frontier = [rep]
        while frontier:
            c = frontier.pop()
            for d in graph.edges_at(c):
                if abs(d) not in comp.edges:
                    continue
                nxt = graph.dst(d)
                if nxt not in walk:
                    walk[nxt] = walk[c] + (d,)
                    frontier.append(nxt)
        walks[k] = walk
        for c in comp.cells:
            comp_of[c] = k

    classes: List[Tuple[int, ...]] = []
    for c in graph.cells():
        if c in comp_of:
            k = comp_of[c]
            if reps[k] == c:
                classes.append(tuple(sorted(comps[k].cells)))
        else:
            classes.append((c,))
    classes.sort(key=min)
    cell_map: Dict[int, int] = {}
    back_cell: Dict[int, int] = {}
    kinds = []
    for new_id, cls in enumerate(classes):
        cones = [c for c in cls if graph.is_cone(c)]
        rep = cones[0] if cones else min(cls)
        kinds.append(graph.kinds[rep])
        back_cell[new_id] = rep
        for c in cls:
            cell_map[c] = new_id

    survivors = [e for e in graph.edges() if e not in edges]
    ends = [(cell_map[graph.src(e)], cell_map[graph.dst(e)]) for e in survivors]
    names = [graph.edge_names[e - 1] for e in survivors]
    new_graph = Orbigraph(graph.W, kinds, ends, names)

    fwd: Dict[int, Tuple[Item, ...]] = {}
    for new_e, old_e in enumerate(survivors, start=1):
        fwd[old_e] = (new_e,)
    for e in edges:
        fwd[e] = ()
    tr = Transport(graph, new_graph, cell_map, fwd)

    back: Dict[int, Tuple[Item, ...]] = {}
    for new_e, old_e in enumerate(survivors, start=1):
        pre: Tuple[Item, ...] = ()
        post: Tuple[Item, ...] = ()
        s, t = graph.src(old_e), graph.dst(old_e)
        if s in comp_of:
            pre = walks[comp_of[s]][s]
        if t in comp_of:
            post = _invert_items(graph, walks[comp_of[t]][t])
        back[new_e] = pre + (old_e,) + post
    rtr = Transport(new_graph, graph, back_cell, back)

    base = f.marking.base if f.marking is not None else None
    delta: Tuple[Item, ...] = ()
    if base is not None and base in comp_of:
        delta = _invert_items(graph, walks[comp_of[base]][base])
    return new_graph, tr, rtr, delta, survivors


def _finish_collapse(f: TopRep, parts) -> TopRep:
    new_graph, tr, rtr, delta, survivors = parts
    images = {new_e: tr.path(f.edge_images[old_e])
              for new_e, old_e in enumerate(survivors, start=1)}
    return _rebuild(f, new_graph, tr, rtr, images, delta)


def collapse_forest(f: TopRep, forest) -> TopRep:
    """Collapse each component of an invariant forest to a cell.

    Paths crossing the forest keep their net cone letters; a component
    containing a cone point collapses onto that cone.
    """
    parts = _collapse_parts(f, forest)
    out = _finish_collapse(f, parts)
    _emit("collapse_forest", (tuple(sorted(_edge_set(forest))),), f, out)
    return out


def _collapse_cleanup(f: TopRep, collapse_invariant: bool):
    """Collapse pretrivial and (optionally) invariant forests until none
    remain, returning the result and the accumulated transport."""
    acc = Transport.identity(f.graph)
    while True:
        forest = maximal_pretrivial_forest(f)
        if forest.nontrivial:
            parts = _collapse_parts(f, forest)
            f = _finish_collapse(f, parts)
            acc = acc.then(parts[1])
            continue
        if not collapse_invariant:
            break
        forest = maximal_invariant_forest(f)
        if not forest.nontrivial:
            break
        parts = _collapse_parts(f, forest)
        f = _finish_collapse(f, parts)
        acc = acc.then(parts[1])
    return f, acc


# ---------------------------------------------------------------------------
# subdivision


def subdivide(f: TopRep, e: int, split: int) -> TopRep:
    """Split edge ``e`` at its interior point over the ``split``-th zero
    cell of its image path."""
    n = f.edge_images[e].n_edges
    if not isinstance(split, int) or not 1 <= split <= n - 1:
        raise ImageNotAtZeroCell(
            f"edge {f.graph.edge_label(e)} has no interior point over "
            f"zero cell number {split} of its image")
    out = _subdivide_many(f, {e: (Fraction(split, n),)})
    _emit("subdivide", (e, split), f, out)
    return out


def _position_image(f: TopRep, e: int, x: Fraction):
    """Where the interior point of ``e`` at position ``x`` lands.

    Returns ``("cell", c)`` over a zero cell of the image path and
    ``("point", edge, y)`` when the image is interior to an edge.
    """
    p = f.edge_images[e]
    crossings = [d for d in p.items if is_edge_item(d)]
    scaled = x * len(crossings)
    j = int(scaled)
    if scaled == j:
        return ("cell", f.graph.dst(crossings[j - 1]))
    d = crossings[j]
    offset = scaled - j
    return ("point", abs(d), offset if d > 0 else 1 - offset)


def _subdivide_many(f: TopRep, points: Dict[int, Sequence[Fraction]],
                    letter_first: Iterable[Tuple[int, Fraction]] = ()
                    ) -> TopRep:
    """Subdivide edges at interior rational positions.

    When a cut lands on a zero cell of an image path that carries a cone
    letter, the letter normally opens the second piece's image; cuts
    listed in ``letter_first`` close the first piece with it instead.
    """
    graph = f.graph
    first_side = {(e, Fraction(x)) for e, x in letter_first}
    cuts: Dict[int, Tuple[Fraction, ...]] = {}
    for e, xs in points.items():
        xs = tuple(sorted({Fraction(x) for x in xs}))
        if not xs:
            continue
        if xs[0] <= 0 or xs[-1] >= 1:
            raise ImageNotAtZeroCell("subdivision points must be interior")
        cuts[e] = xs
    if not cuts:
        return f

    n_cells = graph.n_cells
    kinds = list(graph.kinds)
    vert_of: Dict[Tuple[int, Fraction], int] = {}
    for e in sorted(cuts):
        for x in cuts[e]:
            vert_of[(e, x)] = n_cells
            kinds.append(VERTEX)
            n_cells += 1

    ends: List[Tuple[int, int]] = []
    names: List[str] = []
    taken = set(graph.edge_names)
    pieces: Dict[int, Tuple[int, ...]] = {}
    next_id = 1
    for e in graph.edges():
        xs = cuts.get(e, ())
        stops = [graph.src(e)] + [vert_of[(e, x)] for x in xs] + [graph.dst(e)]
        ids = []
        for k in range(len(stops) - 1):
            ends.append((stops[k], stops[k + 1]))
            if k == 0:
                names.append(graph.edge_names[e - 1])
            else:
                name = graph.edge_names[e - 1] + "'" * k
                while name in taken:
                    name += "'"
                taken.add(name)
                names.append(name)
            ids.append(next_id)
            next_id += 1
        pieces[e] = tuple(ids)
    new_graph = Orbigraph(graph.W, kinds, ends, names)

    cell_map = {c: c for c in graph.cells()}
    tr = Transport(graph, new_graph, cell_map, pieces)
    back_cells = dict(cell_map)
    for (e, x), v in vert_of.items():
        back_cells[v] = graph.dst(e)
    back_edges: Dict[int, Tuple[Item, ...]] = {}
    for e, ids in pieces.items():
        back_edges[ids[0]] = (e,)
        for extra in ids[1:]:
            back_edges[extra] = ()
    rtr = Transport(new_graph, graph, back_cells, back_edges)

    # map the new vertices first: a cut whose image lands inside an edge
    # must match a cut of that edge, else the point set was not closed
    vertices = dict(f.vertex_images)
    for (e, x), v in vert_of.items():
        where = _position_image(f, e, x)
        if where[0] == "cell":
            vertices[v] = where[1]
        else:
            te, y = where[1], where[2]
            if (te, y) not in vert_of:
                raise ImageNotAtZeroCell(
                    f"point {x} of edge {graph.edge_label(e)} maps inside "
                    f"an edge away from every subdivision point")
            vertices[v] = vert_of[(te, y)]

    def breakpoints(e: int) -> Tuple[Fraction, ...]:
        return (Fraction(0),) + cuts.get(e, ()) + (Fraction(1),)

    def chain(d: int, a: Fraction, b: Fraction) -> Tuple[int, ...]:
        # pieces covering the stretch of direction d from traversal
        # parameter a to parameter b; both must be breakpoints of |d|
        e = abs(d)
        brks = breakpoints(e)
        try:
            if d > 0:
                lo, hi = brks.index(a), brks.index(b)
                return pieces[e][lo:hi]
            lo, hi = brks.index(1 - b), brks.index(1 - a)
        except ValueError:
            raise ImageNotAtZeroCell(
                f"an image crossing edge {graph.edge_label(e)} is cut away "
                f"from every subdivision point") from None
        return tuple(-q for q in reversed(pieces[e][lo:hi]))

    def subimage(e: int, a: Fraction, b: Fraction) -> Tuple[Item, ...]:
        p = f.edge_images[e]
        n = p.n_edges
        out: List[Item] = []
        pos = 0
        lo, hi = a * n, b * n
        for item in p.items:
            if not is_edge_item(item):
                if lo < pos < hi:
                    out.append(item)
                elif pos == lo and (a == 0 or (e, a) not in first_side):
                    out.append(item)
                elif pos == hi and (b == 1 or (e, b) in first_side):
                    out.append(item)
                continue
            cut_a, cut_b = max(Fraction(pos), lo), min(Fraction(pos + 1), hi)
            if cut_a < cut_b:
                out.extend(chain(item, cut_a - pos, cut_b - pos))
            pos += 1
        return tuple(out)

    images: Dict[int, Path] = {}
    for e in graph.edges():
        brks = breakpoints(e)
        for k, piece in enumerate(pieces[e]):
            a, b = brks[k], brks[k + 1]
            if a == 0:
                start = f.cell_image(graph.src(e))
            else:
                where = _position_image(f, e, a)
                start = where[1] if where[0] == "cell" \
                    else vert_of[(where[1], where[2])]
            images[piece] = tighten(new_graph, start, subimage(e, a, b))

    marking = _transported_marking(f, new_graph, tr, rtr)
    return TopRep(new_graph, images, dict(f.cone_images), vertices, marking)


# ---------------------------------------------------------------------------
# folding


def _adjusted_images(f: TopRep, t: Turn) -> Tuple[Path, Path]:
    """The two image paths a fold compares, cone letter already applied."""
    p1 = f.image(t.first)
    p2 = f.image(t.second)
    if t.letter:
        lam = f.cone_images[t.base].table[t.letter]
        p2 = tighten(f.graph, p2.start, ((p2.start, lam),) + p2.items)
    return p1, p2


def fold(f: TopRep, turn: Turn, *, collapse_invariant: bool = True) -> TopRep:
    """Identify the initial segments of two directions with a common
    image, then collapse whatever forest the identification leaves.

    The directions must leave a common cell, be distinct, and their
    images (after the turn's cone letter) must share at least one edge.
    """
    out, _ = _fold_core(f, turn, collapse_invariant=collapse_invariant)
    _emit("fold", (turn.first, turn.letter, turn.second, turn.base), f, out)
    return out


def _current_dir(acc: Transport, d: int) -> int:
    run = acc.edge_items[abs(d)]
    return run[0] if d > 0 else -run[-1]


def _fold_core(f: TopRep, turn: Turn, *, collapse_invariant: bool = True):
    t = turn
    graph = f.graph
    if t.first == t.second:
        raise NothingToFold("the turn folds a direction onto itself")
    if graph.src(t.first) != t.base or graph.src(t.second) != t.base:
        raise NothingToFold("turn directions do not share the base cell")
    p1, p2 = _adjusted_images(f, t)
    shared = 0
    for a, b in zip(p1.items, p2.items):
        if a != b:
            break
        shared += 1
    prefix = list(p1.items[:shared])
    if not any(is_edge_item(item) for item in prefix):
        raise NothingToFold("the images share no initial edge")

    def full_consume_conflict(items) -> bool:
        """A fully consumed image whose tail the prefix does not cover
        cannot be glued along this prefix."""
        k = sum(1 for item in prefix if is_edge_item(item))
        n = sum(1 for item in items if is_edge_item(item))
        return k == n and len(items) > len(prefix)

    while full_consume_conflict(p1.items) or full_consume_conflict(p2.items):
        while prefix and not is_edge_item(prefix[-1]):
            prefix.pop()
        if prefix:
            prefix.pop()
        if not any(is_edge_item(item) for item in prefix):
            raise NothingToFold(
                "the foldable initial segments conflict at a cone point")
    prefix = tuple(prefix)
    # a prefix ending in a letter folds through that cone rotation, so
    # the cut keeps the junction letter with the folded piece
    keep_letter = not is_edge_item(prefix[-1])

    work = f
    acc = Transport.identity(graph)

    def isolate(d_orig: int):
        nonlocal work, acc
        k = sum(1 for item in acc.items(prefix) if is_edge_item(item))
        d = _current_dir(acc, d_orig)
        e = abs(d)
        n = work.edge_images[e].n_edges
        if k == n:
            return
        split = k if d > 0 else n - k
        cut = Fraction(split, n)
        # the junction letter at the cut joins the folded piece only when
        # the prefix carries it; the first piece holds the letter exactly
        # when that agrees with the direction's orientation
        if (d > 0) == keep_letter:
            sides = ((e, cut),)
        else:
            sides = ()
        bigger = _subdivide_many(work, {e: (cut,)}, letter_first=sides)
        step_edges: Dict[int, Tuple[int, ...]] = {}
        nxt = 1
        for old in work.graph.edges():
            width = 2 if old == e else 1
            step_edges[old] = tuple(range(nxt, nxt + width))
            nxt += width
        step = Transport(work.graph, bigger.graph,
                         {c: c for c in work.graph.cells()}, step_edges)
        acc = acc.then(step)
        work = bigger

    isolate(t.first)
    isolate(t.second)
    piece1 = _current_dir(acc, t.first)
    piece2 = _current_dir(acc, t.second)

    q1 = work.image(piece1)
    q2 = work.image(piece2)
    if t.letter:
        lam = work.cone_images[t.base].table[t.letter]
        q2 = tighten(work.graph, q2.start, ((q2.start, lam),) + q2.items)
    if q1 != q2:
        raise BadRepresentative("fold pieces disagree after subdivision")

    old_base = work.marking.base if work.marking is not None else None
    new_graph, tr, rtr, delta, survivors = _quotient_edge(
        work, piece2, t.letter, piece1, old_base)
    images = {new_e: tr.path(work.edge_images[old_e])
              for new_e, old_e in enumerate(survivors, start=1)}
    folded = _rebuild(work, new_graph, tr, rtr, images, delta)

    folded, extra = _collapse_cleanup(folded, collapse_invariant)
    return folded, acc.then(tr).then(extra)


def _quotient_edge(work: TopRep, p2: int, g: Optional[int], p1: int,
                   old_base: Optional[int]):
    """Glue direction ``p2`` onto the letter ``g`` followed by ``p1``.

    Returns the quotient graph, both transports, the base connector, and
    the surviving old edges in new-id order.
    """
    graph = work.graph
    b = graph.src(p1)
    if graph.src(p2) != b:
        raise NothingToFold("fold pieces do not share their initial cell")
    if abs(p1) == abs(p2):
        raise NothingToFold("cannot glue an edge onto itself")
    v1, v2 = graph.dst(p1), graph.dst(p2)
    dead = abs(p2)

    ginv: Tuple[Item, ...] = ()
    if g:
        ginv = ((b, graph.group_at(b).inv(g)),)
    # the path from v2 to v1 that the glue collapses
    kappa = (-p2,) + ginv + (p1,)

    if v1 != v2 and graph.is_cone(v1) and graph.is_cone(v2):
        raise BadRepresentative("fold would merge two distinct cone points")
    merged = {v1, v2}
    rep_back = v2 if graph.is_cone(v2) else v1

    classes: List[Tuple[int, ...]] = []
    for c in graph.cells():
        if v1 != v2 and c in merged:
            if c == min(merged):
                classes.append(tuple(sorted(merged)))
        else:
            classes.append((c,))
    cell_map: Dict[int, int] = {}
    back_cell: Dict[int, int] = {}
    kinds = []
    for new_id, cls in enumerate(classes):
        cones = [c for c in cls if graph.is_cone(c)]
        rep = cones[0] if cones else min(cls)
        kinds.append(graph.kinds[rep])
        back_cell[new_id] = rep if len(cls) == 1 else rep_back
        for c in cls:
            cell_map[c] = new_id

    survivors = [e for e in graph.edges() if e != dead]
    ends = [(cell_map[graph.src(e)], cell_map[graph.dst(e)]) for e in survivors]
    names = [graph.edge_names[e - 1] for e in survivors]
    new_graph = Orbigraph(graph.W, kinds, ends, names)

    new_id_of = {old: i for i, old in enumerate(survivors, start=1)}
    fwd: Dict[int, Tuple[Item, ...]] = {old: (new_id_of[old],)
                                        for old in survivors}
    glued = ginv + (p1,)
    if p2 < 0:
        glued = _invert_items(graph, glued)
    fwd[dead] = tuple(
        (new_id_of[abs(i)] if i > 0 else -new_id_of[abs(i)])
        if is_edge_item(i) else (cell_map[i[0]], i[1])
        for i in glued)
    tr = Transport(graph, new_graph, cell_map, fwd)

    def connector(frm: int, to: int) -> Tuple[Item, ...]:
        if frm == to:
            return ()
        return kappa if frm == v2 else _invert_items(graph, kappa)

    back: Dict[int, Tuple[Item, ...]] = {}
    for old in survivors:
        pre: Tuple[Item, ...] = ()
        post: Tuple[Item, ...] = ()
        if v1 != v2:
            if graph.src(old) in merged:
                pre = connector(rep_back, graph.src(old))
            if graph.dst(old) in merged:
                post = connector(graph.dst(old), rep_back)
        back[new_id_of[old]] = pre + (old,) + post
    rtr = Transport(new_graph, graph, back_cell, back)

    delta: Tuple[Item, ...] = ()
    if old_base is not None and v1 != v2 and old_base in merged \
            and old_base != rep_back:
        delta = connector(old_base, rep_back)
    return new_graph, tr, rtr, delta, survivors


# ---------------------------------------------------------------------------
# valence moves


def valence_one_homotopy(f: TopRep, v: int) -> TopRep:
    """Retract a dangling vertex and its edge."""
    graph = f.graph
    if graph.is_cone(v):
        raise ConePointForbidden(
            "retracting a cone point would change the group")
    dirs = graph.edges_at(v)
    if len(dirs) != 1:
        raise NotValenceOne(f"cell {v} has valence {len(dirs)}")
    d = dirs[0]
    e = abs(d)

    new_graph, cell_map, back_cell, survivors, new_id_of = \
        _drop_cell(graph, v, {e})
    fwd: Dict[int, Tuple[Item, ...]] = {old: (new_id_of[old],)
                                        for old in survivors}
    fwd[e] = ()
    tr = Transport(graph, new_graph, cell_map, fwd)
    back = {new_id_of[old]: (old,) for old in survivors}
    rtr = Transport(new_graph, graph, back_cell, back)

    images = {new_id_of[old]: tr.path(f.edge_images[old]) for old in survivors}
    delta = (d,) if f.marking is not None and f.marking.base == v else ()
    out = _rebuild(f, new_graph, tr, rtr, images, delta)
    out, _ = _collapse_cleanup(out, collapse_invariant=False)
    _emit("valence_one", (v,), f, out)
    return out


def valence_two_homotopy(f: TopRep, v: int, collapse: int, *,
                         strict: bool = True) -> TopRep:
    """Remove a valence-two vertex, collapsing one incident edge and
    stretching the other across it.

    In strict mode the move is refused unless the growth-rate bound
    holds: the collapsed edge must lie in a non-exponential stratum or
    strictly below the stretched edge's stratum.
    """
    graph = f.graph
    if graph.is_cone(v):
        raise ConePointForbidden("cannot remove a cone point")
    dirs = graph.edges_at(v)
    if len(dirs) != 2:
        raise NotValenceTwo(f"cell {v} has valence {len(dirs)}")
    if collapse not in (abs(dirs[0]), abs(dirs[1])):
        raise NotValenceTwo(f"edge {collapse} does not meet cell {v}")
    d_col = dirs[0] if abs(dirs[0]) == collapse else dirs[1]
    d_keep = dirs[1] if d_col == dirs[0] else dirs[0]
    keep = abs(d_keep)

    if strict:
        filt = classify_strata(f, maximal_filtration(f))
        i = filt.stratum_of(collapse)
        j = filt.stratum_of(keep)
        if filt.strata[i].kind == EG and not i < j:
            raise UnsafeMove(
                "collapsing an exponential edge not strictly below the "
                "stretched one may raise the growth rate")

    new_graph, cell_map, back_cell, survivors, new_id_of = \
        _drop_cell(graph, v, {collapse})
    fwd: Dict[int, Tuple[Item, ...]] = {old: (new_id_of[old],)
                                        for old in survivors}
    fwd[collapse] = ()
    tr = Transport(graph, new_graph, cell_map, fwd)
    back = {new_id_of[old]: (old,) for old in survivors}
    # the stretched edge spans its old self plus the collapsed corridor
    stretched = (-d_col, keep) if d_keep > 0 else (keep, d_col)
    back[new_id_of[keep]] = stretched
    rtr = Transport(new_graph, graph, back_cell, back)

    images = {new_id_of[old]: tr.path(f.edge_images[old]) for old in survivors}
    corridor = tighten(graph, graph.src(stretched[0]), stretched)
    images[new_id_of[keep]] = tr.path(f.apply(corridor))
    delta = (d_col,) if f.marking is not None and f.marking.base == v else ()
    out = _rebuild(f, new_graph, tr, rtr, images, delta)
    out, _ = _collapse_cleanup(out, collapse_invariant=False)
    _emit("valence_two", (v, collapse), f, out)
    return out


def _drop_cell(graph: Orbigraph, v: int, dead_edges: Set[int]):
    """A copy of the graph without cell ``v`` and the given edges; the
    dropped cell is mapped onto the far end of its first dead edge."""
    anchor = None
    for e in sorted(dead_edges):
        if graph.src(e) == v:
            anchor = graph.dst(e)
            break
        if graph.dst(e) == v:
            anchor = graph.src(e)
            break
    cell_map: Dict[int, int] = {}
    kinds = []
    new_id = 0
    for c in graph.cells():
        if c == v:
            continue
        cell_map[c] = new_id
        kinds.append(graph.kinds[c])
        new_id += 1
    cell_map[v] = cell_map[anchor]
    survivors = [e for e in graph.edges() if e not in dead_edges]
    ends = [(cell_map[graph.src(e)], cell_map[graph.dst(e)]) for e in survivors]
    names = [graph.edge_names[e - 1] for e in survivors]
    new_graph = Orbigraph(graph.W, kinds, ends, names)
    back_cell = {cell_map[c]: c for c in graph.cells() if c != v}
    new_id_of = {old: i for i, old in enumerate(survivors, start=1)}
    return new_graph, cell_map, back_cell, survivors, new_id_of


# ---------------------------------------------------------------------------
# invariant core subdivision


Interval = Tuple[Fraction, Fraction]
_Pick = Tuple[int, int, int]


def _core_step(f: TopRep, hr: FrozenSet[int],
               cores: Dict[int, Interval],
               ) -> Tuple[Dict[int, Interval], Dict[Tuple[int, int], _Pick]]:
    """One refinement round of the hull map, with the winning crossings.

    Each endpoint of the new hull is realized by some in-stratum crossing
    of the edge image; the returned pick table records which one, so a
    non-stabilizing run can be closed off exactly.
    """
    out: Dict[int, Interval] = {}
    picks: Dict[Tuple[int, int], _Pick] = {}
    for e in sorted(hr):
        p = f.edge_images[e]
        n = p.n_edges
        lo = hi = None
        pos = 0
        for item in p.items:
            if not is_edge_item(item):
                continue
            te = abs(item)
            if te in hr:
                a, b = cores[te]
                if item > 0:
                    piece = (Fraction(pos + a, n), Fraction(pos + b, n))
                else:
                    piece = (Fraction(pos + 1 - b, n),
                             Fraction(pos + 1 - a, n))
                if lo is None or piece[0] < lo:
                    lo = piece[0]
                    picks[(e, 0)] = (pos, te, 1 if item > 0 else -1)
                if hi is None or piece[1] > hi:
                    hi = piece[1]
                    picks[(e, 1)] = (pos, te, 1 if item > 0 else -1)
            pos += 1
        if lo is None:
            raise BadRepresentative(
                f"image of edge {f.graph.edge_label(e)} avoids the stratum")
        out[e] = (lo, hi)
    return out, picks


def _solve_core_selection(f: TopRep, hr: FrozenSet[int],
                          picks: Dict[Tuple[int, int], _Pick],
                          ) -> Dict[int, Interval]:
    """Solve the hull map exactly under a frozen crossing selection.

    With the winning crossings fixed, each endpoint satisfies one affine
    relation in one other endpoint, so the whole system is a functional
    graph of affine maps; cycles are closed by solving a one-variable
    equation and the rest follows by substitution.
    """
    def relation(key: Tuple[int, int]) -> Tuple[Tuple[int, int],
                                                Fraction, Fraction]:
        e, side = key
        pos, te, sign = picks[key]
        n = f.edge_images[e].n_edges
        if sign > 0:
            # endpoint = (pos + same-side endpoint of te) / n
            return (te, side), Fraction(1, n), Fraction(pos, n)
        # reversed crossing swaps the sides
        return (te, 1 - side), Fraction(-1, n), Fraction(pos + 1, n)

    values: Dict[Tuple[int, int], Fraction] = {}

    def solve(key: Tuple[int, int]) -> None:
        if key in values:
            return
        path = [key]
        rels: Dict[Tuple[int, int], Tuple[Tuple[int, int],
                                          Fraction, Fraction]] = {}
        while True:
            cur = path[-1]
            dep, coeff, shift = relation(cur)
            rels[cur] = (dep, coeff, shift)
            if dep in values:
                break
            if dep in rels:
                # compose x_dep = a*x_dep + b around the cycle and solve
                a, b = Fraction(1), Fraction(0)
                node = dep
                while True:
                    d2, c2, s2 = rels[node]
                    a, b = a * c2, a * s2 + b
                    node = d2
                    if node == dep:
                        break
                if a == 1:
                    raise CapExceeded(
                        "invariant cores failed to stabilize")
                values[dep] = b / (1 - a)
                break
            path.append(dep)
        for node in reversed(path):
            d2, c2, s2 = rels[node]
            values[node] = c2 * values[d2] + s2

    for e in sorted(hr):
        solve((e, 0))
        solve((e, 1))
    return {e: (values[(e, 0)], values[(e, 1)]) for e in sorted(hr)}


def _invariant_cores(f: TopRep, hr: FrozenSet[int]) -> Dict[int, Interval]:
    """Exact invariant core interval of every edge in the stratum.

    The hull map is iterated until it either stabilizes or keeps one
    winning crossing per endpoint for two consecutive rounds; in the
    latter case its fixed point is solved exactly and verified against
    one more true refinement round.
    """
    cores: Dict[int, Interval] = {e: (Fraction(0), Fraction(1)) for e in hr}
    burn = 4 * sum(f.edge_images[e].n_edges for e in hr) + 16
    prev_picks: Optional[Dict[Tuple[int, int], _Pick]] = None
    for _ in range(burn):
        nxt, picks = _core_step(f, hr, cores)
        if nxt == cores:
            return cores
        if picks == prev_picks:
            try:
                solved = _solve_core_selection(f, hr, picks)
            except CapExceeded:
                solved = None
            if solved is not None and all(
                    0 <= lo <= hi <= 1 for lo, hi in solved.values()):
                if _core_step(f, hr, solved)[0] == solved:
                    return solved
        prev_picks = picks
        cores = nxt
    raise CapExceeded("invariant cores failed to stabilize")


def invariant_core_subdivision(f: TopRep, stratum: Iterable[int]) -> TopRep:
    """Subdivide an exponential stratum at its invariant core endpoints.

    The core of an edge is the smallest closed interval holding each
    point whose whole forward orbit stays in the stratum.  Cutting at the
    core endpoints (and their images) separates the stratum from the
    transient parts of its edges.  When the cores already fill every
    edge, the representative is returned unchanged.
    """
    hr = frozenset(int(e) for e in stratum)
    graph = f.graph
    cores = _invariant_cores(f, hr)

    cuts: Dict[int, Set[Fraction]] = {}
    for e, (lo, hi) in cores.items():
        for x in (lo, hi):
            if 0 < x < 1:
                cuts.setdefault(e, set()).add(x)
    # close the cut set under the point map so every new vertex has a
    # zero cell to land on
    closure_cap = 4 * sum(
        f.edge_images[e].n_edges for e in graph.edges()) + 16
    for _ in range(closure_cap):
        grown = False
        for e in sorted(cuts):
            for x in sorted(cuts[e]):
                where = _position_image(f, e, x)
                if where[0] == "point":
                    te, y = where[1], where[2]
                    if y not in cuts.setdefault(te, set()):
                        cuts[te].add(y)
                        grown = True
        if not grown:
            break
    else:
        raise CapExceeded("core endpoint orbit failed to close")

    if not cuts:
        return f
    out = _subdivide_many(f, {e: tuple(sorted(xs)) for e, xs in cuts.items()})
    _emit("invariant_core_subdivision", (tuple(sorted(hr)),), f, out)
    return out


# ---------------------------------------------------------------------------
# connecting paths, sliding, tree replacement


def fold_connecting_path(f: TopRep, alpha: Path, cap: int = 1000) -> TopRep:
    """Collapse a path whose image tightens to a point, by folding.

    Repeatedly folds a junction of the path whose image turn degenerates,
    collapsing dead edges as they appear, until the whole path has been
    squeezed to a cell.
    """
    if alpha.graph is not f.graph:
        raise ImageNotTrivial("the path lives on a different graph")
    if not f.apply(alpha).is_trivial:
        raise ImageNotTrivial("the path's image does not tighten away")
    work = f
    path = alpha
    for _ in range(cap):
        if path.n_edges == 0:
            break
        # a path with trivial image either crosses an edge that dies or
        # has a junction degenerating in one step; fold the latter
        turn = _first_foldable_junction(work, path)
        if turn is not None:
            work, tr = _fold_core(work, turn, collapse_invariant=False)
            path = tr.path(path)
            continue
        forest = maximal_pretrivial_forest(work)
        if not forest.nontrivial:
            raise ImageNotTrivial(
                "no junction folds and no edge dies; the path cannot "
                "be collapsed")
        parts = _collapse_parts(work, forest)
        work = _finish_collapse(work, parts)
        path = parts[1].path(path)
    else:
        raise CapExceeded("connecting path did not collapse")
    out, _ = _collapse_cleanup(work, collapse_invariant=False)
    _emit("fold_connecting_path", (alpha.items,), f, out)
    return out


def _first_foldable_junction(f: TopRep, path: Path) -> Optional[Turn]:
    for turn in path.turns():
        if turn.degenerate:
            continue
        try:
            image = f.turn_map(turn)
        except BadRepresentative:
            continue
        if image.degenerate:
            return turn
    return None


def slide(f: TopRep, edge: int, alpha: Path,
          lower: Optional[Iterable[int]] = None) -> TopRep:
    """Move an edge's terminal endpoint along a path avoiding the edge.

    With ``lower`` given, the path must also stay inside those edges.
    """
    graph = f.graph
    if alpha.graph is not graph or alpha.start != graph.dst(edge):
        raise PathNotInLowerStrata(
            "the sliding path must leave the slid edge's endpoint")
    crossed = set(alpha.crossings())
    if edge in crossed:
        raise PathNotInLowerStrata("the sliding path crosses the slid edge")
    if lower is not None:
        allowed = {int(e) for e in lower}
        if not crossed <= allowed:
            raise PathNotInLowerStrata(
                f"the sliding path crosses edges {sorted(crossed - allowed)} "
                f"outside the allowed set")

    ends = []
    for e in graph.edges():
        s, t = graph.src(e), graph.dst(e)
        if e == edge:
            t = alpha.end
        ends.append((s, t))
    new_graph = Orbigraph(graph.W, list(graph.kinds), ends,
                          list(graph.edge_names))

    cell_map = {c: c for c in graph.cells()}
    fwd = {e: (e,) for e in graph.edges()}
    fwd[edge] = (edge,) + _invert_items(graph, alpha.items)
    tr = Transport(graph, new_graph, cell_map, fwd)
    back = {e: (e,) for e in graph.edges()}
    back[edge] = (edge,) + alpha.items
    rtr = Transport(new_graph, graph, cell_map, back)

    images = {}
    for e in graph.edges():
        if e == edge:
            images[e] = tr.path(f.edge_images[edge] * f.apply(alpha))
        else:
            images[e] = tr.path(f.edge_images[e])
    out = _rebuild(f, new_graph, tr, rtr, images)
    _emit("slide", (edge, alpha.items), f, out)
    return out


def slide_source(f: TopRep, edge: int, alpha: Path,
                 lower: Optional[Iterable[int]] = None) -> TopRep:
    """Move an edge's initial endpoint along a path avoiding the edge.

    The mirror of :func:`slide`: the moved edge becomes ``alpha``
    followed by the old edge, so its new image picks up the inverted
    image of ``alpha`` in front.
    """
    graph = f.graph
    if alpha.graph is not graph or alpha.start != graph.src(edge):
        raise PathNotInLowerStrata(
            "the sliding path must leave the slid edge's endpoint")
    crossed = set(alpha.crossings())
    if edge in crossed:
        raise PathNotInLowerStrata("the sliding path crosses the slid edge")
    if lower is not None:
        allowed = {int(e) for e in lower}
        if not crossed <= allowed:
            raise PathNotInLowerStrata(
                f"the sliding path crosses edges {sorted(crossed - allowed)} "
                f"outside the allowed set")

    ends = []
    for e in graph.edges():
        s, t = graph.src(e), graph.dst(e)
        if e == edge:
            s = alpha.end
        ends.append((s, t))
    new_graph = Orbigraph(graph.W, list(graph.kinds), ends,
                          list(graph.edge_names))

    cell_map = {c: c for c in graph.cells()}
    fwd = {e: (e,) for e in graph.edges()}
    fwd[edge] = alpha.items + (edge,)
    tr = Transport(graph, new_graph, cell_map, fwd)
    back = {e: (e,) for e in graph.edges()}
    back[edge] = _invert_items(graph, alpha.items) + (edge,)
    rtr = Transport(new_graph, graph, cell_map, back)

    images = {}
    for e in graph.edges():
        if e == edge:
            images[e] = tr.path(f.apply(alpha).invert() * f.edge_images[edge])
        else:
            images[e] = tr.path(f.edge_images[e])
    out = _rebuild(f, new_graph, tr, rtr, images)
    _emit("slide_source", (edge, alpha.items), f, out)
    return out


def tree_replace(f: TopRep, stratum: Iterable[int]) -> TopRep:
    """Rebuild the components of a zero stratum as stars on their
    attaching cells."""
    graph = f.graph
    zs = frozenset(int(e) for e in stratum)
    for e in sorted(zs):
        if any(c in zs for c in f.edge_images[e].crossings()):
            raise NotZeroStratum(
                f"edge {graph.edge_label(e)} maps across its own stratum")
    sub = graph.subgraph(zs)
    if sub.cone_cells():
        raise NotZeroStratum("zero strata never carry cone points")

    comps = sub.components()
    interior: Set[int] = set()
    boundary: Dict[int, Tuple[int, ...]] = {}
    centers: Dict[int, int] = {}
    geodesics: Dict[int, Dict[int, Tuple[Item, ...]]] = {}
    comp_of: Dict[int, int] = {}
    for k, comp in enumerate(comps):
        cells = sorted(comp.cells)
        bd = tuple(c for c in cells
                   if any(abs(d) not in zs for d in graph.edges_at(c)))
        if len(bd) < 2:
            raise NotZeroStratum(
                "a component does not join two attaching cells")
        boundary[k] = bd
        centers[k] = min(bd)
        interior.update(c for c in cells if c not in bd)
        walk: Dict[int, Tuple[Item, ...]] = {centers[k]: ()}
        frontier = [centers[k]]
        while frontier:
            c = frontier.pop()
            for d in graph.edges_at(c):
                if abs(d) not in comp.edges:
                    continue
                nxt = graph.dst(d)
                if nxt not in walk:
                    walk[nxt] = walk[c] + (d,)
                    frontier.append(nxt)
        geodesics[k] = walk
        for c in comp.cells:
            comp_of[c] = k

    cell_map: Dict[int, int] = {}
    kinds = []
    new_id = 0
    for c in graph.cells():
        if c in interior:
            continue
        cell_map[c] = new_id
        kinds.append(graph.kinds[c])
        new_id += 1
    for c in interior:
        cell_map[c] = cell_map[centers[comp_of[c]]]

    keep = [e for e in graph.edges() if e not in zs]
    ends = []
    names = []
    taken = set()
    for e in keep:
        ends.append((cell_map[graph.src(e)], cell_map[graph.dst(e)]))
        names.append(graph.edge_names[e - 1])
        taken.add(names[-1])
    star_edges: Dict[Tuple[int, int], int] = {}
    next_edge = len(keep) + 1
    for k in sorted(boundary):
        for b in boundary[k]:
            if b == centers[k]:
                continue
            ends.append((cell_map[centers[k]], cell_map[b]))
            name = f"S{next_edge}"
            while name in taken:
                name += "'"
            taken.add(name)
            names.append(name)
            star_edges[(k, b)] = next_edge
            next_edge += 1
    new_graph = Orbigraph(graph.W, kinds, ends, names)

    new_id_of = {old: i for i, old in enumerate(keep, start=1)}

    def to_center(k: int, c: int) -> int:
        return c if c in boundary[k] else centers[k]

    def star_path(k: int, frm: int, to: int) -> Tuple[int, ...]:
        out: List[int] = []
        if frm != centers[k]:
            out.append(-star_edges[(k, frm)])
        if to != centers[k]:
            out.append(star_edges[(k, to)])
        return tuple(out)

    fwd: Dict[int, Tuple[Item, ...]] = {e: (new_id_of[e],) for e in keep}
    for e in zs:
        k = comp_of[graph.src(e)]
        fwd[e] = star_path(k, to_center(k, graph.src(e)),
                           to_center(k, graph.dst(e)))
    tr = Transport(graph, new_graph, cell_map, fwd)

    back_cell = {cell_map[c]: c for c in graph.cells() if c not in interior}
    back: Dict[int, Tuple[Item, ...]] = {new_id_of[e]: (e,) for e in keep}
    for (k, b), idx in star_edges.items():
        back[idx] = geodesics[k][b]
    rtr = Transport(new_graph, graph, back_cell, back)

    images = {new_id_of[e]: tr.path(f.edge_images[e]) for e in keep}
    for (k, b), idx in star_edges.items():
        old = tighten(graph, centers[k], geodesics[k][b])
        images[idx] = tr.path(f.apply(old))
    out = _rebuild(f, new_graph, tr, rtr, images)
    out, _ = _collapse_cleanup(out, collapse_invariant=False)
    _emit("tree_replace", (tuple(sorted(zs)),), f, out)
    return out
