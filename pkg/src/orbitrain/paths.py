"""Tight paths and circuits in orbigraphs.

A path is an anchored walk: directed edges interleaved with stabilizer
letters.  Letters live only at cone points, and the normal form keeps an
explicit letter item, trivial or not, at every junction of two edges that
meet at a cone point; display suppresses the trivial ones.  Junctions at
plain vertices never carry a letter.  Leading and trailing letters are
allowed only when nontrivial and only at cone endpoints.

Items are signed edge ids (negation reverses) or ``(cell, element)`` pairs.
Tightening is the confluent rewriting system: adjacent letters multiply,
``d, trivial, -d`` deletes with flanking letters merging, and ``d, -d`` at a
vertex deletes.  The hat display ``T^`` abbreviates ``T g T~`` with the
letter across the cone at the head of ``T``.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple, Union

from .errors import BadPath, EndpointMismatch, NotAWalk
from .orbigraph import Orbigraph

Item = Union[int, Tuple[int, int]]


def is_edge_item(item) -> bool:
    return isinstance(item, int)


def _tighten_items(graph: Orbigraph, start: int, items: Iterable[Item]):
    """Normalize a raw walk; raises NotAWalk when junctions fail to chain."""
    out: List[Item] = []
    cur = start
    if not 0 <= cur < graph.n_cells:
        raise NotAWalk(f"no cell {cur} to start from")
    for item in items:
        if is_edge_item(item):
            d = int(item)
            if not 1 <= abs(d) <= graph.n_edges:
                raise NotAWalk(f"no edge {d} in this graph")
            if graph.src(d) != cur:
                raise NotAWalk(
                    f"edge {graph.edge_label(d)} does not start at cell {cur}")
            if out and is_edge_item(out[-1]):
                if graph.is_cone(cur):
                    out.append((cur, 0))
                elif out[-1] == -d:
                    out.pop()
                    cur = graph.dst(d)
                    continue
            if out and not is_edge_item(out[-1]):
                c0, g0 = out[-1]
                if g0 == 0 and len(out) >= 2 and out[-2] == -d:
                    out.pop()
                    out.pop()
                    cur = graph.dst(d)
                    continue
            out.append(d)
            cur = graph.dst(d)
        else:
            c, g = item
            c, g = int(c), int(g)
            if c != cur:
                raise NotAWalk(f"letter at cell {c} but the walk is at {cur}")
            if not graph.is_cone(c):
                raise NotAWalk(f"cell {c} is a vertex; letters need a cone")
            if not 0 <= g < graph.group_at(c).order:
                raise NotAWalk(f"no element {g} at cone {c}")
            if out and not is_edge_item(out[-1]):
                _, g0 = out[-1]
                out[-1] = (c, graph.group_at(c).mul(g0, g))
            else:
                out.append((c, g))
    while out and not is_edge_item(out[0]) and out[0][1] == 0:
        out.pop(0)
    while out and not is_edge_item(out[-1]) and out[-1][1] == 0:
        out.pop()
    return tuple(out)


def tighten(graph: Orbigraph, start: int, items: Iterable[Item]) -> "Path":
    return Path(graph, start, _tighten_items(graph, start, items),
                _tight=True)


class Path:
    """A tight anchored walk.  Construct via :func:`tighten` or operators."""

    __slots__ = ("graph", "start", "items", "end")

    def __init__(self, graph: Orbigraph, start: int, items: Iterable[Item] = (),
                 *, _tight: bool = False):
        items = tuple(items)
        if not _tight:
            normal = _tighten_items(graph, start, items)
            if normal != items:
                raise BadPath("items are not in tight normal form")
        self.graph = graph
        self.start = int(start)
        self.items = items
        cur = self.start
        for item in items:
            cur = graph.dst(item) if is_edge_item(item) else item[0]
        self.end = cur

    # -- queries -------------------------------------------------------------

    @property
    def is_trivial(self) -> bool:
        return not self.items

    @property
    def is_loop(self) -> bool:
        return self.start == self.end

    def __len__(self):
        return len(self.items)

    @property
    def n_edges(self) -> int:
        return sum(1 for item in self.items if is_edge_item(item))

    def edge_items(self) -> Tuple[int, ...]:
        return tuple(item for item in self.items if is_edge_item(item))

    def crossings(self):
        """Unsigned edge-crossing counts, the raw material of transitions."""
        counts = {}
        for item in self.items:
            if is_edge_item(item):
                e = abs(item)
                counts[e] = counts.get(e, 0) + 1
        return counts

    def first_edge(self) -> Optional[int]:
        for item in self.items:
            if is_edge_item(item):
                return item
        return None

    def word(self):
        """The free-product word spelled by the letters, in normal form."""
        letters = [(self.graph.factor_at(c), g)
                   for c, g in (it for it in self.items
                                if not is_edge_item(it)) if g != 0]
        return self.graph.W.nf(letters)

    def turns(self) -> Tuple["Turn", ...]:
        out = []
        prev = None
        pending = None
        for item in self.items:
            if is_edge_item(item):
                if prev is not None:
                    out.append(Turn(-prev, pending, item, self.graph.src(item)))
                prev = item
                pending = None
            else:
                if prev is not None:
                    pending = item[1]
        return tuple(out)

    # -- algebra -------------------------------------------------------------

    def concat(self, other: "Path") -> "Path":
        if self.graph is not other.graph:
            raise BadPath("paths live on different graphs")
        if self.end != other.start:
            raise EndpointMismatch(
                f"cannot join a path ending at cell {self.end} "
                f"to one starting at cell {other.start}")
        return tighten(self.graph, self.start, self.items + other.items)

    __mul__ = concat

    def invert(self) -> "Path":
        inv_items = []
        for item in reversed(self.items):
            if is_edge_item(item):
                inv_items.append(-item)
            else:
                c, g = item
                inv_items.append((c, self.graph.group_at(c).inv(g)))
        return Path(self.graph, self.end, tuple(inv_items), _tight=True)

    __invert__ = invert

    def __eq__(self, other):
        return (isinstance(other, Path) and self.graph is other.graph
                and self.start == other.start and self.items == other.items)

    def __hash__(self):
        return hash((id(self.graph), self.start, self.items))

    def __repr__(self):
        return f"Path({format_path(self)!r} at {self.start})"


@dataclass(frozen=True)
class Turn:
    """An ordered pair of directed edges leaving ``base``, with the letter
    read between them when ``base`` is a cone point (``None`` at vertices)."""

    first: int
    letter: Optional[int]
    second: int
    base: int

    @property
    def degenerate(self) -> bool:
        return self.first == self.second and not self.letter


# -- circuits ---------------------------------------------------------------


def _item_key(item):
    return (0, item, 0) if is_edge_item(item) else (1,) + tuple(item)


class Circuit:
    """A cyclically tight loop, stored in its canonical rotation.

    Items follow the same conventions as paths; the junction letter at the
    wrap, when the wrap sits at a cone point, is the final item.  The empty
    circuit is the homotopically trivial loop.
    """

    __slots__ = ("graph", "items")

    def __init__(self, graph: Orbigraph, items: Iterable[Item] = (),
                 *, _canonical: bool = False):
        items = tuple(items)
        if not _canonical:
            return self.__init__(graph, tighten_circuit(graph, items).items,
                                 _canonical=True)
        self.graph = graph
        self.items = items

    @property
    def is_trivial(self) -> bool:
        return not self.items

    @property
    def n_edges(self) -> int:
        return sum(1 for item in self.items if is_edge_item(item))

    def crossings(self):
        counts = {}
        for item in self.items:
            if is_edge_item(item):
                e = abs(item)
                counts[e] = counts.get(e, 0) + 1
        return counts

    def as_path(self) -> Path:
        """One full traversal, cut at the canonical basepoint."""
        if not self.items:
            raise BadPath("the trivial circuit has no basepoint")
        first = self.items[0]
        start = self.graph.src(first) if is_edge_item(first) else first[0]
        return Path(self.graph, start, self.items, _tight=True)

    def turns(self) -> Tuple[Turn, ...]:
        if self.n_edges == 0:
            return ()
        p = self.as_path()
        out = list(p.turns())
        last = self.items[-1]
        wrap = None
        if not is_edge_item(last):
            wrap = last[1]
        first_edge = p.first_edge()
        last_edge = p.edge_items()[-1]
        out.append(Turn(-last_edge, wrap, first_edge,
                        self.graph.src(first_edge)))
        return tuple(out)

    def word_class(self):
        """Conjugacy normal form of the letters read around the loop."""
        letters = [(self.graph.factor_at(c), g)
                   for c, g in (it for it in self.items
                                if not is_edge_item(it)) if g != 0]
        return self.graph.W.conjugacy_normal_form(letters)

    def __eq__(self, other):
        return (isinstance(other, Circuit) and self.graph is other.graph
                and self.items == other.items)

    def __hash__(self):
        return hash((id(self.graph), self.items))

    def __repr__(self):
        if not self.items:
            return "Circuit(trivial)"
        return f"Circuit({' '.join(_format_items(self.graph, self.items))})"


def tighten_circuit(graph: Orbigraph, items: Iterable[Item]) -> Circuit:
    items = list(items)
    if not any(is_edge_item(it) for it in items):
        total = None
        for c, g in items:
            if total is None:
                total = (c, 0)
            if c != total[0]:
                raise NotAWalk("letter-only circuit spans several cones")
            total = (c, graph.group_at(c).mul(total[1], g))
        if total is None or total[1] == 0:
            return Circuit(graph, (), _canonical=True)
        return Circuit(graph, (total,), _canonical=True)

    first = next(it for it in items if is_edge_item(it))
    start = graph.src(first)
    head = []
    while items and not is_edge_item(items[0]):
        head.append(items.pop(0))
    items = list(_tighten_items(graph, start, items + head))

    changed = True
    while changed:
        changed = False
        while len(items) > 1 and not is_edge_item(items[0]):
            items.append(items.pop(0))
            changed = True
            while (len(items) >= 2 and not is_edge_item(items[-1])
                   and not is_edge_item(items[-2])):
                c, g = items.pop()
                c0, g0 = items[-1]
                if c0 != c:
                    raise NotAWalk("circuit letters disagree at the wrap")
                items[-1] = (c, graph.group_at(c).mul(g0, g))
        if not items:
            break
        if len(items) == 1:
            if not is_edge_item(items[0]) and items[0][1] == 0:
                items = []
            break
        last = items[-1]
        d0 = items[0]
        if is_edge_item(last):
            j = graph.dst(last)
            if graph.src(d0) != j:
                raise NotAWalk("circuit does not close up")
            if d0 == -last:
                if graph.is_cone(j):
                    items.append((j, 0))
                else:
                    body = items[1:-1]
                    items = list(_tighten_items(
                        graph, graph.dst(d0), body)) if body else []
                changed = True
            elif graph.is_cone(j):
                items.append((j, 0))
                changed = True
        else:
            c, g = last
            if g == 0 and len(items) >= 2 and items[-2] == -d0:
                body = items[1:-2]
                items = list(_tighten_items(
                    graph, graph.dst(d0), body)) if body else []
                changed = True

    if not items:
        return Circuit(graph, (), _canonical=True)
    if len(items) == 1 and not is_edge_item(items[0]):
        return Circuit(graph, tuple(items), _canonical=True)

    rotations = []
    n = len(items)
    for i, it in enumerate(items):
        if is_edge_item(it):
            rotations.append(tuple(items[i:] + items[:i]))
    best = min(rotations, key=lambda r: tuple(_item_key(it) for it in r))
    return Circuit(graph, best, _canonical=True)


# -- words and realizations --------------------------------------------------


def loop_of_word(graph: Orbigraph, base: int, word) -> Path:
    """The tight loop at ``base`` spelling ``word``: out along the geodesic
    to each syllable's cone point, read the letter, and come back."""
    items: List[Item] = []
    for i, e in word:
        cone = graph.cone_cell(i)
        go = graph.geodesic(base, cone)
        items.extend(go)
        items.append((cone, e))
        items.extend(-d for d in reversed(go))
    return tighten(graph, base, items)


# -- text form ----------------------------------------------------------------


def _format_items(graph, items):
    tokens = []
    for item in items:
        if is_edge_item(item):
            tokens.append(graph.edge_label(item))
        else:
            c, g = item
            if g == 0:
                continue
            tokens.append("." + graph.W.format_letter((graph.factor_at(c), g)))
    return tokens or ["1"]


def format_path(p: Path) -> str:
    return " ".join(_format_items(p.graph, p.items))


def parse_path(graph: Orbigraph, text: str, start: Optional[int] = None) -> Path:
    """Parse path tokens: edge names, ``~`` reversal, ``.letter`` items,
    and the hat sugar ``T^``/``T^[e]`` for ``T letter ~T`` across the cone
    at the head of ``T``.  The result is tightened."""
    items: List[Item] = []
    for token in text.split():
        if token == "1":
            continue
        if token.startswith("."):
            body = token[1:]
            word = graph.W.parse_word(body)
            if len(word) > 1:
                raise BadPath(f"letter token {token!r} is not a single letter")
            for i, e in word:
                items.append((graph.cone_cell(i), e))
            continue
        hat = None
        name = token
        if "^" in token:
            name, _, rest = token.partition("^")
            if rest == "":
                hat = 0
            elif rest.startswith("[") and rest.endswith("]"):
                try:
                    hat = int(rest[1:-1])
                except ValueError:
                    raise BadPath(f"bad hat element in {token!r}") from None
            else:
                raise BadPath(f"bad hat suffix in {token!r}")
        d = graph.edge_by_name(name)
        if hat is None:
            items.append(d)
            continue
        head = graph.dst(d)
        if not graph.is_cone(head):
            raise BadPath(f"hat on {name!r} needs a cone at its head")
        group = graph.group_at(head)
        if hat == 0:
            hat = group.generator() if group.is_cyclic() else 1
        items.extend((d, (head, hat), -d))
    if start is None:
        if not items or not is_edge_item(items[0]):
            raise BadPath("cannot infer the start cell; pass it explicitly")
        start = graph.src(items[0])
    return tighten(graph, start, items)
