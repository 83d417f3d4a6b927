"""Exact arithmetic in free products and their mapping tori.

Representation choices, used by every other module:

* A finite group is a Cayley table over element indices ``0..order-1`` with
  index 0 the identity.  An infinite cyclic factor is represented by the
  ``InfiniteCyclic`` marker; its "elements" are nonzero integer exponents.
  Mixing both factor kinds in one presentation gives free products of finite
  groups and free groups with the same word engine.
* A letter is a pair ``(factor, element)`` of plain ints.  A word is a tuple
  of letters in normal form: no trivial letters, no two adjacent letters in
  the same factor.  Words are values; they hash and compare lexicographically
  by ``(factor, element)``, which is also the rotation order used by
  conjugacy normal forms.
* An automorphism stores the image word of every element of every factor
  (for infinite cyclic factors, of the generator).  Composition and
  application are exact; inversion is structural where the images are
  triangular and otherwise a bounded meet-in-the-middle search.
* A torus word is ``t^k . w`` with ``w`` a word; multiplying by ``t`` on the
  right rewrites through the defining automorphism.
"""

from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import (
    BadGroupTable,
    FactorMismatch,
    NotAutomorphism,
    NotInvertible,
)

Letter = tuple  # (factor: int, element: int)
Word = tuple  # tuple of Letter, in normal form


# ---------------------------------------------------------------------------
# factors
# ---------------------------------------------------------------------------


class FiniteGroup:
    """A finite group given by an explicit Cayley table.

    ``cayley[g][h]`` is the element index of the product g.h.  Element 0 is
    required to be the identity.  Construction verifies the group axioms:
    exhaustively for order at most 64, by randomized triples above that.
    """

    kind = "finite"

    def __init__(self, cayley, label="G", names=None):
        cayley = tuple(tuple(row) for row in cayley)
        order = len(cayley)
        if order < 2:
            raise BadGroupTable("factor groups must have order >= 2")
        for row in cayley:
            if len(row) != order or any(not (0 <= x < order) for x in row):
                raise BadGroupTable("cayley table is not square over 0..order-1")
        for g in range(order):
            if cayley[0][g] != g or cayley[g][0] != g:
                raise BadGroupTable("element 0 is not a two-sided identity")
        inverses = [None] * order
        for g in range(order):
            for h in range(order):
                if cayley[g][h] == 0 and cayley[h][g] == 0:
                    inverses[g] = h
                    break
            if inverses[g] is None:
                raise BadGroupTable(f"element {g} has no inverse")
        if order <= 64:
            triples = itertools.product(range(order), repeat=3)
        else:
            import random

            rng = random.Random(0x5EED)
            triples = (
                tuple(rng.randrange(order) for _ in range(3)) for _ in range(5000)
            )
        for a, b, c in triples:
            if cayley[cayley[a][b]][c] != cayley[a][cayley[b][c]]:
                raise BadGroupTable(f"associativity fails on ({a},{b},{c})")
        self.cayley = cayley
        self.order = order
        self.identity = 0
        self.inverses = tuple(inverses)
        self.label = label
        self.names = tuple(names) if names else tuple(
            "1" if g == 0 else f"g{g}" for g in range(order)
        )
        if len(self.names) != order:
            raise BadGroupTable("element name list has wrong length")

    # -- constructors ------------------------------------------------------

    @classmethod
    def cyclic(cls, m, label=None):
        """Z/m with element k the k-th power of the generator."""
        label = label or f"Z/{m}"
        table = [[(i + j) % m for j in range(m)] for i in range(m)]
        names = ["1"] + ["g" if k == 1 else f"g^{k}" for k in range(1, m)]
        group = cls(table, label=label, names=names)
        group._cyclic_order = m
        return group

    @classmethod
    def symmetric(cls, m, label=None):
        """S_m on 0..m-1; element order is lexicographic on one-line tuples."""
        perms = sorted(itertools.permutations(range(m)))
        index = {p: i for i, p in enumerate(perms)}
        # table[g][h] = g after h: apply h first, then g.
        table = [
            [index[tuple(g[h[i]] for i in range(m))] for h in perms] for g in perms
        ]
        names = [_cycle_name(p) for p in perms]
        return cls(table, label=label or f"S{m}", names=names)

    @classmethod
    def from_table(cls, cayley, label="G", names=None):
        return cls(cayley, label=label, names=names)

    # -- arithmetic ---------------------------------------------------------

    def mul(self, g, h):
        return self.cayley[g][h]

    def inv(self, g):
        return self.inverses[g]

    def elements(self):
        return range(self.order)

    def nontrivial(self):
        return range(1, self.order)

    def power(self, g, k):
        if k < 0:
            g, k = self.inverses[g], -k
        out = 0
        while k:
            if k & 1:
                out = self.cayley[out][g]
            g = self.cayley[g][g]
            k >>= 1
        return out

    def element_order(self, g):
        k, x = 1, g
        while x != 0:
            x = self.cayley[x][g]
            k += 1
        return k

    def conjugates(self, g):
        return {self.cayley[self.inverses[h]][self.cayley[g][h]] for h in self.elements()}

    def conjugacy_min(self, g):
        return min(self.conjugates(g))

    def is_abelian(self):
        return all(
            self.cayley[a][b] == self.cayley[b][a]
            for a in self.elements()
            for b in self.elements()
        )

    def is_cyclic(self):
        return any(self.element_order(g) == self.order for g in self.elements())

    def generator(self):
        """An element of maximal order; for cyclic groups, a generator."""
        return max(self.elements(), key=self.element_order)

    def center(self):
        return [
            z
            for z in self.elements()
            if all(self.cayley[z][g] == self.cayley[g][z] for g in self.elements())
        ]

    # -- identity and hashing ----------------------------------------------

    def __eq__(self, other):
        return isinstance(other, FiniteGroup) and self.cayley == other.cayley

    def __hash__(self):
        return hash(self.cayley)

    def __repr__(self):
        return f"FiniteGroup({self.label}, order={self.order})"


class InfiniteCyclic:
    """Marker factor for an infinite cyclic (free) factor.

    Elements are nonzero integers (exponents of the abstract generator);
    0 is the identity.  Used for the free-group side of the bridge
    operations; orbigraph cone points never carry this kind.
    """

    kind = "zee"
    order = None
    identity = 0

    def __init__(self, label="Z"):
        self.label = label

    def mul(self, g, h):
        return g + h

    def inv(self, g):
        return -g

    def power(self, g, k):
        return g * k

    def conjugacy_min(self, g):
        return g

    def is_abelian(self):
        return True

    def __eq__(self, other):
        return isinstance(other, InfiniteCyclic)

    def __hash__(self):
        return hash("InfiniteCyclic")

    def __repr__(self):
        return f"InfiniteCyclic({self.label})"


Factor = Union[FiniteGroup, InfiniteCyclic]


def _cycle_name(perm):
    """Cycle notation for a permutation tuple, points printed 1-based."""
    seen = [False] * len(perm)
    parts = []
    for start in range(len(perm)):
        if seen[start] or perm[start] == start:
            seen[start] = True
            continue
        cycle = []
        x = start
        while not seen[x]:
            seen[x] = True
            cycle.append(str(x + 1))
            x = perm[x]
        parts.append("(" + " ".join(cycle) + ")")
    return "".join(parts) if parts else "e"


# ---------------------------------------------------------------------------
# factor isomorphisms (element-index mapping tuples)
# ---------------------------------------------------------------------------


def iso_identity(group):
    return tuple(range(group.order))


def is_iso(source, target, mapping):
    """True if ``mapping`` is a group isomorphism source -> target."""
    if source.order != target.order or len(mapping) != source.order:
        return False
    if sorted(mapping) != list(range(target.order)):
        return False
    if mapping[0] != 0:
        return False
    return all(
        mapping[source.mul(a, b)] == target.mul(mapping[a], mapping[b])
        for a in source.elements()
        for b in source.elements()
    )


def iso_chain(first, then):
    """The composite mapping: apply ``first``, then ``then``."""
    return tuple(then[x] for x in first)


def iso_invert(mapping):
    out = [0] * len(mapping)
    for a, b in enumerate(mapping):
        out[b] = a
    return tuple(out)


def iso_inner_witness(group, mapping):
    """An element t with mapping = (a -> t^-1 a t), or None."""
    for t in group.elements():
        ti = group.inv(t)
        if all(mapping[a] == group.mul(ti, group.mul(a, t)) for a in group.elements()):
            return t
    return None


# ---------------------------------------------------------------------------
# the free product
# ---------------------------------------------------------------------------


class FreeProduct:
    """A free product of factors with display names, the group W.

    Factors are indexed 0..n-1; the name list gives the display token of
    each factor's generator.  All word operations are purely syntactic on
    normal forms and never mutate their inputs.
    """

    def __init__(self, factors: Sequence[Factor], names: Optional[Sequence[str]] = None):
        self.factors = tuple(factors)
        if not self.factors:
            raise ValueError("a free product needs at least one factor")
        if names is None:
            names = [
                chr(ord("a") + i) if i < 19 else f"x{i}"  # stop before "t"
                for i in range(len(factors))
            ]
        self.names = tuple(names)
        if len(self.names) != len(self.factors):
            raise ValueError("one name per factor required")
        if len(set(self.names)) != len(self.names):
            raise ValueError("factor names must be distinct")
        for name in self.names:
            if not name or any(ch in name for ch in " \t^[]"):
                raise ValueError(f"bad factor name: {name!r}")
            if name == "t":
                raise ValueError("the name t is reserved for the stable letter")

    @property
    def n(self):
        return len(self.factors)

    def __eq__(self, other):
        return (
            isinstance(other, FreeProduct)
            and self.factors == other.factors
            and self.names == other.names
        )

    def __hash__(self):
        return hash((self.factors, self.names))

    def __repr__(self):
        return "FreeProduct(" + " * ".join(
            f"{name}:{factor.label}" for name, factor in zip(self.names, self.factors)
        ) + ")"

    def signature(self):
        parts = []
        for name, factor in zip(self.names, self.factors):
            if factor.kind == "finite":
                digest = zlib.crc32(repr(factor.cayley).encode())
                parts.append(f"{name}/{factor.order}:{digest:08x}")
            else:
                parts.append(f"{name}/Z")
        return "*".join(parts)

    def all_factors_finite(self):
        return all(f.kind == "finite" for f in self.factors)

    # -- letters -------------------------------------------------------------

    def factor_of(self, letter):
        return self.factors[letter[0]]

    def is_trivial_letter(self, letter):
        return letter[1] == self.factors[letter[0]].identity

    def check_letter(self, letter):
        i, e = letter
        if not (0 <= i < self.n):
            raise FactorMismatch(f"no factor {i}")
        factor = self.factors[i]
        if factor.kind == "finite" and not (0 <= e < factor.order):
            raise FactorMismatch(f"element {e} outside factor {self.names[i]}")

    def letter_mul(self, g, h):
        if g[0] != h[0]:
            raise FactorMismatch(f"letters in factors {g[0]} and {h[0]}")
        return (g[0], self.factors[g[0]].mul(g[1], h[1]))

    def letter_inv(self, g):
        return (g[0], self.factors[g[0]].inv(g[1]))

    def letters(self) -> Iterator[Letter]:
        """All generator letters: every nontrivial element of finite factors,
        the two exponent +-1 letters of infinite cyclic factors."""
        for i, factor in enumerate(self.factors):
            if factor.kind == "finite":
                for e in factor.nontrivial():
                    yield (i, e)
            else:
                yield (i, 1)
                yield (i, -1)

    # -- words ---------------------------------------------------------------

    def nf(self, raw: Iterable[Letter]) -> Word:
        """Normal form: merge adjacent same-factor letters, drop trivials."""
        out = []
        for letter in raw:
            i, e = letter
            if e == self.factors[i].identity:
                continue
            if out and out[-1][0] == i:
                merged = self.factors[i].mul(out[-1][1], e)
                if merged == self.factors[i].identity:
                    out.pop()
                else:
                    out[-1] = (i, merged)
            else:
                out.append((i, e))
        return tuple(out)

    def mul(self, *words: Word) -> Word:
        return self.nf(itertools.chain.from_iterable(words))

    def inv(self, word: Word) -> Word:
        return tuple(self.letter_inv(l) for l in reversed(word))

    def conj(self, word: Word, by: Word) -> Word:
        """by^-1 . word . by"""
        return self.mul(self.inv(by), word, by)

    def power(self, word: Word, k: int) -> Word:
        if k < 0:
            word, k = self.inv(word), -k
        out: Word = ()
        for _ in range(k):
            out = self.mul(out, word)
        return out

    def in_subfactors(self, word: Word, subset) -> bool:
        return all(l[0] in subset for l in word)

    # -- conjugacy -----------------------------------------------------------

    def cyclic_form(self, word: Word):
        """Cyclically reduced core and conjugator: word = q^-1 . core . q."""
        core = list(word)
        q: Word = ()
        while len(core) >= 2 and core[0][0] == core[-1][0]:
            last = core.pop()
            merged = self.letter_mul(last, core[0])
            q = self.mul((last,), q)
            if merged[1] == self.factors[merged[0]].identity:
                core.pop(0)
            else:
                core[0] = merged
        return tuple(core), q

    def conjugacy_normal_form(self, word: Word) -> Word:
        """Canonical conjugacy representative.

        Length >= 2: the rotation of the cyclically reduced core that is
        minimal in the lexicographic order on (factor, element).  Length <= 1:
        the minimal element index in the letter's factor conjugacy orbit
        (single syllables are conjugate in W iff conjugate in their factor).
        """
        core, _ = self.cyclic_form(word)
        if len(core) <= 1:
            if not core:
                return ()
            i, e = core[0]
            return ((i, self.factors[i].conjugacy_min(e)),)
        return min(core[r:] + core[:r] for r in range(len(core)))

    def conjugator(self, w1: Word, w2: Word) -> Optional[Word]:
        """A word u with u^-1 . w1 . u = w2, or None if not conjugate."""
        c1, q1 = self.cyclic_form(w1)
        c2, q2 = self.cyclic_form(w2)
        if len(c1) != len(c2):
            return None
        if not c1:
            return ()
        if len(c1) == 1:
            (i1, e1), (i2, e2) = c1[0], c2[0]
            if i1 != i2:
                return None
            factor = self.factors[i1]
            if factor.kind == "zee":
                if e1 != e2:
                    return None
                mid: Word = ()
            else:
                for s in factor.elements():
                    if factor.mul(factor.inv(s), factor.mul(e1, s)) == e2:
                        mid = ((i1, s),)
                        break
                else:
                    return None
            u = self.mul(self.inv(q1), mid, q2)
        else:
            for r in range(len(c1)):
                if c1[r:] + c1[:r] == tuple(c2):
                    prefix = c1[:r]
                    # w1 = q1^-1 c1 q1, c1 = prefix . c2 . prefix^-1
                    u = self.mul(self.inv(q1), prefix, q2)
                    break
            else:
                return None
        assert self.conj(w1, u) == w2
        return u

    # -- formatting and parsing ----------------------------------------------

    def format_letter(self, letter) -> str:
        i, e = letter
        name, factor = self.names[i], self.factors[i]
        if factor.kind == "zee":
            return name if e == 1 else f"{name}^{e}"
        if getattr(factor, "_cyclic_order", None) or factor.is_cyclic():
            # express as a power of the distinguished generator when possible
            gen = factor.generator()
            x, k = gen, 1
            while x != e and k <= factor.order:
                x, k = factor.mul(x, gen), k + 1
            if x == e:
                return name if k == 1 else f"{name}^{k}"
        return f"{name}[{e}]"

    def format_word(self, word: Word) -> str:
        return " ".join(self.format_letter(l) for l in word) if word else "1"

    def parse_word(self, text: str) -> Word:
        from .errors import UnknownGenerator

        raw = []
        for token in text.split():
            if token == "1":
                continue
            base, power = token, 1
            if "^" in token:
                base, _, exp = token.partition("^")
                try:
                    power = int(exp)
                except ValueError:
                    raise UnknownGenerator(f"bad exponent in token {token!r}")
            index = None
            if "[" in base:
                name, _, rest = base.partition("[")
                if not rest.endswith("]"):
                    raise UnknownGenerator(f"bad element token {token!r}")
                index = int(rest[:-1])
                base = name
            if base not in self.names:
                raise UnknownGenerator(f"unknown generator {base!r}")
            i = self.names.index(base)
            factor = self.factors[i]
            if index is None:
                index = 1 if factor.kind == "zee" else factor.generator()
            element = factor.power(index, power)
            raw.append((i, element))
        return self.nf(raw)

    # -- randomness ----------------------------------------------------------

    def random_letter(self, rng, factors=None):
        i = rng.choice(list(factors) if factors is not None else range(self.n))
        factor = self.factors[i]
        if factor.kind == "finite":
            return (i, rng.randrange(1, factor.order))
        return (i, rng.choice((1, -1)) * rng.randrange(1, 4))

    def random_word(self, rng, syllables, factors=None) -> Word:
        pool = list(factors) if factors is not None else list(range(self.n))
        out = []
        prev = None
        for _ in range(syllables):
            choices = [i for i in pool if i != prev] or pool
            i = rng.choice(choices)
            out.append(self.random_letter(rng, [i]))
            prev = i
        return self.nf(out)


# ---------------------------------------------------------------------------
# spec-level convenience wrappers
# ---------------------------------------------------------------------------


def group_multiply(W: FreeProduct, g: Letter, h: Letter) -> Letter:
    """Product of two letters in a common factor."""
    W.check_letter(g)
    W.check_letter(h)
    return W.letter_mul(g, h)


def normal_form(W: FreeProduct, raw: Iterable[Letter]) -> Word:
    for letter in raw:
        W.check_letter(letter)
    return W.nf(raw)


def invert(W: FreeProduct, word: Word) -> Word:
    return W.inv(word)


def conjugacy_normal_form(W: FreeProduct, word: Word) -> Word:
    return W.conjugacy_normal_form(word)


# ---------------------------------------------------------------------------
# automorphisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KuroshData:
    """How an automorphism moves the factors around.

    ``pi`` is the factor permutation, ``isos[i]`` the element mapping
    A_i -> A_pi(i), and ``conjugators[i]`` the word u_i with
    Phi(a) = u_i^-1 . isos[i](a) . u_i for every a in A_i.
    """

    pi: tuple
    isos: tuple
    conjugators: tuple


class Automorphism:
    """An endomorphism of W given by exact images, usually an automorphism.

    ``images[i]`` lists the image word of every element of finite factor i
    (index 0 mapping to the empty word); for an infinite cyclic factor it is
    a one-element list holding the image of the generator.
    """

    def __init__(self, W: FreeProduct, images):
        self.W = W
        canon = []
        if len(images) != W.n:
            raise NotAutomorphism("one image family per factor required")
        for i, factor in enumerate(W.factors):
            fam = [W.nf(w) for w in images[i]]
            if factor.kind == "finite":
                if len(fam) != factor.order or fam[0] != ():
                    raise NotAutomorphism(
                        f"factor {W.names[i]} needs images for all elements"
                    )
                for a in factor.elements():
                    for b in factor.elements():
                        if W.mul(fam[a], fam[b]) != fam[factor.mul(a, b)]:
                            raise NotAutomorphism(
                                f"images on factor {W.names[i]} are not a homomorphism"
                            )
            else:
                if len(fam) != 1:
                    raise NotAutomorphism("one generator image per Z factor")
            canon.append(tuple(fam))
        self.images = tuple(canon)
        self._inverse = None
        self._kurosh = None

    # -- constructors --------------------------------------------------------

    @classmethod
    def identity(cls, W: FreeProduct) -> "Automorphism":
        images = []
        for i, factor in enumerate(W.factors):
            if factor.kind == "zee":
                images.append([((i, 1),)])
            else:
                images.append([((i, e),) if e else () for e in factor.elements()])
        return cls(W, images)

    @classmethod
    def from_gen_images(cls, W: FreeProduct, gen_images) -> "Automorphism":
        """Build from one image word per factor generator.

        Finite factors must be cyclic for this constructor; use
        ``from_element_images`` otherwise.
        """
        images = []
        for i, factor in enumerate(W.factors):
            img = W.nf(gen_images[i])
            if factor.kind == "zee":
                images.append([img])
                continue
            if not factor.is_cyclic():
                raise NotAutomorphism(
                    f"factor {W.names[i]} is not cyclic; give element images"
                )
            gen = factor.generator()
            fam = [()] * factor.order
            x, w = gen, img
            for _ in range(1, factor.order):
                fam[x] = w
                x, w = factor.mul(x, gen), W.mul(w, img)
            images.append(fam)
        return cls(W, images)

    @classmethod
    def from_element_images(cls, W: FreeProduct, maps) -> "Automorphism":
        """Build from per-factor dictionaries element -> image word."""
        images = []
        for i, factor in enumerate(W.factors):
            if factor.kind == "zee":
                images.append([W.nf(maps[i][1])])
            else:
                images.append(
                    [W.nf(maps[i].get(e, ())) if e else () for e in factor.elements()]
                )
        return cls(W, images)

    @classmethod
    def inner(cls, W: FreeProduct, by: Word) -> "Automorphism":
        """Conjugation x -> by^-1 . x . by."""
        images = []
        for i, factor in enumerate(W.factors):
            if factor.kind == "zee":
                images.append([W.conj(((i, 1),), by)])
            else:
                images.append([W.conj(((i, e),), by) if e else () for e in factor.elements()])
        return cls(W, images)

    # -- application ---------------------------------------------------------

    def letter_image(self, letter) -> Word:
        i, e = letter
        factor = self.W.factors[i]
        if factor.kind == "finite":
            return self.images[i][e]
        return self.W.power(self.images[i][0], e)

    def apply(self, word: Word) -> Word:
        return self.W.mul(*(self.letter_image(l) for l in word)) if word else ()

    def __call__(self, word: Word) -> Word:
        return self.apply(word)

    def compose(self, other: "Automorphism") -> "Automorphism":
        """self after other: (self.compose(other))(w) = self(other(w))."""
        if self.W != other.W:
            raise NotAutomorphism("composition needs a common presentation")
        images = [
            [self.apply(w) for w in fam] for fam in other.images
        ]
        return Automorphism(self.W, images)

    def power(self, k: int) -> "Automorphism":
        if k < 0:
            return self.inverse().power(-k)
        out = Automorphism.identity(self.W)
        base = self
        while k:
            if k & 1:
                out = base.compose(out)
            base = base.compose(base)
            k >>= 1
        return out

    def is_identity(self) -> bool:
        return self == Automorphism.identity(self.W)

    def __eq__(self, other):
        return (
            isinstance(other, Automorphism)
            and self.W == other.W
            and self.images == other.images
        )

    def __hash__(self):
        return hash((self.W, self.images))

    def __repr__(self):
        pieces = []
        for i, factor in enumerate(self.W.factors):
            if factor.kind == "zee":
                pieces.append(
                    f"{self.W.names[i]} -> {self.W.format_word(self.images[i][0])}"
                )
            else:
                gen = factor.generator()
                pieces.append(
                    f"{self.W.format_letter((i, gen))} -> "
                    f"{self.W.format_word(self.images[i][gen])}"
                )
        return "Automorphism(" + ", ".join(pieces) + ")"

    # -- Kurosh structure ----------------------------------------------------

    def kurosh(self) -> KuroshData:
        """Factor permutation, factor isomorphisms, and conjugators.

        Raises NotAutomorphism when some factor image is not a conjugate of
        a factor, when the induced factor maps are not isomorphisms, or when
        the factor assignment is not a permutation.  Requires all factors
        finite.
        """
        if self._kurosh is not None:
            return self._kurosh
        W = self.W
        if not W.all_factors_finite():
            raise NotAutomorphism("Kurosh data needs all factors finite")
        pi, isos, conjugators = [], [], []
        for i, factor in enumerate(W.factors):
            w0 = self.images[i][1]
            if len(w0) % 2 == 0:
                raise NotAutomorphism(
                    f"image of {W.format_letter((i, 1))} cannot be a conjugate of a letter"
                )
            m = len(w0) // 2
            u = w0[m + 1 :]
            mid = w0[m]
            if W.mul(W.inv(u), (mid,), u) != w0:
                raise NotAutomorphism(
                    f"image of {W.format_letter((i, 1))} is not a conjugated letter"
                )
            j = mid[0]
            target = W.factors[j]
            if target.order != factor.order:
                raise NotAutomorphism(
                    f"factor {W.names[i]} maps into a factor of different order"
                )
            mapping = [0] * factor.order
            for e in factor.nontrivial():
                img = W.mul(u, self.images[i][e], W.inv(u))
                if len(img) != 1 or img[0][0] != j:
                    raise NotAutomorphism(
                        f"factor {W.names[i]} does not map into a single factor"
                    )
                mapping[e] = img[0][1]
            if not is_iso(factor, target, tuple(mapping)):
                raise NotAutomorphism(
                    f"factor map on {W.names[i]} is not an isomorphism"
                )
            pi.append(j)
            isos.append(tuple(mapping))
            conjugators.append(u)
        if sorted(pi) != list(range(W.n)):
            raise NotAutomorphism("factor assignment is not a permutation")
        self._kurosh = KuroshData(tuple(pi), tuple(isos), tuple(conjugators))
        return self._kurosh

    def is_out0(self) -> bool:
        """True when every factor is preserved with an inner induced map."""
        try:
            data = self.kurosh()
        except NotAutomorphism:
            return False
        if any(data.pi[i] != i for i in range(self.W.n)):
            return False
        return all(
            iso_inner_witness(self.W.factors[i], data.isos[i]) is not None
            for i in range(self.W.n)
        )

    # -- outer fingerprint ---------------------------------------------------

    def _normalized_candidates(self):
        """Representatives of the outer class with factor 0 mapped to itself
        by a bare isomorphism; one candidate per element of the first factor
        times each choice is resolved by minimal serialization."""
        data = self.kurosh()
        u0 = data.conjugators[0]
        base = Automorphism.inner(self.W, self.W.inv(u0)).compose(self)
        first = self.W.factors[0]
        out = []
        for s in first.elements():
            twist = Automorphism.inner(self.W, ((0, s),)) if s else None
            cand = twist.compose(base) if twist else base
            # cand(x) = v^-1 . self(x) . v for v = u0^-1 . s
            v = self.W.mul(self.W.inv(u0), ((0, s),) if s else ())
            out.append((_serialize_images(cand), cand, v))
        out.sort(key=lambda t: t[0])
        return out

    def fingerprint(self) -> str:
        """Deterministic identifier of the outer class [self]."""
        text, _, _ = self._normalized_candidates()[0]
        return self.W.signature() + "|" + text

    def outer_conjugator(self, other: "Automorphism") -> Optional[Word]:
        """A word w with other(x) = w^-1 . self(x) . w for all x, or None."""
        if self.W != other.W:
            return None
        try:
            mine = self._normalized_candidates()[0]
            theirs = other._normalized_candidates()[0]
        except NotAutomorphism:
            return None
        if mine[0] != theirs[0]:
            return None
        # the shared normal form N satisfies N(x) = v1^-1 self(x) v1 and
        # N(x) = v2^-1 other(x) v2, so other = inner(v1 v2^-1) after self
        v1, v2 = mine[2], theirs[2]
        w = self.W.mul(v1, self.W.inv(v2))
        check = Automorphism.inner(self.W, w).compose(self)
        return w if check == other else None

    def outer_equal(self, other: "Automorphism") -> bool:
        return self.outer_conjugator(other) is not None

    def is_inner(self) -> Optional[Word]:
        return Automorphism.identity(self.W).outer_conjugator(self)

    # -- inversion -----------------------------------------------------------

    def inverse(self, cap: int = 12) -> "Automorphism":
        """The inverse automorphism.

        Tries a structural inversion for triangular image shapes first, then
        a bounded meet-in-the-middle preimage search (total word-length cap
        ``cap``).  Raises NotInvertible if both fail or the result does not
        verify.
        """
        if self._inverse is not None:
            return self._inverse
        inv = self._structural_inverse()
        if inv is None:
            inv = self._search_inverse(cap)
        if inv is None:
            raise NotInvertible("no inverse found within the search cap")
        if not _mutually_inverse(self, inv):
            raise NotInvertible("candidate inverse failed verification")
        self._inverse = inv
        inv._inverse = self
        return inv

    def _structural_inverse(self):
        """Inversion for triangular images in the given factor order.

        Works when the image of every generator of factor k is
        p . x_k^(eps) . q with p, q supported on factors below k (finite
        factors: conjugated isomorphic images, same shape).  Returns None
        when the shape does not match.
        """
        W = self.W
        for k, factor in enumerate(W.factors):
            elements = [0] if factor.kind == "zee" else list(factor.nontrivial())
            for e in elements:
                img = self.images[k][e]
                spots = [pos for pos, l in enumerate(img) if l[0] == k]
                if len(spots) != 1:
                    return None
                if factor.kind == "zee" and abs(img[spots[0]][1]) != 1:
                    return None
                if any(l[0] > k for pos, l in enumerate(img) if pos != spots[0]):
                    return None

        # build the inverse bottom-up: phi_inv on factors < k is known when
        # factor k is processed, and the wings live strictly below k.
        partial: dict = {}

        def apply_inverse(word):
            out = ()
            for letter in word:
                out = W.mul(out, partial[letter[0]](letter))
            return out

        for k, factor in enumerate(W.factors):
            if factor.kind == "zee":
                img = self.images[k][0]
                (spot,) = [t for t, l in enumerate(img) if l[0] == k]
                eps = img[spot][1]
                p, q = img[:spot], img[spot + 1 :]
                if eps == 1:
                    head, tail = W.inv(apply_inverse(p)), W.inv(apply_inverse(q))
                else:
                    head, tail = apply_inverse(q), apply_inverse(p)
                gen_pre = W.mul(head, ((k, eps),), tail)

                def zee_rule(letter, gen_pre=gen_pre):
                    return W.power(gen_pre, letter[1])

                partial[k] = zee_rule
            else:
                img = self.images[k][1]
                (spot,) = [pos for pos, l in enumerate(img) if l[0] == k]
                p, q = img[:spot], img[spot + 1 :]
                # element -> middle letter, read off through the shared wings
                mid = {}
                for e in factor.nontrivial():
                    ie = self.images[k][e]
                    core = W.mul(W.inv(p), ie, W.inv(q))
                    if len(core) != 1 or core[0][0] != k:
                        return None
                    mid[e] = core[0][1]
                if len(set(mid.values())) != factor.order - 1 or 0 in mid.values():
                    return None
                back = {b: e for e, b in mid.items()}
                head = W.inv(apply_inverse(p))
                tail = W.inv(apply_inverse(q))

                def finite_rule(letter, back=back, head=head, tail=tail, k=k):
                    return W.mul(head, ((k, back[letter[1]]),), tail)

                partial[k] = finite_rule

        images = []
        for i, factor in enumerate(W.factors):
            if factor.kind == "zee":
                images.append([partial[i]((i, 1))])
            else:
                images.append([partial[i]((i, e)) if e else () for e in factor.elements()])
        try:
            return Automorphism(W, images)
        except NotAutomorphism:
            return None

    def _search_inverse(self, cap):
        """Meet-in-the-middle preimage search for each factor generator."""
        W = self.W
        try:
            data = self.kurosh()
        except NotAutomorphism:
            return None
        half = max(1, cap // 2)
        # forward table: images of all words up to length `half`
        table = {(): ()}
        frontier = [()]
        budget = 200_000
        for _ in range(half):
            new_frontier = []
            for word in frontier:
                for letter in W.letters():
                    cand = W.mul(word, (letter,))
                    if len(cand) <= len(word):
                        continue
                    img = self.apply(cand)
                    if img not in table:
                        table[img] = cand
                        new_frontier.append(cand)
                    budget -= 1
                    if budget <= 0:
                        break
                if budget <= 0:
                    break
            frontier = new_frontier
            if budget <= 0:
                break

        def find_preimage(target):
            if target in table:
                return table[target]
            seen = {()}
            layer = [()]
            spend = 200_000
            for _ in range(cap - half):
                nxt = []
                for word in layer:
                    for letter in W.letters():
                        cand = W.mul((letter,), word)
                        if len(cand) <= len(word) or cand in seen:
                            continue
                        seen.add(cand)
                        nxt.append(cand)
                        probe = W.mul(target, W.inv(self.apply(cand)))
                        if probe in table:
                            return W.mul(table[probe], cand)
                        spend -= 1
                        if spend <= 0:
                            return None
                layer = nxt
            return None

        inv_maps = []
        for i in range(W.n):
            j = data.pi[i]
            target_factor = W.factors[j]
            rho_inv = iso_invert(data.isos[i])
            u = data.conjugators[i]
            v = None
            for z in target_factor.center():
                goal = W.mul(W.inv(u), ((j, z),)) if z else W.inv(u)
                v = find_preimage(goal)
                if v is not None:
                    break
            if v is None:
                return None
            fam = {}
            for b in target_factor.nontrivial():
                fam[b] = W.conj(((i, rho_inv[b]),), v)
            inv_maps.append((j, fam))
        maps = [None] * W.n
        for i, (j, fam) in enumerate(inv_maps):
            maps[j] = fam
        try:
            return Automorphism.from_element_images(W, maps)
        except NotAutomorphism:
            return None


def _serialize_images(phi: Automorphism) -> str:
    chunks = []
    for i, fam in enumerate(phi.images):
        for e, word in enumerate(fam):
            chunks.append(
                f"{i}.{e}=" + ",".join(f"{l[0]}:{l[1]}" for l in word)
            )
    return ";".join(chunks)


def _mutually_inverse(phi: Automorphism, psi: Automorphism) -> bool:
    W = phi.W
    for letter in W.letters():
        if phi.apply(psi.letter_image(letter)) != ((letter,) if letter[1] else ()):
            return False
        if psi.apply(phi.letter_image(letter)) != ((letter,) if letter[1] else ()):
            return False
    return True


# ---------------------------------------------------------------------------
# the mapping torus W |x ZZ
# ---------------------------------------------------------------------------

T_UP = ("t", 1)
T_DOWN = ("t", -1)


@dataclass(frozen=True)
class TorusWord:
    """Normal form t^k . w in the mapping torus of an automorphism."""

    tpower: int
    tail: Word

    def is_trivial(self):
        return self.tpower == 0 and not self.tail


def torus_normal_form(phi: Automorphism, items) -> TorusWord:
    """Push every t to the left through t.g = Phi(g).t.

    ``items`` mixes letters with ("t", +-k) markers.  Moving a letter w left
    past t^k multiplies it by Phi^k; the running tail therefore transforms by
    Phi^-1 when a positive t is absorbed, which is where invertibility (and
    the NotInvertible error) comes in.
    """
    W = phi.W
    k = 0
    tail: Word = ()
    phi_inv = None
    for item in items:
        if isinstance(item, tuple) and len(item) == 2 and item[0] == "t":
            step = item[1]
            if step > 0:
                if tail:
                    if phi_inv is None:
                        phi_inv = phi.inverse()
                    for _ in range(step):
                        tail = phi_inv.apply(tail)
                k += step
            else:
                for _ in range(-step):
                    tail = phi.apply(tail)
                k += step
        else:
            tail = W.mul(tail, (item,))
    return TorusWord(k, tail)


def torus_items_from_relator(W: FreeProduct, text: str):
    """Parse a whitespace relator over W's generators and the token t."""
    items = []
    for token in text.split():
        if token == "t" or token.startswith("t^"):
            power = 1 if token == "t" else int(token[2:])
            items.append(("t", power))
        else:
            items.extend(W.parse_word(token))
    return items
