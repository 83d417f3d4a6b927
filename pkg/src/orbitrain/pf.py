"""Certified spectral data for nonnegative integer matrices.

Everything here is exact: matrices are tuples of integer rows, eigenvalue
bounds are rationals produced by Collatz-Wielandt iteration with a Sturm
bisection fallback, and eigenvalue comparisons are decided by isolating
intervals plus an integer polynomial gcd, never by floating point.

The growth rate of an irreducible nonnegative integer matrix is the largest
real root of its characteristic polynomial, which Faddeev-LeVerrier computes
together with the adjugate coefficient matrices; the adjugate columns give
certified intervals for the positive eigenvector.
"""

from fractions import Fraction
from math import gcd as int_gcd
from typing import List, Optional, Sequence, Tuple

from .errors import CapExceeded, NotIrreducible

Matrix = Tuple[Tuple[int, ...], ...]

DEFAULT_TOL = Fraction(1, 10**9)


# -- matrix basics ------------------------------------------------------------


def as_matrix(rows) -> Matrix:
    M = tuple(tuple(int(x) for x in row) for row in rows)
    n = len(M)
    for row in M:
        if len(row) != n:
            raise ValueError("matrix must be square")
        if any(x < 0 for x in row):
            raise ValueError("matrix must be nonnegative")
    return M


def identity_matrix(n: int) -> Matrix:
    return tuple(tuple(1 if i == j else 0 for j in range(n))
                 for i in range(n))


def mat_mul(A: Matrix, B: Matrix) -> Matrix:
    n = len(A)
    return tuple(
        tuple(sum(A[i][k] * B[k][j] for k in range(n)) for j in range(n))
        for i in range(n))


def mat_vec(A: Matrix, v: Sequence[Fraction]) -> List[Fraction]:
    return [sum(a * x for a, x in zip(row, v)) for row in A]


def submatrix(M: Matrix, idx: Sequence[int]) -> Matrix:
    return tuple(tuple(M[i][j] for j in idx) for i in idx)


def entrywise_le(A: Matrix, B: Matrix) -> bool:
    return all(a <= b for ra, rb in zip(A, B) for a, b in zip(ra, rb))


def is_zero_matrix(M: Matrix) -> bool:
    return all(x == 0 for row in M for x in row)


def is_transitive_permutation(M: Matrix) -> bool:
    """One 1 per row and column, and the permutation is a single cycle."""
    n = len(M)
    image = [None] * n
    for i in range(n):
        if sum(M[i]) != 1:
            return False
        for j in range(n):
            if M[i][j] not in (0, 1):
                return False
            if M[i][j] == 1:
                if image[j] is not None:
                    return False
                image[j] = i
    if any(x is None for x in image):
        return False
    seen, j = 0, 0
    for _ in range(n):
        j = image[j]
        seen += 1
        if j == 0:
            break
    return seen == n and j == 0


def successors(M: Matrix, j: int) -> Tuple[int, ...]:
    """Indices whose rows are hit by column j: the arcs of the transition
    digraph run j -> i whenever the image of j crosses i."""
    return tuple(i for i in range(len(M)) if M[i][j] > 0)


def scc_components(M: Matrix) -> Tuple[Tuple[int, ...], ...]:
    """Strongly connected components, listed sinks first.

    The order is the one a filtration wants: a component only ever maps
    into itself and components listed before it.
    """
    n = len(M)
    index: List[Optional[int]] = [None] * n
    low = [0] * n
    on_stack = [False] * n
    stack: List[int] = []
    out: List[Tuple[int, ...]] = []
    counter = [0]

    for root in range(n):
        if index[root] is not None:
            continue
        work = [(root, iter(successors(M, root)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if index[w] is None:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(successors(M, w))))
                    advanced = True
                    break
                if on_stack[w]:
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
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(tuple(sorted(comp)))
    return tuple(out)


def is_irreducible(M: Matrix) -> bool:
    """Strong connectivity of the transition digraph; a lone vertex must
    carry a loop, so the 1x1 zero matrix is reducible."""
    n = len(M)
    if n == 1:
        return M[0][0] > 0
    return len(scc_components(M)) == 1


# -- integer polynomials -------------------------------------------------------
# coefficient tuples run from the leading term down; all arithmetic exact


def charpoly(M: Matrix) -> Tuple[int, ...]:
    n = len(M)
    coeffs = [1]
    B = identity_matrix(n)
    for k in range(1, n + 1):
        A = mat_mul(M, B)
        trace = sum(A[i][i] for i in range(n))
        c, rem = divmod(-trace, k)
        assert rem == 0
        coeffs.append(c)
        B = tuple(tuple(A[i][j] + (c if i == j else 0) for j in range(n))
                  for i in range(n))
    return tuple(coeffs)


def adjugate_polys(M: Matrix) -> Tuple[Matrix, ...]:
    """Coefficient matrices B_0..B_{n-1} of adj(xI - M), leading first."""
    n = len(M)
    out = [identity_matrix(n)]
    B = out[0]
    for k in range(1, n):
        A = mat_mul(M, B)
        trace = sum(A[i][i] for i in range(n))
        c = -trace // k
        B = tuple(tuple(A[i][j] + (c if i == j else 0) for j in range(n))
                  for i in range(n))
        out.append(B)
    return tuple(out)


def poly_eval(p: Sequence, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in p:
        acc = acc * x + c
    return acc


def poly_derive(p: Sequence) -> Tuple:
    n = len(p) - 1
    if n <= 0:
        return (0,)
    return tuple(c * (n - i) for i, c in enumerate(p[:-1]))


def _poly_trim(p):
    p = list(p)
    while len(p) > 1 and p[0] == 0:
        p.pop(0)
    return p


def _poly_divmod(a, b):
    a = [Fraction(c) for c in _poly_trim(a)]
    b = [Fraction(c) for c in _poly_trim(b)]
    if all(c == 0 for c in b):
        raise ZeroDivisionError("polynomial division by zero")
    q = [Fraction(0)] * max(1, len(a) - len(b) + 1)
    while len(a) >= len(b) and any(c != 0 for c in a):
        shift = len(a) - len(b)
        factor = a[0] / b[0]
        q[len(q) - 1 - shift] = factor
        a = [c - factor * d for c, d in
             zip(a, list(b) + [Fraction(0)] * shift)]
        a = _poly_trim(a)
    return q, a


def _primitive(p) -> Tuple[int, ...]:
    """Scale a rational coefficient list to coprime integers, sign kept."""
    p = _poly_trim(p)
    fracs = [Fraction(c) for c in p]
    if all(c == 0 for c in fracs):
        return (0,)
    denom = 1
    for c in fracs:
        denom = denom * c.denominator // int_gcd(denom, c.denominator)
    ints = [int(c * denom) for c in fracs]
    g = 0
    for c in ints:
        g = int_gcd(g, abs(c))
    return tuple(c // g for c in ints)


def poly_gcd(a: Sequence[int], b: Sequence[int]) -> Tuple[int, ...]:
    a, b = _poly_trim(a), _poly_trim(b)
    while any(c != 0 for c in b):
        _, r = _poly_divmod(a, b)
        a, b = b, r
    g = _primitive(a)
    return g if g[0] > 0 else tuple(-c for c in g)


def squarefree_part(p: Sequence[int]) -> Tuple[int, ...]:
    g = poly_gcd(p, poly_derive(p))
    if len(g) == 1:
        return _primitive(p)
    q, _ = _poly_divmod(p, g)
    return _primitive(q)


def sturm_chain(p: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
    p0 = squarefree_part(p)
    chain = [p0]
    if len(p0) > 1:
        chain.append(_primitive(poly_derive(p0)))
        while len(chain[-1]) > 1:
            _, r = _poly_divmod(chain[-2], chain[-1])
            r = _poly_trim(r)
            if all(c == 0 for c in r):
                break
            chain.append(tuple(-c for c in _primitive(r)))
    return tuple(chain)


def _sign_changes(chain, x: Fraction) -> int:
    signs = []
    for p in chain:
        v = poly_eval(p, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def count_distinct_roots(chain, a: Fraction, b: Fraction) -> int:
    """Distinct real roots in (a, b] for a chain whose endpoints avoid the
    roots of chain[0]; every caller maintains that."""
    return _sign_changes(chain, a) - _sign_changes(chain, b)


def root_bound(p: Sequence[int]) -> Fraction:
    lead = abs(p[0])
    rest = max((abs(c) for c in p[1:]), default=0)
    return Fraction(rest, lead) + 1


def _deflate(p: Sequence[int], r: Fraction) -> Tuple[int, ...]:
    """Exact division of p by (x - r) for a known rational root r."""
    out = []
    acc = Fraction(0)
    for c in p:
        acc = acc * r + c
        out.append(acc)
    assert out[-1] == 0
    return _primitive(out[:-1])


class Isolation:
    """The largest real root of an integer polynomial, pinned down.

    Either ``exact`` is the root itself, or ``(lo, hi]`` contains exactly
    one distinct root of ``chain[0]`` (the largest), with both endpoints
    off the roots.
    """

    __slots__ = ("chain", "lo", "hi", "exact")

    def __init__(self, chain, lo, hi, exact=None):
        self.chain = chain
        self.lo = lo
        self.hi = hi
        self.exact = exact

    @property
    def width(self) -> Fraction:
        return Fraction(0) if self.exact is not None else self.hi - self.lo

    def bounds(self) -> Tuple[Fraction, Fraction]:
        if self.exact is not None:
            return (self.exact, self.exact)
        return (self.lo, self.hi)

    def refine(self, tol: Fraction) -> "Isolation":
        if self.exact is not None:
            return self
        lo, hi, chain = self.lo, self.hi, self.chain
        while hi - lo > tol:
            mid = (lo + hi) / 2
            if poly_eval(chain[0], mid) == 0:
                quotient = _deflate(chain[0], mid)
                qchain = sturm_chain(quotient)
                if (len(quotient) == 1
                        or count_distinct_roots(qchain, mid, hi) == 0):
                    return Isolation(chain, mid, mid, exact=mid)
                chain = qchain
                lo = mid
                continue
            if count_distinct_roots(chain, mid, hi) >= 1:
                lo = mid
            else:
                hi = mid
        return Isolation(chain, lo, hi, None)


def isolate_largest_root(p: Sequence[int],
                         tol: Fraction) -> Optional[Isolation]:
    """Bracket the largest real root within tol, or None if no real root."""
    chain = sturm_chain(p)
    B = root_bound(chain[0])
    if count_distinct_roots(chain, -B, B) == 0:
        return None
    seed = Isolation(chain, -B, B, None)
    out = seed.refine(tol)
    if out.exact is None:
        while count_distinct_roots(out.chain, out.lo, out.hi) > 1:
            out = out.refine(out.width / 4)
    return out


def largest_real_root_interval(p: Sequence[int], tol: Fraction
                               ) -> Optional[Tuple[Fraction, Fraction]]:
    iso = isolate_largest_root(p, tol)
    return None if iso is None else iso.bounds()


# -- certified PF data ----------------------------------------------------------


class PFData:
    """Certified bounds for the growth rate of an irreducible block."""

    __slots__ = ("matrix", "lower", "upper", "is_one", "vector", "_iso")

    def __init__(self, matrix: Matrix, lower: Fraction, upper: Fraction,
                 is_one: bool, vector, _iso: Optional[Isolation] = None):
        self.matrix = matrix
        self.lower = Fraction(lower)
        self.upper = Fraction(upper)
        self.is_one = bool(is_one)
        self.vector = tuple((Fraction(a), Fraction(b)) for a, b in vector)
        self._iso = _iso

    @property
    def width(self) -> Fraction:
        return self.upper - self.lower

    @property
    def exact(self) -> Optional[Fraction]:
        return self.lower if self.lower == self.upper else None

    def poly(self) -> Tuple[int, ...]:
        return charpoly(self.matrix)

    def isolation(self, tol: Fraction = DEFAULT_TOL) -> Isolation:
        if self._iso is None:
            if self.is_one:
                one = Fraction(1)
                self._iso = Isolation(sturm_chain(self.poly()), one, one,
                                      exact=one)
            else:
                self._iso = isolate_largest_root(self.poly(), tol)
        return self._iso

    def refined(self, tol: Fraction) -> "PFData":
        if self.width <= tol:
            return self
        iso = self.isolation(tol).refine(tol)
        lo, hi = iso.bounds()
        return PFData(self.matrix, max(lo, self.lower), min(hi, self.upper),
                      self.is_one, self.vector, _iso=iso)

    def __repr__(self):
        if self.is_one:
            return "PFData(growth 1)"
        return f"PFData({float(self.lower):.10f}..{float(self.upper):.10f})"


def _compress(v: List[Fraction]) -> List[Fraction]:
    top = max(v)
    out = []
    for x in v:
        y = (x / top).limit_denominator(10**12)
        if y <= 0:
            return v
        out.append(y)
    return out


def pf_data(M, tol: Fraction = DEFAULT_TOL) -> PFData:
    M = as_matrix(M)
    if not is_irreducible(M):
        raise NotIrreducible("the transition block is not irreducible")
    n = len(M)
    if is_transitive_permutation(M):
        ones = ((Fraction(1), Fraction(1)),) * n
        return PFData(M, Fraction(1), Fraction(1), True, ones)

    v = [Fraction(1)] * n
    best_lo, best_hi = Fraction(0), None
    for _ in range(120):
        w = mat_vec(M, v)
        ratios = [(wi + vi) / vi for wi, vi in zip(w, v)]
        lo = min(ratios) - 1
        hi = max(ratios) - 1
        best_lo = max(best_lo, lo)
        best_hi = hi if best_hi is None else min(best_hi, hi)
        if best_hi - best_lo <= tol:
            break
        v = _compress([wi + vi for wi, vi in zip(w, v)])

    iso = None
    if best_hi is None or best_hi - best_lo > tol:
        iso = isolate_largest_root(charpoly(M), tol)
        lo, hi = iso.bounds()
        best_lo = max(best_lo, lo)
        best_hi = hi if best_hi is None else min(best_hi, hi)

    vector, iso = _eigenvector_intervals(M, best_lo, best_hi, iso)
    return PFData(M, best_lo, best_hi, False, vector, _iso=iso)


def _interval_mul(a, b):
    products = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return (min(products), max(products))


def _interval_horner(coeffs, iv):
    acc = (Fraction(coeffs[0]), Fraction(coeffs[0]))
    for c in coeffs[1:]:
        acc = _interval_mul(acc, iv)
        acc = (acc[0] + c, acc[1] + c)
    return acc


def _eigenvector_intervals(M, lo, hi, iso=None):
    """Intervals for the positive right eigenvector via the first adjugate
    column, narrowing the eigenvalue bracket until every entry is surely
    positive.  Returns the intervals and the isolation used, if any."""
    n = len(M)
    if n == 1:
        return ((Fraction(1), Fraction(1)),), iso
    adj = adjugate_polys(M)
    for _ in range(200):
        iv = (lo, hi)
        cols = []
        for i in range(n):
            coeffs = [adj[k][i][0] for k in range(n)]
            entry = _interval_horner(coeffs, iv)
            if entry[0] <= 0:
                cols = None
                break
            cols.append(entry)
        if cols is not None:
            denom = cols[0]
            one = (Fraction(1), Fraction(1))
            return (one,) + tuple((c[0] / denom[1], c[1] / denom[0])
                                  for c in cols[1:]), iso
        if iso is None:
            iso = isolate_largest_root(charpoly(M), hi - lo)
        iso = iso.refine(max((hi - lo) / 4, Fraction(0)))
        nlo, nhi = iso.bounds()
        lo, hi = max(lo, nlo), min(hi, nhi)
        if lo == hi:
            point = [poly_eval([adj[k][i][0] for k in range(n)], lo)
                     for i in range(n)]
            assert all(x > 0 for x in point)
            return tuple((x / point[0], x / point[0]) for x in point), iso
    raise CapExceeded("eigenvector interval refinement did not converge")


# -- exact comparison ------------------------------------------------------------


def pf_compare(x: PFData, y: PFData) -> int:
    """-1, 0, or 1 by the true growth rates, decided exactly."""
    if x.is_one and y.is_one:
        return 0
    a = x.isolation()
    b = y.isolation()
    shared: Optional[Tuple] = None
    for _ in range(5000):
        alo, ahi = a.bounds()
        blo, bhi = b.bounds()
        if ahi < blo:
            return -1
        if bhi < alo:
            return 1
        if a.exact is not None and b.exact is not None:
            va, vb = a.exact, b.exact
            return -1 if va < vb else (1 if va > vb else 0)
        if a.exact is not None:
            if poly_eval(b.chain[0], a.exact) == 0 and blo < a.exact <= bhi:
                return 0
            b = b.refine(b.width / 16)
            continue
        if b.exact is not None:
            if poly_eval(a.chain[0], b.exact) == 0 and alo < b.exact <= ahi:
                return 0
            a = a.refine(a.width / 16)
            continue
        if shared is None:
            shared = poly_gcd(a.chain[0], b.chain[0])
        if len(shared) > 1:
            lo, hi = max(alo, blo), min(ahi, bhi)
            if count_distinct_roots(sturm_chain(shared), lo, hi) >= 1:
                return 0
        a = a.refine(a.width / 16)
        b = b.refine(b.width / 16)
    raise CapExceeded("eigenvalue comparison did not separate")


def pf_key_compare(xs: Sequence[PFData], ys: Sequence[PFData]) -> int:
    """Lexicographic comparison of two nonincreasing growth sequences; a
    strict prefix counts as smaller."""
    for a, b in zip(xs, ys):
        c = pf_compare(a, b)
        if c != 0:
            return c
    if len(xs) == len(ys):
        return 0
    return -1 if len(xs) < len(ys) else 1
