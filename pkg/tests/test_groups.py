"""Free product arithmetic: normal forms, conjugacy, automorphisms, torus words.

Derived expected values are computed by the independent oracles at the top of
this file (brute-force permutation composition, exhaustive bounded conjugation)
and then asserted against the library.
"""

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orbitrain.errors import (
    BadGroupTable,
    FactorMismatch,
    NotAutomorphism,
    NotInvertible,
)
from orbitrain.groups import (
    Automorphism,
    FiniteGroup,
    FreeProduct,
    InfiniteCyclic,
    TorusWord,
    conjugacy_normal_form,
    group_multiply,
    invert,
    is_iso,
    iso_chain,
    iso_identity,
    iso_inner_witness,
    iso_invert,
    normal_form,
    torus_items_from_relator,
    torus_normal_form,
)

# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def perm_compose(p, q):
    """Apply q first, then p (matching the library's table convention)."""
    return tuple(p[q[i]] for i in range(len(q)))


def oracle_symmetric_table(m):
    perms = sorted(itertools.permutations(range(m)))
    index = {p: i for i, p in enumerate(perms)}
    return [[index[perm_compose(g, h)] for h in perms] for g in perms]


def oracle_conjugators(W, max_syllables):
    """All words of at most max_syllables syllables, by brute enumeration."""
    words = [()]
    layer = [()]
    for _ in range(max_syllables):
        nxt = []
        for w in layer:
            for letter in W.letters():
                if w and w[-1][0] == letter[0]:
                    continue
                nxt.append(w + (letter,))
        words.extend(nxt)
        layer = nxt
    return words


def oracle_conjugate(W, w1, w2, max_syllables=4):
    return any(W.conj(w1, u) == w2 for u in oracle_conjugators(W, max_syllables))


# ---------------------------------------------------------------------------
# finite groups
# ---------------------------------------------------------------------------


def test_s3_table_matches_permutation_composition():
    s3 = FiniteGroup.symmetric(3)
    assert [list(row) for row in s3.cayley] == oracle_symmetric_table(3)


def test_s3_transposition_product_is_three_cycle():
    s3 = FiniteGroup.symmetric(3)
    twelve = s3.names.index("(1 2)")
    twothree = s3.names.index("(2 3)")
    assert s3.names[s3.mul(twelve, twothree)] == "(1 2 3)"


def test_cyclic_arithmetic():
    z6 = FiniteGroup.cyclic(6)
    assert z6.mul(0, 5) == 5 and z6.mul(5, 0) == 5
    assert z6.mul(4, 5) == 3
    assert z6.inv(2) == 4
    assert z6.element_order(2) == 3
    assert z6.is_abelian() and z6.is_cyclic()


def test_involution_squares_to_identity():
    z2 = FiniteGroup.cyclic(2)
    assert z2.mul(1, 1) == 0


def test_bad_tables_rejected():
    with pytest.raises(BadGroupTable):
        FiniteGroup([[0, 1], [1, 1]])  # 1 has no inverse
    with pytest.raises(BadGroupTable):
        FiniteGroup([[1, 0], [0, 1]])  # 0 not the identity
    with pytest.raises(BadGroupTable):
        FiniteGroup([[0]])  # trivial group disallowed


def test_s4_associativity_and_inverses():
    s4 = FiniteGroup.symmetric(4)
    assert s4.order == 24
    rng = random.Random(7)
    for _ in range(200):
        g, h = rng.randrange(24), rng.randrange(24)
        assert s4.mul(s4.inv(h), s4.inv(g)) == s4.inv(s4.mul(g, h))


def test_iso_helpers_on_s3():
    s3 = FiniteGroup.symmetric(3)
    ident = iso_identity(s3)
    assert is_iso(s3, s3, ident)
    t = s3.names.index("(1 2)")
    conj = tuple(s3.mul(s3.inv(t), s3.mul(g, t)) for g in s3.elements())
    assert is_iso(s3, s3, conj)
    assert iso_inner_witness(s3, conj) is not None
    assert iso_chain(conj, iso_invert(conj)) == ident


# ---------------------------------------------------------------------------
# words and normal forms
# ---------------------------------------------------------------------------


def test_letter_multiplication(w3):
    a = (0, 1)
    assert group_multiply(w3, a, a) == (0, 0)
    with pytest.raises(FactorMismatch):
        group_multiply(w3, (0, 1), (1, 1))


def test_normal_form_involution_cancellation(w3):
    assert normal_form(w3, [(0, 1), (0, 1), (1, 1)]) == ((1, 1),)
    assert normal_form(w3, []) == ()


def test_normal_form_bacab_squares_to_identity(w4):
    w = w4.parse_word("b a c a b")
    assert w4.mul(w, w) == ()


def test_parse_and_format_round_trip(w4):
    for text in ["b a c a b", "a", "1", "c a d a c"]:
        word = w4.parse_word(text)
        assert w4.parse_word(w4.format_word(word)) == word


def test_normal_form_merges_powers():
    z6 = FiniteGroup.cyclic(6)
    W = FreeProduct([z6, z6], ["a", "b"])
    word = W.parse_word("a^2 a^3 b a^5 a")
    assert word == W.parse_word("a^5 b")


def test_free_factor_words(f3):
    x2 = f3.parse_word("x^2")
    assert x2 == ((0, 2),)
    assert f3.mul(x2, f3.parse_word("x^-1")) == ((0, 1),)
    assert f3.mul(x2, f3.inv(x2)) == ()


def test_conjugacy_normal_form_examples(w3, w4):
    assert conjugacy_normal_form(w3, ()) == ()
    aba = w3.parse_word("a b a")
    assert conjugacy_normal_form(w3, aba) == w3.parse_word("b")
    bacab = w4.parse_word("b a c a b")
    c = w4.parse_word("c")
    assert conjugacy_normal_form(w4, bacab) == conjugacy_normal_form(w4, c)


def test_conjugacy_agrees_with_brute_force(w4):
    bacab = w4.parse_word("b a c a b")
    c = w4.parse_word("c")
    assert oracle_conjugate(w4, c, bacab)
    u = w4.conjugator(c, bacab)
    assert u is not None and w4.conj(c, u) == bacab
    # ab is the witness the identity bacab = (ab)^-1 c (ab) predicts
    assert w4.conj(c, w4.parse_word("a b")) == bacab


def test_non_conjugate_words_rejected(w4):
    assert w4.conjugator(w4.parse_word("a"), w4.parse_word("b")) is None
    assert w4.conjugator(w4.parse_word("a b"), w4.parse_word("a c")) is None


def test_single_syllable_factor_conjugacy():
    s3 = FiniteGroup.symmetric(3)
    W = FreeProduct([s3, s3], ["p", "q"])
    twelve = s3.names.index("(1 2)")
    onethree = s3.names.index("(1 3)")
    w1, w2 = ((0, twelve),), ((0, onethree),)
    assert W.conjugacy_normal_form(w1) == W.conjugacy_normal_form(w2)
    u = W.conjugator(w1, w2)
    assert u is not None and W.conj(w1, u) == w2


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_normal_form_idempotent_and_inverse_law(w4, data):
    k = data.draw(st.integers(0, 12))
    raw = [
        (data.draw(st.integers(0, 3)), data.draw(st.integers(0, 1)))
        for _ in range(k)
    ]
    word = normal_form(w4, raw)
    assert normal_form(w4, word) == word
    assert w4.mul(word, invert(w4, word)) == ()


def test_inverse_law_large_sample(w4):
    rng = random.Random(20260816)
    for _ in range(1000):
        word = w4.random_word(rng, rng.randrange(0, 14))
        assert w4.mul(word, w4.inv(word)) == ()
        assert w4.mul(w4.inv(word), word) == ()


def test_conjugacy_form_invariant_under_conjugation(w4):
    rng = random.Random(99)
    for _ in range(1000):
        w = w4.random_word(rng, rng.randrange(0, 10))
        g = w4.random_word(rng, rng.randrange(0, 6))
        assert w4.conjugacy_normal_form(w4.conj(w, g)) == w4.conjugacy_normal_form(w)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_cyclic_form_reconstructs_word(w3, data):
    k = data.draw(st.integers(0, 10))
    raw = [
        (data.draw(st.integers(0, 2)), data.draw(st.integers(0, 1)))
        for _ in range(k)
    ]
    word = w3.nf(raw)
    core, q = w3.cyclic_form(word)
    assert w3.mul(w3.inv(q), core, q) == word
    if len(core) >= 2:
        assert core[0][0] != core[-1][0]


# ---------------------------------------------------------------------------
# automorphisms
# ---------------------------------------------------------------------------


def test_identity_automorphism(w4):
    ident = Automorphism.identity(w4)
    assert ident.is_identity()
    word = w4.parse_word("a b c d a")
    assert ident.apply(word) == word


def test_phi_w4_applies(phi_w4, w4):
    assert phi_w4.apply(w4.parse_word("c")) == w4.parse_word("b a c a b")
    # phi(c)^2 = 1 because bacab is an involution's conjugate
    assert phi_w4.apply(w4.mul(w4.parse_word("c"), w4.parse_word("c"))) == ()


def test_non_homomorphism_images_rejected(w3):
    with pytest.raises(NotAutomorphism):
        Automorphism.from_gen_images(
            w3, [w3.parse_word("a"), w3.parse_word("a b"), w3.parse_word("c")]
        )


def test_kurosh_data_of_phi_w4(phi_w4, w4):
    data = phi_w4.kurosh()
    assert data.pi == (0, 1, 2, 3)
    assert data.conjugators == (
        (),
        (),
        w4.parse_word("a b"),
        w4.parse_word("a c"),
    )
    assert all(iso == (0, 1) for iso in data.isos)
    assert phi_w4.is_out0()


def test_kurosh_rejects_factor_mixing(w3):
    swap = Automorphism.from_element_images(
        w3,
        [
            {1: w3.parse_word("b")},
            {1: w3.parse_word("a")},
            {1: w3.parse_word("c")},
        ],
    )
    assert swap.kurosh().pi == (1, 0, 2)
    assert not swap.is_out0()


def test_alpha_beta_are_automorphisms(alpha_w3, beta_w3):
    assert alpha_w3.kurosh().pi == (0, 1, 2)
    assert beta_w3.kurosh().pi == (0, 1, 2)
    assert alpha_w3.is_out0() and beta_w3.is_out0()


def test_structural_inverse_of_phi_w4(phi_w4, w4):
    inv = phi_w4.inverse()
    assert inv.apply(w4.parse_word("c")) == w4.parse_word("a b c b a")
    assert inv.apply(w4.parse_word("d")) == w4.parse_word("b c b a d a b c b")
    assert inv.compose(phi_w4).is_identity()
    assert phi_w4.compose(inv).is_identity()


def test_search_inverse_of_alpha(alpha_w3):
    inv = alpha_w3.inverse()
    assert inv.compose(alpha_w3).is_identity()


def test_injective_non_surjective_endomorphism_not_invertible():
    z2 = FiniteGroup.cyclic(2)
    W = FreeProduct([z2, z2], ["a", "b"])
    phi = Automorphism.from_gen_images(
        W, [W.parse_word("b a b"), W.parse_word("a b a")]
    )
    phi.kurosh()  # factor images are honest conjugates
    with pytest.raises(NotInvertible):
        phi.inverse(cap=8)


def test_outer_fingerprint_identifies_outer_class(phi_w4, w4):
    twisted = Automorphism.inner(w4, w4.parse_word("b a c")).compose(phi_w4)
    assert twisted.images != phi_w4.images
    assert twisted.fingerprint() == phi_w4.fingerprint()
    w = phi_w4.outer_conjugator(twisted)
    assert w is not None
    assert Automorphism.inner(w4, w).compose(phi_w4) == twisted


def test_distinct_outer_classes_have_distinct_fingerprints(phi_w4, w4):
    ident = Automorphism.identity(w4)
    assert ident.fingerprint() != phi_w4.fingerprint()
    assert phi_w4.outer_conjugator(ident) is None
    assert ident.is_inner() == ()


def test_power_and_compose(phi_w4, w4):
    square = phi_w4.compose(phi_w4)
    assert phi_w4.power(2) == square
    assert square.apply(w4.parse_word("c")) == phi_w4.apply(
        phi_w4.apply(w4.parse_word("c"))
    )
    assert phi_w4.power(0).is_identity()
    assert phi_w4.power(-1) == phi_w4.inverse()


# ---------------------------------------------------------------------------
# torus words
# ---------------------------------------------------------------------------


def test_t_cancels_itself(phi_w4):
    assert torus_normal_form(phi_w4, [("t", 1), ("t", -1)]) == TorusWord(0, ())


def test_gersten_rewrite():
    F = FreeProduct([InfiniteCyclic()] * 3, ["a", "b", "c"])
    phi = Automorphism.from_gen_images(
        F, [F.parse_word("a"), F.parse_word("b a"), F.parse_word("c a^2")]
    )
    items = torus_items_from_relator(F, "t b t^-1")
    assert torus_normal_form(phi, items) == TorusWord(0, F.parse_word("b a"))


def test_palindromic_relator_reduces_to_trivial(f3):
    phi = Automorphism.from_gen_images(
        f3,
        [f3.parse_word("x"), f3.parse_word("x y x"), f3.parse_word("y z y")],
    )
    # (xt)^y (x^-1 t)^-1 with g^h = h g h^-1
    relator = torus_items_from_relator(f3, "y x t y^-1 t^-1 x")
    assert torus_normal_form(phi, relator).is_trivial()
    relator2 = torus_items_from_relator(f3, "z y t z^-1 t^-1 y")
    assert torus_normal_form(phi, relator2).is_trivial()


def test_torus_words_respect_group_law(phi_w4, w4):
    rng = random.Random(5)

    def random_items():
        items = []
        for _ in range(rng.randrange(0, 6)):
            if rng.random() < 0.4:
                items.append(("t", rng.choice((1, -1))))
            else:
                items.append(w4.random_letter(rng))
        return items

    def as_items(tw):
        return ([("t", tw.tpower)] if tw.tpower else []) + list(tw.tail)

    for _ in range(300):
        u, v = random_items(), random_items()
        whole = torus_normal_form(phi_w4, u + v)
        split = torus_normal_form(phi_w4, as_items(torus_normal_form(phi_w4, u)) + v)
        assert whole == split
