"""Shared fixtures: the standard presentations and automorphisms used
throughout the suite."""

import pytest

from orbitrain.groups import Automorphism, FiniteGroup, FreeProduct, InfiniteCyclic

Z2 = FiniteGroup.cyclic(2)


@pytest.fixture(scope="session")
def w3():
    return FreeProduct([Z2, Z2, Z2], ["a", "b", "c"])


@pytest.fixture(scope="session")
def w4():
    return FreeProduct([Z2, Z2, Z2, Z2], ["a", "b", "c", "d"])


@pytest.fixture(scope="session")
def f3():
    return FreeProduct([InfiniteCyclic()] * 3, ["x", "y", "z"])


@pytest.fixture(scope="session")
def phi_w4(w4):
    """a -> a, b -> b, c -> bacab, d -> cadac; polynomially growing."""
    return Automorphism.from_gen_images(
        w4,
        [
            w4.parse_word("a"),
            w4.parse_word("b"),
            w4.parse_word("b a c a b"),
            w4.parse_word("c a d a c"),
        ],
    )


@pytest.fixture(scope="session")
def alpha_w3(w3):
    """The exponentially growing example automorphism alpha on W3."""
    return Automorphism.from_gen_images(
        w3,
        [
            w3.parse_word("a"),
            w3.parse_word("b a c a b a c a b"),
            w3.parse_word("b a c a b"),
        ],
    )


@pytest.fixture(scope="session")
def beta_w3(w3):
    """The companion beta on W3 with the same transition matrix as alpha."""
    return Automorphism.from_gen_images(
        w3,
        [
            w3.parse_word("a"),
            w3.parse_word("b c b c b"),
            w3.parse_word("b c b"),
        ],
    )
