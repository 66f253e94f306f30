import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from materium.core.crystal import (Crystal, LatticeParams, Site, canonical_fingerprint, cart_to_frac, cell_volume,
                                   composition, density, frac_to_cart, lattice_matrix, lattice_params, net_charge,
                                   niggli_reduce, parse_formula, reduce_crystal, reduced_formula, wrap_frac)
from materium.core.errors import DataError, DegenerateCell, UnknownElement
from materium.core.niggli import niggli_conditions_hold, reduce_metric


def cubic(a, *sites):
    return Crystal(LatticeParams(a, a, a, 90.0, 90.0, 90.0), tuple(sites))


# ---------- geometry ----------

def test_lattice_matrix_cubic_and_unit():
    assert_allclose(lattice_matrix(LatticeParams(4, 4, 4, 90, 90, 90)), np.diag([4.0, 4.0, 4.0]), atol=1e-12)
    assert_allclose(lattice_matrix(LatticeParams(1, 1, 1, 90, 90, 90)), np.eye(3), atol=1e-12)


def test_lattice_matrix_hexagonal():
    m = lattice_matrix(LatticeParams(3, 3, 5, 90, 90, 120))
    assert_allclose(m[0], [3.0, 0.0, 0.0], atol=1e-12)
    assert_allclose(m[1], [-1.5, 3 * math.sqrt(3) / 2, 0.0], atol=1e-12)
    assert_allclose(m[2], [0.0, 0.0, 5.0], atol=1e-12)
    assert_allclose(lattice_params(m).as_tuple(), (3, 3, 5, 90, 90, 120), atol=1e-9)


def test_cell_volume():
    assert cell_volume(np.diag([4.0, 4.0, 4.0])) == pytest.approx(64.0)
    assert cell_volume(np.eye(3)) == pytest.approx(1.0)
    hexagonal = lattice_matrix(LatticeParams(3, 3, 5, 90, 90, 120))
    assert cell_volume(hexagonal) == pytest.approx(9 * 5 * math.sin(math.radians(120)), rel=1e-12)
    assert cell_volume(hexagonal) == pytest.approx(38.9711, abs=1e-4)


def test_frac_to_cart_and_back():
    assert_allclose(frac_to_cart(np.eye(3), [0.25, 0.5, 0.75]), [0.25, 0.5, 0.75])
    assert_allclose(frac_to_cart(np.diag([4.0, 4.0, 4.0]), [0.5, 0.5, 0.5]), [2.0, 2.0, 2.0])
    hexagonal = lattice_matrix(LatticeParams(3, 3, 5, 90, 90, 120))
    assert_allclose(frac_to_cart(hexagonal, [1, 0, 0]), hexagonal[0])
    frac = np.array([[0.1, 0.2, 0.3], [0.9, 0.5, 0.05]])
    assert_allclose(cart_to_frac(hexagonal, frac_to_cart(hexagonal, frac)), frac, atol=1e-12)


def test_degenerate_angles_rejected():
    with pytest.raises(DegenerateCell):
        LatticeParams(3, 3, 3, 170, 10, 90)
    with pytest.raises(DataError):
        LatticeParams(0, 3, 3, 90, 90, 90)
    with pytest.raises(DataError):
        LatticeParams(3, 3, 3, 90, 180, 90)


def test_wrap_frac():
    assert wrap_frac(1.0) == 0.0
    assert wrap_frac(-0.25) == pytest.approx(0.75)
    assert wrap_frac(1.0 - 1e-12) == 0.0
    assert Site("H", 0, (1.0, 2.5, -0.5)).frac == (0.0, 0.5, 0.5)


# ---------- chemistry ----------

def test_density_single_carbon():
    c = cubic(3.0, Site("C", 0, (0, 0, 0)))
    assert density(c, {"C": 12.011}) == pytest.approx(12.011 * 1.66053906660e-24 / 27e-24, rel=1e-12)
    assert density(c, {"C": 12.011}) == pytest.approx(0.7387, abs=1e-3)


def test_density_invariant_to_doubling(tables):
    one = cubic(3.0, Site("C", 0, (0, 0, 0)))
    two = Crystal(LatticeParams(6.0, 3.0, 3.0, 90, 90, 90), (Site("C", 0, (0, 0, 0)), Site("C", 0, (0.5, 0, 0))))
    assert density(two, tables) == pytest.approx(density(one, tables), rel=1e-12)


def test_density_unknown_element():
    with pytest.raises(UnknownElement):
        density(cubic(3.0, Site("C", 0, (0, 0, 0))), {"O": 16.0})


def test_net_charge():
    assert net_charge(cubic(4, Site("Fe", 2, (0, 0, 0)), Site("O", -2, (0.5, 0.5, 0.5)))) == 0
    assert net_charge(cubic(4, Site("Fe", 3, (0, 0, 0)), Site("O", -2, (0.5, 0.5, 0.5)))) == 1
    sites = ([Site("Ba", 2, (0.1 * i, 0, 0)) for i in range(2)] + [Site("Cu", 2, (0, 0.1 * i, 0)) for i in range(3)]
             + [Site("O", -2, (0, 0, 0.1 * i)) for i in range(7)] + [Site("Y", 3, (0.5, 0.5, 0.5))])
    assert net_charge(cubic(8, *sites)) == -1


def test_reduced_formula():
    fe2o2 = cubic(4, Site("Fe", 2, (0, 0, 0)), Site("Fe", 2, (0.5, 0, 0)), Site("O", -2, (0, 0.5, 0)),
                  Site("O", -2, (0.5, 0.5, 0)))
    assert reduced_formula(fe2o2) == [("Fe", 1), ("O", 1)]
    mixed = cubic(5, *[Site(e, 0, (0.1 * i, 0, 0)) for i, e in enumerate(["O", "Fe", "O", "Fe", "O", "Fe"])])
    assert reduced_formula(mixed) == [("Fe", 1), ("O", 1)]
    ybco = [("Ba", 2), ("Cu", 3), ("O", 7), ("Y", 1)]
    sites = [Site(e, 0, (0.07 * i, 0.03 * k, 0)) for i, (e, n) in enumerate(ybco) for k in range(n)]
    assert len(sites) == 13
    assert reduced_formula(cubic(8, *sites)) == ybco
    assert composition(cubic(8, *sites))["O"] == 7


def test_parse_formula():
    assert parse_formula("Fe1O1") == [("Fe", 1), ("O", 1)]
    assert parse_formula("Ba2Cu3O7Y") == [("Ba", 2), ("Cu", 3), ("O", 7), ("Y", 1)]
    with pytest.raises(DataError):
        parse_formula("fe2")
    with pytest.raises(DataError):
        parse_formula("Fe0")


# ---------- Niggli reduction ----------

def _short_vector_oracle(p: LatticeParams, span: int = 2):
    """Successive minima over integer combinations with coefficients in -span..span."""
    m = lattice_matrix(p)
    rng = np.arange(-span, span + 1)
    coeffs = np.array([(i, j, k) for i in rng for j in rng for k in rng if (i, j, k) != (0, 0, 0)])
    lengths = np.linalg.norm(coeffs @ m, axis=1)
    order = np.argsort(lengths, kind="stable")
    basis = []
    for idx in order:
        cand = basis + [coeffs[idx]]
        if len(cand) < 3:
            if np.linalg.matrix_rank(np.array(cand)) == len(cand):
                basis.append(coeffs[idx])
        elif abs(round(np.linalg.det(np.array(cand)))) == 1:
            basis.append(coeffs[idx])
            break
    return sorted(float(np.linalg.norm(np.asarray(b) @ m)) for b in basis)


def _random_cell(rng):
    while True:
        lengths = rng.uniform(3.0, 8.0, 3)
        angles = rng.uniform(60.0, 120.0, 3)
        try:
            p = LatticeParams(*lengths, *angles)
        except DataError:
            continue
        if cell_volume(lattice_matrix(p)) > 0.3 * np.prod(lengths):
            return p


def _check_reduction(p):
    r = niggli_reduce(p)
    v0 = cell_volume(lattice_matrix(p))
    v1 = cell_volume(lattice_matrix(r))
    assert abs(v1 - v0) / v0 < 1e-8
    assert r.a <= r.b + 1e-9 and r.b <= r.c + 1e-9
    assert_allclose(niggli_reduce(r).as_tuple(), r.as_tuple(), rtol=1e-8, atol=1e-8)
    assert_allclose([r.a, r.b, r.c], _short_vector_oracle(p), rtol=1e-6)
    return r


def test_niggli_conditions():
    assert niggli_conditions_hold(np.diag([16.0, 16.0, 16.0]), 1e-6)
    assert not niggli_conditions_hold(np.diag([25.0, 16.0, 16.0]), 1e-6)
    G = np.array([[9.0, 4.0, 0.0], [4.0, 16.0, 0.0], [0.0, 0.0, 25.0]])
    assert not niggli_conditions_hold(G, 1e-6)
    m = lattice_matrix(LatticeParams(3, 4, 5, 90, 90, 90))
    skewed = np.array([m[0], m[1] + 2 * m[0], m[2] + m[1]])
    e = 1e-5 * cell_volume(skewed) ** (1 / 3)
    G, T = reduce_metric(skewed @ skewed.T, e)
    assert niggli_conditions_hold(G, e)
    assert round(np.linalg.det(T)) == 1
    assert_allclose(T @ skewed @ (T @ skewed).T, G, atol=1e-9)


def test_niggli_cubic_unchanged():
    r = niggli_reduce(LatticeParams(4, 4, 4, 90, 90, 90))
    assert_allclose(r.as_tuple(), (4, 4, 4, 90, 90, 90), atol=1e-9)


def test_niggli_sheared_cell():
    _check_reduction(LatticeParams(4, 4, 4, 90, 90, 60))


def test_niggli_long_skewed_cell():
    # b' = b + 2a: a cell far from reduced
    m = lattice_matrix(LatticeParams(3, 4, 5, 90, 90, 90))
    skewed = lattice_params(np.array([m[0], m[1] + 2 * m[0], m[2] + m[1]]))
    r = _check_reduction(skewed)
    assert_allclose([r.a, r.b, r.c], [3, 4, 5], rtol=1e-8)


@pytest.mark.parametrize("n_cells", [20, pytest.param(200, marks=pytest.mark.slow)])
def test_niggli_random_cells_match_oracle(n_cells):
    rng = np.random.default_rng(13)
    for _ in range(n_cells):
        _check_reduction(_random_cell(rng))


def test_reduce_crystal_keeps_composition_and_density(tables):
    m = lattice_matrix(LatticeParams(3, 4, 5, 90, 90, 90))
    skewed = lattice_params(np.array([m[0], m[1] + m[0], m[2]]))
    c = Crystal(skewed, (Site("Na", 1, (0.1, 0.2, 0.3)), Site("Cl", -1, (0.6, 0.7, 0.8))))
    r = reduce_crystal(c)
    assert composition(r) == composition(c)
    assert density(r, tables) == pytest.approx(density(c, tables), rel=1e-8)
    assert all(0.0 <= x < 1.0 for s in r.sites for x in s.frac)


# ---------- fingerprints ----------

def test_fingerprint_site_order_invariant():
    a = cubic(5, Site("Na", 1, (0, 0, 0)), Site("Cl", -1, (0.5, 0.5, 0.5)))
    b = cubic(5, Site("Cl", -1, (0.5, 0.5, 0.5)), Site("Na", 1, (0, 0, 0)))
    assert canonical_fingerprint(a) == canonical_fingerprint(b)


def test_fingerprint_absorbs_noise():
    a = cubic(5, Site("Na", 1, (0.2, 0.3, 0.4)), Site("Cl", -1, (0.7, 0.8, 0.9)))
    b = cubic(5, Site("Na", 1, (0.2 + 1e-6, 0.3, 0.4)), Site("Cl", -1, (0.7, 0.8 - 1e-6, 0.9)))
    assert canonical_fingerprint(a, site_tol=1e-3) == canonical_fingerprint(b, site_tol=1e-3)


def test_fingerprint_translation_invariant():
    a = cubic(5, Site("Na", 1, (0.0, 0.0, 0.0)), Site("Cl", -1, (0.5, 0.5, 0.5)))
    b = cubic(5, Site("Na", 1, (0.25, 0.25, 0.25)), Site("Cl", -1, (0.75, 0.75, 0.75)))
    assert canonical_fingerprint(a) == canonical_fingerprint(b)


def test_fingerprint_depends_on_composition():
    nacl = cubic(5, Site("Na", 1, (0, 0, 0)), Site("Cl", -1, (0.5, 0.5, 0.5)))
    kcl = cubic(5, Site("K", 1, (0, 0, 0)), Site("Cl", -1, (0.5, 0.5, 0.5)))
    assert canonical_fingerprint(nacl) != canonical_fingerprint(kcl)
