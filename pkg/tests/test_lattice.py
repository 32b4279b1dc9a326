import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipslab.lattice import Lattice, Site


@pytest.mark.parametrize(
    "d, L, x, expected",
    [(1, 5, (7,), (2,)), (2, 4, (-1, 4), (3, 0)), (1, 5, (0,), (0,))],
)
def test_wrap_examples(d, L, x, expected):
    assert Lattice(d, L).wrap(x) == expected


def test_wrap_rejects_wrong_length():
    with pytest.raises(ValueError):
        Lattice(2, 4).wrap((1,))


@pytest.mark.parametrize(
    "d, site, u, expected",
    [
        (1, Site((0,), 0), (1,), Site((1,), 0)),
        (1, Site((2,), 1), (1,), Site((0,), 1)),
        (2, Site((0, 0), 0), (0, 0), Site((0, 0), 0)),
    ],
)
def test_displace_examples(d, site, u, expected):
    assert Lattice(d, 3, 2).displace(site, u) == expected


def test_size_and_layer_blocks():
    lat = Lattice(2, 3, 2)
    assert lat.size == 18 and lat.cells == 9
    # layer is the slowest axis: the second layer starts at index L**d
    assert lat.index(Site((0, 0), 1)) == 9
    assert lat.index(Site((1, 2), 0)) == 5
    assert list(lat.layers()) == [0] * 9 + [1] * 9


@pytest.mark.parametrize("bad", [dict(d=0, L=3), dict(d=1, L=0), dict(d=1, L=3, num_layers=0)])
def test_invalid_geometry(bad):
    with pytest.raises(ValueError):
        Lattice(**bad)


def test_min_image():
    lat = Lattice(1, 6)
    assert lat.min_image((5,)) == (-1,)
    assert lat.min_image((3,)) == (3,)
    assert lat.min_image((-4,)) == (2,)


lattices = st.builds(Lattice, d=st.integers(1, 3), L=st.integers(1, 7), num_layers=st.integers(1, 3))


@given(lattices, st.data())
def test_index_round_trip(lat, data):
    i = data.draw(st.integers(0, lat.size - 1))
    site = lat.site_of(i)
    assert lat.index(site) == i
    assert all(0 <= c < lat.L for c in site.position)


@given(lattices, st.data())
def test_displace_is_a_group_action(lat, data):
    site = lat.site_of(data.draw(st.integers(0, lat.size - 1)))
    u = data.draw(st.lists(st.integers(-50, 50), min_size=lat.d, max_size=lat.d))
    back = lat.displace(lat.displace(site, u), [-a for a in u])
    assert back == site


@given(lattices, st.data())
def test_wrap_preserves_displacement_mod_L(lat, data):
    x = data.draw(st.lists(st.integers(-100, 100), min_size=lat.d, max_size=lat.d))
    u = data.draw(st.lists(st.integers(-100, 100), min_size=lat.d, max_size=lat.d))
    moved = lat.wrap([a + b for a, b in zip(x, u)])
    base = lat.wrap(x)
    assert all((m - b - c) % lat.L == 0 for m, b, c in zip(moved, base, u))


def test_positions_match_site_of():
    lat = Lattice(2, 3, 2)
    pos = lat.positions()
    for i in range(lat.size):
        assert tuple(pos[i]) == lat.site_of(i).position
