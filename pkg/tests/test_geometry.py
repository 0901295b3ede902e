import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_lab.errors import EmptyDomain, InvalidShape
from anderson_lab.geometry import BOUNDARY, ShapeSpec, boundary_distance, discretize, path_lattice


def test_interval_examples():
    unit = ShapeSpec.unit_cube(1)
    assert discretize(unit, 0.25).sites.ravel().tolist() == [2]
    assert discretize(unit, 0.1).sites.ravel().tolist() == list(range(2, 9))
    assert discretize(ShapeSpec.unit_cube(2), 0.25).sites.tolist() == [[2, 2]]


def test_boundary_distance_examples():
    unit = ShapeSpec.unit_cube(1)
    assert boundary_distance(unit, [0.5]) == pytest.approx(0.5)
    assert boundary_distance(unit, [1.2]) == 0.0
    two = ShapeSpec(1, (((0.0,), (1.0,)), ((2.0,), (3.0,))))
    assert boundary_distance(two, [2.1]) == pytest.approx(0.1)


def test_union_distance_sees_through_overlaps():
    # two overlapping boxes: near the seam the union is wider than either box
    shape = ShapeSpec(2, (((0, 0), (2, 1)), ((1, 0), (3, 1))))
    assert boundary_distance(shape, [1.5, 0.5]) == pytest.approx(0.5)
    touching = ShapeSpec(1, (((0.0,), (1.0,)), ((1.0,), (2.0,))))
    # the shared face is not part of the open union
    assert boundary_distance(touching, [0.9]) == pytest.approx(0.1)
    assert boundary_distance(touching, [1.0]) == 0.0


def test_empty_domain():
    with pytest.raises(EmptyDomain):
        discretize(ShapeSpec.unit_cube(1), 0.5)
    with pytest.raises(ValueError):
        discretize(ShapeSpec.unit_cube(1), 0.0)


def test_invalid_shapes():
    with pytest.raises(InvalidShape):
        ShapeSpec.box([0.0], [0.0])
    with pytest.raises(InvalidShape):
        ShapeSpec(4, (((0,) * 4, (1,) * 4),))
    with pytest.raises(InvalidShape):
        ShapeSpec(2, (((0,), (1,)),))
    with pytest.raises(InvalidShape):
        ShapeSpec.from_dict({"dim": 1})


def test_json_round_trip():
    shape = ShapeSpec.from_json('{"dim":1,"boxes":[[[0.0],[1.0]]]}')
    assert shape.kind == "box"
    assert ShapeSpec.from_json(shape.to_json()) == shape


@pytest.mark.parametrize("dim", [1, 2])
def test_site_count_approaches_volume(dim):
    eps = 1 / 64
    lat = discretize(ShapeSpec.unit_cube(dim), eps)
    assert lat.n * eps**dim == pytest.approx(1.0, rel=0.1)


def test_path_lattice():
    lat = path_lattice(6, 1 / 7)
    assert lat.n == 6
    assert lat.edges().tolist() == [[i, i + 1] for i in range(5)]


def test_csv_export(tmp_path):
    lat = discretize(ShapeSpec.unit_cube(2), 0.2)
    lat.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,x0,x1"
    assert len(lines) == lat.n + 1


def _closed_cube_in_union(shape, center, r):
    """Exact check that the closed cube of radius r lies in the open union of boxes."""
    axes = []
    for i in range(shape.dim):
        lo, hi = center[i] - r, center[i] + r
        cuts = sorted({lo, hi} | {c for b in shape.boxes for c in (b[0][i], b[1][i]) if lo < c < hi})
        axes.append(cuts + [0.5 * (a + b) for a, b in zip(cuts, cuts[1:])])
    pts = np.array(list(itertools.product(*axes)))
    return bool(shape.contains(pts).all())


# coordinates k/8 + 1/1000 never coincide with multiples of eps = 1/m for the m below
_coord = st.integers(-8, 24).map(lambda k: k / 8 + 0.001)


@st.composite
def box_unions(draw):
    dim = draw(st.integers(1, 3))
    boxes = []
    for _ in range(draw(st.integers(1, 3))):
        lo = [draw(_coord) for _ in range(dim)]
        hi = [a + draw(st.integers(2, 12)) / 8 for a in lo]
        boxes.append((tuple(lo), tuple(hi)))
    return ShapeSpec(dim, tuple(boxes)), 1 / draw(st.sampled_from([3, 5, 6, 7]))


@given(box_unions())
def test_discretize_matches_brute_force(case):
    shape, eps = case
    try:
        lat = discretize(shape, eps)
        sites = {tuple(s) for s in lat.sites.tolist()}
    except EmptyDomain:
        sites = set()
    ranges = [range(int(np.floor(l / eps)) - 1, int(np.ceil(h / eps)) + 2) for l, h in zip(shape.lower, shape.upper)]
    expected = {x for x in itertools.product(*ranges) if _closed_cube_in_union(shape, np.array(x) * eps, eps)}
    assert sites == expected


@given(box_unions())
def test_lattice_structure(case):
    shape, eps = case
    try:
        lat = discretize(shape, eps)
    except EmptyDomain:
        return
    assert lat.sites.tolist() == sorted(lat.sites.tolist())
    assert sorted(lat.index_of.values()) == list(range(lat.n))
    for i, s in enumerate(lat.sites):
        assert lat.index_of[tuple(int(v) for v in s)] == i
        for j in range(lat.dim):
            up, down = lat.neighbors[i, 2 * j], lat.neighbors[i, 2 * j + 1]
            if up != BOUNDARY:
                assert lat.neighbors[up, 2 * j + 1] == i
                assert (lat.sites[up] - s).tolist() == np.eye(lat.dim, dtype=int)[j].tolist()
            if down != BOUNDARY:
                assert lat.neighbors[down, 2 * j] == i
    # every site also passes the defining inequality through boundary_distance
    assert np.all(boundary_distance(shape, lat.points) > eps)
