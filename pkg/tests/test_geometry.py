import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bikenetqa.geometry import (as_polyline, chord_angle, densify, point_polyline_distance,
                                polyline_length, split_at_distances)


def test_as_polyline_drops_repeated_vertices():
    assert as_polyline([(0, 0), (0, 0), (1, 0), (1, 0)]) == ((0.0, 0.0), (1.0, 0.0))


def test_length_of_three_vertex_line():
    assert polyline_length([(0, 0), (10, 0), (20, 0)]) == 20.0


def test_point_distance_to_segment_interior_and_end():
    assert point_polyline_distance((5, 2), [(0, 0), (10, 0)]) == pytest.approx(2.0)
    assert point_polyline_distance((13, 4), [(0, 0), (10, 0)]) == pytest.approx(5.0)


def test_densify_spacing_bound():
    pts = densify([(0, 0), (10, 0), (10, 3.5)], 1.0)
    gaps = np.hypot(*np.diff(pts, axis=0).T)
    assert gaps.max() <= 1.0 + 1e-12
    assert tuple(pts[0]) == (0, 0) and tuple(pts[-1]) == (10, 3.5)


def test_split_at_distances_lengths():
    pieces = split_at_distances([(0, 0), (25, 0)], [10, 20])
    assert [polyline_length(p) for p in pieces] == pytest.approx([10, 10, 5])


def test_chord_angle_cases():
    assert chord_angle([(0, 0), (1, 0)], [(0, 1), (5, 1)]) == pytest.approx(0.0)
    assert chord_angle([(0, 0), (1, 0)], [(5, 1), (0, 1)]) == pytest.approx(0.0)
    assert chord_angle([(0, 0), (1, 0)], [(0, 0), (0, 1)]) == pytest.approx(90.0)
    with pytest.raises(ValueError):
        chord_angle([(0, 0), (1, 1), (0, 0)], [(0, 0), (1, 0)])


coord = st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))


@given(st.lists(coord, min_size=2, max_size=6), st.lists(st.floats(0, 1), max_size=5))
def test_split_preserves_length(coords, fracs):
    line = as_polyline(coords)
    if len(line) < 2:
        return
    total = polyline_length(line)
    cuts = sorted(f * total for f in fracs)
    pieces = split_at_distances(line, cuts)
    assert math.isclose(sum(polyline_length(p) for p in pieces), total, rel_tol=1e-9, abs_tol=1e-9)
