import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnitraj.attitude import axis_angle, rotation_from_sigma
from omnitraj.geometry import (
    Corridor,
    DegenerateNormal,
    EmptyInterior,
    UnboundedPolyhedron,
    VehicleShape,
    box,
    contains,
    corridor_from_json,
    default_assignment,
    enumerate_vertices,
    load_corridor,
    make_polyhedron,
    save_corridor,
    shape_inside,
    validate_corridor,
    vehicle_vertex_world,
)


def as_set(points, decimals=7):
    return {tuple(np.round(p, decimals) + 0.0) for p in points}


def brute_force_vertices(H, tol=1e-9):
    """Every feasible intersection of three planes."""
    A, b = H[:, :3], H[:, 3]
    out = []
    for i, j, k in itertools.combinations(range(len(H)), 3):
        sub = A[[i, j, k]]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, b[[i, j, k]])
        if np.all(A @ v - b <= tol):
            out.append(v)
    return np.array(out)


def unit_cube():
    return box([0, 0, 0], [1, 1, 1])


def test_unit_cube_has_eight_vertices():
    V = enumerate_vertices(unit_cube())
    assert len(V) == 8
    assert as_set(V) == as_set(itertools.product([0.0, 1.0], repeat=3))


def test_slab_is_unbounded():
    with pytest.raises(UnboundedPolyhedron):
        make_polyhedron([([1, 0, 0], 1.0), ([-1, 0, 0], 0.0)])


def test_slab_with_four_faces_is_unbounded():
    with pytest.raises(UnboundedPolyhedron):
        make_polyhedron(
            [([1, 0, 0], 1.0), ([-1, 0, 0], 0.0), ([0, 1, 0], 1.0), ([0, -1, 0], 0.0)]
        )


def test_contradictory_faces_have_empty_interior():
    faces = [row for row in unit_cube().halfspaces] + [[1, 0, 0, -0.5]]
    with pytest.raises(EmptyInterior):
        make_polyhedron(faces)


def test_zero_normal_rejected():
    faces = [row for row in unit_cube().halfspaces] + [[0, 0, 0, 1.0]]
    with pytest.raises(DegenerateNormal):
        make_polyhedron(faces)


def test_simplex_vertices():
    P = make_polyhedron(
        [([-1, 0, 0], 0.0), ([0, -1, 0], 0.0), ([0, 0, -1], 0.0), ([1, 1, 1], 1.0)]
    )
    assert as_set(enumerate_vertices(P)) == as_set(np.vstack([np.zeros(3), np.eye(3)]))


def test_normals_are_normalized_and_offsets_scaled():
    P = make_polyhedron([[2, 0, 0, 2], [-3, 0, 0, 0], [0, 5, 0, 5], [0, -1, 0, 0], [0, 0, 4, 4], [0, 0, -1, 0]])
    np.testing.assert_allclose(np.linalg.norm(P.normals, axis=1), 1.0, atol=1e-12)
    assert as_set(P.vertices) == as_set(itertools.product([0.0, 1.0], repeat=3))


def test_duplicate_faces_are_dropped():
    H = unit_cube().halfspaces
    P = make_polyhedron(np.vstack([H, H[:2]]))
    assert P.num_faces == 6


@pytest.mark.parametrize("seed", range(40))
def test_vertices_match_three_plane_oracle(seed):
    rng = np.random.default_rng(seed)
    while True:
        n = rng.normal(size=(10, 3))
        n /= np.linalg.norm(n, axis=1)[:, None]
        center = rng.uniform(-2, 2, 3)
        d = n @ center + rng.uniform(0.5, 2.0, 10)
        H = np.hstack([n, d[:, None]])
        try:
            P = make_polyhedron(H)
            break
        except UnboundedPolyhedron:
            continue
    oracle = brute_force_vertices(H)
    assert as_set(enumerate_vertices(P)) == as_set(oracle)
    # cached vertices satisfy every face
    assert np.max(P.normals @ P.vertices.T - P.offsets[:, None]) <= 1e-9
    assert contains(P, P.vertices.mean(axis=0), 1e-9)


def test_cube_vertex_set_is_permutation_invariant():
    V = as_set(enumerate_vertices(box([-1, -1, -1], [1, 1, 1])))
    for perm in itertools.permutations(range(3)):
        assert as_set(np.array(list(V))[:, perm]) == V


@pytest.mark.parametrize(
    "p, tol, expected",
    [((0.5, 0.5, 0.5), 0.0, True), ((1.5, 0, 0), 0.0, False), ((1, 1, 1), 1e-9, True)],
)
def test_contains_examples(p, tol, expected):
    assert contains(unit_cube(), p, tol) is expected


def test_validate_overlapping_boxes_pass():
    c = Corridor((box([0, 0, 0], [2, 2, 2]), box([1, 0, 0], [3, 2, 2])), default_assignment(2, 2))
    report = validate_corridor(c)
    assert report.ok and report.failing_pairs == []


def test_validate_disjoint_boxes_fail():
    c = Corridor((box([0, 0, 0], [1, 1, 1]), box([2, 0, 0], [3, 1, 1])), default_assignment(2, 2))
    report = validate_corridor(c)
    assert not report.ok
    assert report.failing_pairs == [(0, 1)]


def test_validate_shared_face_fails():
    c = Corridor((box([0, 0, 0], [1, 1, 1]), box([1, 0, 0], [2, 1, 1])), default_assignment(2, 2))
    assert validate_corridor(c).failing_pairs == [(0, 1)]


@pytest.mark.parametrize("assignment", [(1, 1), (0, 0), (0, 1, 0), (0, 2), ()])
def test_validate_bad_assignment(assignment):
    polys = (box([0, 0, 0], [2, 2, 2]), box([1, 0, 0], [3, 2, 2]))
    if assignment == (0, 2):
        polys = polys + (box([2, 0, 0], [4, 2, 2]),)
    report = validate_corridor(Corridor(polys, assignment))
    assert not report.assignment_ok and not report.ok


def test_validated_pairs_share_strict_interior_point():
    rng = np.random.default_rng(7)
    for _ in range(20):
        lo = rng.uniform(-1, 0, 3)
        P = box(lo, lo + rng.uniform(1, 2, 3))
        shift = rng.uniform(-0.9, 0.9, 3)
        Q = box(lo + shift, lo + shift + rng.uniform(1, 2, 3))
        if validate_corridor(Corridor((P, Q), (0, 1))).ok:
            R = P.intersect(Q)
            p = R.interior_point
            assert contains(P, p, -1e-6) and contains(Q, p, -1e-6)


def test_vehicle_vertex_identity_pose():
    shape = VehicleShape.cuboid()
    for l in range(8):
        np.testing.assert_array_equal(vehicle_vertex_world(shape, np.zeros(3), np.eye(3), l), shape.body_vertices[l])


def test_vehicle_vertex_translation():
    shape = VehicleShape.cuboid(1.0, 1.0, 0.35)
    np.testing.assert_allclose(shape.body_vertices[0], [0.5, 0.5, 0.175])
    np.testing.assert_allclose(vehicle_vertex_world(shape, [1, 2, 3], np.eye(3), 0), [1.5, 2.5, 3.175])


def test_vehicle_vertex_half_turn():
    shape = VehicleShape.cuboid(1.0, 1.0, 0.35)
    R = axis_angle([1, 0, 0], np.pi)
    np.testing.assert_allclose(vehicle_vertex_world(shape, np.zeros(3), R, 0), [0.5, -0.5, -0.175], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    p=st.lists(st.floats(-2, 3), min_size=3, max_size=3),
    sigma=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
)
def test_safety_condition_equivalence(p, sigma):
    P = box([0, 0, 0], [1.5, 1.2, 1.0])
    shape = VehicleShape.cuboid(0.5, 0.4, 0.2)
    R = rotation_from_sigma(sigma)
    all_in = all(contains(P, vehicle_vertex_world(shape, p, R, l)) for l in range(8))
    # halfspace form: max over faces and vertices of n^T (p + R v) - d <= 0
    world = np.asarray(p) + shape.body_vertices @ R.T
    eq_form = np.max(world @ P.normals.T - P.offsets) <= 0.0
    assert all_in == eq_form == shape_inside(P, shape, p, R)


def test_corridor_json_roundtrip(tmp_path):
    c = Corridor((box([0, 0, 0], [2, 2, 2]), box([1, 0, 0], [3, 2, 2])), (0, 0, 1, 1))
    path = tmp_path / "c.json"
    save_corridor(c, path)
    back = load_corridor(path)
    assert back.assignment == c.assignment
    for P, Q in zip(c.polyhedra, back.polyhedra):
        np.testing.assert_array_equal(P.halfspaces, Q.halfspaces)


def test_missing_assignment_uses_default():
    data = json.loads(json.dumps(Corridor((box([0, 0, 0], [2, 2, 2]), box([1, 0, 0], [3, 2, 2])), (0, 1)).to_json()))
    del data["assignment"]
    assert corridor_from_json(data, pieces_per_polyhedron=3).assignment == (0, 0, 0, 1, 1, 1)


def test_box_face_order():
    P = box([-1, -2, -3], [1, 2, 3])
    np.testing.assert_array_equal(P.normals, [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]])
    np.testing.assert_array_equal(P.offsets, [1, 1, 2, 2, 3, 3])


def test_translated_polyhedron_moves_vertices():
    P = unit_cube().translated([1, 2, 3])
    assert as_set(P.vertices) == as_set(np.array(list(itertools.product([0.0, 1.0], repeat=3))) + [1, 2, 3])


@pytest.mark.parametrize("seed", range(20))
def test_vertex_order_is_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-1, 0, 3)
    P = box(lo, lo + rng.uniform(0.5, 2, 3))
    Q = box(lo + rng.uniform(0.1, 0.4, 3), lo + rng.uniform(0.5, 2, 3) + 0.5)
    R = P.intersect(Q)
    delta = rng.normal(scale=5.0, size=3)
    np.testing.assert_allclose(R.translated(delta).vertices, R.vertices + delta, atol=1e-9)
