import numpy as np
import pytest

from lib.data_preparation.field_io import FieldIO
from lib.errors import GridMismatchError, NumericalError, ParameterError
from lib.models.grid import Field, Grid
from lib.services.math_service import MathService


def gaussian(grid, centre=0.0, width=1.0):
    return Field.from_function(grid, lambda x: np.exp(-((x - centre) / width) ** 2))


def test_grid_geometry():
    grid = Grid(half_length=5.0, points=101)
    assert grid.spacing == pytest.approx(0.1)
    assert grid.nodes[0] == pytest.approx(-5.0)
    assert grid.nodes[-1] == pytest.approx(5.0)
    np.testing.assert_allclose(grid.nodes, -grid.nodes[::-1], atol=1e-14)
    assert np.all(np.diff(grid.nodes) > 0)


@pytest.mark.parametrize('kwargs', [{'half_length': 1.0, 'points': 15}, {'half_length': 0.0, 'points': 64}])
def test_grid_rejects_degenerate_meshes(kwargs):
    with pytest.raises(ParameterError):
        Grid(**kwargs)


def test_field_rejects_non_finite_values():
    grid = Grid(half_length=1.0, points=16)
    values = np.zeros(16)
    values[3] = np.nan
    with pytest.raises(NumericalError):
        Field(grid, values)


def test_field_rejects_wrong_node_count():
    with pytest.raises(GridMismatchError):
        Field(Grid(half_length=1.0, points=16), np.zeros(17))


def test_diff1_constant_and_linear():
    grid = Grid(half_length=3.0, points=64)
    constant = Field.from_function(grid, lambda x: 2.0 + 0.0 * x)
    linear = Field.from_function(grid, lambda x: x)
    assert np.abs(MathService.diff1(constant).values).max() <= 1e-12
    np.testing.assert_allclose(MathService.diff1(linear).values, 1.0, atol=1e-12)


def test_diff1_second_order():
    errors = []
    for points in (65, 129, 257):
        grid = Grid(half_length=np.pi, points=points)
        d = MathService.diff1(Field.from_function(grid, np.sin)).values[0]
        errors.append(np.abs(d - np.cos(grid.nodes))[1:-1].max())
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders >= 1.9)


def test_diff2_linear_interior_and_order():
    grid = Grid(half_length=2.0, points=80)
    linear = MathService.diff2(Field.from_function(grid, lambda x: 3.0 * x - 1.0)).values[0]
    assert np.abs(linear[1:-1]).max() <= 1e-9

    errors = []
    for points in (65, 129):
        grid = Grid(half_length=np.pi, points=points)
        d2 = MathService.diff2(Field.from_function(grid, np.sin)).values[0]
        errors.append(np.abs(d2 + np.sin(grid.nodes))[1:-1].max())
    assert np.log2(errors[0] / errors[1]) >= 1.9


def test_weighted_second_difference_is_symmetric():
    grid = Grid(half_length=4.0, points=50)
    weighted = (grid.weight_matrix(1) @ grid.d2).toarray()
    np.testing.assert_allclose(weighted, weighted.T, atol=1e-12)


def test_inner_products_and_norms():
    grid = Grid(half_length=5.0, points=201)
    ones = Field.from_function(grid, lambda x: 1.0 + 0.0 * x)
    assert MathService.inner(ones, ones) == pytest.approx(10.0, rel=1e-14)
    assert MathService.h1_norm_sq(ones * 3.0) == pytest.approx(90.0, rel=1e-12)
    g = gaussian(grid)
    assert MathService.norm(g) ** 2 == pytest.approx(np.sqrt(np.pi / 2.0), rel=1e-6)


def test_inner_rejects_mismatched_fields():
    a = gaussian(Grid(half_length=5.0, points=64))
    b = gaussian(Grid(half_length=5.0, points=65))
    with pytest.raises(GridMismatchError):
        MathService.inner(a, b)
    two = Field(a.grid, np.vstack([a.values, a.values]))
    with pytest.raises(GridMismatchError):
        MathService.inner(a, two)


def test_shift_zero_is_exact_copy():
    grid = Grid(half_length=5.0, points=64)
    g = gaussian(grid)
    shifted = MathService.shift(g, 0.0)
    np.testing.assert_array_equal(shifted.values, g.values)
    assert shifted.values is not g.values


def test_shift_by_whole_nodes_is_exact():
    grid = Grid(half_length=10.0, points=401)
    g = gaussian(grid, width=2.0)
    shifted = MathService.shift(g, 3 * grid.spacing)
    np.testing.assert_allclose(shifted.values[0, 3:], g.values[0, :-3], atol=1e-13)


def test_shift_matches_translated_function():
    grid = Grid(half_length=10.0, points=1001)
    gamma = 0.737
    shifted = MathService.shift(gaussian(grid), gamma)
    expected = np.exp(-(grid.nodes - gamma) ** 2)
    assert np.abs(shifted.values[0] - expected).max() <= 1e-4


def test_shift_extends_boundary_values():
    grid = Grid(half_length=10.0, points=201)
    front = Field.from_function(grid, lambda x: 0.5 * (1.0 - np.tanh(x)))
    shifted = MathService.shift(front, -4.0)
    np.testing.assert_allclose(shifted.values[0, -40:], front.values[0, -1], atol=1e-12)


def test_shift_beyond_window_is_rejected():
    grid = Grid(half_length=5.0, points=64)
    with pytest.raises(ParameterError):
        MathService.shift(gaussian(grid), 5.0)


def test_shift_many_matches_single_shifts():
    grid = Grid(half_length=8.0, points=300)
    a, b = gaussian(grid).values, gaussian(grid, 1.0, 2.0).values
    many = MathService.shift_many(grid, (a, b), 0.31)
    np.testing.assert_allclose(many[0], MathService.shift_values(grid, a, 0.31), atol=1e-15)
    np.testing.assert_allclose(many[1], MathService.shift_values(grid, b, 0.31), atol=1e-15)


def test_field_csv_round_trip(tmp_path):
    grid = Grid(half_length=3.0, points=33)
    field = Field(grid, np.vstack([np.sin(grid.nodes), np.cos(grid.nodes) / 3.0]))
    path = FieldIO.write_field(tmp_path / 'profile.csv', field)
    assert path.read_text().splitlines()[0] == 'xi,c1,c2'
    loaded = FieldIO.read_field(path, grid)
    np.testing.assert_array_equal(loaded.values, field.values)


def test_field_csv_grid_mismatch(tmp_path):
    grid = Grid(half_length=3.0, points=33)
    path = FieldIO.write_field(tmp_path / 'profile.csv', gaussian(grid))
    with pytest.raises(GridMismatchError):
        FieldIO.read_field(path, Grid(half_length=3.0, points=34))
