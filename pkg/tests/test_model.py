import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mapsens.errors import DomainError, ParameterError
from mapsens.model import (CallableModel, CountingModel, DomainGrid, FrozenModel, LevelGrid, MapField,
                           PlumeModel, auto_levels, hypograph_levels, lift_hypograph, make_synthetic,
                           read_table, write_table)
from mapsens.sampling import DistributionSpec, InputSpace

UNIT2 = InputSpace((("u1", DistributionSpec.uniform(0, 1)), ("u2", DistributionSpec.uniform(0, 1))))


def sin_model(grid):
    terms = [{"input": "u1", "basis": "sin1", "link": "identity"},
             {"input": "u2", "basis": "const", "link": "identity"}]
    return make_synthetic("synthetic-separable", UNIT2, grid, {"terms": terms})


def test_separable_zero_input_gives_zero_field():
    field = sin_model(DomainGrid(n1=8, n2=8)).evaluate([0.0, 0.0])
    assert np.all(field.values == 0.0)


def test_separable_direct_formula_at_quarter():
    grid = DomainGrid(n1=2, n2=3)
    assert grid.unit_centers()[0][0, 0] == 0.25
    field = sin_model(grid).evaluate([1.0, 1.0])
    assert field.values[0, 0] == pytest.approx(2.0, abs=1e-15)


def test_evaluate_out_of_bounds():
    with pytest.raises(DomainError):
        sin_model(DomainGrid(n1=4, n2=4)).evaluate([1.5, 0.0])


def test_single_active_input_has_unit_index():
    grid = DomainGrid(n1=5, n2=5)
    model = make_synthetic("synthetic-separable", UNIT2, grid,
                           {"terms": [{"input": 0, "basis": "const"}, {"input": 1, "basis": "zero"}]})
    S = model.analytic_indices()
    assert np.all(S[0] == 1.0) and np.all(S[1] == 0.0)


def test_analytic_indices_of_sin_model():
    grid = DomainGrid(n1=16, n2=4)
    S = sin_model(grid).analytic_indices()
    s = np.sin(2 * np.pi * grid.unit_centers()[0])
    np.testing.assert_allclose(S[0], s ** 2 / (s ** 2 + 1), atol=1e-12)


def test_analytic_indices_cross_checked_by_monte_carlo():
    grid = DomainGrid(n1=8, n2=2)
    model = sin_model(grid)
    rng = np.random.default_rng(0)
    U = rng.random((1_000_000, 2))
    s = np.sin(2 * np.pi * grid.unit_centers()[0])
    # main effects are linear so the partial variances factor through Var(U)
    var1 = s ** 2 * U[:, 0].var()
    var2 = U[:, 1].var()
    np.testing.assert_allclose(model.analytic_indices()[0], var1 / (var1 + var2), atol=2e-3)


def test_unknown_kind_raises():
    with pytest.raises(ParameterError):
        make_synthetic("synthetic-wave", UNIT2, DomainGrid(), {})


def test_lift_hypograph_extremes_and_inclusive_level():
    grid = DomainGrid(n1=3, n2=2)
    levels = LevelGrid(0.0, 1.0, 8)
    below = lift_hypograph(MapField(grid, np.full((3, 2), -1.0)), levels)
    above = lift_hypograph(MapField(grid, np.full((3, 2), 2.0)), levels)
    assert np.all(below.levels == 0) and np.all(above.levels == 8)
    third = levels.values[2]
    at = lift_hypograph(MapField(grid, np.full((3, 2), third)), levels)
    assert np.all(at.levels == 3)


def test_level_lattice_is_cell_centred():
    np.testing.assert_allclose(LevelGrid(0.0, 4.0, 4).values, [0.5, 1.5, 2.5, 3.5])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 3, allow_nan=False), min_size=6, max_size=6),
       st.lists(st.floats(0, 1, allow_nan=False), min_size=6, max_size=6))
def test_lift_hypograph_monotone(base, bump):
    levels = LevelGrid(-1.0, 2.0, 7)
    f1 = np.array(base).reshape(2, 3)
    f2 = f1 + np.array(bump).reshape(2, 3)
    assert np.all(hypograph_levels(f1, levels) <= hypograph_levels(f2, levels))


def test_map_field_rejects_non_finite():
    with pytest.raises(ParameterError):
        MapField(DomainGrid(n1=2, n2=2), np.array([[0.0, np.nan], [1.0, 1.0]]))


def test_plume_deterministic_and_active_inputs():
    grid = DomainGrid(n1=32, n2=24)
    space = InputSpace(tuple((f"u{k}", DistributionSpec.uniform(0, 1)) for k in range(4)))
    model = PlumeModel(space, grid, angle={"input": "u0", "range": [-0.5, 0.5]},
                       spread={"input": "u1", "range": [0.1, 0.2]},
                       amplitude=[{"input": "u2", "coef": 1.0}])
    u = [0.3, 0.6, 0.2, 0.9]
    h1 = hashlib.sha256(model.evaluate(u).values.tobytes()).hexdigest()
    h2 = hashlib.sha256(model.evaluate(u).values.tobytes()).hexdigest()
    assert h1 == h2
    assert model.active_inputs == {0, 1, 2}
    f = model.evaluate_batch(np.array([u, [0.3, 0.6, 0.2, 0.1]]))
    np.testing.assert_array_equal(f[0], f[1])


def test_external_table_roundtrip(tmp_path):
    grid = DomainGrid(n1=3, n2=4)
    rng = np.random.default_rng(1)
    inputs = rng.random((3, 2))
    fields = rng.normal(size=(3, 3, 4))
    path = tmp_path / "table.txt"
    write_table(path, inputs, fields)
    model = read_table(path, UNIT2)
    assert model.grid.shape == grid.shape
    for u, f in zip(inputs, fields):
        np.testing.assert_array_equal(model.evaluate(u).values, f)


def test_external_table_single_record_and_strict(tmp_path):
    path = tmp_path / "one.txt"
    path.write_text("2 2\n0.5 0.5\n1 2\n3 4\n")
    model = read_table(path, UNIT2, strict=True)
    np.testing.assert_array_equal(model.evaluate([0.5, 0.5]).values, [[1, 2], [3, 4]])
    with pytest.raises(DomainError):
        model.evaluate([0.1, 0.1])
    loose = read_table(path, UNIT2)
    np.testing.assert_array_equal(loose.evaluate([0.1, 0.1]).values, [[1, 2], [3, 4]])


def test_external_table_bad_record(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2 2\n0.5 0.5\n1 2 3\n")
    with pytest.raises(ParameterError):
        read_table(path, UNIT2)


def test_frozen_and_counting_models():
    grid = DomainGrid(n1=4, n2=4)
    base = sin_model(grid)
    frozen = FrozenModel(base, {"u2": 0.25})
    assert frozen.space.names == ["u1"]
    np.testing.assert_array_equal(frozen.evaluate([0.7]).values, base.evaluate([0.7, 0.25]).values)
    counted = CountingModel(base)
    counted.evaluate_batch(np.full((5, 2), 0.5))
    counted.evaluate([0.1, 0.1])
    assert counted.count == 6


def test_callable_model_and_auto_levels():
    grid = DomainGrid(n1=4, n2=4)
    model = CallableModel(UNIT2, grid, lambda U, x1, x2: U[:, :1, None] * np.ones((1, 4, 4)))
    lv = auto_levels(model, nc=10, n_pilot=64, seed=0)
    assert lv.nc == 10
    assert lv.c_min < 0.05 and lv.c_max > 0.95
    span = lv.c_max - lv.c_min
    fields = model.evaluate_batch(UNIT2.sample(64, 0))
    assert lv.c_min == pytest.approx(fields.min() - 0.05 * (fields.max() - fields.min()))
    assert span > 0
