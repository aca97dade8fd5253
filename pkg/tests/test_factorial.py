import itertools

import numpy as np
import pytest

from basefrac.errors import DegenerateModelError, InvalidModelError, InvalidTreatmentError
from basefrac.factorial import (
    Effect,
    FactorialModel,
    FactorialSpace,
    RequirementSet,
    build_model_matrices,
    build_orthocomplement,
    effect_dimension,
)

CROSSED_EFFECTS = "1;2;3;4;5;6;1x4;1x5;1x6;2x4;2x5;2x6;3x4;3x5;3x6"


def test_labels_3x3():
    s = FactorialSpace((3, 3))
    assert s.label((1, 0)) == 4
    assert s.label((2, 1)) == 8
    assert s.label((0, 0)) == 1
    assert s.unlabel(9) == (2, 2)
    assert s.unlabel(1) == (0, 0)
    listed = ["00", "01", "02", "10", "11", "12", "20", "21", "22"]
    assert [s.format_treatment(s.unlabel(k)) for k in range(1, 10)] == listed


def test_labels_mixed():
    s = FactorialSpace((2, 2, 2, 2, 2, 3))
    # strides (48, 24, 12, 6, 3, 1): 48 + 24 + 3 + 1 + 1
    assert s.strides == (48, 24, 12, 6, 3, 1)
    assert s.label((1, 1, 0, 0, 1, 1)) == 77
    # 73 - 1 = 48 + 24
    assert s.unlabel(73) == (1, 1, 0, 0, 0, 0)


@pytest.mark.parametrize("levels", [(2,), (3, 3), (2, 3, 4), (2, 2, 2, 2, 3, 4), (5, 7, 11, 13)])
def test_label_round_trip(levels):
    s = FactorialSpace(levels)
    assert s.strides[-1] == 1
    for i in range(s.n - 1):
        assert s.strides[i] == s.strides[i + 1] * s.levels[i + 1]
    for k in range(1, s.v + 1):
        assert s.label(s.unlabel(k)) == k
    assert [s.label(t) for t in s.treatments] == list(range(1, s.v + 1))


def test_treatment_errors():
    s = FactorialSpace((3, 3))
    with pytest.raises(InvalidTreatmentError):
        s.label((3, 0))
    with pytest.raises(InvalidTreatmentError):
        s.label((0,))
    with pytest.raises(InvalidTreatmentError):
        s.unlabel(10)
    with pytest.raises(InvalidModelError):
        FactorialSpace((2, 1))


def test_effects():
    assert Effect.parse("6x1") == Effect((1, 6))
    assert Effect.parse("1*2:3") == Effect((1, 2, 3))
    assert str(Effect((2, 1))) == "F1F2"
    with pytest.raises(InvalidModelError):
        Effect((1, 1))
    with pytest.raises(InvalidModelError):
        Effect.parse("1xa")


def test_q():
    s = FactorialSpace((3, 3))
    assert effect_dimension(s, Effect((1,))) == 2
    assert RequirementSet.parse(s, "1;2").q == 4
    assert FactorialModel.build([2] * 6, CROSSED_EFFECTS).q + 1 == 16
    assert FactorialModel.build([2, 2, 2, 2, 3, 3, 3], "1;2;3;4;5;6;7;1x2;1x3;2x3;1x2x3").q + 1 == 15


def test_requirement_set_errors():
    s = FactorialSpace((2, 2))
    with pytest.raises(InvalidModelError):
        RequirementSet.parse(s, "1;1")
    with pytest.raises(InvalidModelError):
        RequirementSet.parse(s, "1;3")
    with pytest.raises(InvalidModelError):
        # q + 1 = 5 > v = 4
        RequirementSet.parse(s, "1;2;1x2;1x2x3")
    with pytest.warns(UserWarning, match="without main effect"):
        RequirementSet.parse(FactorialSpace((2, 2, 2)), "1;2x3")


def test_z_rows_3x3():
    m = FactorialModel.build((3, 3), "1;2")
    assert m.reqset.parameters == ((1, 0), (2, 0), (0, 1), (0, 2))
    np.testing.assert_array_equal(m.z[3], [1, 0, 0, 0])
    np.testing.assert_array_equal(m.z[7], [0, 1, 1, 0])
    np.testing.assert_array_equal(m.z[0], np.zeros(4))

    full = FactorialModel.build((3, 3), "1;2;1x2")
    cols = {u: i for i, u in enumerate(full.reqset.parameters)}
    ones = {u for u, i in cols.items() if full.z[8, i] == 1}
    assert ones == {(2, 0), (0, 2), (2, 2)}


@pytest.mark.parametrize("levels,effects", [
    ((2, 2, 2, 2, 2, 3), "1;2;3;4;5;6;1x6;2x6"),
    ((2,) * 8, "1;2;3;4;5;6;7;8;1x2;1x3;1x2x3"),
    ((2, 2, 3, 3, 4), None),
])
def test_model_matrix_invariants(levels, effects):
    m = FactorialModel.build(levels, effects)
    z, x, w = m.z, m.matrices.x, m.w
    assert set(np.unique(z)) <= {0.0, 1.0}
    assert not z[0].any()
    assert np.linalg.matrix_rank(x) == m.q + 1
    t = m.space.treatments
    expected = [sum(all(t[k, i - 1] > 0 for i in e.factors) for e in m.reqset.effects)
                for k in range(m.v)]
    np.testing.assert_array_equal(z.sum(axis=1), expected)
    delta1 = np.eye(m.v) - np.ones((m.v, m.v)) / m.v
    np.testing.assert_allclose(w @ (z.T @ delta1 @ z), np.eye(m.q), atol=1e-10)
    assert not z.flags.writeable


def test_orthocomplement_3x3():
    m = FactorialModel.build((3, 3), "1;2")
    x = m.matrices.x
    p = build_orthocomplement(x)
    assert p.shape == (9, 4)
    np.testing.assert_allclose(p.T @ p, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(x.T @ p, 0, atol=1e-10)
    proj = np.eye(9) - x @ np.linalg.solve(x.T @ x, x.T)
    np.testing.assert_allclose(p @ p.T, proj, atol=1e-10)


def test_orthocomplement_dimension():
    m = FactorialModel.build((2, 3, 4), "1;2;3;2x3")
    assert build_orthocomplement(m.matrices.x).shape[1] == m.v - m.q - 1
    with pytest.raises(DegenerateModelError):
        build_orthocomplement(np.ones((4, 2)))


def test_effect_order_sets_columns():
    s = FactorialSpace((2, 3))
    a = build_model_matrices(s, RequirementSet.parse(s, "1;2"))
    b = build_model_matrices(s, RequirementSet.parse(s, "2;1"))
    np.testing.assert_array_equal(a.z[:, [1, 2, 0]], b.z)


def test_all_effects_saturate():
    # every effect of a 2x3 gives q + 1 = v
    s = FactorialSpace((2, 3))
    effects = [e for r in (1, 2) for e in itertools.combinations((1, 2), r)]
    m = build_model_matrices(s, RequirementSet(s, tuple(Effect(e) for e in effects)))
    assert m.q + 1 == s.v
