import warnings

import numpy as np
import pytest

from basefrac.design import (
    ExactDesign,
    a_value,
    eff_lb,
    eff_lb_rho,
    format_design,
    info_of_design,
    parse_design,
    psi,
    read_design,
    round_measure,
    rounding_scale,
    score_design,
    v_matrix,
    write_design,
)
from basefrac.errors import InvalidTreatmentError, NoValidScaleError, SingularDesignError
from basefrac.factorial import FactorialModel, build_orthocomplement
from basefrac.measure import info_of_measure, optimize, uniform

MODELS = [
    ((2, 2), "1;2"),
    ((3, 3), "1;2"),
    ((2, 2, 2, 3), "1;2;3;4;1x4;2x4"),
    ((2, 3, 4), "1;2;3;2x3"),
    ((2, 2, 2, 2), "1;2;3;4;1x2;3x4"),
]


@pytest.fixture(scope="module")
def models():
    return [FactorialModel.build(levels, effects) for levels, effects in MODELS]


def random_design(rng, model, binary):
    # enough distinct runs for estimability, plus extra replicates when non-binary
    while True:
        n = int(rng.integers(model.q + 1, model.v + 1))
        labels = list(rng.choice(model.v, size=n, replace=False) + 1)
        if not binary:
            labels += list(rng.choice(labels, size=int(rng.integers(1, 4))))
        d = ExactDesign.from_labels(labels, model.v)
        try:
            a_value(d, model.z)
        except SingularDesignError:
            continue
        return d


def test_exact_design_basics():
    d = ExactDesign.from_labels([3, 1, 3], 4)
    assert d.n_runs == 3
    assert list(d.labels) == [1, 3, 3]
    assert not d.is_binary
    assert d.remove(3).is_binary
    assert d.add(2) == ExactDesign.from_labels([1, 2, 3, 3], 4)
    assert hash(d) == hash(ExactDesign.from_labels([1, 3, 3], 4))
    with pytest.raises(ValueError):
        d.remove(2)
    with pytest.raises(ValueError):
        ExactDesign([-1, 2])
    with pytest.raises(ValueError):
        d.replications[0] = 5


def test_full_factorial_2x2():
    # centred columns of F1 and F2 are +-1/2 and orthogonal, so H = I
    m = FactorialModel.build((2, 2), "1;2")
    d = ExactDesign.full_factorial(4)
    np.testing.assert_allclose(info_of_design(d, m.z), np.eye(2), atol=1e-14)
    assert a_value(d, m.z) == pytest.approx(2.0, rel=1e-14)
    np.testing.assert_allclose(info_of_design(d, m.z), np.linalg.inv(m.w), atol=1e-12)


def test_degenerate_designs():
    m = FactorialModel.build((3, 3), "1;2")
    same = ExactDesign.from_labels([5] * 6, 9)
    np.testing.assert_allclose(info_of_design(same, m.z), 0, atol=1e-14)
    with pytest.raises(SingularDesignError) as info:
        a_value(ExactDesign.from_labels([1, 2, 4, 5], 9), m.z)
    assert info.value.design.n_runs == 4


def test_h_identity(models):
    rng = np.random.default_rng(10)
    for model in models:
        for binary in (True, False):
            d = random_design(rng, model, binary)
            r = d.replications
            np.testing.assert_allclose(info_of_design(d, model.z),
                                       d.n_runs * info_of_measure(r / d.n_runs, model.z), atol=1e-10)


def test_v_matrix_binary_and_nnd(models):
    rng = np.random.default_rng(11)
    for i in range(200):
        model = models[i % len(models)]
        d = random_design(rng, model, True)
        hinv = np.linalg.inv(info_of_design(d, model.z))
        assert np.max(np.abs(v_matrix(d, model.z) - hinv)) <= 1e-9
        d = random_design(rng, model, False)
        hinv = np.linalg.inv(info_of_design(d, model.z))
        assert np.linalg.eigvalsh(v_matrix(d, model.z) - hinv).min() >= -1e-9


def test_v_matrix_duplicate_run_2x2():
    m = FactorialModel.build((2, 2), "1;2")
    d = ExactDesign.from_labels([1, 2, 3, 4, 4], 4)
    hinv = np.linalg.inv(info_of_design(d, m.z))
    assert np.linalg.eigvalsh(v_matrix(d, m.z) - hinv).min() >= -1e-9


def test_v_minus_w_via_orthocomplement(models):
    rng = np.random.default_rng(12)
    for model in models:
        p = build_orthocomplement(model.matrices.x)
        for binary in (True, False):
            d = random_design(rng, model, binary)
            idx = np.array(d.labels) - 1
            n = d.n_runs
            zd, pd = model.z[idx], p[idx]
            ln = np.eye(n) - np.ones((n, n)) / n
            hinv = np.linalg.inv(info_of_design(d, model.z))
            lhs = hinv @ zd.T @ ln @ pd @ pd.T @ ln @ zd @ hinv
            np.testing.assert_allclose(lhs, v_matrix(d, model.z) - model.w, atol=1e-8)


def test_delta_square_identity():
    rng = np.random.default_rng(13)
    for _ in range(20):
        r = rng.integers(0, 4, size=12).astype(float)
        r[0] += 1
        n = r.sum()
        delta = np.diag(r) - np.outer(r, r) / n
        left = np.eye(12) - np.outer(r, np.ones(12)) / n
        dr = np.diag(r)
        rhs = left @ (dr @ dr - dr) @ left.T
        np.testing.assert_allclose(delta @ delta - delta, rhs, atol=1e-10)


def test_eff_lb_bounds(models):
    rng = np.random.default_rng(14)
    for model in models:
        s = optimize(model.z).s
        for _ in range(30):
            d = random_design(rng, model, bool(rng.integers(2)))
            e = eff_lb(d, model.z, s)
            assert 0 < e <= 1 + 1e-9
            assert eff_lb_rho(d, model.z, s, 0.0, model.w) == e


def test_eff_lb_attained():
    # the 2x2 full factorial is itself the optimal measure scaled by 4
    m = FactorialModel.build((2, 2), "1;2")
    s = optimize(m.z).s
    assert eff_lb(ExactDesign.full_factorial(4), m.z, s) == pytest.approx(1.0, abs=1e-9)


def test_psi(models):
    rng = np.random.default_rng(15)
    for model in models:
        s = optimize(model.z).s
        tr_w = np.trace(model.w)
        for binary in (True, False):
            d = random_design(rng, model, binary)
            a = a_value(d, model.z)
            assert psi(d, model.z, 2.0, 0.0, model.w) == pytest.approx(2 * a, rel=1e-12)
            value = psi(d, model.z, 1.5, 0.7, model.w)
            assert value >= 2.2 * s / d.n_runs - 0.7 * tr_w - 1e-9
            if binary:
                assert value == pytest.approx(1.5 * a + 0.7 * (a - tr_w), rel=1e-9)
    with pytest.raises(ValueError):
        psi(ExactDesign.full_factorial(4), models[0].z, 0.0, 1.0, models[0].w)


def test_psi_invariant_to_basis():
    # the robust score depends on P only through P P'; a rotated basis gives the same value
    m = FactorialModel.build((2, 2, 2, 3), "1;2;3;4;1x4;2x4")
    p = build_orthocomplement(m.matrices.x)
    rng = np.random.default_rng(16)
    q_rot, _ = np.linalg.qr(rng.normal(size=(p.shape[1], p.shape[1])))
    d = random_design(rng, m, binary=False)
    idx = np.array(d.labels) - 1
    n = d.n_runs
    ln = np.eye(n) - np.ones((n, n)) / n
    hinv = np.linalg.inv(info_of_design(d, m.z))
    traces = []
    for basis in (p, p @ q_rot):
        pd = basis[idx]
        traces.append(np.trace(hinv @ m.z[idx].T @ ln @ pd @ pd.T @ ln @ m.z[idx] @ hinv))
    assert traces[0] == pytest.approx(traces[1], rel=1e-10)


def test_score_design_consistent(models):
    model = models[2]
    s = optimize(model.z).s
    d = random_design(np.random.default_rng(17), model, binary=False)
    sc = score_design(d, model.z, s, model.w, (1.0, 5.0))
    assert sc.a_value == a_value(d, model.z)
    assert sc.eff_lb == pytest.approx(eff_lb(d, model.z, s), rel=1e-14)
    for rho in (1.0, 5.0):
        assert sc.eff_lb_rho[rho] == pytest.approx(eff_lb_rho(d, model.z, s, rho, model.w),
                                                   rel=1e-14)
    assert not sc.is_binary
    assert sc.tr_v > sc.a_value


def test_negative_numerator_warns():
    m = FactorialModel.build((2, 2, 2, 2), "1;2;3;4;1x2;3x4")
    s = optimize(m.z).s
    d = ExactDesign.full_factorial(16).add(*range(1, 17)).add(*range(1, 17))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        value = eff_lb_rho(d, m.z, s, 50.0, m.w)
    assert value < 0
    assert any("negative numerator" in str(w.message) for w in caught)


def test_rounding_uniform():
    d = round_measure(uniform(12), 12)
    assert d == ExactDesign.full_factorial(12)
    assert rounding_scale(uniform(12), 12) == pytest.approx(12.0, rel=0.1)


def test_rounding_exhaustive_small():
    # brute-force scan of c agrees with the breakpoint search on which totals are reachable
    p = np.array([0.5, 0.3, 0.15, 0.05])
    grid = np.linspace(0.01, 60, 600001)
    reachable = set(np.floor(grid[:, None] * p + 0.5).sum(axis=1).astype(int))
    for n in range(1, 40):
        if n in reachable:
            d = round_measure(p, n)
            assert d.n_runs == n
        else:
            with pytest.raises(NoValidScaleError):
                round_measure(p, n)


def test_rounding_scale_in_first_interval():
    p = np.array([0.5, 0.3, 0.15, 0.05])
    grid = np.linspace(0.01, 60, 600001)
    totals = np.floor(grid[:, None] * p + 0.5).sum(axis=1)
    for n in (4, 7, 13):
        c = rounding_scale(p, n)
        assert np.floor(c * p + 0.5).sum() == n
        hits = grid[totals == n]
        assert hits[0] <= c <= hits[-1]


def test_rounding_singular_signal():
    m = FactorialModel.build((2, 2, 2, 2, 2, 3), "1;2;3;4;5;6;1x6;2x6")
    opt = optimize(m.z)
    kinds = set()
    for n in range(12, 33):
        with pytest.raises((NoValidScaleError, SingularDesignError)) as info:
            round_measure(opt.p_hat, n, m.z)
        kinds.add(type(info.value))
    assert kinds  # both failure modes carry distinct types
    d = round_measure(opt.p_hat, 304, m.z)
    assert d.n_runs == 304
    assert eff_lb(d, m.z, opt.s) == pytest.approx(0.9925, abs=0.001)


def test_design_file_round_trip(tmp_path):
    m = FactorialModel.build((2, 3, 4), "1;2;3;2x3")
    d = ExactDesign.from_labels([1, 5, 5, 9, 24], m.v)
    for levels in (False, True):
        path = tmp_path / f"d{int(levels)}.txt"
        write_design(path, d, m.space, levels=levels, comment="five runs\nsecond line")
        assert read_design(path, m.space) == d
    text = "# header\n\n1\n0,1,0\n0,1,0\n24\n"
    assert parse_design(text, m.space) == ExactDesign.from_labels([1, 5, 5, 24], m.v)
    assert format_design(d) == "1\n5\n5\n9\n24\n"
    for bad in ("", "# only\n", "x\n", "0,3,0\n", "25\n", "0,1\n"):
        with pytest.raises(InvalidTreatmentError):
            parse_design(bad, m.space)
