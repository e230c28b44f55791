import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathindep import model as M
from pathindep.errors import ConfigurationError, NotFoundError, ValidationError


def grid3(lo=-2.0, hi=2.0, n=10):
    ax = np.linspace(lo, hi, n)
    return [np.array(p) for p in itertools.product(ax, repeat=3)]


def test_catalog_names():
    assert M.model_names() == [
        "gruschin", "kohn", "kohn_corrected", "degenerate_exp",
        "heat_kernel", "two_exponential", "manufactured_jump", "pure_jump",
    ]
    with pytest.raises(NotFoundError):
        M.builtin("unknown")


def test_gruschin_coefficients():
    g = M.builtin("gruschin", k=2)
    z = np.array([2.0, 3.0])
    assert (g.d, g.m) == (2, 2)
    assert np.array_equal(g.diffusion(1.0, z), np.diag([1.0, 4.0]))
    assert np.array_equal(g.drift(1.0, z), [-2.0, -12.0])
    assert np.array_equal(g.gamma(1.0, z), [-2.0, -3.0])
    assert np.array_equal(M.drift_image_residual(M.builtin("gruschin"), 1.0, z), [0.0, 0.0])


def test_kohn_printed_residual():
    r = M.drift_image_residual(M.builtin("kohn"), 1.0, np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(r, [0.0, 0.0, -1.5])
    assert not M.builtin("kohn").drift_in_image


def test_kohn_third_component_formula():
    kohn = M.builtin("kohn")
    for t in (0.5, 1.0):
        for x, y, z in grid3(n=4):
            r = M.drift_image_residual(kohn, t, np.array([x, y, z]))
            assert r[2] == pytest.approx(z * (x - y) * t / 2, abs=1e-14)


@pytest.mark.parametrize("name", [n for n in M.model_names() if M.builtin(n).drift_in_image])
def test_drift_in_image_models_consistent(name):
    m = M.builtin(name)
    if m.d == 3:
        pts = grid3()
    elif m.d == 2:
        ax = np.linspace(-2.0, 2.0, 10)
        pts = [np.array(p) for p in itertools.product(ax, ax)]
    else:
        pts = [np.array([x]) for x in np.linspace(-2.0, 2.0, 10)]
    eps = np.finfo(float).eps
    for t in np.linspace(0, 1, 10):
        for x in pts:
            scale = 1.0 + float(np.max(np.abs(m.drift(t, x))))
            assert np.max(np.abs(M.drift_image_residual(m, t, x))) <= 4 * eps * scale


def test_heat_kernel_reference():
    hk = M.builtin("heat_kernel", a=(1.0, 0.0))
    assert (hk.d, hk.m) == (2, 2)
    assert hk.reference_field.params == {"a": [1.0, 0.0], "c": 0.5}
    assert np.array_equal(hk.diffusion(0.3, np.zeros(2)), np.eye(2))


def test_vectorized_coefficients():
    g = M.builtin("gruschin")
    X = np.random.default_rng(0).normal(size=(7, 2))
    assert g.drift(0.5, X).shape == (7, 2)
    assert g.diffusion(0.5, X).shape == (7, 2, 2)
    assert g.gamma(0.5, X).shape == (7, 2)


def test_manufactured_constant():
    # c = beta^2/2 + nu (e^{beta u}(1 - beta u) - 1), evaluated independently
    c = 0.5 + (math.exp(-1.0) * 2.0 - 1.0)
    m = M.builtin("manufactured_jump")
    assert m.reference_field.params["c"] == pytest.approx(c, abs=1e-15)
    assert c == pytest.approx(2 / math.e - 0.5, abs=1e-15)
    assert round(c, 5) == 0.23576


def test_jump_parameter_validation():
    with pytest.raises(ValidationError):
        M.builtin("manufactured_jump", atoms=[[1.0, 1.0]])  # lambda = e > 1
    with pytest.raises(ValidationError):
        M.builtin("pure_jump", atoms=[[-1.0, -1.0]])
    with pytest.raises(ValidationError):
        M.builtin("gruschin", k=0)
    with pytest.raises(ValidationError):
        M.builtin("heat_kernel", b=1)
    with pytest.raises(ConfigurationError):
        M.JumpSpec(np.zeros((2, 1)), np.ones(3), lambda t, x, u: x, lambda t, u: 1.0)


def test_intensity_checked():
    j = M.JumpSpec([[0.0]], [1.0], lambda t, x, u: x, lambda t, u: 1.5)
    with pytest.raises(ValidationError):
        j.check_intensity(0.0)


def test_default_kappa():
    assert M.default_kappa(2.0) == 1.0
    assert M.default_kappa(0.5) == 1.0
    assert M.default_kappa(math.exp(-3)) == pytest.approx(3.0)


def test_probe_constant_drift_lambda0_zero():
    hk = M.builtin("heat_kernel")
    pts = [(0.5, np.array([0.0, 0.0]), np.array([1.0, 2.0])), (0.1, np.array([3.0, -1.0]), np.array([0.5, 0.5]))]
    rep = M.hypothesis_probe(hk, pts)
    assert rep.lambda0_est == 0.0
    assert rep.verdicts["H1"] == "pass"


def test_probe_heat_kernel_lambda1():
    hk = M.builtin("heat_kernel")
    ax = np.linspace(-2, 2, 5)
    xs = [np.array(p) for p in itertools.product(ax, ax)]
    pts = [(0.0, x, y) for x in xs for y in xs[:3]]
    assert M.hypothesis_probe(hk, pts).lambda1_est == pytest.approx(3.0, abs=1e-15)


def test_probe_gruschin_bounded():
    g = M.builtin("gruschin")
    rng = np.random.default_rng(1)
    pts = [(rng.uniform(0, 1), rng.uniform(-7, 7, 2), rng.uniform(-7, 7, 2)) for _ in range(300)]
    rep = M.hypothesis_probe(g, pts)
    # finite on a bounded set; the x y t drift entry grows quadratically, so no global bound
    assert rep.lambda1_est is not None and math.isfinite(rep.lambda1_est)
    assert rep.verdicts["H2"] == "pass"


def test_probe_jump_hf():
    rep = M.hypothesis_probe(M.builtin("pure_jump"), [(0.0, np.array([0.0]), np.array([1.0]))])
    assert rep.hf_q2 == pytest.approx(1.0) and rep.hf_lip == 0.0
    assert rep.verdicts["Hf"] == "pass"


def test_probe_skips_coincident_pairs():
    rep = M.hypothesis_probe(M.builtin("heat_kernel"), [(0.0, np.zeros(2), np.zeros(2))])
    assert rep.sample_count == 0 and rep.verdicts["H1"] == "inconclusive"
    with pytest.raises(ValidationError):
        M.hypothesis_probe(M.builtin("heat_kernel"), [])


vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2).map(np.array)
triple = st.tuples(st.floats(0, 1), vec, vec)


@given(st.lists(triple, min_size=1, max_size=6), st.lists(triple, min_size=1, max_size=6))
def test_probe_monotone_in_probe_set(s1, s2):
    g = M.builtin("gruschin")
    a, b = M.hypothesis_probe(g, s1), M.hypothesis_probe(g, s1 + s2)
    assert b.lambda1_est >= a.lambda1_est
    if a.lambda0_est is not None:
        assert b.lambda0_est >= a.lambda0_est
