import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathindep import model as M
from pathindep.errors import ConfigurationError, NumericError, ValidationError
from pathindep.simulate import (
    BLOCK,
    TimeGrid,
    brownian_increments,
    derive_stream,
    simulate_batch,
    simulate_diffusion,
    simulate_jump_diffusion,
)


def const_model(a, sigma=0.0):
    a = np.asarray(a, dtype=float)
    d = a.size
    return M.ModelSpec(
        d, d,
        lambda t, x: np.broadcast_to(a, np.shape(x)).copy(),
        lambda t, x: sigma * np.broadcast_to(np.eye(d), np.shape(x) + (d,)).copy(),
        lambda t, x: np.zeros(np.shape(x)),
        name="const",
    )


def test_grid():
    g = TimeGrid(1.0, 4)
    assert g.dt == 0.25 and g.times.tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 4)
    with pytest.raises(ConfigurationError):
        TimeGrid(1.0, 0)


def test_zero_dynamics():
    p = simulate_diffusion(const_model([0.0, 0.0]), [1.0, -2.0], TimeGrid(1.0, 8), 0)
    assert np.all(p.states == [1.0, -2.0])


@given(st.integers(1, 64), st.floats(-3, 3), st.floats(-3, 3))
def test_constant_drift_exact(n, a, x0):
    p = simulate_diffusion(const_model([a]), [x0], TimeGrid(1.0, n), 0)
    assert p.states[-1, 0] == pytest.approx(x0 + a, abs=1e-13)


def test_heat_kernel_resums_increments():
    p = simulate_diffusion(M.builtin("heat_kernel"), [0.0, 0.0], TimeGrid(1.0, 32), 5, 3)
    assert np.allclose(p.states[-1], np.array([1.0, 0.0]) + p.bm_increments.sum(axis=0), atol=1e-13)


def test_derive_stream_determinism():
    a = derive_stream(42, 7).standard_normal(100)
    b = derive_stream(42, 7).standard_normal(100)
    assert np.array_equal(a, b)
    assert derive_stream(43, 7).standard_normal() != derive_stream(42, 7).standard_normal()


def test_derive_stream_independence():
    a = derive_stream(42, 7).standard_normal(10_000)
    b = derive_stream(42, 8).standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
    c = derive_stream(42, 7, "jumps").standard_normal(10_000)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.05


def test_brownian_statistics():
    grid = TimeGrid(1.0, 100)
    dW = np.concatenate([brownian_increments(3, p, grid, 1).ravel() for p in range(1000)])
    assert dW.size == 100_000
    assert abs(dW.mean()) <= 4 * math.sqrt(grid.dt / dW.size)
    assert abs(dW.var() / grid.dt - 1) <= 0.05


def test_nested_increments():
    fine = brownian_increments(1, 2, TimeGrid(1.0, 64), 2)
    coarse = brownian_increments(1, 2, TimeGrid(1.0, 16), 2, base_steps=64)
    assert np.allclose(coarse, fine.reshape(16, 4, 2).sum(axis=1), atol=1e-15)
    with pytest.raises(ValidationError):
        brownian_increments(1, 2, TimeGrid(1.0, 3), 1, base_steps=64)


def test_poisson_thinning_counts():
    pj = M.builtin("pure_jump")
    batch = simulate_batch(pj, [0.0], TimeGrid(1.0, 8), 11, range(10_000))
    n = batch.jump_counts
    rate = math.exp(-1.0)
    se_mean = math.sqrt(rate / n.size)
    assert abs(n.mean() - rate) <= 3 * se_mean
    # variance of the sample variance for Poisson(r): (r + 2 r^2 (n/(n-1))) / n, approximately
    se_var = math.sqrt((rate + 2 * rate * rate) / n.size)
    assert abs(n.var(ddof=1) - rate) <= 3 * se_var


def test_pure_jump_path_structure():
    pj = M.builtin("pure_jump")
    p = simulate_jump_diffusion(pj, [0.0], TimeGrid(1.0, 4), 0, 12)
    comp = math.exp(-1.0)  # -f lambda nu = +e^{-1} per unit time
    expected = comp - len(p.accepted_jumps)
    assert p.states[-1, 0] == pytest.approx(expected, abs=1e-14)
    for e in p.jumps:
        assert 0 < e.time <= 1.0
        assert e.step_index == min(max(math.ceil(e.time / 0.25) - 1, 0), 3)


def test_jump_pre_state_convention():
    pj = M.builtin("pure_jump", lambda_scale=math.e)  # lambda == 1: every candidate accepted
    for idx in range(50):
        p = simulate_jump_diffusion(pj, [0.0], TimeGrid(1.0, 1), 0, idx)
        if len(p.jumps) >= 2:
            assert p.jumps[1].pre_state[0] == p.jumps[0].pre_state[0] - 1.0
            return
    pytest.fail("no path with two jumps")


def test_inert_jumps_match_diffusion():
    base = M.builtin("heat_kernel")
    jump = M.JumpSpec([[0.5]], [2.0], lambda t, x, u: np.zeros(np.shape(x)), lambda t, u: 1.0)
    jm = M.ModelSpec(2, 2, base.drift, base.diffusion, base.gamma, jump=jump)
    grid = TimeGrid(1.0, 16)
    a = simulate_diffusion(base, [0.0, 0.0], grid, 9, 4)
    b = simulate_jump_diffusion(jm, [0.0, 0.0], grid, 9, 4)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.bm_increments, b.bm_increments)


def test_worker_count_invariance():
    m = M.builtin("manufactured_jump")
    grid = TimeGrid(1.0, 16)
    idx = range(2 * BLOCK + 17)
    a = simulate_batch(m, None, grid, 4, idx, workers=1)
    b = simulate_batch(m, None, grid, 4, idx, workers=3)
    assert np.array_equal(a.states, b.states)
    assert [[e.time for e in ev] for ev in a.jumps] == [[e.time for e in ev] for ev in b.jumps]


def test_batch_path_independent_of_batch():
    m = M.builtin("two_exponential")
    grid = TimeGrid(1.0, 16)
    big = simulate_batch(m, None, grid, 2, range(300))
    single = simulate_diffusion(m, None, grid, 2, 299)
    assert np.array_equal(big.states[299], single.states)


def test_non_finite_state_raises():
    blow = M.ModelSpec(1, 1, lambda t, x: x * 1e200, lambda t, x: np.zeros(np.shape(x) + (1,)), lambda t, x: np.zeros(np.shape(x)))
    with pytest.raises(NumericError):
        simulate_diffusion(blow, [1e200], TimeGrid(1.0, 4), 0)
    batch = simulate_batch(blow, [1e200], TimeGrid(1.0, 4), 0, [0])
    assert batch.failed_step[0] == 0


def test_segment_and_trace(tmp_path):
    p = simulate_jump_diffusion(M.builtin("manufactured_jump"), None, TimeGrid(1.0, 8), 0, 1)
    s = p.segment(4, 8)
    assert s.grid.start == 0.5 and s.grid.steps == 4
    assert np.array_equal(s.states, p.states[4:])
    p.write_trace(tmp_path / "t.csv", tmp_path / "j.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,X_1" and len(lines) == 10
    with pytest.raises(ValidationError):
        p.segment(5, 5)


def test_wrong_x0_shape():
    with pytest.raises(ConfigurationError):
        simulate_batch(M.builtin("gruschin"), [1.0], TimeGrid(1.0, 4), 0, [0])
    with pytest.raises(ConfigurationError):
        simulate_jump_diffusion(M.builtin("gruschin"), None, TimeGrid(1.0, 4), 0)
