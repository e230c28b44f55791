import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathindep import model as M
from pathindep.errors import ConfigurationError, ValidationError
from pathindep.girsanov import (
    exponent_continuous,
    exponent_jump,
    exponential_moment_probe,
    ledger_batch,
    moment_probe_arrays,
)
from pathindep.simulate import JumpEvent, PathBundle, TimeGrid, simulate_batch, simulate_diffusion, simulate_jump_diffusion


def const_gamma_model(c):
    c = np.asarray(c, dtype=float)
    m = c.size
    return M.ModelSpec(
        m, m,
        lambda t, x: np.zeros(np.shape(x)),
        lambda t, x: np.broadcast_to(np.eye(m), np.shape(x) + (m,)).copy(),
        lambda t, x: np.broadcast_to(c, np.shape(x)).copy(),
    )


def test_zero_gamma():
    lg = exponent_continuous(simulate_diffusion(const_gamma_model([0.0, 0.0]), None, TimeGrid(1.0, 8), 0), const_gamma_model([0.0, 0.0]))
    assert lg.Y_T == 0.0 and lg.Z_T == 1.0


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_single_step_arithmetic(c1, c2, w1, w2):
    m = const_gamma_model([c1, c2])
    path = PathBundle(TimeGrid(1.0, 1), np.zeros((2, 2)), np.array([[w1, w2]]))
    lg = exponent_continuous(path, m)
    assert lg.Y_T == pytest.approx(0.5 * (c1 * c1 + c2 * c2) + c1 * w1 + c2 * w2, abs=1e-12)


def test_heat_kernel_ledger():
    hk = M.builtin("heat_kernel")
    inc = np.zeros((4, 2))
    inc[:, 0] = [0.1, 0.2, -0.05, 0.05]
    inc[:, 1] = [0.3, -0.1, 0.2, 0.0]
    path = PathBundle(TimeGrid(1.0, 4), np.zeros((5, 2)), inc)
    assert exponent_continuous(path, hk).Y_T == pytest.approx(0.8, abs=1e-15)


def pure_jump_path(times):
    grid = TimeGrid(1.0, 4)
    events = [JumpEvent(t, min(math.ceil(t / 0.25) - 1, 3), 0, np.zeros(1), True) for t in times]
    return PathBundle(grid, np.zeros((5, 1)), np.zeros((4, 1)), events)


def test_two_jump_ledger():
    lg = exponent_jump(pure_jump_path([0.3, 0.7]), M.builtin("pure_jump"))
    assert lg.Y_T == pytest.approx(-2.0 + (1 - math.exp(-1)), abs=1e-14)
    assert round(lg.Y_T, 5) == -1.36788


def test_compensator_only_ledger():
    lg = exponent_jump(pure_jump_path([]), M.builtin("pure_jump"))
    assert lg.Y_T == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert lg.jump_log_term[-1] == 0.0


def test_unit_intensity_collapses_to_continuous():
    base = M.builtin("heat_kernel")
    jump = M.JumpSpec([[1.0]], [3.0], lambda t, x, u: np.broadcast_to(u, np.shape(x)).copy() * 0.1, lambda t, u: 1.0)
    jm = M.ModelSpec(2, 2, base.drift, base.diffusion, base.gamma, jump=jump)
    p = simulate_jump_diffusion(jm, None, TimeGrid(1.0, 16), 3, 0)
    assert p.accepted_jumps
    a = exponent_jump(p, jm)
    b = exponent_continuous(p, jm, ignore_jumps=True)
    assert np.array_equal(a.Y, b.Y)
    assert np.all(a.jump_log_term == 0) and np.all(a.compensator_term == 0)
    with pytest.raises(ValidationError):
        exponent_continuous(p, jm)


def test_positivity_and_additivity():
    m = M.builtin("manufactured_jump")
    batch = simulate_batch(m, None, TimeGrid(1.0, 16), 0, range(64))
    lb = ledger_batch(batch, m)
    assert np.all(lb.Z > 0)
    for i in range(8):
        p = batch.path(i)
        whole = exponent_jump(p, m).Y_T
        halves = exponent_jump(p.segment(0, 8), m).Y_T + exponent_jump(p.segment(8, 16), m).Y_T
        assert whole == pytest.approx(halves, abs=1e-13)


def test_martingale_part_relation():
    # for a single accepted jump: M jumps by (1 - lam)/lam
    lg = exponent_jump(pure_jump_path([0.5]), M.builtin("pure_jump"))
    lam = math.exp(-1)
    assert lg.M[-1] == pytest.approx((1 - lam) / lam - (1 - lam), abs=1e-14)


def test_csv(tmp_path):
    lg = exponent_jump(pure_jump_path([0.3]), M.builtin("pure_jump"))
    lg.write_csv(tmp_path / "l.csv")
    rows = (tmp_path / "l.csv").read_text().split("\n")
    assert rows[0] == "t,stoch_integral,quad_term,jump_log_term,compensator_term,Y,Z"
    assert len(rows) == 7 and rows[-1] == ""


def test_jump_ledger_requires_jump_model():
    with pytest.raises(ConfigurationError):
        exponent_jump(pure_jump_path([]), M.builtin("heat_kernel"))


def test_moment_probe_trivial():
    mp = moment_probe_arrays(np.zeros(10), np.zeros(10))
    assert mp.continuous_moment_est == 1.0 and mp.jump_moment_est == 1.0 and mp.finite_verdict


def test_moment_probe_heat_kernel():
    hk = M.builtin("heat_kernel")
    lb = ledger_batch(simulate_batch(hk, None, TimeGrid(1.0, 16), 0, range(50)), hk)
    mp = exponential_moment_probe(lb)
    assert mp.continuous_moment_est == pytest.approx(math.exp(0.5), rel=1e-14)


def test_moment_probe_pure_jump():
    pj = M.builtin("pure_jump")
    lb = ledger_batch(simulate_batch(pj, None, TimeGrid(1.0, 16), 0, range(20)), pj)
    mp = exponential_moment_probe([lb.ledger(i) for i in range(len(lb))])
    addend = (math.e - 1) ** 2 / math.e
    assert mp.jump_moment_est == pytest.approx(math.exp(addend), rel=1e-13)
    assert round(mp.jump_moment_est, 4) == 2.9629


def test_moment_probe_overflow_and_tail():
    mp = moment_probe_arrays(np.array([0.0, 800.0]), np.zeros(2))
    assert not mp.finite_verdict and mp.warnings
    mp = moment_probe_arrays(np.r_[np.zeros(99), 20.0], np.zeros(100))
    assert mp.heavy_tail
    with pytest.raises(ValidationError):
        moment_probe_arrays([], [])
