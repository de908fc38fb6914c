import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proactive.model import single_user, symmetric
from proactive.policy import (
    PolicyTable,
    ServiceLedger,
    compile_ti,
    compile_tv,
    demand_vector,
    ledger_advance,
    reactive_policy,
    step_proactive,
    step_reactive,
)
from proactive.solver import LowerBoundSolution, solve


def ti_table(m, T, S=1.0, shape=(1, 2, 2)):
    return PolicyTable("proactive_ti", T, S, np.full(shape, m))


# -- reactive step ---------------------------------------------------------------


@pytest.mark.parametrize(
    "d, S, expected", [((1, 0), 1.0, (1, 0)), ((0, 0), 1.0, (0, 0)), ((1, 1), 2.0, (2, 2))]
)
def test_step_reactive(d, S, expected):
    np.testing.assert_array_equal(step_reactive(d, S), expected)


def test_demand_vector_bit_order():
    np.testing.assert_array_equal(demand_vector(0b10, 2), [0, 1])
    np.testing.assert_array_equal(demand_vector(np.array([1, 3]), 2), [[1, 0], [1, 1]])


# -- ledger ----------------------------------------------------------------------


def test_ledger_all_zero_advance():
    led = ServiceLedger(1, 3, 1.0)
    ledger_advance(led)
    np.testing.assert_array_equal(led.profile(), 0.0)


def test_ledger_shift():
    led = ServiceLedger(1, 3, 1.0)
    led.credit(np.array([[0.3, 0.0, 0.0]]))
    assert led.matured()[0] == 0.0
    led.advance()
    assert led.matured()[0] == pytest.approx(0.3)


def test_ledger_recycles_oldest_cell():
    # cells that rotate into the far end of the window start at zero credit
    led = ServiceLedger(1, 2, 1.0)
    led.credit(np.array([[0.4, 0.4]]))
    for _ in range(3):
        led.advance()
    np.testing.assert_array_equal(led.profile(), 0.0)


def test_ledger_clips_at_S():
    led = ServiceLedger(1, 2, 1.0)
    led.credit(np.array([[0.7, 0.7]]))
    led.credit(np.array([[0.7, 0.0]]))
    np.testing.assert_allclose(led.profile()[0], [0.0, 1.0, 0.7])
    assert led.clipped == 1


def test_ledger_wraparound_many_cycles():
    led = ServiceLedger(2, 4, 1.0, batch=(3,))
    for _ in range(23):
        led.credit(np.full((3, 2, 4), 0.05))
        led.advance()
    # steady state: offset k has received (T - k + 1) credits of 0.05
    np.testing.assert_allclose(led.profile()[0, 0], [0.2, 0.15, 0.1, 0.05, 0.0])


# -- proactive step -------------------------------------------------------------


def test_zero_table_is_reactive():
    table = ti_table(0.0, 3)
    led = ServiceLedger(1, 3, 1.0)
    load, led = step_proactive(table, 1, 0, 0, led)
    np.testing.assert_array_equal(load, [1.0])
    np.testing.assert_array_equal(led.profile(), 0.0)


def test_steady_state_load_is_S():
    m, T = 0.6, 5
    table = ti_table(m, T)
    led = ServiceLedger(1, T, 1.0)
    loads = []
    for _ in range(T + 1):
        load, led = step_proactive(table, 1, 1, 0, led)
        loads.append(load[0])
    # after T warm-up slots the matured credit is m and load = (S - m) + m
    assert led.profile()[0, 0] == pytest.approx(m)
    assert loads[-1] == pytest.approx(1.0, abs=1e-12)
    assert loads[0] == pytest.approx(1.0 + m)


def test_no_request_means_pure_pre_service():
    m, T = 0.3, 4
    table = ti_table(m, T)
    led = ServiceLedger(1, T, 1.0)
    for _ in range(T):
        step_proactive(table, 1, 0, 0, led)
    load, _ = step_proactive(table, 0, 0, 0, led)
    assert load[0] == pytest.approx(m)


def test_reactive_equivalence_on_random_stream():
    rng = np.random.default_rng(0)
    B = rng.integers(0, 4, (5, 200))
    C = rng.integers(0, 4, (5, 200))
    table = ti_table(0.0, 7, shape=(2, 4, 4))
    led = ServiceLedger(2, 7, 1.0, batch=(5,))
    for t in range(200):
        load, led = step_proactive(table, B[:, t], C[:, t], 0, led)
        np.testing.assert_array_equal(load, step_reactive(demand_vector(B[:, t], 2), 1.0))


def test_reactive_policy_step():
    pol = reactive_policy(2, 1.0)
    load, _ = step_proactive(pol, 3, 0, 0, None)
    np.testing.assert_array_equal(load, [1.0, 1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 12), st.floats(0.5, 2.0))
def test_on_time_delivery_and_nonnegativity(seed, T, S):
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0, S, (2, 4, 4, 3, 3))
    table = PolicyTable("proactive_tv", T, S, mu)
    led = ServiceLedger(2, T, S, batch=(4,))
    for t in range(3 * T + 5):
        b = rng.integers(0, 4, 4)
        c = rng.integers(0, 4, 4)
        prior = led.matured()
        load, led = step_proactive(table, b, c, t % 3, led)
        assert np.all(load >= 0)
        assert np.all(prior <= S + 1e-12)
        d = demand_vector(b, 2)
        # matured credit plus reactive remainder covers exactly S
        np.testing.assert_allclose((prior + (S - prior)) * d, S * d)
    assert led.violations == 0
    assert led.clipped == 0


def test_step_is_deterministic():
    rng = np.random.default_rng(2)
    mu = rng.uniform(0, 1, (1, 2, 2, 2, 2))
    table = PolicyTable("proactive_tv", 5, 1.0, mu)
    B = rng.integers(0, 2, 50)
    C = rng.integers(0, 2, 50)

    def trace():
        led = ServiceLedger(1, 5, 1.0)
        return np.array([step_proactive(table, B[t], C[t], t % 2, led)[0] for t in range(50)])

    np.testing.assert_array_equal(trace(), trace())


# -- tables ----------------------------------------------------------------------


def test_controls_wraparound():
    Q, T = 14, 2
    mu = np.zeros((1, 2, 2, Q, Q))
    mu[0, 1, 1, 13, 0] = 0.7
    mu[0, 1, 1, 13, 1] = 0.4
    table = PolicyTable("proactive_tv", T, 1.0, mu)
    np.testing.assert_allclose(table.controls(1, 1, 13)[0], [0.35, 0.2])


def test_controls_ti_constant_over_window():
    mu = np.array([[[0.2, 0.4], [0.6, 0.8]]])
    u = PolicyTable("proactive_ti", 4, 1.0, mu).controls(1, 0, 0)
    np.testing.assert_allclose(u, [[0.15] * 4])


def test_tv_at_period_one_matches_ti():
    mu = np.random.default_rng(4).uniform(0, 1, (2, 4, 4))
    ti = PolicyTable("proactive_ti", 6, 1.0, mu)
    tv = PolicyTable("proactive_tv", 6, 1.0, mu[..., None, None])
    for b in range(4):
        for c in range(4):
            np.testing.assert_array_equal(ti.controls(b, c, 0), tv.controls(b, c, 0))


def test_table_lengths():
    ti = compile_ti(solve("ti", single_user(0.5, 0.5)), 3)
    assert ti.n_entries == 4
    sc = symmetric(2, 0.42, [0.5] * 14, (0.5, 2.0))
    mu = np.zeros((2, 4, 4, 14, 14))
    tv = compile_tv(LowerBoundSolution("tv", mu, 0.0, 0, 0.0, True, None, sc), 14, 14)
    assert tv.n_entries == 3136
    assert tv.period == 14


def test_table_rejects_bad_entries():
    with pytest.raises(ValueError):
        ti_table(1.5, 3)
    with pytest.raises(ValueError):
        ti_table(0.5, 0)
    with pytest.raises(ValueError):
        PolicyTable("proactive_tv", 3, 1.0, np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        PolicyTable("greedy", 3, 1.0, np.zeros((1, 2, 2)))


def test_compile_checks_kind_and_period():
    sol = solve("ti", single_user(0.5, 0.5))
    with pytest.raises(ValueError):
        compile_tv(sol, 3)
    tv = solve("tv", symmetric(1, 0.5, [0.2, 0.8], (1.0, 2.0)))
    with pytest.raises(ValueError):
        compile_ti(tv, 3)
    with pytest.raises(ValueError):
        compile_tv(tv, 3, Q=3)


def test_table_round_trip(tmp_path):
    mu = np.random.default_rng(9).uniform(0, 1, (2, 4, 4, 3, 3))
    table = PolicyTable("proactive_tv", 9, 1.0, mu)
    path = tmp_path / "policy.json"
    table.save(path)
    back = PolicyTable.load(path)
    assert back.kind == "proactive_tv" and back.window == 9
    np.testing.assert_array_equal(back.mu, mu)
    doc = table.to_dict()
    # flat values in user, bitmask, channel, s, s' order
    assert doc["values"][1] == mu[0, 0, 0, 0, 1]
    assert doc["values"][9] == mu[0, 0, 1, 0, 0]
    r = PolicyTable.from_dict(reactive_policy(3, 1.0).to_dict())
    assert r.kind == "reactive" and r.n_users == 3
