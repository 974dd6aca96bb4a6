import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qccf.lyapunov import (ClientContext, LyapunovParams, QueueState,
                           arrival_lambda1, arrival_lambda2, j3_constant_terms,
                           per_client_j3, round_objective, update_lambda1,
                           update_lambda2)


def make_params(eps1=4.0, eps2=0.5, v=10.0, eta=0.05, big_l=1.0, tau=6):
    return LyapunovParams(eta=eta, l_smooth=big_l, tau=tau, tau_e=2,
                          epsilon1=eps1, epsilon2=eps2, v_penalty=v)


def test_premise_enforced():
    with pytest.raises(ValueError):
        LyapunovParams(eta=0.5, l_smooth=1.0, tau=6, tau_e=2,
                       epsilon1=1, epsilon2=1, v_penalty=1)
    with pytest.raises(ValueError):
        make_params(v=0.0)


@given(st.floats(min_value=0.01, max_value=0.2),
       st.floats(min_value=0.1, max_value=2.0),
       st.integers(min_value=1, max_value=8))
@settings(max_examples=60, deadline=None)
def test_a1_a2_closed_forms(eta, big_l, tau):
    if 2 * eta**2 * tau**2 * big_l**2 >= 1:
        return
    p = LyapunovParams(eta=eta, l_smooth=big_l, tau=tau, tau_e=1,
                       epsilon1=1, epsilon2=1, v_penalty=1)
    e2l2 = eta**2 * big_l**2
    a1 = 2 * e2l2 * (2 * tau**3 - 3 * tau**2 + tau) / (3 - 6 * e2l2 * tau**2)
    a2 = eta * big_l * tau + e2l2 * (tau**2 - tau) / (1 - 2 * e2l2 * tau**2)
    assert p.a1 == pytest.approx(a1, rel=1e-12)
    assert p.a2 == pytest.approx(a2, rel=1e-12)


def test_queue_nonnegative():
    with pytest.raises(ValueError):
        QueueState(lambda1=-1.0)


def test_lambda1_balanced_queue():
    # arrival exactly epsilon1 leaves the queue unchanged
    p = make_params(eps1=4.0)
    q = QueueState(lambda1=5.0)
    w = np.array([1.0])
    g = np.array([np.sqrt(4.0 / (4 * p.tau))])  # miss term = 4 tau g^2 = 4
    out = update_lambda1(q, [0], w, [0.0], g**2, [0.0], p)
    assert out == pytest.approx(5.0)


def test_lambda1_drains_to_floor():
    p = make_params(eps1=4.0)
    q = QueueState(lambda1=5.0)
    # zero stats: zero arrival
    out = update_lambda1(q, [1], [0.5], [1.0], np.zeros(1), np.zeros(1), p)
    assert out == pytest.approx(1.0)
    q2 = QueueState(lambda1=2.0)
    assert update_lambda1(q2, [1], [0.5], [1.0], np.zeros(1), np.zeros(1), p) == 0.0


def test_lambda1_direct_value():
    p = make_params(eps1=4.0)
    q = QueueState(lambda1=5.0)
    # one client out of two scheduled; hand-evaluated arrival
    a = np.array([1, 0])
    w = np.array([0.5, 0.5])
    wn = np.array([1.0, 0.0])
    g2 = np.array([0.25, 1.0])
    s2 = np.array([0.3, 0.7])
    arrival = (4 * p.tau * ((1 - 0.5) * 0.25 + 1.0)
               + p.a1 * 0.25 + p.a2 * 0.3)
    assert arrival_lambda1(a, w, wn, g2, s2, p) == pytest.approx(arrival, rel=1e-12)
    assert update_lambda1(q, a, w, wn, g2, s2, p) == pytest.approx(
        max(5.0 + arrival - 4.0, 0.0))


def test_lambda2_hand_value():
    p = make_params(eps2=0.0)
    q = QueueState()
    out = update_lambda2(q, [1.0], [1], [2.0], 1, p)
    assert out == pytest.approx(0.5)  # 1*1*4/(8*1)


def test_lambda2_zero_theta_drains():
    p = make_params(eps2=0.5)
    q = QueueState(lambda2=2.0)
    out = update_lambda2(q, [1.0], [4], [0.0], 100, p)
    assert out == pytest.approx(1.5)


def test_lambda2_level_limit():
    p = make_params(eps2=0.0)
    q = QueueState()
    out = update_lambda2(q, [1.0], [30], [2.0], 1000, p)
    assert out < 1e-12


def test_objective_no_participants_is_pure_miss():
    p = make_params(eps1=1.0, eps2=0.5)
    queues = QueueState(lambda1=3.0, lambda2=2.0)
    g2 = np.array([1.0, 4.0])
    out = round_objective(queues, [0, 0], [0.5, 0.5], [0.0, 0.0], g2,
                          np.zeros(2), np.zeros(2), [1, 1], np.zeros(2), 10, p)
    assert out == pytest.approx((3.0 - 1.0) * 4 * p.tau * 5.0)


def test_objective_v_zero_limit_is_energy_free():
    # tiny v makes the objective queue-pressure only
    p = make_params(v=1e-12)
    queues = QueueState(lambda1=1.0, lambda2=1.0)
    base = round_objective(queues, [1], [1.0], [1.0], [1.0], [1.0], [1.0],
                           [4], [0.0], 10, p)
    pricey = round_objective(queues, [1], [1.0], [1.0], [1.0], [1.0], [1.0],
                             [4], [1e6], 10, p)
    assert pricey == pytest.approx(base, rel=1e-5)


def test_objective_single_client_hand_fixture():
    p = make_params(eps1=1.0, eps2=0.1, v=2.0)
    queues = QueueState(lambda1=2.0, lambda2=0.4)
    g2, s2, theta, q_lvl, e = 0.09, 0.2, 0.7, 3, 0.01
    z = 50
    press1 = 4 * p.tau * (1 - 1 * 1.0) * g2 + p.a1 * 1.0 * g2 + p.a2 * 1.0 * s2
    press2 = 1.0 * z * 1.0 * theta**2 / (8 * (2**q_lvl - 1) ** 2)
    expected = (2.0 - 1.0) * press1 + (0.4 - 0.1) * press2 + 2.0 * e
    got = round_objective(queues, [1], [1.0], [1.0], [g2], [s2], [theta],
                          [q_lvl], [e], z, p)
    assert got == pytest.approx(expected, rel=1e-12)


def _ctx(**kw):
    base = dict(v_rate=3e6, weight_n=0.25, theta_max=0.8, data_size=1000.0,
                lambda2=1.0, z_dim=8010, t_max=0.05, tau_e=2, gamma=1000.0,
                alpha=1e-26, f_min=2e8, f_max=1e9, tx_power=0.2, q_last=8)
    base.update(kw)
    return ClientContext(**base)


def test_j3_queue_neutral_pressure():
    # lambda2 == epsilon2 leaves only the energy terms
    p = make_params(eps2=1.0, v=5.0)
    ctx = _ctx(lambda2=1.0)
    f, q = 3e8, 6
    expected = (5.0 * 1e-26 * ctx.cycles * f**2
                + 0.2 * 5.0 * ctx.z_dim * q / ctx.v_rate)
    assert per_client_j3(f, q, ctx, p) == pytest.approx(expected, rel=1e-12)


def test_j3_decreasing_in_q_when_energy_free():
    p = make_params(eps2=0.1, v=1e-9)
    ctx = _ctx(lambda2=5.0)
    vals = [per_client_j3(2e8, q, ctx, p) for q in range(1, 10)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_j3_hand_fixture():
    p = make_params(eps2=0.5, v=10.0)
    ctx = _ctx(lambda2=2.5, weight_n=0.5, theta_max=1.0)
    f, q = 4e8, 4
    quant = (2.5 - 0.5) * 0.5 * 8010 * 1.0 / (8 * (2**4 - 1) ** 2)
    cmp_e = 10.0 * 1e-26 * (2 * 1000 * 1000) * f**2
    com_e = 0.2 * 10.0 * 8010 * 4 / 3e6
    assert per_client_j3(f, q, ctx, p) == pytest.approx(quant + cmp_e + com_e, rel=1e-12)


def test_j3_requires_rate():
    p = make_params()
    with pytest.raises(ValueError):
        per_client_j3(2e8, 4, _ctx(v_rate=0.0), p)


def test_objective_decomposes_into_j3_terms():
    # J == lambda1 part + sum of j3 + (f,q)-independent upload terms
    p = make_params(eps1=1.0, eps2=0.2, v=3.0)
    queues = QueueState(lambda1=4.0, lambda2=1.5)
    rng = np.random.default_rng(0)
    u, z = 4, 8010
    w = np.full(u, 0.25)
    a = np.array([1, 1, 0, 1])
    wn = a * w / np.sum(a * w)
    g2 = rng.uniform(0.1, 1.0, u)
    s2 = rng.uniform(0.1, 1.0, u)
    theta = rng.uniform(0.2, 1.0, u)
    q_lvl = rng.integers(2, 9, u)
    f = rng.uniform(2e8, 9e8, u)
    v_rate = rng.uniform(2e6, 8e6, u)

    contexts = [ClientContext(v_rate=v_rate[i], weight_n=wn[i], theta_max=theta[i],
                              data_size=1000.0, lambda2=queues.lambda2, z_dim=z,
                              t_max=0.05, tau_e=2, gamma=1000.0, alpha=1e-26,
                              f_min=2e8, f_max=1e9, tx_power=0.2) for i in range(u)]
    energy = np.zeros(u)
    total = 0.0
    for i in range(u):
        if not a[i]:
            continue
        payload = z * q_lvl[i] + z + 32
        energy[i] = (1e-26 * contexts[i].cycles * f[i] ** 2
                     + 0.2 * payload / v_rate[i])
        total += (per_client_j3(f[i], q_lvl[i], contexts[i], p)
                  + j3_constant_terms(contexts[i], p))
    press1 = arrival_lambda1(a, w, wn, g2, s2, p)
    total += (queues.lambda1 - p.epsilon1) * press1
    direct = round_objective(queues, a, w, wn, g2, s2, theta, q_lvl, energy, z, p)
    assert direct == pytest.approx(total, rel=1e-10)


def test_arrival_lambda2_ignores_unscheduled_levels():
    p = make_params()
    # the unscheduled client's (weight 0) level must not matter, even insane ones
    a_val = arrival_lambda2([0.0, 1.0], [900, 4], [5.0, 0.5], 100, p)
    b_val = arrival_lambda2([0.0, 1.0], [1, 4], [5.0, 0.5], 100, p)
    assert a_val == b_val
