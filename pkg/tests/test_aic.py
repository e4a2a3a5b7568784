import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aicsim import aic
from aicsim.aic import ActiveInferenceController, AicConfig, AicState
from aicsim.errors import ConfigError, ContractError, DivergenceError
from aicsim.experiments import PICK_PLACE_SETPOINTS, aic_preset, nominal_2link
from aicsim.free_energy import GeneralizedBelief, Precisions, SensoryReading, free_energy
from aicsim.harness import Scenario, run
from aicsim.plant import SensorNoise

Q_A, Q_B = PICK_PLACE_SETPOINTS["A"], PICK_PLACE_SETPOINTS["B"]


def make_state(mu, mu_p, mu_pp, u, goal):
    return AicState(GeneralizedBelief(mu, mu_p, mu_pp), np.array(u, float), np.array(goal, float))


def test_init_copies_reading():
    cfg = AicConfig()
    s = aic.init(SensoryReading([0.1], [0.0]), [1.0], cfg)
    assert s.belief.mu.tolist() == [0.1]
    assert s.belief.mu_p.tolist() == [0.0]
    assert s.belief.mu_pp.tolist() == [0.0]
    assert s.u.tolist() == [0.0]

    s = aic.init(SensoryReading(np.zeros(3), np.zeros(3)), np.zeros(3), cfg)
    for arr in (s.belief.mu, s.belief.mu_p, s.belief.mu_pp, s.u, s.goal):
        assert not arr.any()

    reading = SensoryReading(Q_B.copy(), np.zeros(7))
    s = aic.init(reading, Q_A, cfg)
    np.testing.assert_array_equal(s.belief.mu, Q_B)
    reading.y_q[0] = 99.0
    assert s.belief.mu[0] == Q_B[0]


def test_belief_step_hand_example():
    cfg = AicConfig(kappa_mu=1.0, dt=1e-3)
    s = make_state([0.0], [0.0], [0.0], [0.0], [0.0])
    r = SensoryReading([1.0], [0.0])
    dmu, _, _ = aic.belief_derivative(s, r, cfg)
    assert dmu.tolist() == [1.0]
    aic.belief_step(s, r, cfg)
    assert s.belief.mu[0] == pytest.approx(0.001, abs=1e-15)


def test_action_step_hand_example():
    cfg = AicConfig(kappa_a=100.0, dt=1e-3, c_q=1.0)
    s = make_state([0.5], [0.0], [0.0], [0.0], [0.5])
    r = SensoryReading([0.0], [0.0])
    u = aic.action_step(s, r, cfg)
    assert u[0] == pytest.approx(0.05, abs=1e-15)


def test_action_step_unchanged_without_error():
    cfg = AicConfig(kappa_a=500.0)
    s = make_state([0.3, -1], [0.2, 0.1], [0, 0], [4.0, -2.0], [0, 0])
    u = aic.action_step(s, SensoryReading([0.3, -1], [0.2, 0.1]), cfg)
    assert u.tolist() == [4.0, -2.0]


def test_action_step_clamps():
    cfg = AicConfig(kappa_a=1e6, torque_limit=85.0)
    s = make_state([0.0, 0.0], [0.0, 0.0], [0, 0], [84.0, -84.0], [0, 0])
    u = aic.action_step(s, SensoryReading([-5.0, 5.0], [0.0, 0.0]), cfg)
    assert u.tolist() == [85.0, -85.0]


def test_step_composes_substeps():
    # init at y_q = 0.1 with goal 1, then one tick with kappa_mu = 1, kappa_a = 100
    cfg = AicConfig(kappa_mu=1.0, kappa_a=100.0, dt=1e-3)
    r = SensoryReading([0.1], [0.0])
    s = aic.init(r, [1.0], cfg)
    u = aic.step(s, r, cfg)
    # mu' = mu_p - k*(-(y-mu) + (mu_p + mu - goal)) = 0.9 ; mu_p' = 0.9
    assert s.belief.mu[0] == pytest.approx(0.1009, abs=1e-15)
    assert s.belief.mu_p[0] == pytest.approx(0.0009, abs=1e-15)
    assert s.belief.mu_pp[0] == 0.0
    # u' = -100 * ((0.1 - 0.1009) + (0 - 0.0009)) = 0.18
    assert u[0] == pytest.approx(0.00018, abs=1e-15)


def test_fixed_point_is_exact():
    goal = np.array([0.37, -1.1, 2.5])
    cfg = aic_preset("aic_sim")
    s = make_state(goal.copy(), np.zeros(3), np.zeros(3), [3.0, -1.0, 0.5], goal)
    u = aic.step(s, SensoryReading(goal.copy(), np.zeros(3)), cfg)
    np.testing.assert_array_equal(s.belief.mu, goal)
    assert not s.belief.mu_p.any() and not s.belief.mu_pp.any()
    assert u.tolist() == [3.0, -1.0, 0.5]


def test_set_goal_last_write_wins():
    s = aic.init(SensoryReading(np.zeros(7), np.zeros(7)), np.zeros(7), AicConfig())
    aic.set_goal(s, Q_A)
    np.testing.assert_array_equal(s.goal, Q_A)
    aic.set_goal(s, Q_B)
    np.testing.assert_array_equal(s.goal, Q_B)
    with pytest.raises(ContractError):
        aic.set_goal(s, [1.0, 2.0])


def test_wrong_reading_size():
    cfg = AicConfig()
    s = aic.init(SensoryReading([0.0, 0.0], [0.0, 0.0]), [0.0, 0.0], cfg)
    with pytest.raises(ContractError):
        aic.step(s, SensoryReading([0.0], [0.0]), cfg)


def test_divergence_names_joint():
    cfg = AicConfig(kappa_mu=1e300, dt=1.0)
    s = make_state([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            aic.belief_step(s, SensoryReading([0.0, 1e10], [0.0, 0.0]), cfg)
    assert exc.value.joint == 1


@pytest.mark.parametrize("field", ["kappa_mu", "kappa_a", "dt", "c_q", "c_qd", "torque_limit"])
def test_config_rejects_nonpositive(field):
    with pytest.raises(ConfigError):
        AicConfig(**{field: 0.0})


def test_six_parameters_for_any_n():
    cfg = aic_preset("aic_real")
    assert cfg.parameter_count() == 6
    assert all(cfg.parameter_count(n) == 6 for n in (1, 2, 7, 64))
    assert set(cfg.tuning_parameters()) == {"sigma_q", "sigma_qd", "sigma_mu", "sigma_mup", "kappa_mu", "kappa_a"}


def test_with_updates_routes_precisions():
    cfg = AicConfig().with_updates(sigma_q=0.5, kappa_a=30.0)
    assert cfg.prec.sigma_q == 0.5 and cfg.prec.sigma_mu == 1.0 and cfg.kappa_a == 30.0


def test_static_belief_converges():
    # actions disabled, arm held still at q*: belief starts off and relaxes onto the reading
    cfg = aic_preset("aic_sim")
    q_star = np.array([0.5, -2.0])
    s = make_state([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], q_star)
    r = SensoryReading(q_star, np.zeros(2))
    dist = []
    for _ in range(2000):
        aic.belief_step(s, r, cfg)
        dist.append(np.linalg.norm(s.belief.mu - r.y_q))
    dist = np.array(dist)
    tail = dist[200:]
    assert np.all(np.diff(tail) <= 1e-15)
    assert dist[-1] < 1e-3 < dist[0]


# ------------------------------------------------------------ fast path


def test_controller_matches_module_functions(rng):
    cfg = AicConfig(Precisions(0.7, 1.3, 0.9, 2.0), kappa_mu=15.0, kappa_a=120.0, c_q=1.0, c_qd=0.5, torque_limit=3.0)
    n = 4
    r0 = SensoryReading(rng.normal(size=n), rng.normal(size=n))
    goal = rng.normal(size=n)
    ref = aic.init(r0, goal, cfg)
    ctrl = ActiveInferenceController(cfg)
    ctrl.reset(r0, goal)
    for k in range(500):
        if k == 250:
            goal = rng.normal(size=n)
            aic.set_goal(ref, goal)
            ctrl.set_goal(goal)
        y_q, y_qd = rng.normal(size=n), rng.normal(size=n)
        u_ref = aic.step(ref, SensoryReading(y_q, y_qd), cfg)
        u = ctrl.step(y_q, y_qd)
        np.testing.assert_allclose(u, u_ref, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ctrl.state.belief.mu, ref.belief.mu, rtol=1e-12, atol=1e-12)
        assert ctrl.free_energy(y_q, y_qd) == pytest.approx(
            free_energy(ref.belief, SensoryReading(y_q, y_qd), goal, cfg.prec), rel=1e-12
        )


# ------------------------------------------------------------ properties

vals = st.floats(-5, 5, allow_nan=False)


@st.composite
def aic_problems(draw):
    n = draw(st.integers(1, 6))
    vec = st.lists(vals, min_size=n, max_size=n).map(np.array)
    cfg = AicConfig(
        Precisions(*(draw(st.floats(0.1, 5)) for _ in range(4))),
        kappa_mu=draw(st.floats(0.1, 50)),
        kappa_a=draw(st.floats(0.1, 500)),
        c_q=draw(st.floats(0.1, 2)),
        c_qd=draw(st.floats(0.1, 2)),
    )
    state = make_state(draw(vec), draw(vec), draw(vec), draw(vec), draw(vec))
    reading = SensoryReading(draw(vec), draw(vec))
    return cfg, state, reading


@given(aic_problems())
def test_torque_increment_bound(p):
    cfg, s, r = p
    u0 = s.u.copy()
    u = aic.step(s, r, cfg)
    b = s.belief
    bound = cfg.kappa_a * cfg.dt * (
        cfg.c_q / cfg.prec.sigma_q * np.max(np.abs(r.y_q - b.mu)) + cfg.c_qd / cfg.prec.sigma_qd * np.max(np.abs(r.y_qd - b.mu_p))
    )
    assert np.max(np.abs(u - u0)) <= bound * (1 + 1e-12) + 1e-15
    assert np.all(np.abs(u) <= cfg.torque_limit)


@given(aic_problems(), st.randoms(use_true_random=False))
def test_permutation_equivariance(p, rnd):
    cfg, s, r = p
    perm = list(range(s.n))
    rnd.shuffle(perm)
    b = s.belief
    sp = make_state(b.mu[perm], b.mu_p[perm], b.mu_pp[perm], s.u[perm], s.goal[perm])
    u = aic.step(s, r, cfg)
    up = aic.step(sp, SensoryReading(r.y_q[perm], r.y_qd[perm]), cfg)
    np.testing.assert_array_equal(up, u[perm])


@given(aic_problems(), st.data())
def test_joints_are_decoupled(p, data):
    cfg, s, r = p
    if s.n < 2:
        return
    j = data.draw(st.integers(0, s.n - 1))
    s2 = make_state(s.belief.mu, s.belief.mu_p, s.belief.mu_pp, s.u, s.goal)
    r2 = SensoryReading(r.y_q.copy(), r.y_qd.copy())
    r2.y_q[j] += 1.0
    r2.y_qd[j] -= 0.5
    s2.goal[j] += 0.3
    s2.belief.mu_pp[j] += 0.2
    u = aic.step(s, r, cfg)
    u2 = aic.step(s2, r2, cfg)
    others = np.arange(s.n) != j
    np.testing.assert_array_equal(u[others], u2[others])


def test_goal_switch_keeps_torque_continuous():
    cfg = aic_preset("aic_sim")
    j = [1, 3]
    sc = Scenario(
        plant=nominal_2link(),
        controller="aic",
        controller_config=cfg,
        schedule=[(0.0, Q_B[j]), (1.0, Q_A[j])],
        duration=2.0,
        noise=SensorNoise(1e-3, 1e-2, 3),
        initial_q=Q_B[j],
    )
    log = run(sc, wall_clock=False)
    du = np.abs(np.diff(log.u, axis=0))
    p = cfg.prec
    bound = cfg.kappa_a * cfg.dt * (
        cfg.c_q / p.sigma_q * np.abs(log.y_q[1:] - log.mu[1:]) + cfg.c_qd / p.sigma_qd * np.abs(log.y_qd[1:] - log.mu_p[1:])
    )
    assert np.all(du <= bound * (1 + 1e-9) + 1e-12)
    k = 1000
    assert np.max(du[k - 5 : k + 5]) < 0.05
