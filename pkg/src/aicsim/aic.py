"""Active inference torque controller for joint-space regulation.

Each control tick runs two Euler-integrated gradient descents on the
free-energy: the belief moves towards the measurements and the goal, then the
torque moves so that the measurements move towards the belief.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError, check_finite
from .free_energy import (
    GeneralizedBelief,
    Precisions,
    SensoryReading,
    as_joint_vector,
    grad_belief,
    grad_sensory,
)


@dataclass(frozen=True)
class AicConfig:
    prec: Precisions = field(default_factory=Precisions)
    kappa_mu: float = 1.0
    kappa_a: float = 1.0
    dt: float = 1e-3
    # constant stand-ins for d(y)/d(u); only their sign matters
    c_q: float = 1.0
    c_qd: float = 1.0
    torque_limit: float = 85.0

    def __post_init__(self):
        if isinstance(self.prec, dict):
            object.__setattr__(self, "prec", Precisions(**self.prec))
        for name in ("kappa_mu", "kappa_a", "dt", "c_q", "c_qd", "torque_limit"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}", field=name)

    def tuning_parameters(self) -> dict[str, float]:
        """The six tuning knobs; none of them depends on the number of joints."""
        return {
            "sigma_q": self.prec.sigma_q,
            "sigma_qd": self.prec.sigma_qd,
            "sigma_mu": self.prec.sigma_mu,
            "sigma_mup": self.prec.sigma_mup,
            "kappa_mu": self.kappa_mu,
            "kappa_a": self.kappa_a,
        }

    def parameter_count(self, n: int | None = None) -> int:
        return len(self.tuning_parameters())

    def with_updates(self, **changes) -> AicConfig:
        prec_keys = {"sigma_q", "sigma_qd", "sigma_mu", "sigma_mup"}
        prec_changes = {k: changes.pop(k) for k in list(changes) if k in prec_keys}
        prec = replace(self.prec, **prec_changes) if prec_changes else self.prec
        return replace(self, prec=prec, **changes)


@dataclass
class AicState:
    belief: GeneralizedBelief
    u: np.ndarray
    goal: np.ndarray

    @property
    def n(self) -> int:
        return self.belief.n


def init(reading: SensoryReading, goal, cfg: AicConfig) -> AicState:
    """Start with the belief on the first measurement and zero torque."""
    goal = as_joint_vector(goal, reading.n, "goal")
    belief = GeneralizedBelief(reading.y_q.copy(), reading.y_qd.copy(), np.zeros(reading.n))
    return AicState(belief=belief, u=np.zeros(reading.n), goal=goal)


def set_goal(state: AicState, goal) -> None:
    """Replace the goal; belief and torque carry over."""
    state.goal = as_joint_vector(goal, state.n, "goal")


def belief_derivative(state: AicState, reading: SensoryReading, cfg: AicConfig):
    """Time derivative of ``(mu, mu', mu'')``: shift terms minus scaled gradient."""
    d_mu, d_mu_p, d_mu_pp = grad_belief(state.belief, reading, state.goal, cfg.prec)
    b = state.belief
    k = cfg.kappa_mu
    return b.mu_p - k * d_mu, b.mu_pp - k * d_mu_p, -k * d_mu_pp


def belief_step(state: AicState, reading: SensoryReading, cfg: AicConfig) -> GeneralizedBelief:
    """One Euler step of the belief update; mutates and returns ``state.belief``."""
    dmu, dmu_p, dmu_pp = belief_derivative(state, reading, cfg)
    b = state.belief
    mu = b.mu + cfg.dt * dmu
    mu_p = b.mu_p + cfg.dt * dmu_p
    mu_pp = b.mu_pp + cfg.dt * dmu_pp
    for name, values in (("mu", mu), ("mu_p", mu_p), ("mu_pp", mu_pp)):
        check_finite(values, name)
    b.mu, b.mu_p, b.mu_pp = mu, mu_p, mu_pp
    return b


def action_step(state: AicState, reading: SensoryReading, cfg: AicConfig) -> np.ndarray:
    """One Euler step of the torque update with symmetric saturation."""
    g_q, g_qd = grad_sensory(state.belief, reading, cfg.prec)
    u_dot = -cfg.kappa_a * (cfg.c_q * g_q + cfg.c_qd * g_qd)
    u = state.u + cfg.dt * u_dot
    check_finite(u, "torque")
    state.u = np.clip(u, -cfg.torque_limit, cfg.torque_limit)
    return state.u


def step(state: AicState, reading: SensoryReading, cfg: AicConfig) -> np.ndarray:
    """Belief update followed by torque update on the same reading."""
    if reading.n != state.n:
        raise ContractError(f"reading has {reading.n} joints, controller has {state.n}")
    belief_step(state, reading, cfg)
    return action_step(state, reading, cfg).copy()


class ActiveInferenceController:
    """Stateful wrapper used by the harness.

    ``step`` is an allocation-light version of the module-level functions
    (same arithmetic, no re-validation of inputs per tick).
    """

    kind = "aic"

    def __init__(self, cfg: AicConfig):
        self.cfg = cfg
        self.state: AicState | None = None

    @property
    def n_tuning_parameters(self) -> int:
        return self.cfg.parameter_count()

    def reset(self, reading: SensoryReading, goal) -> None:
        self.state = init(reading, goal, self.cfg)

    def set_goal(self, goal) -> None:
        set_goal(self.state, goal)

    def step(self, y_q: np.ndarray, y_qd: np.ndarray) -> np.ndarray:
        cfg, st = self.cfg, self.state
        p = cfg.prec
        b = st.belief
        mu, mu_p, mu_pp = b.mu, b.mu_p, b.mu_pp
        e_q = (y_q - mu) / p.sigma_q
        e_qd = (y_qd - mu_p) / p.sigma_qd
        e_mu = (mu_p + mu - st.goal) / p.sigma_mu
        e_mup = (mu_pp + mu_p) / p.sigma_mup
        k = cfg.kappa_mu
        dt = cfg.dt
        new_mu = mu + dt * (mu_p + k * (e_q - e_mu))
        new_mu_p = mu_p + dt * (mu_pp + k * (e_qd - e_mu - e_mup))
        new_mu_pp = mu_pp - (dt * k) * e_mup
        u = st.u - (dt * cfg.kappa_a) * (
            (cfg.c_q / p.sigma_q) * (y_q - new_mu) + (cfg.c_qd / p.sigma_qd) * (y_qd - new_mu_p)
        )
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(new_mu_p)):
            for name, values in (("mu", new_mu), ("mu_p", new_mu_p), ("mu_pp", new_mu_pp), ("torque", u)):
                check_finite(values, name)
        b.mu, b.mu_p, b.mu_pp = new_mu, new_mu_p, new_mu_pp
        np.clip(u, -cfg.torque_limit, cfg.torque_limit, out=u)
        st.u = u
        return u

    def free_energy(self, y_q, y_qd) -> float:
        b, p = self.state.belief, self.cfg.prec
        e_q = y_q - b.mu
        e_qd = y_qd - b.mu_p
        e_mu = b.mu_p + b.mu - self.state.goal
        e_mup = b.mu_pp + b.mu_p
        return 0.5 * float(
            e_q @ e_q / p.sigma_q + e_qd @ e_qd / p.sigma_qd + e_mu @ e_mu / p.sigma_mu + e_mup @ e_mup / p.sigma_mup
        )

    def belief_arrays(self):
        b = self.state.belief
        return b.mu, b.mu_p, b.mu_pp
