"""Model reference adaptive controller with PI adaptation of its gain matrices.

Every joint is asked to follow a critically shaped second-order reference
model ``omega^2 / (s^2 + 2 zeta omega s + omega^2)`` driven by the raw
set-point. Feedback gains ``K0``, ``K1``, feedforward gains ``Q0``, ``Q1`` and
the auxiliary signal ``f`` are each the sum of a proportional and an
integral term in the modified joint error ``qe = P2 (q_r - q) + P3 (qd_r - qd)``.
The derivative branch of the adaptation law is left out.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.linalg import expm

from .errors import ConfigError, ContractError, check_finite
from .free_energy import as_joint_vector

WEIGHT_NAMES = ("E01", "E02", "E11", "E12", "F01", "F02", "F11", "F12", "alpha1", "alpha2", "P2", "P3")

# Tuning weights per joint, in the accounting used when comparing controllers:
# proportional, integral and derivative weights for each of the five adapted
# quantities, plus the two error weights. Derivative weights stay at zero.
TUNING_PARAMETER_NAMES = (
    "E01", "E02", "E03",
    "E11", "E12", "E13",
    "F01", "F02", "F03",
    "F11", "F12", "F13",
    "alpha1", "alpha2", "alpha3",
    "P2", "P3",
)
NEGLECTED_DERIVATIVE_WEIGHTS = ("E03", "E13", "F03", "F13", "alpha3")


@dataclass(frozen=True)
class MracConfig:
    """Diagonal weights are stored as length-n vectors."""

    E01: np.ndarray
    E02: np.ndarray
    E11: np.ndarray
    E12: np.ndarray
    F01: np.ndarray
    F02: np.ndarray
    F11: np.ndarray
    F12: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    omega: np.ndarray
    zeta: float = 1.0
    dt: float = 1e-3
    torque_limit: float = 85.0
    anti_windup: bool = True

    def __post_init__(self):
        n = None
        for name in WEIGHT_NAMES + ("omega",):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.ndim != 1:
                raise ConfigError(f"{name} must be a vector", field=name)
            if n is None:
                n = arr.size
            if arr.size != n:
                raise ConfigError(f"{name} has {arr.size} entries, expected {n}", field=name)
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} has non-finite entries", field=name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.omega <= 0):
            raise ConfigError("omega entries must be positive", field="omega")
        for name in ("zeta", "dt", "torque_limit"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}", field=name)

    @classmethod
    def uniform(cls, n: int, **values) -> MracConfig:
        """Build a config by broadcasting scalar or length-n values to ``n`` joints."""
        kwargs = {}
        vector_names = set(WEIGHT_NAMES) | {"omega"}
        for f in fields(cls):
            if f.name not in values:
                continue
            v = values[f.name]
            kwargs[f.name] = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy() if f.name in vector_names else v
        missing = vector_names - kwargs.keys()
        if missing:
            raise ConfigError(f"missing MRAC weights: {sorted(missing)}", field=sorted(missing)[0])
        return cls(**kwargs)

    @property
    def n(self) -> int:
        return self.P2.size

    def tuning_parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for name in TUNING_PARAMETER_NAMES:
            out[name] = np.zeros(self.n) if name in NEGLECTED_DERIVATIVE_WEIGHTS else getattr(self, name)
        return out

    def parameter_count(self, n: int | None = None) -> int:
        return sum(v.size for v in self.tuning_parameters().values())

    def to_dict(self) -> dict:
        out = {name: getattr(self, name).tolist() for name in WEIGHT_NAMES + ("omega",)}
        out.update(zeta=self.zeta, dt=self.dt, torque_limit=self.torque_limit, anti_windup=self.anti_windup)
        return out


@dataclass
class MracState:
    acc_K0: np.ndarray
    acc_K1: np.ndarray
    acc_Q0: np.ndarray
    acc_Q1: np.ndarray
    acc_f: np.ndarray
    ref_q: np.ndarray
    ref_qd: np.ndarray
    # rows whose torque saturated on the previous tick; their integrals hold
    saturated: np.ndarray = field(default=None)

    @classmethod
    def zeros(cls, n: int, ref_q=None, ref_qd=None) -> MracState:
        z = lambda: np.zeros((n, n))  # noqa: E731
        return cls(
            acc_K0=z(), acc_K1=z(), acc_Q0=z(), acc_Q1=z(),
            acc_f=np.zeros(n),
            ref_q=np.zeros(n) if ref_q is None else as_joint_vector(ref_q, n, "ref_q").copy(),
            ref_qd=np.zeros(n) if ref_qd is None else as_joint_vector(ref_qd, n, "ref_qd").copy(),
            saturated=np.zeros(n, dtype=bool),
        )


@dataclass
class GainSet:
    K0: np.ndarray
    K1: np.ndarray
    Q0: np.ndarray
    Q1: np.ndarray
    f: np.ndarray


def modified_error(q_r, qd_r, q, qd, cfg: MracConfig) -> np.ndarray:
    return cfg.P2 * (np.asarray(q_r) - q) + cfg.P3 * (np.asarray(qd_r) - qd)


def _vectors(n, *arrays):
    return [as_joint_vector(a, n, "signal") for a in arrays]


def update_gains(state: MracState, qe, q, qd, q_r, qd_r, cfg: MracConfig) -> GainSet:
    """Advance the integral accumulators by one rectangle and return the gains."""
    qe, q, qd, q_r, qd_r = _vectors(cfg.n, qe, q, qd, q_r, qd_r)
    dt = cfg.dt
    outer = {
        "K0": np.outer(qe, q),
        "K1": np.outer(qe, qd),
        "Q0": np.outer(qe, q_r),
        "Q1": np.outer(qe, qd_r),
    }
    live = ~state.saturated if (cfg.anti_windup and state.saturated is not None) else np.ones(cfg.n, dtype=bool)
    live_col = live[:, None]
    state.acc_K0 += dt * outer["K0"] * live_col
    state.acc_K1 += dt * outer["K1"] * live_col
    state.acc_Q0 += dt * outer["Q0"] * live_col
    state.acc_Q1 += dt * outer["Q1"] * live_col
    state.acc_f += dt * qe * live
    for name in ("acc_K0", "acc_K1", "acc_Q0", "acc_Q1", "acc_f"):
        check_finite(getattr(state, name), name)
    return GainSet(
        K0=cfg.E01[:, None] * outer["K0"] + cfg.E02[:, None] * state.acc_K0,
        K1=cfg.E11[:, None] * outer["K1"] + cfg.E12[:, None] * state.acc_K1,
        Q0=cfg.F01[:, None] * outer["Q0"] + cfg.F02[:, None] * state.acc_Q0,
        Q1=cfg.F11[:, None] * outer["Q1"] + cfg.F12[:, None] * state.acc_Q1,
        f=cfg.alpha1 * qe + cfg.alpha2 * state.acc_f,
    )


def control(gains: GainSet, q, qd, q_r, qd_r, cfg: MracConfig, state: MracState | None = None) -> np.ndarray:
    """Compose feedback, feedforward and auxiliary terms, then saturate."""
    u = gains.f + gains.K0 @ q + gains.K1 @ qd + gains.Q0 @ q_r + gains.Q1 @ qd_r
    check_finite(u, "torque")
    limit = cfg.torque_limit
    if state is not None:
        state.saturated = np.abs(u) >= limit
    return np.clip(u, -limit, limit)


def discretize_reference(cfg: MracConfig):
    """Exact zero-order-hold discretisation of every joint's reference model."""
    n = cfg.n
    Ad = np.empty((n, 2, 2))
    Bd = np.empty((n, 2))
    for i in range(n):
        w = cfg.omega[i]
        aug = np.zeros((3, 3))
        aug[0, 1] = 1.0
        aug[1, 0] = -w * w
        aug[1, 1] = -2.0 * cfg.zeta * w
        aug[1, 2] = w * w
        phi = expm(aug * cfg.dt)
        Ad[i] = phi[:2, :2]
        Bd[i] = phi[:2, 2]
    return Ad, Bd


def reference_model_step(state: MracState, q_cmd, cfg: MracConfig, discretization=None):
    """Advance the reference model by ``cfg.dt`` with ``q_cmd`` held constant."""
    Ad, Bd = discretization if discretization is not None else discretize_reference(cfg)
    q_cmd = as_joint_vector(q_cmd, cfg.n, "q_cmd")
    r, rd = state.ref_q, state.ref_qd
    new_r = Ad[:, 0, 0] * r + Ad[:, 0, 1] * rd + Bd[:, 0] * q_cmd
    new_rd = Ad[:, 1, 0] * r + Ad[:, 1, 1] * rd + Bd[:, 1] * q_cmd
    state.ref_q, state.ref_qd = new_r, new_rd
    return new_r, new_rd


class ModelReferenceAdaptiveController:
    """Stateful wrapper: reference model, gain adaptation and control per tick."""

    kind = "mrac"

    def __init__(self, cfg: MracConfig):
        self.cfg = cfg
        self._disc = discretize_reference(cfg)
        self.state: MracState | None = None
        self.goal: np.ndarray | None = None
        self.gains: GainSet | None = None

    @property
    def n_tuning_parameters(self) -> int:
        return self.cfg.parameter_count()

    def reset(self, reading, goal) -> None:
        n = self.cfg.n
        if reading.n != n:
            raise ContractError(f"reading has {reading.n} joints, MRAC configured for {n}")
        # reference starts at rest at the measured pose
        self.state = MracState.zeros(n, ref_q=reading.y_q)
        self.goal = as_joint_vector(goal, n, "goal")

    def set_goal(self, goal) -> None:
        self.goal = as_joint_vector(goal, self.cfg.n, "goal")

    def step(self, y_q: np.ndarray, y_qd: np.ndarray) -> np.ndarray:
        st, cfg = self.state, self.cfg
        q_r, qd_r = reference_model_step(st, self.goal, cfg, self._disc)
        qe = modified_error(q_r, qd_r, y_q, y_qd, cfg)
        self.gains = update_gains(st, qe, y_q, y_qd, q_r, qd_r, cfg)
        return control(self.gains, y_q, y_qd, q_r, qd_r, cfg, st)
