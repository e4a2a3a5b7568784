"""Rigid-body plants for closed-loop tests.

Two families:

* ``PlanarArmModel`` -- serial n-link arm moving in a vertical plane, full
  Lagrangian dynamics. Joint angles are relative; the absolute angle of link
  ``i`` is ``theta_i = q_0 + ... + q_i`` measured from the downward vertical,
  so ``q = 0`` is the hanging equilibrium.
* ``DecoupledArmModel`` -- independent joints (inertia, viscous damping,
  constant bias torque); cheap enough for large-n timing runs.

Both expose ``mass_matrix``, ``coriolis``, ``gravity_torque`` and
``bias_forces`` so the integrator does not care which one it is driving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, SimulationError, check_finite
from .free_energy import SensoryReading, as_joint_vector

GRAVITY = 9.81
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class Link:
    mass: float
    length: float
    com: float
    inertia: float

    def __post_init__(self):
        for name in ("mass", "length", "inertia"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"link {name} must be positive", field=name)
        if not 0 <= self.com <= self.length:
            raise ConfigError("link com must lie on the link", field="com")

    @classmethod
    def cuboid(cls, mass: float, length: float, com: float | None = None) -> Link:
        """Slender bar with centroidal inertia m l^2 / 12."""
        return cls(mass, length, length / 2 if com is None else com, mass * length**2 / 12.0)


@dataclass(frozen=True)
class PlanarArmModel:
    links: tuple[Link, ...]
    gravity: float = GRAVITY
    damping: tuple[float, ...] | None = None
    payload_mass: float = 0.0
    gravity_compensated: bool = False

    def __post_init__(self):
        links = tuple(Link(**l) if isinstance(l, dict) else l for l in self.links)
        if not links:
            raise ConfigError("arm needs at least one link", field="links")
        object.__setattr__(self, "links", links)
        n = len(links)
        damping = np.zeros(n) if self.damping is None else np.broadcast_to(np.asarray(self.damping, float), (n,))
        if np.any(damping < 0):
            raise ConfigError("damping must be non-negative", field="damping")
        object.__setattr__(self, "damping", tuple(float(d) for d in damping))
        if self.payload_mass < 0:
            raise ConfigError("payload mass must be non-negative", field="payload_mass")
        if self.gravity < 0:
            raise ConfigError("gravity must be non-negative", field="gravity")
        self._cache_constants()

    def _cache_constants(self):
        n = self.n
        m = np.array([l.mass for l in self.links])
        lengths = np.array([l.length for l in self.links])
        com = np.array([l.com for l in self.links])
        # lever[i, j]: distance along link j that moves body i
        lever = np.tril(np.broadcast_to(lengths, (n, n)), -1) + np.diag(com)
        B_links = lever.T @ (m[:, None] * lever)
        h_links = m @ lever
        B_payload = self.payload_mass * np.outer(lengths, lengths)
        h_payload = self.payload_mass * lengths
        object.__setattr__(self, "_B", B_links + B_payload)
        object.__setattr__(self, "_h_links", h_links)
        object.__setattr__(self, "_h_payload", h_payload)
        object.__setattr__(self, "_I", np.array([l.inertia for l in self.links]))
        object.__setattr__(self, "_S", np.tril(np.ones((n, n))))
        object.__setattr__(self, "_D", np.array(self.damping))
        object.__setattr__(self, "_h_all", h_links + h_payload)
        object.__setattr__(self, "_diag", np.diag_indices(n))
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_B_list", self._B.tolist())
        object.__setattr__(self, "_I_list", self._I.tolist())
        object.__setattr__(self, "_D_list", self._D.tolist())
        object.__setattr__(self, "_h_all_list", self._h_all.tolist())
        object.__setattr__(self, "_h_payload_list", h_payload.tolist())

    @property
    def n(self) -> int:
        return len(self.links)

    @property
    def masses(self) -> np.ndarray:
        return np.array([l.mass for l in self.links])

    def _theta(self, q):
        return np.cumsum(q)

    def mass_matrix(self, q) -> np.ndarray:
        th = self._theta(q)
        Mth = self._B * np.cos(th[:, None] - th[None, :]) + np.diag(self._I)
        S = self._S
        return S.T @ Mth @ S

    def mass_matrix_derivatives(self, q) -> np.ndarray:
        """Array ``dM[k] = dM/dq_k`` of shape (n, n, n)."""
        n = self.n
        th = self._theta(q)
        delta = th[:, None] - th[None, :]
        base = -self._B * np.sin(delta)
        S = self._S
        # theta_p depends on q_k for p >= k
        H = (np.arange(n)[None, :] >= np.arange(n)[:, None]).astype(float)
        dM = np.empty((n, n, n))
        for k in range(n):
            dMth = base * (H[k][:, None] - H[k][None, :])
            dM[k] = S.T @ dMth @ S
        return dM

    def christoffel(self, q) -> np.ndarray:
        """Christoffel symbols of the first kind, ``G[i, j, k]``."""
        dM = self.mass_matrix_derivatives(q)
        # dM[k][i, j] = dM_ij / dq_k
        d = np.transpose(dM, (1, 2, 0))  # d[i, j, k] = dM_ij/dq_k
        return 0.5 * (d + np.transpose(d, (0, 2, 1)) - np.transpose(d, (2, 0, 1)))

    def coriolis(self, q, qd) -> np.ndarray:
        return np.einsum("ijk,k->ij", self.christoffel(q), qd)

    def coriolis_vector(self, q, qd) -> np.ndarray:
        """``C(q, qd) @ qd`` in closed form (no Christoffel tensor)."""
        th = self._theta(q)
        thd = np.cumsum(qd)
        c_abs = (self._B * np.sin(th[:, None] - th[None, :])) @ (thd * thd)
        return self._S.T @ c_abs

    def gravity_torque(self, q, include_payload: bool = True) -> np.ndarray:
        h = self._h_links + self._h_payload if include_payload else self._h_links
        return self._S.T @ (self.gravity * h * np.sin(self._theta(q)))

    def plant_gravity(self, q) -> np.ndarray:
        """Gravity the actuators actually see.

        Compensation cancels the arm's own link weights only; an attached
        payload is unknown to it and still loads the joints.
        """
        if self.gravity_compensated:
            return self.gravity * (self._S.T @ (self._h_payload * np.sin(self._theta(q))))
        return self.gravity_torque(q)

    def bias_forces(self, q, qd) -> np.ndarray:
        return self.coriolis_vector(q, qd) + self.plant_gravity(q) + self._D * qd

    def accel(self, q, qd, tau) -> np.ndarray:
        """Forward dynamics with shared trigonometry; the integrator's hot path."""
        if self._n == 2:
            return self._accel2(q, qd, tau)
        th = np.cumsum(q)
        thd = np.cumsum(qd)
        delta = th[:, None] - th[None, :]
        Bc = self._B * np.cos(delta)
        Bc[self._diag] += self._I
        h = self._h_payload if self.gravity_compensated else self._h_all
        gen = (self._B * np.sin(delta)) @ (thd * thd) + self.gravity * h * np.sin(th)
        S = self._S
        rhs = tau - self._D * qd - S.T @ gen
        M = S.T @ Bc @ S
        return np.linalg.solve(M, rhs)

    def _accel2(self, q, qd, tau):
        # two-link case in scalars; numpy call overhead dominates at this size
        (B11, B12), (_, B22) = self._B_list
        I1, I2 = self._I_list
        q1, q2 = float(q[0]), float(q[1])
        w1 = float(qd[0])
        w2 = w1 + float(qd[1])
        th2 = q1 + q2
        c, s = math.cos(q2), math.sin(q2)
        a = B11 + I1
        d = B22 + I2
        bc = B12 * c
        # absolute-angle inertia [[a, bc], [bc, d]] mapped to relative joints
        m11 = a + 2 * bc + d
        m12 = bc + d
        m22 = d
        h1, h2 = self._h_payload_list if self.gravity_compensated else self._h_all_list
        g = self.gravity
        # generalized bias in absolute angles (second link leads the first by q2)
        gen1 = -B12 * s * w2 * w2 + g * h1 * math.sin(q1)
        gen2 = B12 * s * w1 * w1 + g * h2 * math.sin(th2)
        D1, D2 = self._D_list
        r1 = float(tau[0]) - D1 * float(qd[0]) - (gen1 + gen2)
        r2 = float(tau[1]) - D2 * float(qd[1]) - gen2
        det = m11 * m22 - m12 * m12
        return np.array([(m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det])

    def potential_energy(self, q) -> float:
        h = self._h_links + self._h_payload
        return float(-self.gravity * h @ np.cos(self._theta(q)))

    def kinetic_energy(self, q, qd) -> float:
        return float(0.5 * qd @ self.mass_matrix(q) @ qd)

    def tip_position(self, q) -> np.ndarray:
        th = self._theta(q)
        lengths = np.array([l.length for l in self.links])
        return np.array([lengths @ np.sin(th), -lengths @ np.cos(th)])


@dataclass(frozen=True)
class DecoupledArmModel:
    """Independent joints: ``J qdd = tau - d qd - bias``."""

    inertia: tuple[float, ...]
    damping: tuple[float, ...] | None = None
    bias: tuple[float, ...] | None = None
    payload_mass: float = 0.0
    gravity_compensated: bool = False

    def __post_init__(self):
        J = np.asarray(self.inertia, float).reshape(-1)
        if J.size == 0 or np.any(J <= 0):
            raise ConfigError("inertia entries must be positive", field="inertia")
        n = J.size
        d = np.zeros(n) if self.damping is None else np.broadcast_to(np.asarray(self.damping, float), (n,))
        b = np.zeros(n) if self.bias is None else np.broadcast_to(np.asarray(self.bias, float), (n,))
        if np.any(d < 0):
            raise ConfigError("damping must be non-negative", field="damping")
        object.__setattr__(self, "inertia", tuple(J.tolist()))
        object.__setattr__(self, "damping", tuple(d.tolist()))
        object.__setattr__(self, "bias", tuple(b.tolist()))
        object.__setattr__(self, "_J", J)
        object.__setattr__(self, "_D", d.copy())
        object.__setattr__(self, "_b", b.copy())

    @classmethod
    def uniform(cls, n: int, inertia=0.5, damping=0.5, bias=2.0) -> DecoupledArmModel:
        return cls(inertia=(inertia,) * n, damping=(damping,) * n, bias=(bias,) * n)

    @property
    def n(self) -> int:
        return len(self.inertia)

    @property
    def gravity(self) -> float:
        return 0.0 if self.gravity_compensated else 1.0

    def mass_matrix(self, q) -> np.ndarray:
        return np.diag(self._J)

    def coriolis(self, q, qd) -> np.ndarray:
        return np.zeros((self.n, self.n))

    def coriolis_vector(self, q, qd) -> np.ndarray:
        return np.zeros(self.n)

    def gravity_torque(self, q) -> np.ndarray:
        return self._b.copy()

    def plant_gravity(self, q) -> np.ndarray:
        return np.zeros(self.n) if self.gravity_compensated else self._b

    def bias_forces(self, q, qd) -> np.ndarray:
        return self.plant_gravity(q) + self._D * qd

    def accel(self, q, qd, tau) -> np.ndarray:
        return (tau - self.bias_forces(q, qd)) / self._J

    def kinetic_energy(self, q, qd) -> float:
        return float(0.5 * qd @ (self._J * qd))

    def potential_energy(self, q) -> float:
        return 0.0 if self.gravity_compensated else float(self._b @ q)


def mass_matrix(model, q) -> np.ndarray:
    return model.mass_matrix(as_joint_vector(q, model.n, "q"))


def coriolis(model, q, qd) -> np.ndarray:
    return model.coriolis(as_joint_vector(q, model.n, "q"), as_joint_vector(qd, model.n, "qd"))


def gravity_torque(model, q) -> np.ndarray:
    return model.gravity_torque(as_joint_vector(q, model.n, "q"))


@dataclass
class PlantState:
    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.array(self.q, dtype=float).reshape(-1)
        self.qd = np.array(self.qd, dtype=float).reshape(-1)
        if self.q.shape != self.qd.shape:
            raise ConfigError("q and qd must have equal length", field="qd")

    def copy(self) -> PlantState:
        return PlantState(self.q.copy(), self.qd.copy(), self.t)


def _accel(model, q, qd, tau):
    return model.accel(q, qd, tau)


def forward_dynamics(model, state: PlantState, tau, tau_ext=None) -> np.ndarray:
    """Joint accelerations for applied torque ``tau`` plus any external torque."""
    tau = as_joint_vector(tau, model.n, "tau")
    if tau_ext is not None:
        tau = tau + tau_ext
    M = model.mass_matrix(state.q)
    if np.linalg.cond(M) > MAX_CONDITION:
        raise SimulationError(f"mass matrix ill-conditioned at q={state.q}")
    return np.linalg.solve(M, tau - model.bias_forces(state.q, state.qd))


def inverse_dynamics(model, q, qd, qdd) -> np.ndarray:
    """Torque producing ``qdd``; the independent route used to check the forward map."""
    return model.mass_matrix(q) @ qdd + model.coriolis(q, qd) @ qd + model.plant_gravity(q) + np.asarray(model._D) * qd


def rk4_step(model, state: PlantState, tau, h: float, tau_ext=None) -> PlantState:
    """Classic fourth-order Runge-Kutta with torque held over the step."""
    if not h > 0:
        raise ConfigError("step size must be positive", field="h")
    tau = np.asarray(tau, dtype=float)
    if tau_ext is not None:
        tau = tau + tau_ext
    q, qd = state.q, state.qd
    k1q, k1v = qd, _accel(model, q, qd, tau)
    k2q = qd + 0.5 * h * k1v
    k2v = _accel(model, q + 0.5 * h * k1q, k2q, tau)
    k3q = qd + 0.5 * h * k2v
    k3v = _accel(model, q + 0.5 * h * k2q, k3q, tau)
    k4q = qd + h * k3v
    k4v = _accel(model, q + h * k3q, k4q, tau)
    q_new = q + (h / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
    qd_new = qd + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    check_finite(q_new, "q")
    check_finite(qd_new, "qd")
    return PlantState(q_new, qd_new, state.t + h)


@dataclass(frozen=True)
class SensorNoise:
    std_q: float = 0.0
    std_qd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.std_q < 0 or self.std_qd < 0:
            raise ConfigError("noise standard deviations must be non-negative", field="std_q")


class Sensor:
    """Seeded Gaussian position/velocity sensor."""

    def __init__(self, noise: SensorNoise):
        self.noise = noise
        self.rng = np.random.default_rng(noise.seed)

    def read_arrays(self, state: PlantState):
        n = state.q.size
        y_q = state.q + self.noise.std_q * self.rng.standard_normal(n)
        y_qd = state.qd + self.noise.std_qd * self.rng.standard_normal(n)
        return y_q, y_qd

    def read(self, state: PlantState) -> SensoryReading:
        return SensoryReading(*self.read_arrays(state))


def sense(state: PlantState, noise: SensorNoise | Sensor) -> SensoryReading:
    """Noisy reading of ``state``; pass a ``Sensor`` to continue its stream."""
    sensor = noise if isinstance(noise, Sensor) else Sensor(noise)
    return sensor.read(state)


def perturb_masses(model: PlanarArmModel, fraction: float, seed: int) -> PlanarArmModel:
    """Scale each link mass by an independent factor in [1 - fraction, 1 + fraction].

    Link geometry is kept, so rotational inertia scales with the mass.
    """
    if not 0 <= fraction < 1:
        raise ConfigError("mass perturbation fraction must be in [0, 1)", field="fraction")
    if fraction == 0:
        return model
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1 - fraction, 1 + fraction, size=model.n)
    links = tuple(replace(l, mass=l.mass * f, inertia=l.inertia * f) for l, f in zip(model.links, factors))
    return replace(model, links=links)


def apply_payload(model, mass: float):
    if mass < 0:
        raise ConfigError("payload mass must be non-negative", field="payload_mass")
    return replace(model, payload_mass=float(mass))


@dataclass(frozen=True)
class PushEvent:
    """Rectangular external torque pulse."""

    t: float
    duration: float
    torque: tuple[float, ...]

    kind = "push"

    def torque_at(self, t: float, n: int):
        if self.t <= t < self.t + self.duration:
            return np.broadcast_to(np.asarray(self.torque, float), (n,))
        return None


@dataclass(frozen=True)
class PayloadEvent:
    t: float
    mass: float

    kind = "payload"

    def __post_init__(self):
        if self.mass < 0:
            raise ConfigError("payload mass must be non-negative", field="mass")


def schedule_event(events: list, event) -> list:
    """Insert ``event`` keeping the list ordered by start time."""
    if event.t < 0:
        raise ConfigError("event time must be non-negative", field="t")
    out = list(events) + [event]
    out.sort(key=lambda e: e.t)
    return out


@dataclass
class Plant:
    """A model, its state and its scheduled events, stepped at a fixed rate."""

    model: object
    state: PlantState
    events: list = field(default_factory=list)

    def __post_init__(self):
        self._pending_payload = sorted((e for e in self.events if e.kind == "payload"), key=lambda e: e.t)
        self._pushes = [e for e in self.events if e.kind == "push"]

    def external_torque(self, t: float):
        total = None
        for push in self._pushes:
            tq = push.torque_at(t, self.model.n)
            if tq is not None:
                total = tq.copy() if total is None else total + tq
        return total

    def apply_due_events(self, t: float, eps: float = 1e-9) -> None:
        while self._pending_payload and self._pending_payload[0].t <= t + eps:
            ev = self._pending_payload.pop(0)
            self.model = apply_payload(self.model, ev.mass)

    def advance(self, tau, h: float) -> PlantState:
        self.state = rk4_step(self.model, self.state, tau, h, self.external_torque(self.state.t))
        return self.state
