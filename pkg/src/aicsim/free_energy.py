"""Free-energy of the joint-space manipulator generative model and its gradients.

The generative model assumes the sensors read the belief directly
(``y_q = mu + z``, ``y_qd = mu' + z'``) and that the belief relaxes towards
the goal as a first-order system (``mu' = goal - mu + w``, ``mu'' = -mu' + w'``).
Under those choices the free-energy reduces to four weighted squared
prediction errors; every covariance is a scalar times the identity, so only
the scalars are stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


def as_joint_vector(values, n=None, name="vector"):
    """Coerce ``values`` to a finite 1-D float array of length ``n``."""
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ContractError(f"{name} must have at least one joint")
    if n is not None and arr.size != n:
        raise ContractError(f"{name} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")
    return arr


@dataclass
class GeneralizedBelief:
    """Belief about joint positions in generalised coordinates up to order two."""

    mu: np.ndarray
    mu_p: np.ndarray
    mu_pp: np.ndarray

    def __post_init__(self):
        self.mu = as_joint_vector(self.mu, name="mu")
        n = self.mu.size
        self.mu_p = as_joint_vector(self.mu_p, n, "mu_p")
        self.mu_pp = as_joint_vector(self.mu_pp, n, "mu_pp")

    @property
    def n(self) -> int:
        return self.mu.size

    def copy(self) -> GeneralizedBelief:
        return GeneralizedBelief(self.mu.copy(), self.mu_p.copy(), self.mu_pp.copy())


@dataclass
class SensoryReading:
    """Measured joint positions ``y_q`` and velocities ``y_qd``."""

    y_q: np.ndarray
    y_qd: np.ndarray

    def __post_init__(self):
        self.y_q = as_joint_vector(self.y_q, name="y_q")
        self.y_qd = as_joint_vector(self.y_qd, self.y_q.size, "y_qd")

    @property
    def n(self) -> int:
        return self.y_q.size


@dataclass(frozen=True)
class Precisions:
    """Variances of the four prediction-error channels.

    ``sigma_q`` and ``sigma_qd`` weight the position and velocity sensors,
    ``sigma_mu`` and ``sigma_mup`` the first- and second-order belief dynamics.
    The inverse of each value multiplies its squared error.
    """

    sigma_q: float = 1.0
    sigma_qd: float = 1.0
    sigma_mu: float = 1.0
    sigma_mup: float = 1.0

    def __post_init__(self):
        for name in ("sigma_q", "sigma_qd", "sigma_mu", "sigma_mup"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value!r}", field=name)


def _check(belief: GeneralizedBelief, reading: SensoryReading, goal=None):
    if reading.n != belief.n:
        raise ContractError(f"reading has {reading.n} joints, belief has {belief.n}")
    if goal is None:
        return None
    return as_joint_vector(goal, belief.n, "goal")


def prediction_errors(belief, reading, goal):
    """Return the four raw prediction errors (sensor q, sensor qd, dyn 0, dyn 1)."""
    goal = _check(belief, reading, goal)
    return (
        reading.y_q - belief.mu,
        reading.y_qd - belief.mu_p,
        belief.mu_p + belief.mu - goal,
        belief.mu_pp + belief.mu_p,
    )


def free_energy(belief: GeneralizedBelief, reading: SensoryReading, goal, prec: Precisions) -> float:
    """Free-energy (constant term dropped) for the given belief and reading."""
    e_q, e_qd, e_mu, e_mup = prediction_errors(belief, reading, goal)
    return 0.5 * (
        e_q @ e_q / prec.sigma_q
        + e_qd @ e_qd / prec.sigma_qd
        + e_mu @ e_mu / prec.sigma_mu
        + e_mup @ e_mup / prec.sigma_mup
    )


def grad_belief(belief: GeneralizedBelief, reading: SensoryReading, goal, prec: Precisions):
    """Gradient of the free-energy with respect to ``(mu, mu', mu'')``."""
    e_q, e_qd, e_mu, e_mup = prediction_errors(belief, reading, goal)
    w_mu = e_mu / prec.sigma_mu
    w_mup = e_mup / prec.sigma_mup
    d_mu = -e_q / prec.sigma_q + w_mu
    d_mu_p = -e_qd / prec.sigma_qd + w_mu + w_mup
    d_mu_pp = w_mup
    return d_mu, d_mu_p, d_mu_pp


def grad_sensory(belief: GeneralizedBelief, reading: SensoryReading, prec: Precisions):
    """Gradient of the free-energy with respect to ``(y_q, y_qd)``."""
    _check(belief, reading)
    return (reading.y_q - belief.mu) / prec.sigma_q, (reading.y_qd - belief.mu_p) / prec.sigma_qd
