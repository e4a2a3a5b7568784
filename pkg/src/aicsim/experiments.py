"""Pick-and-place experiments, plant fixtures and tuned controller presets.

The set-points are 7-DOF joint vectors; planar plants with fewer joints use
the entries listed in ``joints`` (by default the two pitch joints, shoulder
and elbow, that move in the vertical plane).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .aic import AicConfig
from .free_energy import Precisions
from .harness import Scenario, compute_metrics, run, timing_summary, torque_jitter
from .mrac import MracConfig
from .plant import DecoupledArmModel, Link, PayloadEvent, PlanarArmModel, SensorNoise, perturb_masses

PICK_PLACE_SETPOINTS = {
    "A": np.array([1.0, 0.5, 0.0, -2.0, 0.0, 2.5, 0.0]),
    "B": np.array([0.0, 0.2, 0.0, -1.0, 0.0, 1.2, 0.0]),
    "C": np.array([-1.0, 0.5, 0.0, -1.2, 0.0, 1.6, 0.0]),
}
PICK_PLACE_SEQUENCE = ("A", "B", "C", "B", "A")
SETPOINT_SPACING = 6.0
CYCLE_DURATION = 30.0
DEFAULT_JOINTS = (1, 3)

TORQUE_LIMIT = 85.0
MASS_UNCERTAINTY = 0.2
TUNING_MASS_SEED = 7
END_EFFECTOR_MASS = 0.7
LIGHT_PAYLOAD = 0.1
HEAVY_PAYLOAD = 0.7
RELEASE_TIME = 16.0


def default_noise(seed: int = 0) -> SensorNoise:
    return SensorNoise(std_q=1e-3, std_qd=1e-2, seed=seed)


# ----------------------------------------------------------------- plants
# Fixture geometry for the planar surrogate: upper arm and forearm as
# slender bars, roughly the size of a collaborative arm's pitch links.


def nominal_2link() -> PlanarArmModel:
    return PlanarArmModel(links=(Link.cuboid(3.0, 0.33), Link.cuboid(2.5, 0.39)), damping=(0.3, 0.3))


def nominal_planar(n: int) -> PlanarArmModel:
    masses = np.linspace(3.0, 1.0, n)
    lengths = np.linspace(0.33, 0.15, n)
    return PlanarArmModel(links=tuple(Link.cuboid(m, l) for m, l in zip(masses, lengths)), damping=(0.3,) * n)


def tuning_plant(nominal: PlanarArmModel | None = None) -> PlanarArmModel:
    """Plant the presets were tuned on: masses off by up to 20 %, gravity acting."""
    nominal = nominal or nominal_2link()
    return perturb_masses(replace(nominal, gravity_compensated=False), MASS_UNCERTAINTY, TUNING_MASS_SEED)


def deployment_plant(nominal: PlanarArmModel | None = None, payload: float = END_EFFECTOR_MASS) -> PlanarArmModel:
    """Stand-in for the physical robot: true masses, firmware gravity compensation, tool attached."""
    nominal = nominal or nominal_2link()
    return replace(nominal, gravity_compensated=True, payload_mass=payload)


PLANT_PRESETS = {
    "nominal_2link": nominal_2link,
    "tuning_2link": tuning_plant,
    "deployment_2link": deployment_plant,
}


# ---------------------------------------------------------------- presets
# AIC presets come from the four-step procedure run on the tuning plant:
# unit variances; belief rate raised until a static estimate converges in
# well under a second; action rate raised until the set-points are reached.
# The "real" variant is the retune for the deployment plant: slower torque
# update and more trust in the measurements.

AIC_PRESETS = {
    "aic_sim": AicConfig(prec=Precisions(1.0, 1.0, 1.0, 1.0), kappa_mu=20.0, kappa_a=200.0, torque_limit=TORQUE_LIMIT),
    "aic_real": AicConfig(prec=Precisions(0.5, 0.5, 1.0, 1.0), kappa_mu=20.0, kappa_a=100.0, torque_limit=TORQUE_LIMIT),
}

# Per-joint MRAC weights, broadcast to every joint.
MRAC_PRESETS = {
    "mrac_sim": dict(
        E01=2.0, E02=10.0, E11=2.0, E12=10.0, F01=2.0, F02=10.0, F11=2.0, F12=10.0,
        alpha1=40.0, alpha2=300.0, P2=1.0, P3=0.08, omega=4.0, zeta=1.0, torque_limit=TORQUE_LIMIT,
    ),
    "mrac_real": dict(
        E01=2.0, E02=10.0, E11=2.0, E12=10.0, F01=2.0, F02=10.0, F11=2.0, F12=10.0,
        alpha1=80.0, alpha2=100.0, P2=1.0, P3=0.08, omega=4.0, zeta=1.0, torque_limit=TORQUE_LIMIT,
    ),
}


def aic_preset(name: str = "aic_sim") -> AicConfig:
    return AIC_PRESETS[name]


def mrac_preset_values(name: str = "mrac_sim") -> dict:
    return dict(MRAC_PRESETS[name])


def mrac_preset(name: str = "mrac_sim", n: int = 2, dt: float = 1e-3) -> MracConfig:
    return MracConfig.uniform(n, dt=dt, **mrac_preset_values(name))


def preset(kind: str, name: str | None = None, n: int = 2):
    if kind == "aic":
        return aic_preset(name or "aic_sim")
    return mrac_preset(name or "mrac_sim", n)


# -------------------------------------------------------------- scenarios


def pick_place_schedule(joints=DEFAULT_JOINTS, spacing: float = SETPOINT_SPACING, sequence=PICK_PLACE_SEQUENCE):
    joints = list(joints)
    schedule = [(i * spacing, PICK_PLACE_SETPOINTS[name][joints].copy()) for i, name in enumerate(sequence)]
    return schedule, [f"q_{name}" for name in sequence]


def pick_place_cycle(
    kind: str,
    config=None,
    plant=None,
    noise: SensorNoise | None = None,
    joints=DEFAULT_JOINTS,
    initial_q=None,
    name: str | None = None,
) -> Scenario:
    """30 s cycle q_A, q_B, q_C, q_B, q_A with a new set-point every 6 s."""
    plant = plant or nominal_2link()
    if len(joints) != plant.n:
        raise ValueError(f"{len(joints)} set-point joints for a {plant.n}-joint plant")
    schedule, labels = pick_place_schedule(joints)
    return Scenario(
        plant=plant,
        controller=kind,
        controller_config=config if config is not None else preset(kind, n=plant.n),
        schedule=schedule,
        duration=CYCLE_DURATION,
        noise=noise or default_noise(),
        initial_q=initial_q,
        labels=labels,
        name=name or f"pick_place_{kind}",
    )


def run_with_metrics(scenario: Scenario, wall_clock: bool = False):
    log = run(scenario, wall_clock=wall_clock)
    return log, compute_metrics(log, scenario)


def transfer_experiment(seed: int = 0, tune_plant=None, test_plant=None, configs: dict | None = None) -> dict:
    """Run both controllers, tuned on the tuning plant, on the tuning and the test plant.

    Returns per-controller metrics on both plants plus divergence flags. Both
    controllers share plant, schedule, noise seed and torque limit.
    """
    tune_plant = tune_plant or tuning_plant()
    test_plant = test_plant or deployment_plant()
    configs = configs or {"aic": aic_preset("aic_sim"), "mrac": mrac_preset("mrac_sim", tune_plant.n)}
    out = {}
    for kind, cfg in configs.items():
        noise = default_noise(seed)
        _, m_tune = run_with_metrics(pick_place_cycle(kind, cfg, tune_plant, noise, name=f"transfer_tune_{kind}"))
        _, m_test = run_with_metrics(pick_place_cycle(kind, cfg, test_plant, noise, name=f"transfer_test_{kind}"))
        out[kind] = dict(tune=m_tune, test=m_test, diverged=m_test["diverged"])
    return out


def payload_scenario(kind: str, bottle: float, config=None, seed: int = 0, joints=DEFAULT_JOINTS) -> Scenario:
    """Lift (to q_B), place (at q_C) and release a bottle on the deployment plant.

    The arm starts at rest at q_A already holding the bottle; the bottle is let
    go at ``RELEASE_TIME`` while the arm holds q_C.
    """
    joints = list(joints)
    plant = deployment_plant(payload=END_EFFECTOR_MASS + bottle)
    sp = {k: v[joints] for k, v in PICK_PLACE_SETPOINTS.items()}
    schedule = [(0.0, sp["B"]), (6.0, sp["C"]), (12.0, sp["C"])]
    if config is None:
        config = aic_preset("aic_real") if kind == "aic" else mrac_preset("mrac_real", plant.n)
    return Scenario(
        plant=plant,
        controller=kind,
        controller_config=config,
        schedule=schedule,
        duration=20.0,
        noise=default_noise(seed),
        initial_q=sp["A"],
        events=[PayloadEvent(RELEASE_TIME, END_EFFECTOR_MASS)],
        labels=["lift", "place", "release"],
        name=f"payload_{kind}_{bottle:g}kg",
    )


def payload_experiment(kind: str = "aic", light: float = LIGHT_PAYLOAD, heavy: float = HEAVY_PAYLOAD, config=None, seed: int = 0) -> dict:
    """Light-versus-heavy bottle runs and their joint-space trajectory difference."""
    runs = {}
    for label, mass in (("light", light), ("heavy", heavy)):
        sc = payload_scenario(kind, mass, config, seed)
        log, metrics = run_with_metrics(sc)
        runs[label] = dict(scenario=sc, log=log, metrics=metrics)
    a, b = runs["light"]["log"], runs["heavy"]["log"]
    k = min(len(a), len(b))
    diff = np.linalg.norm(b.q[:k] - a.q[:k], axis=1)
    sc = runs["heavy"]["scenario"]
    segments = []
    bounds = [t for t, _ in sc.schedule] + [sc.duration]
    for i, label in enumerate(sc.labels):
        k0, k1 = int(round(bounds[i] / sc.dt)), min(int(round(bounds[i + 1] / sc.dt)), k)
        seg = diff[k0:k1]
        tail = seg[-int(round(0.1 / sc.dt)):] if seg.size else seg
        segments.append(
            dict(
                label=label,
                peak=float(seg.max()) if seg.size else 0.0,
                final_mean=float(tail.mean()) if tail.size else 0.0,
                heavy_jitter=torque_jitter(b.u[k0:k1]),
                light_jitter=torque_jitter(a.u[k0:k1]),
            )
        )
    return dict(kind=kind, t=a.t[:k], difference=diff, segments=segments, runs=runs)


def timing_benchmark(n_list, steps: int = 100_000, kinds=("aic", "mrac"), seed: int = 0) -> list[dict]:
    """Closed-loop runs on the decoupled plant, timing only the controller step."""
    rows = []
    for n in n_list:
        plant = DecoupledArmModel.uniform(int(n))
        goal = np.full(int(n), 0.5)
        for kind in kinds:
            cfg = aic_preset("aic_sim") if kind == "aic" else mrac_preset("mrac_sim", int(n))
            sc = Scenario(
                plant=plant,
                controller=kind,
                controller_config=cfg,
                schedule=[(0.0, goal)],
                duration=steps * cfg.dt,
                noise=default_noise(seed),
                name=f"timing_{kind}_{n}",
            )
            log = run(sc, wall_clock=True)
            s = log.step_us[np.isfinite(log.step_us)]
            rows.append(
                dict(
                    controller=kind,
                    n=int(n),
                    steps=int(s.size),
                    mean_us=float(s.mean()),
                    p50_us=float(np.percentile(s, 50)),
                    p95_us=float(np.percentile(s, 95)),
                    p99_us=float(np.percentile(s, 99)),
                    max_us=float(s.max()),
                    parameter_count=cfg.parameter_count(),
                    diverged=log.diverged,
                )
            )
    return rows


__all__ = [
    "PICK_PLACE_SETPOINTS",
    "pick_place_cycle",
    "transfer_experiment",
    "payload_experiment",
    "timing_benchmark",
    "timing_summary",
]
