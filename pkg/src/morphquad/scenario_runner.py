"""Scripted hover and morph-translation scenarios."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable

import numpy as np

from .config import ScenarioConfig
from .dynamics import (ConfigError, Controls, GustProcess, SimulationFault, hover_state,
                       quat_to_euler, step)
from .flight_control import (CascadeController, Mode, baseline_mixer_matrix, mix_baseline,
                             mix_curvature_aware, morph_schedule)
from .morphology import wrench_matrix
from .telemetry import (SAT_FAULT, SAT_TILT, MetricsReport, MetricWindows, TelemetryLog,
                        TelemetryRecord, compute_metrics)


class ScenarioFault(RuntimeError):
    """Simulation fault; ``log`` holds the telemetry recorded up to the fault."""

    def __init__(self, message: str, log: TelemetryLog, record: dict):
        super().__init__(message)
        self.log = log
        self.record = record


def commanded_heading(config: ScenarioConfig) -> float | None:
    """World heading (deg) of the lateral force the morph targets produce at hover thrust."""
    if not config.morph.active:
        return None
    veh = config.vehicle
    W = wrench_matrix(config.morph.targets, veh.layouts, veh)
    lateral = W[:2] @ np.full(4, veh.hover_thrust)
    if math.hypot(*lateral) < 1e-9:
        return None
    k = config.phase_index(config.morph.activation_time)
    return math.degrees(math.atan2(lateral[1], lateral[0]) + config.phases[k].yaw)


def metric_windows(config: ScenarioConfig) -> MetricWindows:
    starts = config.phase_starts
    settle = config.settle_time
    k = config.hold_phase
    attitude = []
    for j in (config.attitude_phases if config.attitude_phases is not None else (k,)):
        t0, t1 = starts[j] + settle, starts[j] + config.phases[j].duration
        if t1 > t0:
            attitude.append((t0, t1))
    hold = config.phases[k]
    altitude = (starts[k] + settle, starts[k] + hold.duration)
    morph = morph_ref = None
    if config.morph.active:
        t_end = config.morph.release_time if config.morph.release_time is not None else config.total_time
        morph = (config.morph.activation_time, min(t_end, config.total_time))
        morph_ref = float(config.setpoint_at(config.morph.activation_time).target_altitude)
    stiff = config.vehicle.arm_stiffness
    return MetricWindows(attitude, altitude, float(hold.target[2]), morph, morph_ref,
                         stiff.ei_eff, stiff.length)


def run_scenario(config: ScenarioConfig) -> tuple[TelemetryLog, MetricsReport]:
    veh = config.vehicle
    limit = veh.geom.beta_physical_limit
    config.morph.validate(limit)
    controller = CascadeController(veh, config.gains, config.control_dt)
    mixer_inv = baseline_mixer_matrix(veh)
    gust = GustProcess(config.gust)
    state = hover_state(veh)
    windows = metric_windows(config)
    log = TelemetryLog(meta={"scenario": config.name, "seed": str(config.seed),
                             "mixer": config.mixer, **windows.to_meta()})
    heading = commanded_heading(config)
    if heading is not None:
        log.meta["commanded_heading_deg"] = repr(heading)
    log.extras["altitude_sp"] = []

    n_ticks = int(round(config.total_time / config.control_dt))
    for tick in range(n_ticks + 1):
        t = tick * config.control_dt
        sp = config.setpoint_at(t)
        sp.morph_command = morph_schedule(config.morph, t)
        wrench, diag = controller.update(state, sp)
        if config.mixer == "curvature_aware":
            mix = mix_curvature_aware(wrench, state.morph, veh)
        else:
            mix = mix_baseline(wrench, veh, mixer_inv)

        sat = int(sum(1 << i for i in range(4) if mix.saturated[i]))
        sat |= SAT_TILT if diag.tilt_limited else 0
        sat |= SAT_FAULT if diag.fault else 0
        roll, pitch, yaw = (math.degrees(a) for a in quat_to_euler(state.attitude))
        log.append(TelemetryRecord(
            t, tuple(state.position), tuple(state.velocity), roll, pitch, yaw,
            tuple(state.morph.betas), tuple(sp.morph_command), tuple(state.motor_thrusts),
            tuple(gust.current), sp.mode.value, sat))
        log.extras["altitude_sp"].append(sp.target_altitude)
        if tick == n_ticks:
            break

        controls = Controls(mix.thrusts, sp.morph_command)
        try:
            for _ in range(config.substeps):
                state = step(state, veh, controls, gust, config.dt)
        except SimulationFault as exc:
            raise ScenarioFault(str(exc), log, exc.record) from exc
        # tick-aligned clock, immune to accumulated rounding
        state.time = (tick + 1) * config.control_dt

    return log, compute_metrics(log, windows)


def run_hover(config: ScenarioConfig) -> tuple[TelemetryLog, MetricsReport]:
    if config.morph.active:
        raise ConfigError("hover scenario requires zero morph commands")
    if any(ph.mode is not Mode.HOLD for ph in config.phases):
        raise ConfigError("hover scenario phases must all be HOLD")
    return run_scenario(config)


def run_translation(config: ScenarioConfig) -> tuple[TelemetryLog, MetricsReport]:
    k = config.phase_index(config.morph.activation_time)
    if config.phases[k].mode is not Mode.ALTITUDE_HOLD:
        raise ConfigError("morph activation must fall inside an ALTITUDE_HOLD phase")
    return run_scenario(config)


RUNNERS = {"hover": run_hover, "translation": run_translation}


def run(config: ScenarioConfig) -> tuple[TelemetryLog, MetricsReport]:
    runner = RUNNERS.get(config.name, run_scenario)
    return runner(config)


def run_batch(config: ScenarioConfig, seeds: Iterable[int],
              workers: int = 4) -> dict[int, tuple[TelemetryLog, MetricsReport]]:
    """Run independent seeded copies of a scenario on a thread pool."""
    seeds = list(seeds)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = pool.map(lambda s: run(config.with_seed(s)), seeds)
        return dict(zip(seeds, results))
