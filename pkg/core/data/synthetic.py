"""
Synthetic multi-lane highway traffic.

Longitudinal motion follows the intelligent driver model; lane changes follow
a half-cosine lateral profile and are triggered at random when the gaps in the
target lane allow it. Lane ids are 1-based and lane k is centered at
y = (k - 0.5) * lane_width, so a lower lane id is to the left.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from core.config import SynthConfig
from core.data.types import COLUMNS, TrajectoryTable
from core.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class _Vehicle:
    agent_id: int
    x: float
    v: float
    desired_speed: float
    lane: int
    target_lane: int | None = None
    change_start_y: float = 0.0
    change_elapsed: float = 0.0

    @property
    def changing(self) -> bool:
        return self.target_lane is not None

    def occupied_lanes(self) -> tuple[int, ...]:
        # a vehicle mid-change blocks both lanes
        if self.target_lane is None:
            return (self.lane,)
        return (self.lane, self.target_lane)


def _lane_center(lane: int, width: float) -> float:
    return (lane - 0.5) * width


def _idm_accel(v: float, v0: float, gap: float | None, dv: float, config: SynthConfig) -> float:
    free = 1.0 - (v / v0) ** config.accel_exponent
    if gap is None:
        return config.max_accel * free
    s_star = config.min_gap + v * config.time_headway + v * dv / (2.0 * math.sqrt(config.max_accel * config.comfort_decel))
    s_star = max(s_star, config.min_gap)
    return config.max_accel * (free - (s_star / max(gap, 1e-6)) ** 2)


def _leader(vehicles: list[_Vehicle], me: _Vehicle, lane: int) -> _Vehicle | None:
    ahead = [o for o in vehicles if o is not me and lane in o.occupied_lanes() and o.x > me.x]
    return min(ahead, key=lambda o: o.x, default=None)


def _follower(vehicles: list[_Vehicle], me: _Vehicle, lane: int) -> _Vehicle | None:
    behind = [o for o in vehicles if o is not me and lane in o.occupied_lanes() and o.x <= me.x]
    return max(behind, key=lambda o: o.x, default=None)


def _place(config: SynthConfig, rng: np.random.Generator) -> list[_Vehicle]:
    per_lane = [0] * config.num_lanes
    for i in range(config.num_vehicles):
        per_lane[i % config.num_lanes] += 1
    footprint = config.vehicle_length + config.min_gap
    crowded = max(per_lane)
    if crowded * footprint > config.road_length:
        raise DataError(
            f"infeasible density: {crowded} vehicles per lane need {crowded * footprint:.1f} m "
            f"but the road is {config.road_length:.1f} m"
        )

    vehicles: list[_Vehicle] = []
    slots = {lane: 0 for lane in range(1, config.num_lanes + 1)}
    for i in range(config.num_vehicles):
        lane = i % config.num_lanes + 1
        spacing = config.road_length / per_lane[lane - 1]
        jitter = rng.uniform(0.0, spacing - footprint)
        desired = rng.uniform(config.desired_speed_min, config.desired_speed_max)
        vehicles.append(_Vehicle(i, slots[lane] * spacing + jitter, 0.8 * desired, desired, lane))
        slots[lane] += 1
    return vehicles


def generate_synthetic(config: SynthConfig, seed: int) -> TrajectoryTable:
    """
    Simulate highway traffic and record every vehicle at every step.

    Args:
        config: Road, fleet and driver-model parameters
        seed: Seed for placement, desired speeds and lane-change draws

    Returns:
        TrajectoryTable at ``config.dt``; identical for identical (config, seed)

    Raises:
        DataError: the vehicles cannot be placed with the minimum gap
    """
    rng = np.random.default_rng(seed)
    vehicles = _place(config, rng)
    dt = config.dt
    n_frames = int(round(config.duration_s / dt)) + 1
    change_prob = min(1.0, config.lane_change_rate * dt)
    required_gap = config.min_gap + config.lane_change_gap
    duration = config.lane_change_duration
    rows: list[tuple] = []
    ax_prev = {veh.agent_id: 0.0 for veh in vehicles}

    for frame in range(n_frames):
        # record the current state
        for veh in vehicles:
            if veh.changing:
                dy = _lane_center(veh.target_lane, config.lane_width) - veh.change_start_y
                phase = math.pi * veh.change_elapsed / duration
                y = veh.change_start_y + dy * (1.0 - math.cos(phase)) / 2.0
                vy = dy * math.pi / (2.0 * duration) * math.sin(phase)
                ay = dy * (math.pi / duration) ** 2 / 2.0 * math.cos(phase)
                lane = veh.target_lane if veh.change_elapsed >= duration / 2.0 else veh.lane
            else:
                y, vy, ay, lane = _lane_center(veh.lane, config.lane_width), 0.0, 0.0, veh.lane
            rows.append((veh.agent_id, frame, veh.x, y, veh.v, vy, ax_prev[veh.agent_id], ay, lane))
        if frame == n_frames - 1:
            break

        # lane-change triggers, drawn in agent order
        for veh in sorted(vehicles, key=lambda o: o.agent_id):
            draw = rng.uniform()
            if veh.changing or draw >= change_prob:
                continue
            options = [lane for lane in (veh.lane - 1, veh.lane + 1) if 1 <= lane <= config.num_lanes]
            target = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]
            lead = _leader(vehicles, veh, target)
            follow = _follower(vehicles, veh, target)
            if lead is not None and lead.x - veh.x - config.vehicle_length < required_gap:
                continue
            if follow is not None and veh.x - follow.x - config.vehicle_length < required_gap:
                continue
            veh.target_lane = target
            veh.change_start_y = _lane_center(veh.lane, config.lane_width)
            veh.change_elapsed = 0.0

        # longitudinal update, front to back so leaders are already advanced
        new_x: dict[int, float] = {}
        for veh in sorted(vehicles, key=lambda o: -o.x):
            bound = math.inf
            leaders = [_leader(vehicles, veh, lane) for lane in veh.occupied_lanes()]
            leaders = [lead for lead in leaders if lead is not None]
            if not leaders:
                accel = _idm_accel(veh.v, veh.desired_speed, None, 0.0, config)
            else:
                accel = min(
                    _idm_accel(veh.v, veh.desired_speed, lead.x - veh.x - config.vehicle_length, veh.v - lead.v, config)
                    for lead in leaders
                )
                bound = min(new_x[lead.agent_id] - config.vehicle_length - config.min_gap for lead in leaders)
            v_next = max(veh.v + accel * dt, 0.0)
            x_next = veh.x + v_next * dt
            if x_next > bound:
                x_next = max(bound, veh.x)
                v_next = (x_next - veh.x) / dt
            ax_prev[veh.agent_id] = (v_next - veh.v) / dt
            new_x[veh.agent_id] = x_next
            veh.v = v_next

        for veh in vehicles:
            veh.x = new_x[veh.agent_id]
            if veh.changing:
                veh.change_elapsed += dt
                if veh.change_elapsed >= duration - 1e-9:
                    veh.lane = veh.target_lane
                    veh.target_lane = None
                    veh.change_elapsed = 0.0

    table = TrajectoryTable(pd.DataFrame(rows, columns=list(COLUMNS)), dt)
    logger.info(
        f"[SYNTH] Generated {config.num_vehicles} vehicles x {n_frames} frames "
        f"on {config.num_lanes} lanes (seed={seed})"
    )
    return table
