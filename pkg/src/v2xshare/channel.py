"""Urban-grid mobility and the radio channel stack.

Covers everything below the MDP: a Manhattan road grid with turning
vehicles, dual-slope LOS path loss between vehicles, the cellular uplink
path loss to the base station, spatially correlated log-normal shadowing,
and unit-power Ricean fast fading. The output of this module is a set of
linear channel-gain tensors per time slot; everything above (SINRs, rates,
rewards) lives in `environment`.

All randomness flows through numpy Generators handed in by the caller, so
a scenario is a pure function of (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

# Carrier and geometry constants. The area is a 3x3-block Manhattan grid;
# lane coordinates are derived below.
CARRIER_GHZ = 2.0
LIGHT_SPEED_M_S = 3.0e8
AREA_WIDTH_M = 375.0
AREA_HEIGHT_M = 649.0
BS_HEIGHT_M = 25.0
VEHICLE_HEIGHT_M = 1.5
BS_POSITION_M = (AREA_WIDTH_M / 2.0, AREA_HEIGHT_M / 2.0)

# Link-budget constants, folded into the channel gains as fixed dB offsets
# (tx antenna gain + rx antenna gain - rx noise figure).
BS_ANTENNA_GAIN_DB = 8.0
BS_NOISE_FIGURE_DB = 5.0
VEHICLE_ANTENNA_GAIN_DB = 3.0
VEHICLE_NOISE_FIGURE_DB = 9.0
TO_BS_BUDGET_DB = VEHICLE_ANTENNA_GAIN_DB + BS_ANTENNA_GAIN_DB - BS_NOISE_FIGURE_DB
TO_VEHICLE_BUDGET_DB = 2.0 * VEHICLE_ANTENNA_GAIN_DB - VEHICLE_NOISE_FIGURE_DB

# Log-normal shadowing: standard deviation and decorrelation distance per
# link family.
V2I_SHADOW_STD_DB = 8.0
V2V_SHADOW_STD_DB = 3.0
V2I_DECORRELATION_M = 50.0
V2V_DECORRELATION_M = 10.0

# The LOS model below is only trusted down to a few metres; shorter
# distances are clamped. A vehicle cannot null its own transmission, so
# the self-channel (same tx and rx vehicle) carries an extra fixed loss
# instead of a degenerate zero-distance path.
MIN_V2V_DISTANCE_M = 3.0
SELF_CHANNEL_EXTRA_LOSS_DB = 50.0

LANE_HALF_OFFSET_M = 1.75  # half of a 3.5 m lane

# Dual-slope LOS constants between vehicles at 2 GHz. Effective antenna
# heights (actual height minus 1 m) set both the breakpoint distance and
# the far-slope height correction, which makes the two slopes continuous
# at the breakpoint.
_EFFECTIVE_HEIGHT_M = VEHICLE_HEIGHT_M - 1.0
V2V_BREAKPOINT_M = (
    4.0 * _EFFECTIVE_HEIGHT_M * _EFFECTIVE_HEIGHT_M * CARRIER_GHZ * 1e9 / LIGHT_SPEED_M_S
)
_FREQ_TERM_NEAR_DB = 20.0 * math.log10(CARRIER_GHZ / 5.0)
_FREQ_TERM_FAR_DB = 2.7 * math.log10(CARRIER_GHZ / 5.0)
_HEIGHT_TERM_FAR_DB = -2.0 * 17.3 * math.log10(_EFFECTIVE_HEIGHT_M)


def db_to_linear(db):
    """Convert dB (or dBm) to a linear power ratio (or mW)."""
    return np.power(10.0, np.asarray(db, dtype=np.float64) / 10.0)


def linear_to_db(lin):
    """Convert a linear power ratio to dB."""
    return 10.0 * np.log10(np.asarray(lin, dtype=np.float64))


def path_loss_v2i(distance_km):
    """Uplink path loss to the base station, distance in kilometres.

    128.1 + 37.6*log10(d_km). Raises for non-positive distances.
    """
    d = np.asarray(distance_km, dtype=np.float64)
    if np.any(d <= 0.0):
        raise ValueError("V2I path loss needs a positive distance")
    out = 128.1 + 37.6 * np.log10(d)
    return float(out) if np.isscalar(distance_km) else out


def path_loss_v2v(tx_xy, rx_xy):
    """LOS path loss between two vehicles, positions in metres.

    Dual-slope model at 2 GHz:
      d <  breakpoint: 22.7*log10(d) + 41 + 20*log10(fc/5)
      d >= breakpoint: 40*log10(d) + 9.45 - 17.3*log10(h_eff)*2
                       + 2.7*log10(fc/5)
    with h_eff = 0.5 m and breakpoint 4*h_eff^2*fc/c = 6.667 m.
    Distances below 3 m are clamped to 3 m.
    """
    tx = np.asarray(tx_xy, dtype=np.float64)
    rx = np.asarray(rx_xy, dtype=np.float64)
    d = math.hypot(float(tx[0] - rx[0]), float(tx[1] - rx[1]))
    return _v2v_loss_from_distance(np.float64(d)).item()


def _v2v_loss_from_distance(d_m):
    d = np.maximum(np.asarray(d_m, dtype=np.float64), MIN_V2V_DISTANCE_M)
    near = 22.7 * np.log10(d) + 41.0 + _FREQ_TERM_NEAR_DB
    far = 40.0 * np.log10(d) + 9.45 + _HEIGHT_TERM_FAR_DB + _FREQ_TERM_FAR_DB
    return np.where(d < V2V_BREAKPOINT_M, near, far)


def v2v_loss_matrix(positions):
    """Pairwise LOS loss (dB) between all vehicles, (A, A).

    The diagonal is the clamped 3 m loss plus the self-channel penalty.
    """
    pos = np.asarray(positions, dtype=np.float64)
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    loss = _v2v_loss_from_distance(d)
    loss = loss + SELF_CHANNEL_EXTRA_LOSS_DB * np.eye(pos.shape[0])
    return loss


def bs_loss_vector(positions):
    """Loss (dB) from each vehicle to the base station, (A,).

    Uses the 3-D distance including the antenna-height difference.
    """
    pos = np.asarray(positions, dtype=np.float64)
    dx = pos[:, 0] - BS_POSITION_M[0]
    dy = pos[:, 1] - BS_POSITION_M[1]
    dz = BS_HEIGHT_M - VEHICLE_HEIGHT_M
    d_km = np.sqrt(dx * dx + dy * dy + dz * dz) / 1000.0
    return path_loss_v2i(d_km)


def sample_fading(k_factor, rng, size=None):
    """Unit-power Ricean power gains |c|^2 with linear K-factor.

    K = 0 degenerates to Rayleigh (exponential power, mean 1); large K
    approaches a deterministic unit gain. Mean power is 1 for every K.
    """
    if k_factor < 0.0:
        raise ValueError("Ricean K-factor must be non-negative")
    los = math.sqrt(k_factor / (k_factor + 1.0))
    scatter_std = math.sqrt(1.0 / (2.0 * (k_factor + 1.0)))
    re = los + rng.normal(0.0, scatter_std, size)
    im = rng.normal(0.0, scatter_std, size)
    return re * re + im * im


@dataclass
class ShadowingField:
    """Correlated log-normal shadowing values (dB) for a family of links."""

    values: np.ndarray
    std_db: float
    decorrelation_m: float

    @classmethod
    def initial(cls, shape, std_db, decorrelation_m, rng):
        return cls(rng.normal(0.0, std_db, shape), std_db, decorrelation_m)

    def advanced(self, displacement_m, rng):
        """One correlated update after the given displacement(s).

        new = rho*old + sqrt(1-rho^2)*N(0, std), rho = exp(-d/d_corr).
        Zero displacement keeps the field unchanged (and draws nothing).
        """
        d = np.asarray(displacement_m, dtype=np.float64)
        if np.any(d < 0.0):
            raise ValueError("displacement must be non-negative")
        if np.all(d == 0.0):
            return replace(self, values=self.values.copy())
        rho = np.exp(-d / self.decorrelation_m)
        noise = rng.normal(0.0, self.std_db, self.values.shape)
        return replace(self, values=rho * self.values + np.sqrt(1.0 - rho * rho) * noise)


def update_shadowing(field, displacement_m, rng):
    """Functional alias for ShadowingField.advanced."""
    return field.advanced(displacement_m, rng)


@dataclass
class Vehicle:
    """One vehicle on the road grid. Speed is km/h, heading is u/d/l/r."""

    vid: int
    x: float
    y: float
    heading: str
    speed_kmh: float

    @property
    def position(self):
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class RoadGrid:
    """Manhattan grid of bidirectional lanes inside the simulation area.

    up_x/down_x are the x coordinates of northbound/southbound lanes;
    right_y/left_y the y coordinates of eastbound/westbound lanes.
    A vehicle crossing a perpendicular lane turns onto it with
    `turn_probability`; one leaving the area is redirected onto the
    nearest boundary lane.
    """

    width: float = AREA_WIDTH_M
    height: float = AREA_HEIGHT_M
    up_x: tuple = ()
    down_x: tuple = ()
    right_y: tuple = ()
    left_y: tuple = ()
    turn_probability: float = 0.4

    @classmethod
    def default(cls, turn_probability=0.4):
        w3 = AREA_WIDTH_M / 3.0
        h3 = AREA_HEIGHT_M / 3.0
        off = LANE_HALF_OFFSET_M
        return cls(
            up_x=tuple(i * w3 + off for i in range(3)),
            down_x=tuple((i + 1) * w3 - off for i in range(3)),
            right_y=tuple(i * h3 + off for i in range(3)),
            left_y=tuple((i + 1) * h3 - off for i in range(3)),
            turn_probability=turn_probability,
        )

    def drop_vehicle(self, vid, speed_kmh, rng):
        """Place one vehicle uniformly on a random lane.

        Headings rotate with the vehicle id so small fleets spread over
        all four directions.
        """
        heading = "udlr"[vid % 4]
        lanes = {"u": self.up_x, "d": self.down_x, "r": self.right_y, "l": self.left_y}[heading]
        lane = lanes[rng.integers(0, len(lanes))]
        along = rng.uniform(0.0, self.height if heading in "ud" else self.width)
        if heading in "ud":
            return Vehicle(vid, lane, along, heading, speed_kmh)
        return Vehicle(vid, along, lane, heading, speed_kmh)

    def step(self, vehicles, dt_s, rng):
        """Advance every vehicle by speed*dt along its lane.

        Returns a new list; input vehicles are not mutated. Draws one
        uniform per crossed perpendicular lane, in vehicle-id order.
        """
        if dt_s <= 0.0:
            raise ValueError("dt must be positive")
        return [self._step_one(v, dt_s, rng) for v in vehicles]

    def _step_one(self, v, dt_s, rng):
        dist = v.speed_kmh / 3.6 * dt_s
        vertical = v.heading in "ud"
        sign = 1.0 if v.heading in "ur" else -1.0
        start = v.y if vertical else v.x
        end = start + sign * dist
        # Perpendicular lanes crossed during this step, in travel order.
        if vertical:
            lanes = [(c, "l") for c in self.left_y] + [(c, "r") for c in self.right_y]
        else:
            lanes = [(c, "u") for c in self.up_x] + [(c, "d") for c in self.down_x]
        crossed = sorted(
            ((c, h) for c, h in lanes if min(start, end) < c <= max(start, end) and c != start),
            key=lambda ch: sign * ch[0],
        )
        for coord, new_heading in crossed:
            if rng.uniform() < self.turn_probability:
                remaining = abs(end - coord)
                turn_sign = 1.0 if new_heading in "ur" else -1.0
                if vertical:
                    x, y = v.x + turn_sign * remaining, coord
                else:
                    x, y = coord, v.y + turn_sign * remaining
                return self._redirect(Vehicle(v.vid, x, y, new_heading, v.speed_kmh))
        if vertical:
            return self._redirect(Vehicle(v.vid, v.x, end, v.heading, v.speed_kmh))
        return self._redirect(Vehicle(v.vid, end, v.y, v.heading, v.speed_kmh))

    def _redirect(self, v):
        """Keep vehicles inside the area by turning them onto a boundary lane."""
        if 0.0 <= v.x <= self.width and 0.0 <= v.y <= self.height:
            return v
        if v.heading == "u":
            return Vehicle(v.vid, v.x, self.left_y[-1], "l", v.speed_kmh)
        if v.heading == "d":
            return Vehicle(v.vid, v.x, self.right_y[0], "r", v.speed_kmh)
        if v.heading == "l":
            return Vehicle(v.vid, self.up_x[0], v.y, "u", v.speed_kmh)
        return Vehicle(v.vid, self.down_x[-1], v.y, "d", v.speed_kmh)


def step_mobility(vehicles, dt_s, rng, grid=None):
    """Advance vehicles on the grid; wrapper around RoadGrid.step."""
    grid = grid or RoadGrid.default()
    return grid.step(vehicles, dt_s, rng)


@dataclass
class Scenario:
    """Slow-varying scenario state: vehicle fleet and shadowing fields.

    The slow channel components (path loss + shadowing) stay constant
    within one delivery episode and advance only at episode boundaries
    via `advance_slow`.
    """

    grid: RoadGrid
    vehicles: list
    shadow_bs: ShadowingField = field(default=None)
    shadow_v2v: ShadowingField = field(default=None)

    @classmethod
    def drop(cls, n_vehicles, speed_kmh, grid, rng):
        vehicles = [grid.drop_vehicle(i, speed_kmh, rng) for i in range(n_vehicles)]
        shadow_bs = ShadowingField.initial((n_vehicles,), V2I_SHADOW_STD_DB, V2I_DECORRELATION_M, rng)
        shadow_v2v = ShadowingField.initial(
            (n_vehicles, n_vehicles), V2V_SHADOW_STD_DB, V2V_DECORRELATION_M, rng
        )
        return cls(grid, vehicles, shadow_bs, shadow_v2v)

    def advance_slow(self, dt_s, rng):
        """Move vehicles and decorrelate shadowing (in place)."""
        self.vehicles = self.grid.step(self.vehicles, dt_s, rng)
        disp = np.array([v.speed_kmh / 3.6 * dt_s for v in self.vehicles])
        self.shadow_bs = self.shadow_bs.advanced(disp, rng)
        self.shadow_v2v = self.shadow_v2v.advanced(disp[:, None] + disp[None, :], rng)

    def positions(self):
        return np.array([[v.x, v.y] for v in self.vehicles], dtype=np.float64)

    def slow_gains_db(self):
        """Slow-fading gain (dB, includes link budgets) for both families.

        Returns (to_bs (A,), pairwise (A, A)); pairwise[i, j] is tx i ->
        rx j. Both are gains, i.e. -(loss + shadowing) + budget offset.
        """
        pos = self.positions()
        to_bs = -(bs_loss_vector(pos) + self.shadow_bs.values) + TO_BS_BUDGET_DB
        pair = -(v2v_loss_matrix(pos) + self.shadow_v2v.values) + TO_VEHICLE_BUDGET_DB
        return to_bs, pair


def realize_gains(slow_to_bs_db, slow_pair_db, n_bands, k_v2i, k_v2v, rng):
    """Per-slot linear gain tensors: slow part times fresh fast fading.

    Returns (to_bs (A, n_bands), pairwise (A, A, n_bands)). Fast fading
    is drawn independently per link and band; the slow part is shared
    across bands.
    """
    to_bs_lin = db_to_linear(slow_to_bs_db)
    pair_lin = db_to_linear(slow_pair_db)
    a = to_bs_lin.shape[0]
    h_bs = sample_fading(k_v2i, rng, (a, n_bands))
    h_pair = sample_fading(k_v2v, rng, (pair_lin.shape[0], pair_lin.shape[1], n_bands))
    return to_bs_lin[:, None] * h_bs, pair_lin[:, :, None] * h_pair


def channel_constants():
    """Every fixed number used by this module, for the run manifest."""
    grid = RoadGrid.default()
    return {
        "carrier_ghz": CARRIER_GHZ,
        "area_m": [AREA_WIDTH_M, AREA_HEIGHT_M],
        "bs_position_m": list(BS_POSITION_M),
        "bs_height_m": BS_HEIGHT_M,
        "vehicle_height_m": VEHICLE_HEIGHT_M,
        "bs_antenna_gain_db": BS_ANTENNA_GAIN_DB,
        "bs_noise_figure_db": BS_NOISE_FIGURE_DB,
        "vehicle_antenna_gain_db": VEHICLE_ANTENNA_GAIN_DB,
        "vehicle_noise_figure_db": VEHICLE_NOISE_FIGURE_DB,
        "to_bs_budget_db": TO_BS_BUDGET_DB,
        "to_vehicle_budget_db": TO_VEHICLE_BUDGET_DB,
        "v2i_shadow_std_db": V2I_SHADOW_STD_DB,
        "v2v_shadow_std_db": V2V_SHADOW_STD_DB,
        "v2i_decorrelation_m": V2I_DECORRELATION_M,
        "v2v_decorrelation_m": V2V_DECORRELATION_M,
        "v2v_breakpoint_m": V2V_BREAKPOINT_M,
        "v2v_min_distance_m": MIN_V2V_DISTANCE_M,
        "self_channel_extra_loss_db": SELF_CHANNEL_EXTRA_LOSS_DB,
        "v2v_near_slope": [22.7, 41.0, _FREQ_TERM_NEAR_DB],
        "v2v_far_slope": [40.0, 9.45, _HEIGHT_TERM_FAR_DB, _FREQ_TERM_FAR_DB],
        "lanes_up_x": list(grid.up_x),
        "lanes_down_x": list(grid.down_x),
        "lanes_right_y": list(grid.right_y),
        "lanes_left_y": list(grid.left_y),
        "turn_probability": grid.turn_probability,
    }
