"""Scenario synthesis: geometry, steering vectors, path gains and channels.

Conventions fixed for the whole package:

* The RIS is a uniform planar array with half-wavelength spacing; element
  (n_x, n_y) responds with exp(j*pi*[(n_x-1)*cos(az)*sin(el) +
  (n_y-1)*sin(az)*sin(el)]).  Flattening is column-major over (n_x, n_y),
  i.e. n_x varies fastest.
* A direction with azimuth az and elevation el maps to the unit vector
  (cos(az)sin(el), sin(az)sin(el), cos(el)); the RIS plane is x-y.
* Line-of-sight channels carry amplitude sqrt(ref_gain * d^-ple) and
  phase exp(-j*2*pi*d/wavelength).  Only the magnitude enters any SINR.
* Index sets of a partition are kept sorted ascending, so "the i-th
  absorptive element" is well defined.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import yaml


@dataclass
class GeometryConfig:
    """Positions in metres; angles in degrees, relative to the RIS reference element."""

    bs_pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    ris_pos: tuple[float, float, float] = (10.0, 0.0, 0.0)
    user_region_min: tuple[float, float, float] = (7.5, 10.0, 0.0)
    user_region_max: tuple[float, float, float] = (12.5, 15.0, 2.0)
    detector_range: float = 8.0
    detector_azimuth_deg: float = 60.0
    detector_elevation_deg: float = 80.0
    sensing_range: float = 8.0
    sensing_azimuth_deg: tuple[float, float] = (45.0, 55.0)
    sensing_elevation_deg: tuple[float, float] = (75.0, 85.0)


@dataclass
class ScenarioConfig:
    """All physical and algorithmic scenario parameters (defaults: simulation setup at full scale)."""

    m: int = 4                      # BS antennas
    n: int = 64                     # RIS elements in total
    n_x: int = 8                    # RIS grid, horizontal
    n_y: int = 8                    # RIS grid, vertical
    k: int = 4                      # communication users
    l: int = 9                      # sampled sensing locations
    l_x: int = 3                    # sensing grid, azimuth direction
    l_y: int = 3                    # sensing grid, elevation direction
    p_max: float = 10.0             # transmit power budget [W] (40 dBm)
    detector_power: float = 1.0     # adversarial transmit power rho^2 [W] (30 dBm)
    rcs: tuple[float, ...] = ()     # per-location RCS [m^2]; empty -> rcs_default everywhere
    rcs_default: float = 0.8
    gamma_s: tuple[float, ...] = () # per-location sensing SINR threshold (linear); empty -> default
    gamma_s_default: float = 10 ** 0.75            # 7.5 dB
    gamma_c: tuple[float, ...] = () # per-user comm SINR threshold (linear); empty -> default
    gamma_c_default: float = 10 ** 0.75            # 7.5 dB
    noise_s: float = 1e-10          # sigma_s^2 [W] (-70 dBm)
    noise_d: float = 1e-10          # sigma_d^2 [W]
    noise_c_bar: tuple[float, ...] = ()            # sigma_bar_{c,k}^2 [W]; empty -> default
    noise_c_bar_default: float = 1e-10
    rician_k: float = 10 ** 0.3     # Rician factor (linear, 3 dB)
    pathloss_exp: float = 2.0
    ref_gain: float = 1e-3          # path gain at 1 m (-30 dB)
    wavelength: float = 0.1         # carrier wavelength [m]
    t_s: int = 10                   # samples averaged per detector decision
    seed: int = 0
    geometry: GeometryConfig = field(default_factory=GeometryConfig)

    def __post_init__(self):
        if isinstance(self.geometry, dict):
            self.geometry = GeometryConfig(**self.geometry)
        if min(self.m, self.n, self.k, self.l) < 1:
            raise ValueError("m, n, k, l must all be at least 1")
        if self.n_x * self.n_y != self.n:
            raise ValueError(f"RIS grid {self.n_x}x{self.n_y} does not match n={self.n}")
        if self.l_x * self.l_y != self.l:
            raise ValueError(f"sensing grid {self.l_x}x{self.l_y} does not match l={self.l}")
        for name in ("p_max", "noise_s", "noise_d", "wavelength", "ref_gain"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.detector_power < 0:
            raise ValueError("detector_power must be nonnegative")
        if self.rician_k < 0:
            raise ValueError("rician_k must be nonnegative")
        if self.t_s < 1:
            raise ValueError("t_s must be at least 1")
        if any(v <= 0 for v in (*self.rcs_values, *self.gamma_s_values,
                                *self.gamma_c_values, *self.noise_c_bar_values)):
            raise ValueError("RCS values, thresholds and noise powers must be positive")

    @property
    def rcs_values(self) -> np.ndarray:
        return _broadcast(self.rcs, self.rcs_default, self.l)

    @property
    def gamma_s_values(self) -> np.ndarray:
        return _broadcast(self.gamma_s, self.gamma_s_default, self.l)

    @property
    def gamma_c_values(self) -> np.ndarray:
        return _broadcast(self.gamma_c, self.gamma_c_default, self.k)

    @property
    def noise_c_bar_values(self) -> np.ndarray:
        return _broadcast(self.noise_c_bar, self.noise_c_bar_default, self.k)

    def to_dict(self) -> dict:
        return asdict(self)


def _broadcast(values: Sequence[float], default: float, count: int) -> np.ndarray:
    if not values:
        return np.full(count, default, dtype=float)
    if len(values) != count:
        raise ValueError(f"expected {count} values, got {len(values)}")
    return np.asarray(values, dtype=float)


@dataclass
class ElementPartition:
    """Disjoint cover of {0..n-1} into reflecting and absorptive index sets, kept sorted."""

    reflecting: np.ndarray
    absorptive: np.ndarray

    def __post_init__(self):
        self.reflecting = np.sort(np.asarray(self.reflecting, dtype=int))
        self.absorptive = np.sort(np.asarray(self.absorptive, dtype=int))
        union = np.concatenate([self.reflecting, self.absorptive])
        n = union.size
        if np.intersect1d(self.reflecting, self.absorptive).size:
            raise ValueError("reflecting and absorptive sets overlap")
        if not np.array_equal(np.sort(union), np.arange(n)):
            raise ValueError("partition does not cover the full element index range")

    @property
    def n(self) -> int:
        return self.reflecting.size + self.absorptive.size

    @property
    def n_r(self) -> int:
        return self.reflecting.size

    @property
    def n_a(self) -> int:
        return self.absorptive.size

    def reassign(self, dropped_absorptive: np.ndarray) -> "ElementPartition":
        """Move the given absorptive element indices to the reflecting set."""
        dropped = np.asarray(dropped_absorptive, dtype=int)
        if dropped.size and not np.all(np.isin(dropped, self.absorptive)):
            raise ValueError("can only reassign indices currently in the absorptive set")
        return ElementPartition(
            reflecting=np.union1d(self.reflecting, dropped),
            absorptive=np.setdiff1d(self.absorptive, dropped),
        )


def initial_partition(n: int, n_r: int) -> ElementPartition:
    if not 0 <= n_r <= n:
        raise ValueError("n_r must lie in [0, n]")
    return ElementPartition(np.arange(n_r), np.arange(n_r, n))


@dataclass
class ChannelSet:
    """Full-RIS channels: G (BS->RIS), h[k] (RIS->user), c[l], e, d[l] (LoS)."""

    g: np.ndarray        # (n, m) complex
    h: np.ndarray        # (k, n) complex, row k = user-k channel
    c: np.ndarray        # (l, n) complex, row l = sensing-location channel
    e: np.ndarray        # (n,) complex
    d: np.ndarray        # (l,) complex scalars detector->location


@dataclass
class PartitionedChannels:
    """Reflecting/absorptive views of a ChannelSet, rows selected in ascending index order."""

    g_r: np.ndarray      # (n_r, m)
    h_r: np.ndarray      # (k, n_r)
    c_r: np.ndarray      # (l, n_r)
    c_a: np.ndarray      # (l, n_a)
    e_r: np.ndarray      # (n_r,)
    e_a: np.ndarray      # (n_a,)
    d: np.ndarray        # (l,)

    @property
    def n_r(self) -> int:
        return self.e_r.size

    @property
    def n_a(self) -> int:
        return self.e_a.size


def steering_vector(azimuth: float, elevation: float, grid: tuple[int, int]) -> np.ndarray:
    """Planar-array response for the given direction, flattened column-major over (n_x, n_y)."""
    n_x, n_y = grid
    if n_x < 1 or n_y < 1:
        raise ValueError("grid dimensions must be at least 1")
    ix = np.arange(n_x)
    iy = np.arange(n_y)
    ux = np.cos(azimuth) * np.sin(elevation)
    uy = np.sin(azimuth) * np.sin(elevation)
    phase = np.pi * (ix[:, None] * ux + iy[None, :] * uy)
    return np.exp(1j * phase).reshape(n_x * n_y, order="F")


def path_gain(distance: float, cfg: ScenarioConfig) -> float:
    """Power gain ref_gain * d^-ple of the configured path-loss law."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return cfg.ref_gain * distance ** (-cfg.pathloss_exp)


def los_channel(distance: float, azimuth: float, elevation: float, cfg: ScenarioConfig) -> np.ndarray:
    """LoS channel alpha * a(az, el) toward the RIS with |alpha|^2 from the path-loss law."""
    alpha = np.sqrt(path_gain(distance, cfg)) * np.exp(-2j * np.pi * distance / cfg.wavelength)
    return alpha * steering_vector(azimuth, elevation, (cfg.n_x, cfg.n_y))


def los_scalar(distance: float, cfg: ScenarioConfig) -> complex:
    """Scalar LoS coefficient (detector->location links)."""
    return np.sqrt(path_gain(distance, cfg)) * np.exp(-2j * np.pi * distance / cfg.wavelength)


def rician_channel(rows: int, cols: int, los_component: np.ndarray, rician_k: float,
                   gain: float, rng: np.random.Generator) -> np.ndarray:
    """Rician fading draw sqrt(gain)*(sqrt(k/(1+k))*LoS + sqrt(1/(1+k))*H_nlos).

    los_component must have unit-magnitude entries; H_nlos is i.i.d. standard
    complex Gaussian, so each entry has second moment equal to gain.
    """
    los = np.asarray(los_component, dtype=complex).reshape(rows, cols)
    if los.shape != (rows, cols):
        raise ValueError("los_component shape does not match (rows, cols)")
    if rician_k < 0:
        raise ValueError("rician_k must be nonnegative")
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    mixed = np.sqrt(rician_k / (1 + rician_k)) * los + np.sqrt(1 / (1 + rician_k)) * nlos
    return np.sqrt(gain) * mixed


def partition_channels(channels: ChannelSet, partition: ElementPartition) -> PartitionedChannels:
    """Extract all reflecting/absorptive sub-channels for the given partition."""
    n = channels.e.size
    if partition.n != n:
        raise ValueError("partition size does not match the channel set")
    r = partition.reflecting
    a = partition.absorptive
    return PartitionedChannels(
        g_r=channels.g[r, :],
        h_r=channels.h[:, r],
        c_r=channels.c[:, r],
        c_a=channels.c[:, a],
        e_r=channels.e[r],
        e_a=channels.e[a],
        d=channels.d.copy(),
    )


def direction_vector(azimuth: float, elevation: float) -> np.ndarray:
    return np.array([
        np.cos(azimuth) * np.sin(elevation),
        np.sin(azimuth) * np.sin(elevation),
        np.cos(elevation),
    ])


def angles_from_offset(offset: np.ndarray) -> tuple[float, float, float]:
    """(azimuth, elevation, distance) of a position offset from the RIS reference element."""
    distance = float(np.linalg.norm(offset))
    if distance <= 0:
        raise ValueError("offset must be nonzero")
    elevation = float(np.arccos(np.clip(offset[2] / distance, -1.0, 1.0)))
    azimuth = float(np.arctan2(offset[1], offset[0]))
    return azimuth, elevation, distance


def sensing_grid_angles(cfg: ScenarioConfig) -> np.ndarray:
    """(l, 2) array of (azimuth, elevation) radians, uniform over the configured rectangle.

    Degenerate grid axes (a single sample) sit at the rectangle centre.  The
    flattening order matches the steering convention: azimuth index fastest.
    """
    geo = cfg.geometry
    az_lo, az_hi = np.deg2rad(geo.sensing_azimuth_deg)
    el_lo, el_hi = np.deg2rad(geo.sensing_elevation_deg)
    az = _axis_samples(az_lo, az_hi, cfg.l_x)
    el = _axis_samples(el_lo, el_hi, cfg.l_y)
    pairs = [(a, e) for e in el for a in az]
    return np.array(pairs)


def _axis_samples(lo: float, hi: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, count)


def build_scenario(cfg: ScenarioConfig) -> tuple[ChannelSet, ElementPartition, np.ndarray]:
    """Draw one full channel realization; bit-reproducible for a fixed cfg.seed.

    Returns the channel set, the initial element partition (first
    ceil(0.625*n) indices reflecting) and the sensing grid angles.
    """
    rng = np.random.default_rng(cfg.seed)
    geo = cfg.geometry
    ris = np.asarray(geo.ris_pos, dtype=float)
    bs = np.asarray(geo.bs_pos, dtype=float)

    # BS -> RIS: Rician around the planar/linear steering outer product.
    az_bs, el_bs, d_bs = angles_from_offset(bs - ris)
    a_ris = steering_vector(az_bs, el_bs, (cfg.n_x, cfg.n_y))
    a_bs = _bs_array_response(ris - bs, cfg.m)
    g = rician_channel(cfg.n, cfg.m, np.outer(a_ris, a_bs), cfg.rician_k,
                       path_gain(d_bs, cfg), rng)

    # RIS -> users: positions uniform in the configured cuboid, then Rician.
    lo = np.asarray(geo.user_region_min, dtype=float)
    hi = np.asarray(geo.user_region_max, dtype=float)
    user_pos = lo + (hi - lo) * rng.random((cfg.k, 3))
    h = np.empty((cfg.k, cfg.n), dtype=complex)
    for k in range(cfg.k):
        az, el, dist = angles_from_offset(user_pos[k] - ris)
        a_user = steering_vector(az, el, (cfg.n_x, cfg.n_y))
        h[k] = rician_channel(cfg.n, 1, a_user[:, None], cfg.rician_k,
                              path_gain(dist, cfg), rng)[:, 0]

    # Sensing locations and detector: pure LoS.
    grid = sensing_grid_angles(cfg)
    c = np.array([los_channel(geo.sensing_range, az, el, cfg) for az, el in grid])
    az_d = np.deg2rad(geo.detector_azimuth_deg)
    el_d = np.deg2rad(geo.detector_elevation_deg)
    e = los_channel(geo.detector_range, az_d, el_d, cfg)

    det_pos = ris + geo.detector_range * direction_vector(az_d, el_d)
    loc_pos = ris + geo.sensing_range * np.array([direction_vector(az, el) for az, el in grid])
    d = np.array([los_scalar(float(np.linalg.norm(p - det_pos)), cfg) for p in loc_pos])

    n_r0 = int(np.ceil(0.625 * cfg.n))
    return ChannelSet(g=g, h=h, c=c, e=e, d=d), initial_partition(cfg.n, n_r0), grid


def _bs_array_response(offset: np.ndarray, m: int) -> np.ndarray:
    # BS is a half-wavelength ULA along the y axis; only the LoS structure of
    # G depends on this, and the Rician NLoS part dominates the statistics.
    direction = offset / np.linalg.norm(offset)
    return np.exp(1j * np.pi * np.arange(m) * direction[1])


def load_config(path: str) -> ScenarioConfig:
    """Read a YAML scenario file; absent keys keep the embedded defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    return config_from_dict(raw.get("scenario", raw))


def config_from_dict(data: dict) -> ScenarioConfig:
    data = dict(data)
    geo = data.pop("geometry", None)
    cfg_kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        cfg_kwargs[key] = value
    cfg = ScenarioConfig(**cfg_kwargs)
    if geo is not None:
        geo_kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in geo.items()}
        cfg.geometry = GeometryConfig(**geo_kwargs)
    return cfg


def save_config(cfg: ScenarioConfig, path: str) -> None:
    payload = {"scenario": _plain(cfg.to_dict())}
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(payload, fh, sort_keys=False)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
