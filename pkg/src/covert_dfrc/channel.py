"""Scenario parameters, channel synthesis and array responses for movable antennas.

Antenna positions live on a 1-D segment ``[0, D]``; the transmit and receive
arrays each hold ``N`` movable elements. User links follow a far-field
multipath model (one field response vector per element), and each warden is a
line-of-sight point target that also listens for covert traffic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

DEFAULT_SEED = 0

# Keys of the configuration document whose values are in degrees.
_DEGREE_KEYS = ("warden_angles",)
# Per-warden keys that may be given as a single scalar in the document.
_PER_WARDEN_KEYS = ("radar_sinr", "covertness", "warden_angles", "warden_distances", "warden_rcs")


@dataclass(frozen=True)
class ScenarioConfig:
    """System parameters for one scenario.

    All quantities are in SI or linear units: meters, watts, radians, linear
    SINR. Per-warden tuples have one entry per warden, which fixes ``W``.
    """

    num_antennas: int = 6
    num_users: int = 3
    channel_uses: int = 32
    wavelength: float = 0.1
    region_length: float = 1.4
    min_spacing: float = 0.05
    transmit_power: float = 10**1.5
    radar_sinr: tuple[float, ...] = (10.0, 10.0)
    covertness: tuple[float, ...] = (0.05, 0.05)
    covertness_colluding: float = 0.05
    warden_angles: tuple[float, ...] = (np.deg2rad(20.0), np.deg2rad(105.0))
    warden_distances: tuple[float, ...] = (10.0, 10.0)
    warden_rcs: tuple[float, ...] = (1.0, 1.0)
    user_center: tuple[float, float] = (40.0, 0.0)
    user_radius: float = 5.0
    num_paths: int = 12
    path_loss_ref: float = 1e-3
    comm_exponent: float = 3.2
    sensing_exponent: float = 2.6
    user_noise: float = 1e-11
    radar_noise: float = 1e-11
    warden_noise: float = 1e-11
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        for name in ("num_antennas", "num_users", "channel_uses", "num_paths"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        W = len(self.warden_angles)
        if W < 1:
            raise ValueError("at least one warden is required")
        for name in ("radar_sinr", "covertness", "warden_distances", "warden_rcs"):
            if len(getattr(self, name)) != W:
                raise ValueError(f"{name} must have one entry per warden ({W})")
        positive = (
            "wavelength", "region_length", "min_spacing", "transmit_power", "user_radius",
            "path_loss_ref", "user_noise", "radar_noise", "warden_noise",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if any(g <= 0 for g in self.radar_sinr):
            raise ValueError("radar SINR thresholds must be positive")
        if any(d <= 0 for d in self.warden_distances) or any(s <= 0 for s in self.warden_rcs):
            raise ValueError("warden distances and RCS must be positive")
        for eps in (*self.covertness, self.covertness_colluding):
            if not 0 < eps < 1:
                raise ValueError("covertness levels must lie in (0, 1)")
        if self.region_length < (self.num_antennas - 1) * self.min_spacing:
            raise ValueError("region too short for N antennas at the minimum spacing")

    @property
    def num_wardens(self) -> int:
        return len(self.warden_angles)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_wardens(self, count: int) -> "ScenarioConfig":
        """Copy with ``count`` wardens, reusing the first warden's parameters for new ones.

        New angles are taken from a fixed list spread over ``(0, pi)``.
        """
        extra = np.deg2rad([60.0, 140.0, 40.0, 160.0, 80.0, 120.0])
        angles = list(self.warden_angles[:count])
        for a in extra:
            if len(angles) >= count:
                break
            if all(abs(a - b) > 1e-9 for b in angles):
                angles.append(float(a))
        if len(angles) < count:
            raise ValueError("too many wardens requested")

        def take(values):
            return tuple(values[i] if i < len(values) else values[0] for i in range(count))

        return self.replace(
            warden_angles=tuple(angles),
            radar_sinr=take(self.radar_sinr),
            covertness=take(self.covertness),
            warden_distances=take(self.warden_distances),
            warden_rcs=take(self.warden_rcs),
        )

    def to_document(self) -> dict:
        """Flat key-value mapping (angles in degrees) suitable for YAML output."""
        doc = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name in _DEGREE_KEYS:
                value = [float(np.rad2deg(v)) for v in value]
            elif isinstance(value, tuple):
                value = [float(v) for v in value]
            elif isinstance(value, (np.floating, float)):
                value = float(value)
            doc[f.name] = value
        return doc


def config_from_mapping(doc: dict) -> ScenarioConfig:
    """Build a config from a flat mapping; angles in degrees, unknown keys rejected.

    Per-warden entries may be scalars. Per-warden keys that are absent take the
    first default value for every warden when the warden count differs.
    """
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ValueError(f"unknown configuration keys: {', '.join(unknown)}")
    values = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            raise ValueError(f"key {key!r} must be a scalar or a list, not a mapping")
        if isinstance(fields[key].default, tuple):
            value = tuple(float(v) for v in np.atleast_1d(value))
        elif isinstance(fields[key].default, int):
            if float(value) != int(value):
                raise ValueError(f"key {key!r} must be an integer")
            value = int(value)
        else:
            value = float(value)
        if key in _DEGREE_KEYS:
            value = tuple(float(np.deg2rad(v)) for v in value)
        values[key] = value
    W = len(values.get("warden_angles", ScenarioConfig.warden_angles))
    for key in _PER_WARDEN_KEYS:
        if key not in values:
            default = getattr(ScenarioConfig, key)
            if len(default) != W:
                values[key] = (default[0],) * W
        elif len(values[key]) == 1 and W > 1:
            values[key] = values[key] * W
    return ScenarioConfig(**values)


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a YAML document of flat ``key: value`` pairs."""
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise ValueError("configuration document must be a mapping")
    return config_from_mapping(doc)


def dump_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_document(), sort_keys=False))


@dataclass(frozen=True)
class ChannelSet:
    """One channel realization.

    Attributes:
        path_angles: ``(K, L)`` departure angles of the user paths, radians in ``[0, pi]``.
        path_gains: ``(K, L)`` complex path responses (PRM diagonals).
        user_positions: ``(K, 2)`` user coordinates in meters.
        warden_gain: ``(W,)`` complex one-way coefficients ``beta_w``.
        warden_echo: ``(W,)`` round-trip echo powers ``|alpha_w|^2``.
    """

    path_angles: np.ndarray
    path_gains: np.ndarray
    user_positions: np.ndarray
    warden_gain: np.ndarray
    warden_echo: np.ndarray
    large_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_users(self) -> int:
        return self.path_gains.shape[0]


def propagation_difference(position, angle):
    """Path-length difference ``position * cos(angle)`` relative to the origin."""
    return np.asarray(position) * np.cos(angle)


def field_response_vector(position: float, angles, wavelength: float) -> np.ndarray:
    """Field response over paths: entry ``j`` is ``exp(i 2pi/lambda position cos psi_j)``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.size == 0:
        raise ValueError("angles must be nonempty")
    return np.exp(2j * np.pi / wavelength * propagation_difference(position, angles))


def field_response_matrix(positions, angles, wavelength: float) -> np.ndarray:
    """``(L, N)`` matrix whose column ``n`` is the field response at ``positions[n]``."""
    positions = np.asarray(positions, dtype=float)
    angles = np.asarray(angles, dtype=float)
    return np.exp(2j * np.pi / wavelength * np.outer(np.cos(angles), positions))


def user_channel(positions, path_angles, path_gains, wavelength: float) -> np.ndarray:
    """Row channel ``h^H(t) = 1^H Sigma G(t)`` of one user (length ``N``)."""
    G = field_response_matrix(positions, path_angles, wavelength)
    return np.asarray(path_gains) @ G


def user_channels(positions, channels: ChannelSet, wavelength: float) -> np.ndarray:
    """``(K, N)`` matrix whose row ``k`` is ``h_k^H(t)``."""
    phase = np.cos(channels.path_angles)[:, :, None] * np.asarray(positions)[None, None, :]
    G = np.exp(2j * np.pi / wavelength * phase)
    return np.einsum("kl,kln->kn", channels.path_gains, G)


def steering_vector(angle: float, positions, wavelength: float) -> np.ndarray:
    """Array steering vector: entry ``n`` is ``exp(i 2pi/lambda p_n cos angle)``."""
    positions = np.asarray(positions, dtype=float)
    return np.exp(2j * np.pi / wavelength * positions * np.cos(angle))


def steering_matrix(angles, positions, wavelength: float) -> np.ndarray:
    """``(W, N)`` matrix of steering vectors, one row per angle."""
    return np.exp(
        2j * np.pi / wavelength * np.outer(np.cos(np.asarray(angles)), np.asarray(positions))
    )


def target_response(angle: float, r, t, wavelength: float) -> np.ndarray:
    """Rank-one target response ``a_r(angle, r) a_t(angle, t)^H``."""
    return np.outer(steering_vector(angle, r, wavelength), steering_vector(angle, t, wavelength).conj())


def apv_violation(positions, region_length: float, min_spacing: float) -> float:
    """Largest violation of ``0 <= p_1``, ``p_N <= D`` and ``p_n - p_{n-1} >= d`` (0 if feasible)."""
    p = np.asarray(positions, dtype=float)
    worst = max(-p[0], p[-1] - region_length, 0.0)
    if p.size > 1:
        worst = max(worst, float(np.max(min_spacing - np.diff(p))))
    return worst


def is_feasible_apv(positions, region_length: float, min_spacing: float, tol: float = 1e-12) -> bool:
    """Whether ``positions`` satisfy the region and spacing constraints up to ``tol``."""
    return apv_violation(positions, region_length, min_spacing) <= tol


def repair_apv(positions, region_length: float, min_spacing: float) -> np.ndarray:
    """Push nearly feasible positions onto the feasible set (forward then backward pass)."""
    p = np.sort(np.asarray(positions, dtype=float))
    p[0] = max(p[0], 0.0)
    for n in range(1, p.size):
        p[n] = max(p[n], p[n - 1] + min_spacing)
    p[-1] = min(p[-1], region_length)
    for n in range(p.size - 2, -1, -1):
        p[n] = min(p[n], p[n + 1] - min_spacing)
    return p


def uniform_apv(config: ScenarioConfig) -> np.ndarray:
    """Positions spread uniformly over the whole region ``[0, D]``."""
    return np.linspace(0.0, config.region_length, config.num_antennas)


def half_wavelength_apv(config: ScenarioConfig) -> np.ndarray:
    """Fixed-position array with ``lambda / 2`` spacing starting at 0."""
    pitch = config.wavelength / 2
    if (config.num_antennas - 1) * pitch > config.region_length + 1e-12:
        raise ValueError("a half-wavelength array does not fit in the region")
    return pitch * np.arange(config.num_antennas)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose derived from one seed."""
    tag = int.from_bytes(name.encode(), "little")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), tag])))


def synthesize_scenario(config: ScenarioConfig, seed: int | None = None) -> ChannelSet:
    """Draw user locations, multipath responses and warden coefficients.

    Users are uniform in the configured disk. Each user has ``L`` paths with
    departure angles uniform on ``[0, pi]`` and gains ``CN(0, c_k^2 / L)`` with
    ``c_k^2 = C0 d_k^-a``. Warden ``w`` has ``|beta_w|^2 = C0 d_w^-a_s`` with a
    uniform random phase, and echo power ``|alpha_w|^2 = C0^2 d_w^-2a_s RCS_w``.
    """
    seed = config.seed if seed is None else seed
    rng = substream(seed, "channel")
    K, L = config.num_users, config.num_paths

    radius = config.user_radius * np.sqrt(rng.uniform(size=K))
    theta = rng.uniform(0.0, 2 * np.pi, size=K)
    positions = np.asarray(config.user_center) + np.column_stack(
        [radius * np.cos(theta), radius * np.sin(theta)]
    )
    dist = np.linalg.norm(positions, axis=1)
    large_scale = config.path_loss_ref * dist ** (-config.comm_exponent)

    angles = rng.uniform(0.0, np.pi, size=(K, L))
    std = np.sqrt(large_scale / L / 2)[:, None]
    gains = std * (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L)))

    d_w = np.asarray(config.warden_distances, dtype=float)
    beta_mag = np.sqrt(config.path_loss_ref * d_w ** (-config.sensing_exponent))
    beta = beta_mag * np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=d_w.size))
    echo = config.path_loss_ref**2 * d_w ** (-2 * config.sensing_exponent) * np.asarray(config.warden_rcs)
    return ChannelSet(angles, gains, positions, beta, echo, large_scale)


@dataclass(frozen=True)
class Scenario:
    """A configuration together with one channel realization."""

    config: ScenarioConfig
    channels: ChannelSet

    @classmethod
    def from_config(cls, config: ScenarioConfig, seed: int | None = None) -> "Scenario":
        return cls(config, synthesize_scenario(config, seed))

    @property
    def wavenumber(self) -> float:
        return 2 * np.pi / self.config.wavelength

    def user_rows(self, t) -> np.ndarray:
        """``(K, N)`` rows ``h_k^H(t)``."""
        return user_channels(t, self.channels, self.config.wavelength)

    def warden_steering(self, positions) -> np.ndarray:
        """``(W, N)`` steering vectors toward the wardens, one per row."""
        return steering_matrix(self.config.warden_angles, positions, self.config.wavelength)

    def fused_channel(self, t) -> np.ndarray:
        """``(W, N)`` warden channel with rows ``beta_w a_t(phi_w, t)^H``."""
        return self.channels.warden_gain[:, None] * self.warden_steering(t).conj()
