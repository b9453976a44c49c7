"""OFDM forward model: steering and delay vectors, atoms, synthesis and AWGN."""

from __future__ import annotations

import logging
import math

import numpy as np

from . import geometry
from .config import SystemConfig
from .exceptions import EmptyScenarioError
from .models import Location, MeasurementSet, Scenario

_LOGGER = logging.getLogger(__name__)


def steering(theta: float | np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """ULA response a(theta); trailing axis has length N_R."""
    phase_step = 2 * np.pi / cfg.wavelength * cfg.element_spacing * np.sin(theta)
    m = np.arange(cfg.num_antennas)
    return np.exp(1j * np.multiply.outer(phase_step, m))


def steering_derivative(theta: float | np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """d a / d theta."""
    kappa = 2 * np.pi / cfg.wavelength * cfg.element_spacing
    m = np.arange(cfg.num_antennas)
    return 1j * kappa * np.multiply.outer(np.cos(theta), m) * steering(theta, cfg)


def delay_vector(tau: float | np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """b(tau) with b_n = s(n) exp(-i 2 pi n df tau); trailing axis has length N."""
    n = np.arange(cfg.num_subcarriers)
    phase = -2j * np.pi * cfg.subcarrier_spacing * np.multiply.outer(tau, n)
    return cfg.symbols * np.exp(phase)


def delay_vector_derivative(tau: float | np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """d b / d tau."""
    n = np.arange(cfg.num_subcarriers)
    return -2j * np.pi * cfg.subcarrier_spacing * n * delay_vector(tau, cfg)


def atom(
    mobile: Location, scatter: Location, bs_index: int, cfg: SystemConfig
) -> np.ndarray:
    """Rank-1 N_R x N atom B_j(l_t, l_s) = a(theta) b(tau)^T."""
    base = cfg.bs_positions[bs_index]
    tau = geometry.toa_nlos(mobile, scatter, base, cfg.speed_of_light)
    theta = geometry.doa(scatter, base)
    return np.outer(steering(theta, cfg), delay_vector(tau, cfg))


def atoms_for(params: np.ndarray, bs_index: int, cfg: SystemConfig) -> np.ndarray:
    """Atoms of a (K, 4) parameter array at one BS, shaped (K, N_R, N)."""
    params = np.asarray(params, dtype=float).reshape(-1, 4)
    base = cfg.bs_array[bs_index]
    tau = geometry.delays(params[:, 0:2], params[:, 2:4], base, cfg.speed_of_light)
    theta = geometry.angles(params[:, 2:4], base)
    return steering(theta, cfg)[:, :, None] * delay_vector(tau, cfg)[:, None, :]


def atom_jacobian(
    params: np.ndarray, bs_index: int, cfg: SystemConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Atoms (K, N_R, N) and their partials (K, 4, N_R, N).

    The partials are taken in l_t^x, l_t^y, l_s^x, l_s^y order.

    theta depends on l_s only, tau on both; the chain rule runs through
    d a / d theta and d b / d tau.
    """
    params = np.asarray(params, dtype=float).reshape(-1, 4)
    base = cfg.bs_array[bs_index]
    mobiles, scatters = params[:, 0:2], params[:, 2:4]
    c = cfg.speed_of_light

    tau = geometry.delays(mobiles, scatters, base, c)
    theta = geometry.angles(scatters, base)
    dtau_dt, dtau_ds = geometry.delay_partials(mobiles, scatters, base, c)
    dtheta_ds = geometry.angle_partials(scatters, base)

    a = steering(theta, cfg)
    da = steering_derivative(theta, cfg)
    b = delay_vector(tau, cfg)
    db = delay_vector_derivative(tau, cfg)

    atoms = a[:, :, None] * b[:, None, :]
    from_tau = a[:, :, None] * db[:, None, :]
    from_theta = da[:, :, None] * b[:, None, :]

    dtau = np.concatenate([dtau_dt, dtau_ds], axis=1)  # (K, 4)
    dtheta = np.concatenate([np.zeros_like(dtheta_ds), dtheta_ds], axis=1)
    jac = (
        dtau[:, :, None, None] * from_tau[:, None, :, :]
        + dtheta[:, :, None, None] * from_theta[:, None, :, :]
    )
    return atoms, jac


def synthesize(scenario: Scenario, cfg: SystemConfig) -> MeasurementSet:
    """Noise-free Y_j = sum_k gamma_{j,k} B_j(l_t, l_{s,k})."""
    if scenario.num_bs != cfg.num_bs:
        raise EmptyScenarioError(
            f"Scenario has paths for {scenario.num_bs} BSs, system has {cfg.num_bs}"
        )
    per_bs = []
    for j, paths in enumerate(scenario.per_bs_paths):
        if not paths:
            raise EmptyScenarioError(f"BS {j} has no propagation path")
        params = np.array(
            [
                [
                    scenario.mobile.x,
                    scenario.mobile.y,
                    *geometry.canonicalise_virtual_scatter(
                        scenario.mobile, path.scatter
                    ).as_array(),
                ]
                for path in paths
            ]
        )
        gains = np.array([path.gain for path in paths], dtype=complex)
        per_bs.append(np.tensordot(gains, atoms_for(params, j, cfg), axes=1))
    return MeasurementSet(per_bs=tuple(per_bs))


def add_awgn(measurements: MeasurementSet, snr_db: float, seed: int) -> MeasurementSet:
    """Add circular complex Gaussian noise at `snr_db` per BS (aggregate power)."""
    if math.isinf(snr_db) and snr_db > 0:
        return MeasurementSet(
            per_bs=tuple(y.copy() for y in measurements.per_bs),
            snr_db=math.inf,
            noise_seed=seed,
        )
    rng = np.random.default_rng(seed)
    noisy = []
    for j, y in enumerate(measurements.per_bs):
        signal_power = float(np.vdot(y, y).real) / y.size
        if signal_power == 0.0:
            _LOGGER.debug("BS %d has no signal energy; no noise added", j)
            noisy.append(y.copy())
            continue
        sigma = math.sqrt(signal_power * 10 ** (-snr_db / 10) / 2)
        noise = sigma * (
            rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        )
        noisy.append(y + noise)
    return MeasurementSet(per_bs=tuple(noisy), snr_db=snr_db, noise_seed=seed)
