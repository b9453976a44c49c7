"""ADCG solver for the TV + GTV regularised de-mixing program.

The outer loop alternates a conditional-gradient step (add the atom most
correlated with the residual), a group-sparse weights solve, support pruning
and a continuous descent over the atom locations.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .config import LocalDescentConfig, SolverConfig, SystemConfig
from .const import (
    COUPLING_SHARED,
    DESCENT_ARMIJO,
    LAMBDA_AUTO,
    NOISELESS_NOISE_FRACTION,
    UNKNOWN_NOISE_FRACTION,
)
from .exceptions import DegenerateGeometryError, EmptyCandidateError
from .models import (
    AdcgResult,
    AtomParams,
    CandidateSolution,
    IterationRecord,
    MeasurementSet,
    WeightFit,
)
from .signal import atom_jacobian, atoms_for, steering

_LOGGER = logging.getLogger(__name__)

Lambdas = tuple[float, float]
Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]
ProjectedObjective = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]
FixedWeightFit = Callable[[np.ndarray, np.ndarray], float]

_TINY = np.finfo(float).tiny
# l_s grid columns evaluated per block of the coarse sweep
_GRID_CHUNK = 64
# smallest move (metres) the Armijo backtracking still tries
_MIN_MOVE_M = 1e-9
# loss below this fraction of the data energy counts as an exact fit
_EXACT_FIT_RATIO = 1e-12
# shared l_t seeds closer than this (metres) are merged
_SEED_MERGE_M = 1.0
# best-screened shared l_t seeds that get a full descent
_SEED_DESCENTS = 3
# detour (metres) under which a path is indistinguishable from LoS
_LOS_DETOUR_M = 1e-3
# a BS counts as seeing an atom above this fraction of the atom's largest weight
_ACTIVE_WEIGHT_FRACTION = 1e-3
# relative loss slack allowed when snapping a virtual scatter onto the MS
_SNAP_SLACK = 1e-9


# -- norms and regularisation -------------------------------------------------


def tv_norms(candidate: CandidateSolution) -> np.ndarray:
    """Per-BS TV value sum_k |gamma_jk|."""
    return np.sum(np.abs(candidate.weights), axis=0)


def gtv_norm(candidate: CandidateSolution) -> float:
    """GTV value sum_k ||gamma_k||_2."""
    return float(np.sum(candidate.group_norms()))


def _penalty(weights: np.ndarray, lambdas: Lambdas) -> float:
    lam1, lam2 = lambdas
    return float(
        lam1 * np.sum(np.abs(weights)) + lam2 * np.sum(np.linalg.norm(weights, axis=1))
    )


def noise_std(measurements: MeasurementSet) -> float:
    """Per-entry noise standard deviation implied by the measurement SNR.

    Noise-free data get a floor of NOISELESS_NOISE_FRACTION of the RMS entry,
    which keeps the automatic lambdas positive.
    """
    entries = sum(y.size for y in measurements.per_bs)
    power = measurements.energy() / entries if entries else 0.0
    snr_db = measurements.snr_db
    if snr_db is None:
        return UNKNOWN_NOISE_FRACTION * math.sqrt(power)
    if math.isinf(snr_db):
        return NOISELESS_NOISE_FRACTION * math.sqrt(power)
    ratio = 10 ** (-snr_db / 10)
    # the measured power already contains the noise
    return math.sqrt(power * ratio / (1 + ratio))


def resolve_regularisation(
    measurements: MeasurementSet, cfg: SystemConfig, scfg: SolverConfig
) -> Lambdas:
    """Numeric (lambda1, lambda2), replacing "auto" by the noise-scaled rule."""
    cells = scfg.coarse_grid_points_per_axis**4
    auto = (
        scfg.auto_lambda_scale
        * noise_std(measurements)
        * math.sqrt(2 * cfg.num_antennas * cfg.num_subcarriers * math.log(cells))
    )
    lam1 = auto if scfg.lambda1 == LAMBDA_AUTO else float(scfg.lambda1)
    lam2 = auto if scfg.lambda2 == LAMBDA_AUTO else float(scfg.lambda2)
    return lam1, lam2


# -- data fit -----------------------------------------------------------------


def _residuals(
    params: np.ndarray,
    weights: np.ndarray,
    measurements: MeasurementSet,
    cfg: SystemConfig,
) -> list[np.ndarray]:
    if params.shape[0] == 0:
        return [-y for y in measurements.per_bs]
    return [
        np.tensordot(weights[:, j], atoms_for(params, j, cfg), axes=1) - y
        for j, y in enumerate(measurements.per_bs)
    ]


def data_fit(
    candidate: CandidateSolution, measurements: MeasurementSet, cfg: SystemConfig
) -> float:
    """sum_j ||Y_j - sum_k gamma_jk B_j(atom_k)||_F^2."""
    residuals = _residuals(candidate.params, candidate.weights, measurements, cfg)
    return float(sum(np.vdot(r, r).real for r in residuals))


def loss(
    candidate: CandidateSolution,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    lambdas: Lambdas | None = None,
) -> float:
    """Regularised loss: data fit + lambda1 * TV + lambda2 * GTV."""
    if lambdas is None:
        lambdas = resolve_regularisation(measurements, cfg, scfg)
    return data_fit(candidate, measurements, cfg) + _penalty(candidate.weights, lambdas)


def residual_gradients(
    candidate: CandidateSolution, measurements: MeasurementSet, cfg: SystemConfig
) -> list[np.ndarray]:
    """g_j = 2 (model_j - Y_j), the gradient of ||r_j||^2 in the model matrix."""
    residuals = _residuals(candidate.params, candidate.weights, measurements, cfg)
    return [2 * r for r in residuals]


# -- next source --------------------------------------------------------------


def _grid_points(scfg: SolverConfig) -> np.ndarray:
    """Cell centres of the coarse grid over the search area, (P*P, 2)."""
    area = scfg.search_area
    points = scfg.coarse_grid_points_per_axis
    xs = area.x_min + (np.arange(points) + 0.5) * area.width / points
    ys = area.y_min + (np.arange(points) + 0.5) * area.height / points
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _blocked(points: np.ndarray, cfg: SystemConfig, scfg: SolverConfig) -> np.ndarray:
    """Mask of points inside the exclusion disc of any BS."""
    dist = np.linalg.norm(points[:, None, :] - cfg.bs_array[None, :, :], axis=-1)
    return np.any(dist <= scfg.exclusion_radius_m, axis=1)


def _grid_magnitudes(
    gradients: Sequence[np.ndarray], cfg: SystemConfig, scfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """|<B_j(l_t, l_s), g_j>| on the grid as mags[j, l_t index, l_s index].

    Also returns the grid points and the mask of scatter cells inside a BS
    exclusion disc.
    """
    points = _grid_points(scfg)
    count = points.shape[0]
    harmonics = np.arange(cfg.num_subcarriers)
    leg_ts = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    mags = np.zeros((len(gradients), count, count))

    for j, gradient in enumerate(gradients):
        base = cfg.bs_array[j]
        diff = points - base
        leg_sb = np.linalg.norm(diff, axis=-1)
        theta = np.arctan2(diff[:, 0], diff[:, 1])
        # h[s, n] = sum_m conj(a_m(theta_s)) g_mn, then fold in conj(s_n)
        projected = (steering(theta, cfg).conj() @ gradient) * cfg.symbols.conj()
        for start in range(0, count, _GRID_CHUNK):
            cols = slice(start, min(start + _GRID_CHUNK, count))
            tau = (leg_ts[:, cols] + leg_sb[cols]) / cfg.speed_of_light
            phase = np.exp(
                2j * np.pi * cfg.subcarrier_spacing * tau[:, :, None] * harmonics
            )
            corr = np.einsum("tsn,sn->ts", phase, projected[cols])
            mags[j, :, cols] = np.abs(corr)

    return mags, points, _blocked(points, cfg, scfg)


def coarse_grid_objective(
    gradients: Sequence[np.ndarray], cfg: SystemConfig, scfg: SolverConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Next-source objective on the grid as obj[l_t index, l_s index], plus the points.

    The objective is -sum_j |<B_j(l_t, l_s), g_j>|; scatter cells inside a BS
    exclusion disc are +inf.
    """
    mags, points, blocked = _grid_magnitudes(gradients, cfg, scfg)
    obj = -mags.sum(axis=0)
    obj[:, blocked] = np.inf
    return obj, points


def source_correlations(
    x: np.ndarray, gradients: Sequence[np.ndarray], cfg: SystemConfig
) -> np.ndarray:
    """<B_j(x), g_j> for every BS j, as a length-J complex array."""
    params = np.asarray(x, dtype=float).reshape(1, 4)
    return np.array(
        [
            np.vdot(atoms_for(params, j, cfg)[0], gradient)
            for j, gradient in enumerate(gradients)
        ]
    )


def dual_violation(magnitudes: np.ndarray, lam1: float) -> np.ndarray:
    """||max(|c| - lambda1, 0)||_2 over the leading (BS) axis.

    A new atom with correlations c enters the TV + GTV optimum with nonzero
    weights exactly when this exceeds lambda2.
    """
    return np.linalg.norm(np.maximum(magnitudes - lam1, 0.0), axis=0)


def next_source_objective(
    x: np.ndarray, gradients: Sequence[np.ndarray], cfg: SystemConfig
) -> tuple[float, np.ndarray]:
    """-sum_j |<B_j(x), g_j>| and its gradient in the four location coordinates."""
    params = np.asarray(x, dtype=float).reshape(1, 4)
    value = 0.0
    grad = np.zeros(4)
    for j, gradient in enumerate(gradients):
        atoms, jac = atom_jacobian(params, j, cfg)
        corr = np.vdot(atoms[0], gradient)
        dcorr = np.einsum("dmn,mn->d", jac[0].conj(), gradient)
        magnitude = abs(corr)
        value -= magnitude
        if magnitude > 0:
            grad -= (np.conj(corr) * dcorr).real / magnitude
    return value, grad


def _outside_exclusion(
    scatter: np.ndarray, cfg: SystemConfig, scfg: SolverConfig
) -> bool:
    return bool(
        np.all(np.linalg.norm(cfg.bs_array - scatter, axis=1) > scfg.exclusion_radius_m)
    )


def select_next_source(
    gradients: Sequence[np.ndarray],
    cfg: SystemConfig,
    scfg: SolverConfig,
    *,
    lambdas: Lambdas | None = None,
) -> AtomParams:
    """Coarse 4-D grid sweep, then L-BFGS-B refinement from the best cell.

    With `lambdas`, a refined source whose dual_violation is within lambda2
    gives way to the grid cell of largest violation, if that one exceeds it.
    """
    mags, points, blocked = _grid_magnitudes(gradients, cfg, scfg)
    obj = -mags.sum(axis=0)
    obj[:, blocked] = np.inf
    flat = int(np.argmin(obj))
    t_index, s_index = divmod(flat, obj.shape[1])
    start = np.concatenate([points[t_index], points[s_index]])
    grid_value = float(obj[t_index, s_index])

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            return next_source_objective(x, gradients, cfg)
        except DegenerateGeometryError:
            return 0.0, np.zeros(4)

    result = minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=scfg.search_area.bounds() * 2,
        options={"maxiter": scfg.local_descent.max_steps, "ftol": 1e-15, "gtol": 1e-10},
    )
    if result.fun <= grid_value and _outside_exclusion(result.x[2:], cfg, scfg):
        chosen = result.x
    else:
        chosen = start
    _LOGGER.debug(
        "Next source l_t=(%.2f, %.2f) l_s=(%.2f, %.2f), grid %.4g -> %.4g",
        *chosen,
        grid_value,
        min(result.fun, grid_value),
    )
    if lambdas is None:
        return AtomParams.from_array(chosen)

    lam1, lam2 = lambdas
    correlations = np.abs(source_correlations(chosen, gradients, cfg))
    violation = float(dual_violation(correlations, lam1))
    if violation > lam2:
        return AtomParams.from_array(chosen)
    grid_violation = dual_violation(mags, lam1)
    grid_violation[:, blocked] = -np.inf
    flat = int(np.argmax(grid_violation))
    if grid_violation.flat[flat] > max(violation, lam2):
        t_index, s_index = divmod(flat, grid_violation.shape[1])
        chosen = np.concatenate([points[t_index], points[s_index]])
        _LOGGER.debug(
            "Grid cell l_t=(%.2f, %.2f) l_s=(%.2f, %.2f) violates by %.4g > %.4g",
            *chosen,
            grid_violation.flat[flat],
            lam2,
        )
    return AtomParams.from_array(chosen)


# -- weights ------------------------------------------------------------------


def _as_params(atoms: Sequence[AtomParams] | np.ndarray) -> np.ndarray:
    if isinstance(atoms, np.ndarray):
        return np.asarray(atoms, dtype=float).reshape(-1, 4)
    return np.array([atom.as_array() for atom in atoms], dtype=float).reshape(-1, 4)


def _prox(z: np.ndarray, l1_step: float, group_step: float) -> np.ndarray:
    """Complex soft-threshold per entry, then row-wise group shrinkage."""
    magnitude = np.abs(z)
    keep = magnitude > l1_step
    shrunk = np.where(keep, (1 - l1_step / np.where(keep, magnitude, 1.0)) * z, 0.0)
    norms = np.linalg.norm(shrunk, axis=1, keepdims=True)
    active = norms > group_step
    scale = np.where(active, 1 - group_step / np.where(active, norms, 1.0), 0.0)
    return shrunk * scale


def solve_weights(
    atoms: Sequence[AtomParams] | np.ndarray,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    *,
    warm_start: np.ndarray | None = None,
    lambdas: Lambdas | None = None,
) -> WeightFit:
    """Group-sparse least squares over the (K, J) weights for fixed atoms.

    With both lambdas zero the problem separates into one least-squares solve
    per BS. Otherwise FISTA with function-value restart runs on the Gram form.
    """
    params = _as_params(atoms)
    num_atoms = params.shape[0]
    if num_atoms == 0:
        raise EmptyCandidateError("solve_weights needs at least one atom")
    if lambdas is None:
        lambdas = resolve_regularisation(measurements, cfg, scfg)
    lam1, lam2 = lambdas

    dictionaries = [
        atoms_for(params, j, cfg).reshape(num_atoms, -1).T
        for j in range(measurements.num_bs)
    ]
    targets = [y.ravel() for y in measurements.per_bs]

    def exact_objective(weights: np.ndarray) -> float:
        fit = sum(
            float(np.sum(np.abs(a @ weights[:, j] - y) ** 2))
            for j, (a, y) in enumerate(zip(dictionaries, targets))
        )
        return fit + _penalty(weights, lambdas)

    if lam1 == 0 and lam2 == 0:
        weights = np.column_stack(
            [scipy.linalg.lstsq(a, y)[0] for a, y in zip(dictionaries, targets)]
        )
        return WeightFit(weights, exact_objective(weights), 1, True)

    gram = np.stack([a.conj().T @ a for a in dictionaries])
    corr = np.column_stack([a.conj().T @ y for a, y in zip(dictionaries, targets)])
    energy = float(sum(np.vdot(y, y).real for y in targets))
    lipschitz = 2 * max(float(np.linalg.eigvalsh(q)[-1]) for q in gram)
    step = 1.0 / lipschitz

    def smooth_gradient(weights: np.ndarray) -> np.ndarray:
        return 2 * (np.einsum("jkl,lj->kj", gram, weights) - corr)

    def objective(weights: np.ndarray) -> float:
        quad = np.einsum("kj,jkl,lj->", weights.conj(), gram, weights).real
        linear = np.sum(weights.conj() * corr).real
        return max(quad - 2 * linear + energy, 0.0) + _penalty(weights, lambdas)

    if warm_start is None:
        current = np.zeros((num_atoms, measurements.num_bs), dtype=complex)
    else:
        current = np.array(warm_start, dtype=complex)
        if current.shape != (num_atoms, measurements.num_bs):
            raise ValueError(
                f"warm_start shape {current.shape} does not match "
                f"({num_atoms}, {measurements.num_bs})"
            )
    value = objective(current)
    momentum_point = current
    t = 1.0
    restarted = False
    converged = False
    iteration = 0
    ws = scfg.weight_solver

    for iteration in range(1, ws.max_iters + 1):
        candidate = _prox(
            momentum_point - step * smooth_gradient(momentum_point),
            step * lam1,
            step * lam2,
        )
        candidate_value = objective(candidate)
        if candidate_value > value:
            if restarted:
                # a plain proximal step from the best iterate no longer helps
                converged = True
                break
            restarted = True
            t = 1.0
            momentum_point = current
            continue
        restarted = False
        change = value - candidate_value
        t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
        momentum_point = candidate + ((t - 1) / t_next) * (candidate - current)
        current, value, t = candidate, candidate_value, t_next
        if change <= ws.tol * max(value, _TINY):
            converged = True
            break

    if not converged:
        _LOGGER.warning(
            "Weights solve hit max_iters=%d (objective %.6g)", ws.max_iters, value
        )
    return WeightFit(current, exact_objective(current), iteration, converged)


def prune(candidate: CandidateSolution, scfg: SolverConfig) -> CandidateSolution:
    """Drop atoms whose cross-BS weight norm is <= prune_threshold."""
    keep = candidate.group_norms() > scfg.prune_threshold
    if np.all(keep):
        return candidate
    _LOGGER.debug("Pruned %d of %d atoms", int(np.sum(~keep)), candidate.num_atoms)
    return CandidateSolution(candidate.params[keep], candidate.weights[keep])


# -- local improvement --------------------------------------------------------


def _fit_and_gradient(
    params: np.ndarray,
    weights: np.ndarray,
    measurements: MeasurementSet,
    cfg: SystemConfig,
) -> tuple[float, np.ndarray]:
    value = 0.0
    grad = np.zeros(params.shape)
    for j, y in enumerate(measurements.per_bs):
        atoms, jac = atom_jacobian(params, j, cfg)
        w = weights[:, j]
        resid = np.tensordot(w, atoms, axes=1) - y
        value += float(np.vdot(resid, resid).real)
        grad += 2 * (w[:, None] * np.einsum("mn,kdmn->kd", resid.conj(), jac)).real
    return value, grad


def _projected_fit_and_gradient(
    params: np.ndarray, measurements: MeasurementSet, cfg: SystemConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Data fit with the weights eliminated by per-BS least squares.

    At the least-squares weights the fit is stationary in the weights, so the
    fixed-weight location gradient is also the gradient of the reduced fit.
    """
    num_atoms = params.shape[0]
    value = 0.0
    grad = np.zeros(params.shape)
    weights = np.zeros((num_atoms, measurements.num_bs), dtype=complex)
    for j, y in enumerate(measurements.per_bs):
        atoms, jac = atom_jacobian(params, j, cfg)
        w = scipy.linalg.lstsq(atoms.reshape(num_atoms, -1).T, y.ravel())[0]
        weights[:, j] = w
        resid = np.tensordot(w, atoms, axes=1) - y
        value += float(np.vdot(resid, resid).real)
        grad += 2 * (w[:, None] * np.einsum("mn,kdmn->kd", resid.conj(), jac)).real
    return value, grad, weights


def analytic_param_gradient(
    candidate: CandidateSolution, measurements: MeasurementSet, cfg: SystemConfig
) -> np.ndarray:
    """(K, 4) gradient of the data fit in [l_t^x, l_t^y, l_s^x, l_s^y] per atom."""
    if candidate.num_atoms == 0:
        return np.zeros((0, 4))
    return _fit_and_gradient(candidate.params, candidate.weights, measurements, cfg)[1]


def _projected_fit(
    params: np.ndarray, measurements: MeasurementSet, cfg: SystemConfig
) -> float:
    """Data fit at the per-BS least-squares weights of fixed atoms."""
    num_atoms = params.shape[0]
    value = 0.0
    for j, y in enumerate(measurements.per_bs):
        dictionary = atoms_for(params, j, cfg).reshape(num_atoms, -1).T
        target = y.ravel()
        w = scipy.linalg.lstsq(dictionary, target)[0]
        resid = dictionary @ w - target
        value += float(np.vdot(resid, resid).real)
    return value


def _circle_crossings(
    centre_a: np.ndarray, radius_a: float, centre_b: np.ndarray, radius_b: float
) -> list[np.ndarray]:
    """Crossing points of two circles; the point of closest approach if they miss."""
    delta = centre_b - centre_a
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        return []
    u = delta / d
    along = (d * d + radius_a * radius_a - radius_b * radius_b) / (2 * d)
    foot = centre_a + along * u
    h2 = radius_a * radius_a - along * along
    if h2 <= 0.0:
        return [foot]
    offset = math.sqrt(h2) * np.array([-u[1], u[0]])
    return [foot + offset, foot - offset]


def mobile_seeds(candidate: CandidateSolution, scfg: SolverConfig) -> np.ndarray:
    """Starting points for a shared l_t, shaped (S, 2).

    Every atom's l_t and l_s, plus the crossings of every pair of equal-delay
    circles: atom k keeps its delays only while l_t stays on the circle of
    radius ||l_t,k - l_s,k|| around l_s,k. Points are clipped to the search
    area and merged when closer than 1 m, first occurrence kept.
    """
    params = candidate.params
    radii = np.linalg.norm(params[:, 0:2] - params[:, 2:4], axis=1)
    points: list[np.ndarray] = [*params[:, 0:2], *params[:, 2:4]]
    for a, b in itertools.combinations(range(candidate.num_atoms), 2):
        points.extend(
            _circle_crossings(params[a, 2:4], radii[a], params[b, 2:4], radii[b])
        )

    area = scfg.search_area
    low = np.array([area.x_min, area.y_min])
    high = np.array([area.x_max, area.y_max])
    seeds: list[np.ndarray] = []
    for point in points:
        point = np.clip(point, low, high)
        if all(np.linalg.norm(point - seed) > _SEED_MERGE_M for seed in seeds):
            seeds.append(point)
    return np.array(seeds).reshape(-1, 2)


def _shares_mobile(candidate: CandidateSolution) -> bool:
    mobiles = candidate.params[:, 0:2]
    return bool(np.all(mobiles == mobiles[0:1]))


def _seeded_starts(
    candidate: CandidateSolution,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    lambdas: Lambdas,
) -> list[CandidateSolution]:
    """Copies of `candidate` tied to the shared l_t seeds that fit best as is."""
    scored: list[tuple[float, np.ndarray]] = []
    for seed in mobile_seeds(candidate, scfg):
        tied = candidate.params.copy()
        tied[:, 0:2] = seed
        try:
            scored.append((_projected_fit(tied, measurements, cfg), tied))
        except DegenerateGeometryError:
            continue
    scored.sort(key=lambda item: item[0])
    starts = []
    for value, tied in scored[:_SEED_DESCENTS]:
        fit = solve_weights(
            tied, measurements, cfg, scfg, warm_start=candidate.weights, lambdas=lambdas
        )
        starts.append(CandidateSolution(tied, fit.weights))
        _LOGGER.debug("Shared l_t seed (%.2f, %.2f), fit %.6g", *tied[0, 0:2], value)
    return starts or [candidate]


def place_virtual_scatters(
    candidate: CandidateSolution,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    lambdas: Lambdas,
) -> CandidateSolution:
    """Move l_s onto l_t for atoms that every BS seeing them sees as LoS.

    A LoS path fixes its virtual scatter only up to the segment between the
    MS and the BS: the atom does not change while l_s slides along it. Such
    atoms (detour below 1 mm at every BS whose weight is above 1e-3 of the
    atom's largest) are given the parsimonious placement l_s = l_t. The move
    is kept only if the regularised loss stays within a 1e-9 relative slack.
    """
    if candidate.num_atoms == 0:
        return candidate
    params = candidate.params
    mobiles, scatters = params[:, 0:2], params[:, 2:4]
    magnitudes = np.abs(candidate.weights)
    active = magnitudes > _ACTIVE_WEIGHT_FRACTION * magnitudes.max(
        axis=1, keepdims=True
    )
    leg_ts = np.linalg.norm(mobiles - scatters, axis=1)
    detour = np.zeros(candidate.num_atoms)
    for j, base in enumerate(cfg.bs_array):
        extra = (
            leg_ts
            + np.linalg.norm(scatters - base, axis=1)
            - np.linalg.norm(mobiles - base, axis=1)
        )
        detour = np.where(active[:, j], np.maximum(detour, extra), detour)
    movable = (leg_ts > 0) & (detour <= _LOS_DETOUR_M) & active.any(axis=1)
    if not np.any(movable):
        return candidate

    snapped = params.copy()
    snapped[movable, 2:4] = snapped[movable, 0:2]
    fit = solve_weights(
        snapped,
        measurements,
        cfg,
        scfg,
        warm_start=candidate.weights,
        lambdas=lambdas,
    )
    moved = CandidateSolution(snapped, fit.weights)
    before = loss(candidate, measurements, cfg, scfg, lambdas)
    after = loss(moved, measurements, cfg, scfg, lambdas)
    if after > before * (1 + _SNAP_SLACK):
        return candidate
    _LOGGER.debug("Placed %d virtual scatter(s) on the MS", int(np.sum(movable)))
    return moved


def _clear_exclusion(
    params: np.ndarray, cfg: SystemConfig, scfg: SolverConfig
) -> np.ndarray:
    """Push scatters found inside a BS exclusion disc onto its boundary."""
    radius = scfg.exclusion_radius_m
    if radius <= 0:
        return params
    out = params.copy()
    area = scfg.search_area
    centre = np.array([(area.x_min + area.x_max) / 2, (area.y_min + area.y_max) / 2])
    for base in cfg.bs_array:
        diff = out[:, 2:4] - base
        dist = np.linalg.norm(diff, axis=1)
        inside = dist <= radius
        if not np.any(inside):
            continue
        towards_centre = (centre - base) / max(np.linalg.norm(centre - base), _TINY)
        direction = np.where(
            (dist > 0)[:, None],
            diff / np.where(dist > 0, dist, 1.0)[:, None],
            towards_centre,
        )
        out[inside, 2:4] = base + radius * (1 + 1e-9) * direction[inside]
    return out


def _pack(params: np.ndarray, shared: bool) -> np.ndarray:
    if shared:
        return np.concatenate([params[0, 0:2], params[:, 2:4].ravel()])
    return params.ravel().copy()


def _unpack(x: np.ndarray, num_atoms: int, shared: bool) -> np.ndarray:
    if not shared:
        return x.reshape(num_atoms, 4).copy()
    params = np.empty((num_atoms, 4))
    params[:, 0:2] = x[0:2]
    params[:, 2:4] = x[2:].reshape(num_atoms, 2)
    return params


def _pack_gradient(grad: np.ndarray, shared: bool) -> np.ndarray:
    if shared:
        return np.concatenate([grad[:, 0:2].sum(axis=0), grad[:, 2:4].ravel()])
    return grad.ravel()


def _descend_lbfgs(
    x0: np.ndarray,
    fun: Objective,
    bounds: list[tuple[float, float]],
    ld: LocalDescentConfig,
) -> np.ndarray:
    start_value = fun(x0)[0]
    result = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": ld.max_steps, "ftol": 1e-15, "gtol": 1e-12},
    )
    return result.x if result.fun <= start_value else x0


def _descend_armijo(
    x0: np.ndarray,
    fun: ProjectedObjective,
    fit_at: FixedWeightFit,
    bounds: list[tuple[float, float]],
    ld: LocalDescentConfig,
) -> np.ndarray:
    """Projected steepest descent with Armijo backtracking.

    Trial points of a line search are scored at the weights of its start
    point; the weights are re-solved once a step is accepted. The first trial
    step moves the largest coordinate by step_init metres.
    """
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])
    x = x0
    value, grad, weights = fun(x)
    for _ in range(ld.max_steps):
        peak = float(np.max(np.abs(grad)))
        if peak == 0.0:
            break
        alpha = ld.step_init / peak
        accepted = False
        while alpha * peak >= _MIN_MOVE_M:
            trial = np.clip(x - alpha * grad, lower, upper)
            sufficient = value - ld.armijo_c * float(grad @ (x - trial))
            if fit_at(trial, weights) <= sufficient:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        previous = value
        x = trial
        value, grad, weights = fun(x)
        if previous - value <= ld.tol * max(value, _TINY):
            break
    return x


def _descend(
    work: CandidateSolution,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    lambdas: Lambdas,
    shared: bool,
) -> tuple[CandidateSolution, float]:
    """Rounds of location descent and weight re-solves starting from `work`."""
    ld = scfg.local_descent
    num_atoms = work.num_atoms
    work_loss = loss(work, measurements, cfg, scfg, lambdas)
    pairs_per_atom = 1 if shared else 2
    bounds = scfg.search_area.bounds() * (
        num_atoms * pairs_per_atom + (1 if shared else 0)
    )
    blank = np.zeros((num_atoms, measurements.num_bs), dtype=complex)

    for round_index in range(ld.rounds):
        weights = work.weights
        fallback = 2 * work_loss + 1.0

        def projected(x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
            params = _unpack(x, num_atoms, shared)
            try:
                value, grad, fitted = _projected_fit_and_gradient(
                    params, measurements, cfg
                )
            except DegenerateGeometryError:
                return fallback, np.zeros_like(x), blank
            return value, _pack_gradient(grad, shared), fitted

        def fit_at(x: np.ndarray, fixed: np.ndarray) -> float:
            params = _unpack(x, num_atoms, shared)
            try:
                return data_fit(CandidateSolution(params, fixed), measurements, cfg)
            except DegenerateGeometryError:
                return fallback

        start = _pack(work.params, shared)
        if ld.method == DESCENT_ARMIJO:
            x = _descend_armijo(start, projected, fit_at, bounds, ld)
        else:
            x = _descend_lbfgs(start, lambda z: projected(z)[:2], bounds, ld)
        params = _clear_exclusion(_unpack(x, num_atoms, shared), cfg, scfg)
        fit = solve_weights(
            params, measurements, cfg, scfg, warm_start=weights, lambdas=lambdas
        )
        moved = CandidateSolution(params, fit.weights)
        moved_loss = loss(moved, measurements, cfg, scfg, lambdas)
        if moved_loss > work_loss:
            _LOGGER.debug(
                "Round %d raised the loss %.6g -> %.6g; reverted",
                round_index,
                work_loss,
                moved_loss,
            )
            break
        gain = work_loss - moved_loss
        work, work_loss = moved, moved_loss
        if gain <= ld.tol * max(work_loss, _TINY):
            break
    return work, work_loss


def local_improve(
    candidate: CandidateSolution,
    measurements: MeasurementSet,
    cfg: SystemConfig,
    scfg: SolverConfig,
    *,
    lambdas: Lambdas | None = None,
) -> CandidateSolution:
    """Descend atom locations on the projected data fit; re-solve weights per round.

    With shared coupling and several atoms, the descent is restarted from the
    best-fitting mobile_seeds and the lowest regularised loss is kept; the
    result always carries a single l_t. Virtual scatters are then placed on
    the MS (see place_virtual_scatters).

    The regularised loss of the returned candidate never exceeds the input's,
    unless shared coupling is on and the input's atoms disagree on l_t.
    """
    if candidate.num_atoms == 0:
        return candidate
    if lambdas is None:
        lambdas = resolve_regularisation(measurements, cfg, scfg)
    shared = scfg.mobile_coupling == COUPLING_SHARED
    start_loss = loss(candidate, measurements, cfg, scfg, lambdas)

    starts = [candidate]
    if shared and candidate.num_atoms > 1:
        starts = _seeded_starts(candidate, measurements, cfg, scfg, lambdas)
    best, best_loss = candidate, math.inf
    for start in starts:
        moved, moved_loss = _descend(start, measurements, cfg, scfg, lambdas, shared)
        if moved_loss < best_loss:
            best, best_loss = moved, moved_loss
    best = place_virtual_scatters(best, measurements, cfg, scfg, lambdas)
    best_loss = loss(best, measurements, cfg, scfg, lambdas)

    keeps_coupling = not shared or _shares_mobile(candidate)
    if keeps_coupling and best_loss > start_loss:
        _LOGGER.debug("Local improvement found no decrease; keeping the input support")
        return candidate
    return best


# -- outer loop ---------------------------------------------------------------


def adcg_solve(
    measurements: MeasurementSet, cfg: SystemConfig, scfg: SolverConfig
) -> AdcgResult:
    """Alternating descent conditional gradient over (l_t, l_s) atoms."""
    lambdas = resolve_regularisation(measurements, cfg, scfg)
    lam1, lam2 = lambdas
    num_bs = measurements.num_bs

    candidate = CandidateSolution.empty(num_bs)
    current = loss(candidate, measurements, cfg, scfg, lambdas)
    initial = current
    history: list[IterationRecord] = []
    _LOGGER.debug(
        "ADCG start: loss %.6g, lambda1=%.4g, lambda2=%.4g", current, lam1, lam2
    )
    if current == 0.0:
        return AdcgResult(candidate, True, 0, (), 0.0)

    converged = False
    iteration = 0
    for iteration in range(1, scfg.outer_iters + 1):
        gradients = residual_gradients(candidate, measurements, cfg)
        source = select_next_source(gradients, cfg, scfg, lambdas=lambdas)
        correlations = np.abs(source_correlations(source.as_array(), gradients, cfg))
        violation = float(dual_violation(correlations, lam1))
        if violation <= lam2:
            _LOGGER.debug(
                "Iteration %d: zero-weight violation %.4g <= lambda2 %.4g, stopping",
                iteration,
                violation,
                lam2,
            )
            converged = True
            break

        params = np.vstack([candidate.params, source.as_array()[None, :]])
        warm = np.vstack([candidate.weights, np.zeros((1, num_bs), dtype=complex)])
        fit = solve_weights(
            params, measurements, cfg, scfg, warm_start=warm, lambdas=lambdas
        )
        weighted = CandidateSolution(params, fit.weights)
        after_weights = loss(weighted, measurements, cfg, scfg, lambdas)
        pruned = prune(weighted, scfg)
        if 0 < pruned.num_atoms < weighted.num_atoms:
            refit = solve_weights(
                pruned.params,
                measurements,
                cfg,
                scfg,
                warm_start=pruned.weights,
                lambdas=lambdas,
            )
            pruned = CandidateSolution(pruned.params, refit.weights)
        improved = local_improve(pruned, measurements, cfg, scfg, lambdas=lambdas)
        after_improve = loss(improved, measurements, cfg, scfg, lambdas)
        history.append(
            IterationRecord(iteration, improved.num_atoms, after_weights, after_improve)
        )
        _LOGGER.debug(
            "Iteration %d: %d atoms, loss %.6g after weights, %.6g after descent",
            iteration,
            improved.num_atoms,
            after_weights,
            after_improve,
        )

        if after_improve >= current:
            # keep the previous support; within stop_tol this is a stall, not a failure
            converged = after_improve <= current * (1 + scfg.stop_tol)
            _LOGGER.debug(
                "Iteration %d did not decrease the loss; reverting", iteration
            )
            break
        decrease = current - after_improve
        previous = current
        candidate, current = improved, after_improve
        exact = current <= _EXACT_FIT_RATIO * initial
        if exact or decrease <= scfg.stop_tol * previous:
            converged = True
            break

    if not converged:
        _LOGGER.warning(
            "ADCG stopped without convergence after %d iterations (loss %.6g)",
            iteration,
            current,
        )
    return AdcgResult(candidate, converged, iteration, tuple(history), initial)
