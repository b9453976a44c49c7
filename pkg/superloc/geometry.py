"""2-D propagation geometry: delays, arrival angles and virtual scatters.

Angles follow the array convention of a ULA aligned with the horizontal axis:
theta is measured from the +y axis towards +x, i.e. atan2(dx, dy).
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DegenerateGeometryError
from .models import Location, PathGeometry


def toa_los(mobile: Location, base: Location, c: float) -> float:
    """Delay of the direct path in seconds."""
    return mobile.distance_to(base) / c


def doa(source: Location, base: Location) -> float:
    """Direction of arrival at `base` of a path leaving `source`, in (-pi, pi]."""
    dx = source.x - base.x
    dy = source.y - base.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateGeometryError(
            "Direction of arrival undefined: source coincides with the BS at "
            f"({base.x}, {base.y})"
        )
    angle = math.atan2(dx, dy)
    return math.pi if angle == -math.pi else angle


def toa_nlos(mobile: Location, scatter: Location, base: Location, c: float) -> float:
    """Delay of the single-bounce path mobile -> scatter -> base in seconds."""
    return (mobile.distance_to(scatter) + scatter.distance_to(base)) / c


def canonicalise_virtual_scatter(
    mobile: Location, scatter: Location | None
) -> Location:
    """Place the virtual scatter of a LoS path at the MS; keep physical ones."""
    return mobile if scatter is None else scatter


def path_geometry(
    mobile: Location, scatter: Location | None, base: Location, c: float
) -> PathGeometry:
    """(toa, doa) of a path after virtual-scatter canonicalisation."""
    placed = canonicalise_virtual_scatter(mobile, scatter)
    return PathGeometry(toa=toa_nlos(mobile, placed, base, c), doa=doa(placed, base))


def toa_gradients(
    mobile: Location, scatter: Location, base: Location, c: float
) -> tuple[np.ndarray, np.ndarray]:
    """Partials of toa_nlos with respect to the mobile and the scatter."""
    grads = delay_partials(
        mobile.as_array()[None, :], scatter.as_array()[None, :], base.as_array(), c
    )
    return grads[0][0], grads[1][0]


def doa_gradient(scatter: Location, base: Location) -> np.ndarray:
    """Partial of doa with respect to the scatter coordinates."""
    if scatter == base:
        raise DegenerateGeometryError("DoA gradient undefined at the BS position")
    return angle_partials(scatter.as_array()[None, :], base.as_array())[0]


# Vectorised forms used by the forward model and the solver. Points are
# (..., 2) arrays in metres; `base` is a length-2 array.


def delays(
    mobiles: np.ndarray, scatters: np.ndarray, base: np.ndarray, c: float
) -> np.ndarray:
    """Single-bounce delays for broadcastable arrays of mobiles and scatters."""
    leg_ts = np.linalg.norm(mobiles - scatters, axis=-1)
    leg_sb = np.linalg.norm(scatters - base, axis=-1)
    return (leg_ts + leg_sb) / c


def angles(scatters: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Arrival angles atan2(dx, dy) for an array of scatters."""
    diff = scatters - base
    if np.any(np.all(diff == 0.0, axis=-1)):
        raise DegenerateGeometryError("A scatter coincides with a BS position")
    return np.arctan2(diff[..., 0], diff[..., 1])


def delay_partials(
    mobiles: np.ndarray, scatters: np.ndarray, base: np.ndarray, c: float
) -> tuple[np.ndarray, np.ndarray]:
    """d tau / d l_t and d tau / d l_s, each shaped like the inputs."""
    diff_ts = mobiles - scatters
    diff_sb = scatters - base
    norm_ts = np.linalg.norm(diff_ts, axis=-1, keepdims=True)
    norm_sb = np.linalg.norm(diff_sb, axis=-1, keepdims=True)
    if np.any(norm_sb == 0.0):
        raise DegenerateGeometryError("A scatter coincides with a BS position")
    unit_sb = diff_sb / norm_sb
    # mobile == scatter: take the limit along the LoS segment (away from the BS)
    coincident = norm_ts == 0.0
    safe_ts = np.where(coincident, 1.0, norm_ts)
    unit_ts = np.where(coincident, unit_sb, diff_ts / safe_ts)
    return unit_ts / c, (unit_sb - unit_ts) / c


def angle_partials(scatters: np.ndarray, base: np.ndarray) -> np.ndarray:
    """d theta / d l_s for theta = atan2(dx, dy)."""
    diff = scatters - base
    r2 = np.sum(diff**2, axis=-1, keepdims=True)
    if np.any(r2 == 0.0):
        raise DegenerateGeometryError("A scatter coincides with a BS position")
    return np.concatenate([diff[..., 1:2], -diff[..., 0:1]], axis=-1) / r2
