"""
Signed distance fields over grid maps and their continuous (bilinear) queries
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import torch
from scipy.ndimage import distance_transform_edt

from .world import GridMap


@dataclass(frozen=True, eq=False)
class SignedDistanceField:
    """Cell-center distances in meters: positive in free space, negative inside obstacles"""

    values: np.ndarray
    resolution: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def value_at(self, p: Sequence[float]) -> float:
        return sdf_query(self, p)[0]

    def interpolate(self, points: torch.Tensor) -> torch.Tensor:
        """Differentiable bilinear interpolation for points of shape (..., 2)"""
        grid = torch.as_tensor(self.values, dtype=torch.float64)
        h, w = self.values.shape
        u = points[..., 0] / self.resolution - 0.5
        v = points[..., 1] / self.resolution - 0.5
        u = torch.clamp(u, 0.0, float(w - 1))
        v = torch.clamp(v, 0.0, float(h - 1))
        i0 = torch.clamp(torch.floor(u.detach()), max=max(w - 2, 0)).long()
        j0 = torch.clamp(torch.floor(v.detach()), max=max(h - 2, 0)).long()
        i1 = torch.clamp(i0 + 1, max=w - 1)
        j1 = torch.clamp(j0 + 1, max=h - 1)
        fx = u - i0.to(u.dtype)
        fy = v - j0.to(v.dtype)
        f00 = grid[j0, i0]
        f10 = grid[j0, i1]
        f01 = grid[j1, i0]
        f11 = grid[j1, i1]
        return ((1 - fx) * (1 - fy) * f00 + fx * (1 - fy) * f10
                + (1 - fx) * fy * f01 + fx * fy * f11)


def compute_sdf(grid_map: GridMap) -> SignedDistanceField:
    """Exact Euclidean signed distance transform on cell centers.

    value = dt(to obstacle set) - dt(to free set); maps without obstacles (or
    without free space) clamp to plus (minus) the map diagonal.
    """
    occupied = grid_map.occupancy
    res = grid_map.resolution
    diagonal = float(np.hypot(grid_map.width, grid_map.height) * res)

    if not occupied.any():
        return SignedDistanceField(np.full(occupied.shape, diagonal), res)
    if occupied.all():
        return SignedDistanceField(np.full(occupied.shape, -diagonal), res)

    # distance_transform_edt measures distance to the nearest zero element
    to_obstacle = distance_transform_edt(~occupied, sampling=res)
    to_free = distance_transform_edt(occupied, sampling=res)
    return SignedDistanceField(np.asarray(to_obstacle - to_free, dtype=np.float64), res)


def sdf_query(field: SignedDistanceField, p: Sequence[float]) -> Tuple[float, np.ndarray]:
    """Bilinear value and analytic gradient of the bilinear patch at p.

    Queries outside the cell-center hull clamp to the border; the gradient
    component along a clamped axis is zero.
    """
    values = field.values
    h, w = values.shape
    res = field.resolution
    u_raw = float(p[0]) / res - 0.5
    v_raw = float(p[1]) / res - 0.5
    u = min(max(u_raw, 0.0), float(w - 1))
    v = min(max(v_raw, 0.0), float(h - 1))
    i0 = min(int(np.floor(u)), max(w - 2, 0))
    j0 = min(int(np.floor(v)), max(h - 2, 0))
    i1 = min(i0 + 1, w - 1)
    j1 = min(j0 + 1, h - 1)
    fx = u - i0
    fy = v - j0
    f00, f10 = values[j0, i0], values[j0, i1]
    f01, f11 = values[j1, i0], values[j1, i1]

    value = ((1 - fx) * (1 - fy) * f00 + fx * (1 - fy) * f10
             + (1 - fx) * fy * f01 + fx * fy * f11)
    dfdx = ((1 - fy) * (f10 - f00) + fy * (f11 - f01)) / res
    dfdy = ((1 - fx) * (f01 - f00) + fx * (f11 - f10)) / res
    if u != u_raw:
        dfdx = 0.0
    if v != v_raw:
        dfdy = 0.0
    return float(value), np.array([dfdx, dfdy], dtype=np.float64)
