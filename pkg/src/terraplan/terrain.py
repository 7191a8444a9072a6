"""Elevation maps, synthetic terrain generation, and map-based vehicle attitude.

The map is a uniform grid of heights. Attitude (roll, pitch) is estimated by
fitting a plane through the four wheel-contact heights, assuming the wheels
stay on the ground and co-planar.

Sign conventions (used by every consumer in this package):
    roll  phi   > 0  <=> gravity has a positive left-pointing body component
    pitch theta > 0  <=> gravity has a positive forward body component
so driving straight up a slope gives theta < 0, and a vehicle whose left
wheels sit lower than its right wheels has phi > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NODATA = -9999.0


class TerrainError(Exception):
    pass


class OutOfBounds(TerrainError):
    """Query point outside the interpolatable grid area."""


class UnknownCell(TerrainError):
    """One of the surrounding cells holds no height data."""


class TooSteep(TerrainError):
    """Fitted attitude angle is not traversable (|angle| >= pi/2)."""


class InvalidSpec(TerrainError):
    """Terrain spec violates its invariants."""


class ElevationMap:
    """Immutable uniform-grid heightmap with bilinear interpolation.

    heights[row, col] is the height at world point
    (origin_x + col*cell_size, origin_y + row*cell_size); origin refers to
    the center of cell (0, 0). Unknown cells are stored as NaN.
    """

    def __init__(self, origin_x: float, origin_y: float, cell_size: float,
                 heights: np.ndarray):
        if cell_size <= 0:
            raise InvalidSpec(f"cell_size must be > 0, got {cell_size}")
        heights = np.asarray(heights, dtype=np.float64)
        if heights.ndim != 2 or heights.shape[0] < 2 or heights.shape[1] < 2:
            raise InvalidSpec(f"heights must be 2-D with shape >= (2, 2), got {heights.shape}")
        if np.any(np.isinf(heights)):
            raise InvalidSpec("heights must be finite or NaN")
        self.origin_x = float(origin_x)
        self.origin_y = float(origin_y)
        self.cell_size = float(cell_size)
        self.heights = heights
        self.heights.flags.writeable = False
        self.n_rows, self.n_cols = heights.shape

    @property
    def max_x(self) -> float:
        return self.origin_x + (self.n_cols - 1) * self.cell_size

    @property
    def max_y(self) -> float:
        return self.origin_y + (self.n_rows - 1) * self.cell_size

    def contains(self, x: float, y: float) -> bool:
        return (self.origin_x <= x <= self.max_x) and (self.origin_y <= y <= self.max_y)


def height_at(emap: ElevationMap, x: float, y: float) -> float:
    """Bilinear interpolation of the four cell heights surrounding (x, y).

    Exact cell-center queries return the stored value.
    """
    fc = (x - emap.origin_x) / emap.cell_size
    fr = (y - emap.origin_y) / emap.cell_size
    if fc < 0.0 or fr < 0.0 or fc > emap.n_cols - 1 or fr > emap.n_rows - 1:
        raise OutOfBounds(f"({x}, {y}) outside grid")
    c0 = min(int(fc), emap.n_cols - 2)
    r0 = min(int(fr), emap.n_rows - 2)
    dc = fc - c0
    dr = fr - r0
    h = emap.heights
    z00 = h[r0, c0]
    z01 = h[r0, c0 + 1]
    z10 = h[r0 + 1, c0]
    z11 = h[r0 + 1, c0 + 1]
    if math.isnan(z00) or math.isnan(z01) or math.isnan(z10) or math.isnan(z11):
        raise UnknownCell(f"no data around ({x}, {y})")
    return float((z00 * (1 - dc) + z01 * dc) * (1 - dr) + (z10 * (1 - dc) + z11 * dc) * dr)


@dataclass(frozen=True)
class WheelFootprint:
    """Ground-contact rectangle of the vehicle."""
    wheelbase: float = 2.4
    track_width: float = 1.6

    def __post_init__(self):
        if self.wheelbase <= 0 or self.track_width <= 0:
            raise InvalidSpec("wheelbase and track_width must be > 0")


@dataclass(frozen=True)
class Attitude:
    """Roll and pitch in radians, per the module sign conventions."""
    roll: float
    pitch: float


def wheel_points(x: float, y: float, psi: float, footprint: WheelFootprint) -> np.ndarray:
    """World coordinates of the four wheel contacts: FL, FR, RL, RR."""
    hl = 0.5 * footprint.wheelbase
    hw = 0.5 * footprint.track_width
    c, s = math.cos(psi), math.sin(psi)
    pts = np.empty((4, 2))
    k = 0
    for fwd in (hl, -hl):
        for left in (hw, -hw):
            pts[k, 0] = x + fwd * c - left * s
            pts[k, 1] = y + fwd * s + left * c
            k += 1
    return pts


def attitude(emap: ElevationMap, x: float, y: float, psi: float,
             footprint: WheelFootprint) -> Attitude:
    """Vehicle attitude from a least-squares plane through the wheel heights.

    Fits z = a*x + b*y + c through the four contact points, then resolves the
    plane slopes into the body frame: with s the along-heading slope and t the
    left-lateral slope,

        pitch = -atan(s),   roll = -atan(t * cos(pitch)).

    Exact on planar terrain (the four corners determine the plane).
    """
    pts = wheel_points(x, y, psi, footprint)
    z = np.array([height_at(emap, px, py) for px, py in pts])

    dx = pts[:, 0] - pts[:, 0].mean()
    dy = pts[:, 1] - pts[:, 1].mean()
    dz = z - z.mean()
    sxx = float(dx @ dx)
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    det = sxx * syy - sxy * sxy
    a = (syy * float(dx @ dz) - sxy * float(dy @ dz)) / det
    b = (sxx * float(dy @ dz) - sxy * float(dx @ dz)) / det

    c, s = math.cos(psi), math.sin(psi)
    slope_fwd = a * c + b * s
    slope_left = -a * s + b * c
    pitch = -math.atan(slope_fwd)
    roll = -math.atan(slope_left * math.cos(pitch))
    if abs(roll) >= math.pi / 2 or abs(pitch) >= math.pi / 2:
        raise TooSteep(f"attitude ({roll}, {pitch}) at ({x}, {y})")
    return Attitude(roll=roll, pitch=pitch)


@dataclass(frozen=True)
class TerrainSpec:
    """Parameters for a synthetic terrain.

    kind: one of flat, incline, v_ditch, crater, sine_bumps.
    extent is the side length in meters of the square map, centered on the
    origin; cell_size is the grid resolution.
    """
    kind: str = "flat"
    extent: float = 200.0
    cell_size: float = 0.5
    # incline
    angle_deg: float = 10.0
    azimuth_deg: float = 0.0
    # v_ditch
    depth: float = 1.0
    half_width: float = 4.0
    wall_angle_deg: float = 20.0
    axis_azimuth_deg: float = 90.0
    smooth: float = 0.0   # crease-rounding width; 0 keeps sharp prism edges
    # crater
    radius: float = 10.0
    rim_width: float = 3.0
    # sine_bumps
    amplitude: float = 0.3
    wavelength: float = 8.0

    def validate(self) -> None:
        kinds = ("flat", "incline", "v_ditch", "crater", "sine_bumps")
        if self.kind not in kinds:
            raise InvalidSpec(f"unknown terrain kind {self.kind!r}")
        if self.extent <= 0 or self.cell_size <= 0:
            raise InvalidSpec("extent and cell_size must be > 0")
        if self.kind == "incline" and not 0.0 <= self.angle_deg < 90.0:
            raise InvalidSpec(f"incline angle must be in [0, 90), got {self.angle_deg}")
        if self.kind == "v_ditch":
            if self.depth <= 0 or self.half_width <= 0:
                raise InvalidSpec("ditch depth and half_width must be > 0")
            if not 0.0 < self.wall_angle_deg < 90.0:
                raise InvalidSpec(f"wall angle must be in (0, 90), got {self.wall_angle_deg}")
        if self.kind == "crater" and (self.depth <= 0 or self.radius <= 0 or self.rim_width <= 0):
            raise InvalidSpec("crater depth, radius, rim_width must be > 0")
        if self.kind == "sine_bumps" and (self.amplitude <= 0 or self.wavelength <= 0):
            raise InvalidSpec("amplitude and wavelength must be > 0")


def generate_terrain(spec: TerrainSpec) -> ElevationMap:
    """Deterministic synthetic map for the given spec, centered on the origin."""
    spec.validate()
    n = int(round(spec.extent / spec.cell_size))
    if n < 2:
        raise InvalidSpec("extent/cell_size must give at least a 2x2 grid")
    origin = -0.5 * (n - 1) * spec.cell_size
    xs = origin + spec.cell_size * np.arange(n)
    x, y = np.meshgrid(xs, xs)

    if spec.kind == "flat":
        z = np.zeros_like(x)
    elif spec.kind == "incline":
        az = math.radians(spec.azimuth_deg)
        # height rises along the azimuth direction
        z = math.tan(math.radians(spec.angle_deg)) * (x * math.cos(az) + y * math.sin(az))
    elif spec.kind == "v_ditch":
        az = math.radians(spec.axis_azimuth_deg)
        # signed distance across the ditch axis through the origin
        d = np.abs(-x * math.sin(az) + y * math.cos(az))
        wall = math.tan(math.radians(spec.wall_angle_deg))

        def profile(u):
            return -np.minimum(spec.depth, np.maximum(0.0, (spec.half_width - np.abs(u)) * wall))

        if spec.smooth > 0.0:
            # box-average the cross profile so the prism creases become C1,
            # as a perception-derived map would be; mid-walls stay planar
            k = 33
            offs = np.linspace(-0.5 * spec.smooth, 0.5 * spec.smooth, k)
            wts = np.full(k, 1.0 / (k - 1))
            wts[0] *= 0.5
            wts[-1] *= 0.5
            z = np.zeros_like(d)
            for o, wt in zip(offs, wts):
                z += wt * profile(d + o)
        else:
            z = profile(d)
    elif spec.kind == "crater":
        r = np.hypot(x, y)
        # flat floor at -depth, cosine-smoothed rim of given width
        t = np.clip((r - spec.radius) / spec.rim_width, 0.0, 1.0)
        z = -spec.depth * 0.5 * (1.0 + np.cos(math.pi * t))
    else:  # sine_bumps
        z = spec.amplitude * np.sin(2.0 * math.pi * x / spec.wavelength)

    return ElevationMap(origin, origin, spec.cell_size, z)


def write_ascii_grid(emap: ElevationMap, path: str) -> None:
    """Write an ESRI-ASCII-grid heightmap (top row first, NODATA -9999)."""
    with open(path, "w") as f:
        f.write(f"ncols {emap.n_cols}\n")
        f.write(f"nrows {emap.n_rows}\n")
        f.write(f"xllcorner {emap.origin_x - 0.5 * emap.cell_size:.12g}\n")
        f.write(f"yllcorner {emap.origin_y - 0.5 * emap.cell_size:.12g}\n")
        f.write(f"cellsize {emap.cell_size:.12g}\n")
        f.write(f"NODATA_value {NODATA:g}\n")
        for row in emap.heights[::-1]:
            vals = [f"{NODATA:g}" if math.isnan(v) else f"{v:.12g}" for v in row]
            f.write(" ".join(vals) + "\n")


def read_ascii_grid(path: str) -> ElevationMap:
    """Read an ESRI-ASCII-grid heightmap written by write_ascii_grid."""
    header: dict[str, float] = {}
    rows: list[list[float]] = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and parts[0][0].isalpha():
                header[parts[0].lower()] = float(parts[1])
            else:
                rows.append([float(v) for v in parts])
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        cell = header["cellsize"]
        xll = header["xllcorner"]
        yll = header["yllcorner"]
    except KeyError as e:
        raise InvalidSpec(f"grid file missing header field {e}") from e
    nodata = header.get("nodata_value", NODATA)
    if len(rows) != nrows or any(len(r) != ncols for r in rows):
        raise InvalidSpec(f"grid body does not match {nrows}x{ncols} header")
    z = np.array(rows[::-1], dtype=np.float64)
    z[z == nodata] = np.nan
    return ElevationMap(xll + 0.5 * cell, yll + 0.5 * cell, cell, z)
