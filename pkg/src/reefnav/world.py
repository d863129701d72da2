"""Deterministic 2.5D underwater terrain.

The seafloor is a heightmap on a regular grid. Elevation is stored in a
z-up frame where the water surface is 0, so all elevations are negative;
robot depth z (positive down) relates to it by altitude = -elevation - z.
Each cell carries exactly one surface class. Worlds are regenerated from
(seed, params) and never serialized.
"""

import math
from dataclasses import dataclass, field

import numpy as np

SAND = 0
CORAL = 1
ROCK = 2

CLASS_NAMES = {SAND: "sand", CORAL: "coral", ROCK: "rock_obstacle"}


@dataclass(frozen=True)
class WorldParams:
    extent: tuple = (40.0, 40.0)  # x_max, y_max (m)
    cell_size: float = 0.5
    depth_base: float = 6.0  # nominal seafloor depth (m)
    relief_amplitude: float = 0.5  # smooth background relief (m)
    coral_patches: int = 55
    coral_target: float | None = None  # if set, patches added until this coverage fraction
    patch_radius: tuple = (1.2, 2.8)
    coral_bump: float = 0.3  # coral raises the floor by up to this (m)
    obstacle_density: float = 0.4  # rocks per 100 m^2
    rock_radius: tuple = (0.6, 1.4)
    rock_height: tuple = (2.0, 3.5)  # above local floor (m)
    current: tuple = (0.0, 0.0)  # ambient water velocity (m/s)


@dataclass
class World:
    params: WorldParams
    seed: int
    elevation: np.ndarray  # (ny, nx), z-up, all < 0
    surface_class: np.ndarray  # (ny, nx) uint8 in {SAND, CORAL, ROCK}
    _coral_xy: np.ndarray = field(init=False, repr=False)
    _rock_xy: np.ndarray = field(init=False, repr=False)
    _rock_top: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cs = self.params.cell_size
        ny, nx = self.surface_class.shape
        ys, xs = np.nonzero(self.surface_class == CORAL)
        self._coral_xy = np.stack([(xs + 0.5) * cs, (ys + 0.5) * cs], axis=1)
        ys, xs = np.nonzero(self.surface_class == ROCK)
        self._rock_xy = np.stack([(xs + 0.5) * cs, (ys + 0.5) * cs], axis=1)
        self._rock_top = -self.elevation[ys, xs]  # depth of rock tops (m)

    @property
    def extent(self):
        return self.params.extent

    @property
    def current(self):
        return self.params.current

    @property
    def coral_fraction(self):
        return float(np.mean(self.surface_class == CORAL))

    def in_bounds(self, x, y):
        return 0.0 <= x < self.extent[0] and 0.0 <= y < self.extent[1]

    def cell_index(self, x, y):
        nx = self.surface_class.shape[1]
        ny = self.surface_class.shape[0]
        ix = min(int(x / self.params.cell_size), nx - 1)
        iy = min(int(y / self.params.cell_size), ny - 1)
        return iy, ix

    def elevation_at(self, x, y):
        iy, ix = self.cell_index(x, y)
        return float(self.elevation[iy, ix])

    def class_at(self, x, y):
        iy, ix = self.cell_index(x, y)
        return int(self.surface_class[iy, ix])

    def floor_depth_at(self, x, y):
        return -self.elevation_at(x, y)

    def altitude_of(self, x, y, z):
        """Height of a point at depth z above the local seafloor (m)."""
        return self.floor_depth_at(x, y) - z

    def coral_cells(self):
        """(M, 2) world positions of coral cell centers."""
        return self._coral_xy

    def rock_cells(self):
        """(M, 2) rock cell centers and (M,) depths of their tops."""
        return self._rock_xy, self._rock_top


def generate_world(seed, params=None):
    """Build a deterministic world from a seed and generation parameters."""
    params = params or WorldParams()
    if params.extent[0] <= 0 or params.extent[1] <= 0:
        raise ValueError(f"world extent must be positive, got {params.extent}")
    if params.cell_size <= 0:
        raise ValueError("cell_size must be positive")

    rng = np.random.default_rng(seed)
    cs = params.cell_size
    nx = int(round(params.extent[0] / cs))
    ny = int(round(params.extent[1] / cs))
    xs = (np.arange(nx) + 0.5) * cs
    ys = (np.arange(ny) + 0.5) * cs
    gx, gy = np.meshgrid(xs, ys)

    # Smooth background relief from a handful of random plane waves.
    elevation = np.full((ny, nx), -params.depth_base)
    n_waves = 6
    for _ in range(n_waves):
        amp = rng.uniform(0.2, 1.0) * params.relief_amplitude / n_waves
        wavelength = rng.uniform(8.0, 25.0)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        k = 2.0 * math.pi / wavelength
        elevation += amp * np.cos(k * (gx * math.cos(theta) + gy * math.sin(theta)) + phase)

    surface = np.full((ny, nx), SAND, dtype=np.uint8)

    def add_patch():
        cx = rng.uniform(0.0, params.extent[0])
        cy = rng.uniform(0.0, params.extent[1])
        r = rng.uniform(*params.patch_radius)
        d2 = (gx - cx) ** 2 + (gy - cy) ** 2
        mask = d2 <= r * r
        surface[mask] = CORAL
        elevation[:] += params.coral_bump * np.exp(-2.0 * d2 / (r * r)) * mask

    if params.coral_target is not None:
        max_patches = 4 * int(math.ceil(
            params.coral_target * params.extent[0] * params.extent[1]
            / (math.pi * np.mean(params.patch_radius) ** 2)))
        n = 0
        while np.mean(surface == CORAL) < params.coral_target and n < max_patches:
            add_patch()
            n += 1
    else:
        for _ in range(params.coral_patches):
            add_patch()

    n_rocks = int(round(params.obstacle_density * params.extent[0] * params.extent[1] / 100.0))
    for _ in range(n_rocks):
        cx = rng.uniform(0.0, params.extent[0])
        cy = rng.uniform(0.0, params.extent[1])
        r = rng.uniform(*params.rock_radius)
        h = rng.uniform(*params.rock_height)
        d = np.sqrt((gx - cx) ** 2 + (gy - cy) ** 2)
        mask = d <= r
        surface[mask] = ROCK
        elevation[:] += h * np.cos(0.5 * math.pi * np.minimum(d / r, 1.0)) * mask

    # Keep the floor strictly below the surface.
    np.clip(elevation, None, -0.5, out=elevation)

    return World(params=params, seed=seed, elevation=elevation, surface_class=surface)


def raycast(world, origin_xyz_up, dirs, max_range, step=0.25):
    """March rays through the heightmap and report first terrain hits.

    origin_xyz_up: (3,) with z in the z-up frame (negative below surface).
    dirs: (R, 3) unit directions in the same frame.
    Returns (hit, dist, cls): hit (R,) bool, dist (R,) meters (max_range where
    no hit), cls (R,) surface class at the hit cell (SAND where no hit).
    Rays leaving the world extent stop hitting (open water).
    """
    ts = np.arange(step, max_range + 0.5 * step, step)
    pts = origin_xyz_up[None, None, :] + ts[:, None, None] * dirs[None, :, :]  # (T, R, 3)
    cs = world.params.cell_size
    ny, nx = world.surface_class.shape
    ix = np.floor(pts[:, :, 0] / cs).astype(np.int64)
    iy = np.floor(pts[:, :, 1] / cs).astype(np.int64)
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    ix_c = np.clip(ix, 0, nx - 1)
    iy_c = np.clip(iy, 0, ny - 1)
    below = pts[:, :, 2] <= world.elevation[iy_c, ix_c]
    hits = inside & below  # (T, R)

    any_hit = hits.any(axis=0)
    first = hits.argmax(axis=0)
    dist = np.where(any_hit, ts[first], max_range)
    cls = np.where(any_hit, world.surface_class[iy_c[first, np.arange(len(first))],
                                                ix_c[first, np.arange(len(first))]], SAND)
    return any_hit, dist, cls.astype(np.int64)
