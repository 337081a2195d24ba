"""Static deployment, link gains and offset-aware best-server attachment.

Cells are indexed ``0 .. n_macro-1`` for macro sectors (``site * 3 + j``)
followed by the small cells.  Gains are handled in dB; ``total_gain_db`` is
antenna gain minus pathloss minus shadowing, so received power in dBm is
``tx_dbm + total_gain_db``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .config import DeploymentConfig
from .errors import ConfigError, ContractViolation, DomainError, LayoutError

MACRO_TO_UE = "macro_to_ue"
SC_TO_UE = "sc_to_ue"


def db_to_lin(x_db):
    return np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm_to_w(x_dbm):
    return db_to_lin(x_dbm) * 1e-3


def w_to_dbm(x_w):
    return lin_to_db(np.asarray(x_w, dtype=float) * 1e3)


# ---------------------------------------------------------------------------
# pathloss and antennas


def pathloss_db(link_class, distance_m, coefficients=None, min_distance_m=10.0):
    """Distance-dependent pathloss in dB (positive means attenuation).

    ``A + B*log10(d_km)`` with the macro (128.1, 37.6) or small-cell
    (140.7, 36.7) coefficients unless ``coefficients`` overrides them.
    Distances below ``min_distance_m`` are floored to it.

    Raises
    ------
    DomainError
        If any distance is not strictly positive.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(~(d > 0)):
        raise DomainError("pathloss distance must be > 0")
    if coefficients is None:
        if link_class == MACRO_TO_UE:
            coefficients = (128.1, 37.6)
        elif link_class == SC_TO_UE:
            coefficients = (140.7, 36.7)
        else:
            raise DomainError(f"unknown link class {link_class!r}")
    a, b = coefficients
    out = a + b * np.log10(np.maximum(d, min_distance_m) / 1000.0)
    return float(out) if out.ndim == 0 else out


def sector_pattern_db(offset_deg, beamwidth_deg=70.0, front_to_back_db=20.0):
    """Parabolic horizontal pattern relative to boresight gain."""
    off = (np.asarray(offset_deg, dtype=float) + 180.0) % 360.0 - 180.0
    return -np.minimum(12.0 * (off / beamwidth_deg) ** 2, front_to_back_db)


# ---------------------------------------------------------------------------
# shadowing


class ShadowingField:
    """Zero-mean Gaussian shadowing (dB), frozen per (pixel, cell) pair.

    The whole field is drawn once from ``seed``; repeated queries of the same
    pair return the same value so attachment does not flap.
    """

    def __init__(self, sigma_db, n_pixels, n_cells, seed):
        self.sigma_db = float(sigma_db)
        self.seed = seed
        self.shape = (int(n_pixels), int(n_cells))
        rng = np.random.default_rng(seed)
        if self.sigma_db == 0.0:
            self.values = np.zeros(self.shape)
        else:
            self.values = rng.normal(0.0, self.sigma_db, size=self.shape)
        self.values.setflags(write=False)

    def sample(self, pixel, cell):
        return self.values[pixel, cell]

    def digest(self):
        return hashlib.sha256(self.values.tobytes()).hexdigest()


def sample_shadowing(field_, pixel, cell):
    """Shadowing in dB on the link between ``pixel`` and ``cell``."""
    return float(field_.sample(pixel, cell))


# ---------------------------------------------------------------------------
# layout types


@dataclass(frozen=True)
class Sector:
    id: int
    site_id: int
    azimuth_deg: float | None  # None for an omnidirectional macro
    pattern: str = "parabolic"


@dataclass(frozen=True)
class SmallCell:
    id: int  # global cell index
    position: tuple[float, float]
    parent_sector_id: int


@dataclass(frozen=True)
class LinkGain:
    pathloss_db: float
    shadowing_db: float
    antenna_gain_db: float

    @property
    def total_gain_db(self):
        return self.antenna_gain_db - self.pathloss_db - self.shadowing_db


@dataclass(frozen=True, eq=False)
class NetworkLayout:
    config: DeploymentConfig
    sites: np.ndarray  # (n_sites, 2) metres
    sectors: tuple[Sector, ...]
    small_cells: tuple[SmallCell, ...]
    area_bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    zone_a_sector_ids: frozenset
    grid_resolution: float
    shadowing: ShadowingField = field(repr=False)

    # -- cell tables -------------------------------------------------------
    @property
    def n_macro(self):
        return len(self.sectors)

    @property
    def n_cells(self):
        return len(self.sectors) + len(self.small_cells)

    @cached_property
    def cell_positions(self):
        pos = [self.sites[s.site_id] for s in self.sectors]
        pos += [np.asarray(sc.position) for sc in self.small_cells]
        return np.array(pos, dtype=float).reshape(-1, 2)

    @cached_property
    def is_small_cell(self):
        flags = np.zeros(self.n_cells, dtype=bool)
        flags[self.n_macro:] = True
        return flags

    @cached_property
    def tx_power_dbm(self):
        out = np.full(self.n_cells, self.config.macro_tx_power_dbm)
        out[self.n_macro:] = self.config.sc_tx_power_dbm
        return out

    @cached_property
    def zone_a_cells(self):
        """Zone-A macro sectors followed by every small cell (all live in zone A)."""
        ids = sorted(self.zone_a_sector_ids) + list(range(self.n_macro, self.n_cells))
        return np.array(ids, dtype=np.int64)

    @cached_property
    def parent_macro(self):
        """Parent macro sector of every cell (a macro is its own parent)."""
        parent = np.arange(self.n_cells)
        for sc in self.small_cells:
            parent[sc.id] = sc.parent_sector_id
        return parent

    # -- pixel grid --------------------------------------------------------
    @property
    def grid_shape(self):
        xmin, ymin, xmax, ymax = self.area_bounds
        res = self.grid_resolution
        return (math.ceil((ymax - ymin) / res - 1e-9), math.ceil((xmax - xmin) / res - 1e-9))

    @property
    def n_pixels(self):
        ny, nx = self.grid_shape
        return ny * nx

    @cached_property
    def pixel_centers(self):
        ny, nx = self.grid_shape
        xmin, ymin, _, _ = self.area_bounds
        res = self.grid_resolution
        xs = xmin + (np.arange(nx) + 0.5) * res
        ys = ymin + (np.arange(ny) + 0.5) * res
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    @property
    def pixel_area(self):
        return self.grid_resolution ** 2

    def pixel_index(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ny, nx = self.grid_shape
        xmin, ymin, _, _ = self.area_bounds
        ix = np.clip(np.floor((pts[:, 0] - xmin) / self.grid_resolution), 0, nx - 1)
        iy = np.clip(np.floor((pts[:, 1] - ymin) / self.grid_resolution), 0, ny - 1)
        return (iy * nx + ix).astype(np.int64)

    def contains(self, point):
        x, y = point
        xmin, ymin, xmax, ymax = self.area_bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    # -- gains -------------------------------------------------------------
    def deterministic_gain_db(self, points, cells=None):
        """Antenna gain minus pathloss, without shadowing: ``(n_points, n_cells)``."""
        cfg = self.config
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.arange(self.n_cells) if cells is None else np.asarray(cells)
        cpos = self.cell_positions[cells]
        delta = pts[:, None, :] - cpos[None, :, :]
        dist = np.maximum(np.hypot(delta[..., 0], delta[..., 1]), cfg.min_distance_m)
        is_sc = self.is_small_cell[cells]
        a = np.where(is_sc, cfg.sc_pathloss[0], cfg.macro_pathloss[0])
        b = np.where(is_sc, cfg.sc_pathloss[1], cfg.macro_pathloss[1])
        pl = a[None, :] + b[None, :] * np.log10(dist / 1000.0)
        ant = np.where(is_sc, cfg.sc_antenna_gain_dbi, cfg.macro_antenna_gain_dbi)
        ant = np.broadcast_to(ant, pl.shape).copy()
        if self.config.sectors_per_site == 3:
            az = np.array([self.sectors[c].azimuth_deg if c < self.n_macro else 0.0
                           for c in cells])
            bearing = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
            patt = sector_pattern_db(bearing - az[None, :], cfg.macro_beamwidth_deg,
                                     cfg.macro_front_to_back_db)
            ant = ant + np.where(is_sc[None, :], 0.0, patt)
        return ant + cfg.ue_antenna_gain_dbi - pl

    def gain_db(self, points, cells=None):
        """Total gain (dB) including the frozen shadowing of each point's pixel."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells = np.arange(self.n_cells) if cells is None else np.asarray(cells)
        pix = self.pixel_index(pts)
        return self.deterministic_gain_db(pts, cells) - self.shadowing.values[pix][:, cells]

    @cached_property
    def pixel_gain_db(self):
        g = self.gain_db(self.pixel_centers)
        g.setflags(write=False)
        return g

    @cached_property
    def macro_region(self):
        """Best macro sector per pixel (shadowing included, no offsets)."""
        g = np.ascontiguousarray(self.pixel_gain_db[:, : self.n_macro])
        return kernels.best_server_index(g, np.zeros(self.n_macro))

    @cached_property
    def zone_a_pixels(self):
        """Pixels whose best macro is a zone-A sector: the arrival region."""
        return np.flatnonzero(np.isin(self.macro_region, list(self.zone_a_sector_ids)))

    def link_gain(self, point, cell):
        cfg = self.config
        p = np.asarray(point, dtype=float)
        cpos = self.cell_positions[cell]
        dist = float(np.hypot(*(p - cpos)))
        is_sc = bool(self.is_small_cell[cell])
        pl = pathloss_db(SC_TO_UE if is_sc else MACRO_TO_UE, max(dist, cfg.min_distance_m),
                         cfg.sc_pathloss if is_sc else cfg.macro_pathloss, cfg.min_distance_m)
        ant = (cfg.sc_antenna_gain_dbi if is_sc else cfg.macro_antenna_gain_dbi) + cfg.ue_antenna_gain_dbi
        if not is_sc and cfg.sectors_per_site == 3:
            bearing = math.degrees(math.atan2(p[1] - cpos[1], p[0] - cpos[0]))
            ant += float(sector_pattern_db(bearing - self.sectors[cell].azimuth_deg,
                                           cfg.macro_beamwidth_deg, cfg.macro_front_to_back_db))
        shadow = sample_shadowing(self.shadowing, int(self.pixel_index(p)[0]), cell)
        return LinkGain(pathloss_db=pl, shadowing_db=shadow, antenna_gain_db=ant)

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        return {
            "sites": self.sites.tolist(),
            "sectors": [[s.id, s.site_id, s.azimuth_deg] for s in self.sectors],
            "small_cells": [[c.id, list(c.position), c.parent_sector_id] for c in self.small_cells],
            "area_bounds": list(self.area_bounds),
            "zone_a_sector_ids": sorted(self.zone_a_sector_ids),
            "grid_resolution": self.grid_resolution,
            "shadowing_sha256": self.shadowing.digest(),
        }

    def serialize(self):
        return json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")


# ---------------------------------------------------------------------------
# construction


def hex_sites(rings, isd):
    """Site coordinates of a hexagonal grid, centre first, ring by ring."""
    sites = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if max(abs(q), abs(r), abs(q + r)) <= rings:
                x = isd * (q + r / 2.0)
                y = isd * (math.sqrt(3) / 2.0) * r
                ring = max(abs(q), abs(r), abs(q + r))
                ang = math.atan2(y, x) % (2 * math.pi)
                sites.append((ring, round(ang, 12), x, y))
    sites.sort()
    return np.array([[x, y] for _, _, x, y in sites], dtype=float)


def build_layout(config: DeploymentConfig) -> NetworkLayout:
    """Build the macro grid, drop small cells near zone-A sector edges, draw shadowing."""
    if config.rings < 0:
        raise ConfigError(f"rings must be >= 0, got {config.rings}")
    config.validate()
    isd = config.inter_site_distance_m
    sites = hex_sites(config.rings, isd)
    n_sec = config.sectors_per_site
    azimuths = (30.0, 150.0, 270.0) if n_sec == 3 else (None,)
    sectors = tuple(Sector(id=s * n_sec + j, site_id=s, azimuth_deg=azimuths[j],
                           pattern="parabolic" if n_sec == 3 else "omni")
                    for s in range(len(sites)) for j in range(n_sec))
    zone_a = frozenset(range(n_sec))  # the sectors of the central site
    edge = isd / math.sqrt(3.0)
    margin = edge
    bounds = (float(sites[:, 0].min() - margin), float(sites[:, 1].min() - margin),
              float(sites[:, 0].max() + margin), float(sites[:, 1].max() + margin))

    seq = np.random.SeedSequence(config.layout_seed)
    placement_seed, shadow_seed = seq.spawn(2)
    rng = np.random.default_rng(placement_seed)

    # a shadowing-free macro-only skeleton decides sector membership
    skeleton = NetworkLayout(config=config, sites=sites, sectors=sectors, small_cells=(),
                             area_bounds=bounds, zone_a_sector_ids=zone_a,
                             grid_resolution=config.grid_resolution_m,
                             shadowing=ShadowingField(0.0, 1, len(sectors), 0))
    lo, hi = config.sc_annulus
    small_cells = []
    next_id = len(sectors)
    for sector_id in sorted(zone_a):
        sector = sectors[sector_id]
        centre = sites[sector.site_id]
        for _ in range(config.sc_per_sector):
            for _attempt in range(config.sc_max_redraws):
                radius = math.sqrt(rng.uniform((lo * edge) ** 2, (hi * edge) ** 2))
                if sector.azimuth_deg is None:
                    ang = rng.uniform(0.0, 360.0)
                else:
                    ang = sector.azimuth_deg + rng.uniform(-60.0, 60.0)
                pos = (float(centre[0] + radius * math.cos(math.radians(ang))),
                       float(centre[1] + radius * math.sin(math.radians(ang))))
                if _macro_best_server(skeleton, pos) == sector_id:
                    break
            else:
                raise LayoutError(f"small-cell placement failed for sector {sector_id} "
                                  f"(layout_seed={config.layout_seed})")
            small_cells.append(SmallCell(id=next_id, position=pos, parent_sector_id=sector_id))
            next_id += 1

    n_cells = len(sectors) + len(small_cells)
    probe = NetworkLayout(config=config, sites=sites, sectors=sectors, small_cells=(),
                          area_bounds=bounds, zone_a_sector_ids=zone_a,
                          grid_resolution=config.grid_resolution_m,
                          shadowing=ShadowingField(0.0, 1, 1, 0))
    shadowing = ShadowingField(config.shadowing_std_db, probe.n_pixels, n_cells, shadow_seed)
    return NetworkLayout(config=config, sites=sites, sectors=sectors,
                         small_cells=tuple(small_cells), area_bounds=bounds,
                         zone_a_sector_ids=zone_a, grid_resolution=config.grid_resolution_m,
                         shadowing=shadowing)


def _macro_best_server(skeleton, point):
    g = skeleton.deterministic_gain_db(point, np.arange(skeleton.n_macro))[0]
    return int(np.argmax(g))


# ---------------------------------------------------------------------------
# offsets and attachment


@dataclass(frozen=True, eq=False)
class PowerOffsetVector:
    """Pilot power plus CIO per cell; only small-cell CIOs are adjustable.

    ``pilot_dbm`` and ``cio_db`` span every cell.  Macro CIOs stay at 0 dB.
    ``entries`` returns the small-cell decision variable ``pilot + CIO`` in dBm.
    """

    pilot_dbm: np.ndarray
    cio_db: np.ndarray
    is_small_cell: np.ndarray
    cio_min_db: float = -2.0
    cio_max_db: float = 12.0

    def __post_init__(self):
        for name in ("pilot_dbm", "cio_db", "is_small_cell"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.cio_db[~self.is_small_cell] != 0.0):
            raise ContractViolation("macro CIO is not optimized and must stay 0")
        sc = self.cio_db[self.is_small_cell]
        if np.any(sc < self.cio_min_db - 1e-12) or np.any(sc > self.cio_max_db + 1e-12):
            raise ContractViolation("small-cell CIO outside its bounds")

    @classmethod
    def uniform(cls, layout, cio_db, cio_min_db=-2.0, cio_max_db=12.0):
        cio = np.where(layout.is_small_cell, float(cio_db), 0.0)
        return cls(layout.tx_power_dbm, cio, layout.is_small_cell, cio_min_db, cio_max_db)

    @property
    def bias_db(self):
        return self.pilot_dbm + self.cio_db

    @property
    def sc_indices(self):
        return np.flatnonzero(self.is_small_cell)

    @property
    def sc_cio_db(self):
        return self.cio_db[self.is_small_cell]

    @property
    def entries(self):
        return self.bias_db[self.is_small_cell]

    def project(self, sc_cio_db):
        return np.clip(np.asarray(sc_cio_db, dtype=float), self.cio_min_db, self.cio_max_db)

    def with_sc_cio(self, sc_cio_db):
        """New vector with projected small-cell CIOs; macro entries untouched."""
        cio = np.array(self.cio_db)
        cio[self.is_small_cell] = self.project(sc_cio_db)
        return PowerOffsetVector(self.pilot_dbm, cio, self.is_small_cell,
                                 self.cio_min_db, self.cio_max_db)


def best_server(location, offsets, layout):
    """Cell maximizing total gain plus pilot plus CIO; lowest id wins ties."""
    g = layout.gain_db(location)
    return int(kernels.best_server_index(np.ascontiguousarray(g), offsets.bias_db)[0])


def best_servers(gain_db, offsets):
    return kernels.best_server_index(np.ascontiguousarray(gain_db, dtype=float),
                                     np.ascontiguousarray(offsets.bias_db, dtype=float))


def handover_trigger(serving, candidate, q_serving_dbm, q_candidate_dbm, hysteresis_db,
                     offsets):
    """A3-style entering condition ``Qs + Hyst < Qn - (CIO_s - CIO_n)``."""
    if serving == candidate:
        raise ContractViolation("serving and candidate cell must differ")
    q_offset = offsets.cio_db[serving] - offsets.cio_db[candidate]
    return bool(q_serving_dbm + hysteresis_db < q_candidate_dbm - q_offset)


def coverage_map(offsets, layout):
    """Best server per pixel as a ``(ny, nx)`` row-major grid of cell ids."""
    ny, nx = layout.grid_shape
    return best_servers(layout.pixel_gain_db, offsets).reshape(ny, nx)


def write_coverage_csv(grid, layout, path):
    import csv

    centres = layout.pixel_centers
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "cell_id"])
        for (x, y), cid in zip(centres, grid.ravel()):
            w.writerow([repr(float(x)), repr(float(y)), int(cid)])


def write_coverage_pgm(grid, path):
    """Plain (P2) greyscale image; cell ids spread over the grey range."""
    ny, nx = grid.shape
    top = max(int(grid.max()), 1)
    levels = (grid.astype(np.int64) * 255) // top
    lines = ["P2", f"{nx} {ny}", "255"]
    for row in levels[::-1]:  # image rows go top-down, y grows upward
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
