"""Sub-probability delay distributions on a uniform time grid.

A :class:`DelayDist` is an atom of probability at ``t = 0`` plus a density
sampled at ``t_k = k * dt`` for ``k = 0 .. n-1`` with ``t_{n-1} = t_max``.
Cell ``k`` carries the mass ``density[k] * dt`` and is treated as spread
uniformly over ``[t_k - dt/2, t_k + dt/2]`` clipped to ``[0, t_max]``; this
is what tail queries and truncation integrate against.  Convolution works
on the cell masses as point masses at ``t_k``, which makes grid indices add
exactly.

All values are immutable; every function here is pure.
"""
from __future__ import annotations

import math
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve
from scipy.special import ndtr

from .errors import GridMismatch, OutOfRange

MASS_EPS = 1e-6
# Gaussians are rendered over mu +- RENDER_SIGMAS * sigma; the rest is < 1e-15.
RENDER_SIGMAS = 8.0


@dataclass(frozen=True)
class GridConfig:
    dt: float = 0.5
    t_max: float = 400.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"grid dt must be > 0, got {self.dt}")
        if self.t_max < 10 * self.dt:
            raise ValueError("grid t_max must be at least 10 * dt")
        n = self.t_max / self.dt
        if n > 2**22:
            raise ValueError("grid too fine: t_max / dt exceeds 2**22")
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("grid t_max must be an integer multiple of dt")

    @property
    def n(self) -> int:
        return round(self.t_max / self.dt) + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n) * self.dt


DEFAULT_GRID = GridConfig()


@dataclass(frozen=True, eq=False)
class DelayDist:
    cfg: GridConfig
    atom_weight: float
    density: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.shape != (self.cfg.n,):
            raise ValueError(f"density has shape {d.shape}, grid needs ({self.cfg.n},)")
        if d.flags.writeable:
            d = d.copy()
            d.setflags(write=False)
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "atom_weight", float(self.atom_weight))

    @property
    def grid_start(self) -> float:
        return 0.0

    @property
    def grid_dt(self) -> float:
        return self.cfg.dt

    @property
    def t_max(self) -> float:
        return self.cfg.t_max

    @property
    def masses(self) -> np.ndarray:
        """Probability mass per grid cell (atom excluded)."""
        return self.density * self.cfg.dt

    @property
    def mass(self) -> float:
        return self.atom_weight + float(self.density.sum()) * self.cfg.dt

    def is_complete(self, tol: float = MASS_EPS) -> bool:
        return abs(self.mass - 1.0) <= tol

    def mean(self) -> float:
        """Mean delay of the (renormalized) distribution."""
        m = self.mass
        if m <= 0:
            return 0.0
        return float(np.dot(self.masses, self.cfg.times)) / m

    def std(self) -> float:
        m = self.mass
        if m <= 0:
            return 0.0
        mu = self.mean()
        second = (float(np.dot(self.masses, self.cfg.times**2))) / m
        return math.sqrt(max(second - mu * mu, 0.0))

    def cdf(self, t: float) -> float:
        """P(delay <= t), counting the atom."""
        return self.mass - exceed_prob(self, t)

    def scaled(self, w: float) -> DelayDist:
        return DelayDist(self.cfg, self.atom_weight * w, self.density * w)

    def normalized(self) -> DelayDist:
        m = self.mass
        if m <= 0:
            raise ValueError("cannot normalize a zero-mass distribution")
        return self.scaled(1.0 / m)

    def to_text(self) -> str:
        """Two-column ``t_ps density`` dump; the atom is written as a comment."""
        lines = [f"# atom_weight {self.atom_weight:.12g}", "# t_ps density_per_ps"]
        for t, d in zip(self.cfg.times, self.density):
            lines.append(f"{t:.6g} {d:.12g}")
        return "\n".join(lines) + "\n"

    def __repr__(self):
        return (f"DelayDist(atom={self.atom_weight:.4g}, mass={self.mass:.6g}, "
                f"mean={self.mean():.4g}ps, dt={self.cfg.dt}, t_max={self.cfg.t_max})")


def _check_same_grid(*dists: DelayDist) -> GridConfig:
    cfg = dists[0].cfg
    for d in dists[1:]:
        if d.cfg != cfg:
            raise GridMismatch(f"grid {d.cfg} does not match {cfg}")
    return cfg


def zero(cfg: GridConfig = DEFAULT_GRID) -> DelayDist:
    return DelayDist(cfg, 0.0, np.zeros(cfg.n))


def delta(cfg: GridConfig = DEFAULT_GRID) -> DelayDist:
    """Unit atom at t = 0 (zero propagation delay)."""
    return DelayDist(cfg, 1.0, np.zeros(cfg.n))


def from_masses(cfg: GridConfig, atom: float, masses: np.ndarray) -> DelayDist:
    return DelayDist(cfg, atom, np.asarray(masses, dtype=float) / cfg.dt)


def _cell_edges(cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    t = cfg.times
    lo = np.maximum(t - cfg.dt / 2, 0.0)
    hi = np.minimum(t + cfg.dt / 2, cfg.t_max)
    return lo, hi


def gaussian(mu: float, sigma: float, cfg: GridConfig = DEFAULT_GRID) -> DelayDist:
    """Normal(mu, sigma) integrated cell by cell onto the grid.

    Mass below t = 0 is folded into cell 0 (warned about above 1e-3) and mass
    above t_max into the last cell, so the result always has mass 1.
    Below one cell of spread the mass is shared with triangle weights so the
    mean stays exact even as sigma goes to 0.
    """
    if mu < 0 or not sigma > 0:
        raise OutOfRange(f"gaussian needs mu >= 0 and sigma > 0 (mu={mu}, sigma={sigma})")
    if mu + 6 * sigma > cfg.t_max:
        raise OutOfRange(f"mu + 6 sigma = {mu + 6 * sigma:g} ps exceeds t_max = {cfg.t_max:g} ps")
    dt = cfg.dt
    k_lo = max(math.floor((mu - RENDER_SIGMAS * sigma) / dt) - 1, 0)
    k_hi = min(math.ceil((mu + RENDER_SIGMAS * sigma) / dt) + 1, cfg.n - 1)
    k = np.arange(k_lo, k_hi + 1)
    t = k * dt
    lo = np.maximum(t - dt / 2, 0.0)
    hi = np.minimum(t + dt / 2, cfg.t_max)
    if sigma < dt:
        # triangle-kernel weights: a near-point mass splits linearly between
        # its two neighbouring cells, so the mean survives exactly
        def ramp(x):
            z = (x - mu) / sigma
            return (x - mu) * ndtr(z) + sigma * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        cell = (ramp(t + dt) - 2 * ramp(t) + ramp(t - dt)) / dt
        cell = np.clip(cell, 0.0, None)
    else:
        cell = ndtr((hi - mu) / sigma) - ndtr((lo - mu) / sigma)
    below = float(ndtr(-mu / sigma))
    if below > 1e-3:
        warnings.warn(f"gaussian({mu:g}, {sigma:g}) has {below:.2e} mass below t=0; folded into t=0",
                      stacklevel=2)
    masses = np.zeros(cfg.n)
    masses[k_lo:k_hi + 1] = cell
    # the triangle at cell 0 already holds part of the mass below 0
    masses[0] += max(1.0 - cell.sum(), 0.0) if sigma < dt else below
    masses[-1] += float(ndtr((mu - cfg.t_max) / sigma))
    masses /= masses.sum()
    return from_masses(cfg, 0.0, masses)


def mix(terms: Iterable[tuple[float, DelayDist]]) -> DelayDist:
    """Pointwise weighted sum of distributions."""
    terms = list(terms)
    if not terms:
        raise ValueError("mix needs at least one term")
    cfg = _check_same_grid(*(d for _, d in terms))
    atom = 0.0
    dens = np.zeros(cfg.n)
    for w, d in terms:
        if w < 0:
            raise ValueError(f"negative mixture weight {w}")
        if w == 0:
            continue
        atom += w * d.atom_weight
        dens += w * d.density
    return DelayDist(cfg, atom, dens)


def _support(m: np.ndarray) -> tuple[int, int]:
    nz = np.flatnonzero(m)
    if nz.size == 0:
        return 0, -1
    return int(nz[0]), int(nz[-1])


def convolve(a: DelayDist, b: DelayDist) -> DelayDist:
    """Distribution of the sum of two independent delays.

    Mass that lands beyond t_max saturates into the last cell.
    """
    cfg = _check_same_grid(a, b)
    n = cfg.n
    ma, mb = a.masses, b.masses
    out = a.atom_weight * mb + b.atom_weight * ma
    ia, ja = _support(ma)
    ib, jb = _support(mb)
    if ja >= ia and jb >= ib:
        seg_a = ma[ia:ja + 1]
        seg_b = mb[ib:jb + 1]
        if seg_a.size * seg_b.size <= 250_000:
            c = np.convolve(seg_a, seg_b)
        else:
            c = np.clip(oaconvolve(seg_a, seg_b), 0.0, None)
        start = ia + ib
        stop = start + c.size
        if start < n:
            keep = min(stop, n) - start
            out = out.copy()
            out[start:start + keep] += c[:keep]
            if keep < c.size:
                out[-1] += c[keep:].sum()
        else:
            out = out.copy()
            out[-1] += c.sum()
    return from_masses(cfg, a.atom_weight * b.atom_weight, out)


def fraction_above(cfg: GridConfig, t0: float) -> np.ndarray:
    """Fraction of each cell's extent lying strictly above t0."""
    lo, hi = _cell_edges(cfg)
    width = hi - lo
    frac = np.clip((hi - t0) / np.where(width > 0, width, 1.0), 0.0, 1.0)
    return frac


def _slope_correction(dist: DelayDist, ts: np.ndarray) -> np.ndarray:
    """Extra mass above each t from the density slope inside t's cell.

    Cells are otherwise treated as uniform, which is off by O(dt^2) near
    steep flanks.  The slope is the central difference of the neighbours,
    clamped so the in-cell density stays non-negative (keeps tails monotone).
    """
    cfg = dist.cfg
    dt = cfg.dt
    m = dist.masses
    k = np.clip(np.rint(ts / dt).astype(np.int64), 1, max(cfg.n - 2, 1))
    interior = (ts > dt / 2) & (ts < cfg.t_max - dt / 2)
    slope = (m[np.minimum(k + 1, cfg.n - 1)] - m[k - 1]) / (2 * dt * dt)
    cap = 2 * m[k] / (dt * dt)
    slope = np.clip(slope, -cap, cap)
    off = ts - k * dt
    return np.where(interior, 0.5 * slope * (0.25 * dt * dt - off * off), 0.0)


def truncate_below(dist: DelayDist, t0: float) -> DelayDist:
    """Multiply by a unit step rising at t0 (U(t) = 1 for t >= t0).

    The result is deliberately left defective: the removed mass belongs to
    a complementary scenario.  ``t0 <= 0`` passes everything, atom included.
    Its mass equals ``exceed_prob(dist, t0)``.
    """
    if t0 <= 0:
        return dist
    frac = fraction_above(dist.cfg, t0)
    density = dist.density * frac
    if t0 < dist.cfg.t_max:
        k = int(np.clip(round(t0 / dist.cfg.dt), 0, dist.cfg.n - 1))
        corr = float(_slope_correction(dist, np.array([float(t0)]))[0])
        density[k] = max(density[k] + corr / dist.cfg.dt, 0.0)
    return DelayDist(dist.cfg, 0.0, density)


def weight_cells(dist: DelayDist, atom_factor: float, cell_factors: np.ndarray) -> DelayDist:
    """Scale the atom and each cell by its own factor (a generalized step)."""
    return DelayDist(dist.cfg, dist.atom_weight * atom_factor, dist.density * cell_factors)


def exceed_prob(dist: DelayDist, t: float) -> float:
    """P(delay > t); the atom at 0 never counts for t >= 0."""
    if t < 0:
        return dist.mass
    if t >= dist.cfg.t_max:
        return 0.0
    frac = fraction_above(dist.cfg, t)
    base = float(np.dot(dist.masses, frac))
    return max(base + float(_slope_correction(dist, np.array([float(t)]))[0]), 0.0)


def cdf_at(dist: DelayDist, ts: np.ndarray) -> np.ndarray:
    """Vectorized P(delay <= t) for many t, consistent with :func:`exceed_prob`."""
    cfg = dist.cfg
    ts = np.asarray(ts, dtype=float)
    _, hi = _cell_edges(cfg)
    # cumulative mass at each cell's upper edge, linear in between, then the slope term
    edges = np.concatenate(([0.0], hi))
    cum = np.concatenate(([dist.atom_weight], dist.atom_weight + np.cumsum(dist.masses)))
    out = np.interp(ts, edges, cum) - _slope_correction(dist, ts)
    out = np.where(ts >= cfg.t_max, dist.mass, out)
    return np.where(ts < 0, 0.0, out)


def tv_distance(a: DelayDist, b: DelayDist) -> float:
    _check_same_grid(a, b)
    return 0.5 * (abs(a.atom_weight - b.atom_weight) + float(np.abs(a.density - b.density).sum()) * a.cfg.dt)


def sum_dists(dists: Sequence[DelayDist]) -> DelayDist:
    return mix((1.0, d) for d in dists)
