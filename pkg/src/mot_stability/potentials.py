"""Potential functions and the convex-order lattice.

The potential of a finite positive measure m is u(y) = integral |y - x| m(dx),
a piecewise-linear convex function whose slope jumps encode the atoms.  This
module houses all convex-order logic: order tests, the lattice operations
(convex supremum and infimum), compactification of a probability measure, and
the decomposition of an ordered pair into irreducible components.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure

__all__ = [
    "PotentialFunction",
    "IrreducibleDecomposition",
    "potential_of",
    "measure_from_potential",
    "in_convex_order",
    "convex_order_gap",
    "default_order_tol",
    "convex_sup",
    "convex_inf",
    "compactify",
    "irreducible_components",
]


class PotentialFunction:
    """Piecewise-linear convex function with |y|-type asymptotes.

    Breakpoints are strictly increasing; the slope left of the first one is
    -mass and right of the last one is +mass, and the two asymptotes meet at
    (mean, 0).  When built from a measure, the source atoms are retained so
    that the potential -> measure round trip is exact.
    """

    __slots__ = ("ys", "values", "mass", "mean", "_source")

    def __init__(self, ys, values, mass: float, mean: float, _source: DiscreteMeasure | None = None):
        ys = np.asarray(ys, dtype=float)
        values = np.asarray(values, dtype=float)
        if ys.ndim != 1 or ys.shape != values.shape or ys.size == 0:
            raise ValueError("breakpoints must be nonempty 1-D arrays of equal length")
        if np.any(np.diff(ys) <= 0.0):
            raise ValueError("breakpoint locations must be strictly increasing")
        if mass <= 0.0:
            raise ValueError("potential functions require positive mass")
        ys.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mass", float(mass))
        object.__setattr__(self, "mean", float(mean))
        object.__setattr__(self, "_source", _source)

    def __setattr__(self, name, value):
        raise AttributeError("PotentialFunction is immutable")

    def __call__(self, y):
        return self.evaluate(y)

    def evaluate(self, y):
        """Evaluate at scalar or array arguments, asymptotes included."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        out = np.interp(y, self.ys, self.values)
        left = y < self.ys[0]
        right = y > self.ys[-1]
        out[left] = self.values[0] + self.mass * (self.ys[0] - y[left])
        out[right] = self.values[-1] + self.mass * (y[right] - self.ys[-1])
        return float(out[0]) if scalar else out

    def slopes(self) -> np.ndarray:
        """Slopes of the n+1 affine pieces, from -mass to +mass."""
        interior = np.diff(self.values) / np.diff(self.ys)
        return np.concatenate([[-self.mass], interior, [self.mass]])

    def measure(self) -> DiscreteMeasure:
        """The measure whose potential this is (half the slope jumps)."""
        if self._source is not None:
            return self._source
        s = self.slopes()
        jumps = np.diff(s)
        if np.any(jumps < -1e-12 * (1.0 + self.mass)):
            raise ValueError("breakpoint values are not convex")
        weights = np.maximum(jumps, 0.0) / 2.0
        keep = weights > 0.0
        return DiscreteMeasure(self.ys[keep], weights[keep])


def potential_of(m: DiscreteMeasure) -> PotentialFunction:
    """Exact potential of a nonzero measure, breakpoints at the atoms."""
    if m.is_zero():
        raise ValueError("the zero measure has no potential function")
    x, w = m.positions, m.weights
    cw = np.cumsum(w)
    sxw = np.cumsum(x * w)
    total_w, total_sxw = cw[-1], sxw[-1]
    # u(x_i) = sum_{j<=i} w_j (x_i - x_j) + sum_{j>i} w_j (x_j - x_i)
    values = x * cw - sxw + (total_sxw - sxw) - x * (total_w - cw)
    return PotentialFunction(x, values, total_w, m.barycenter(), _source=m)


def measure_from_potential(u: PotentialFunction) -> DiscreteMeasure:
    return u.measure()


def default_order_tol(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return 1e-9 * (1.0 + mu.moment(1.0, 0.0) + nu.moment(1.0, 0.0))


def convex_order_gap(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, float]:
    """Largest violation of u_mu <= u_nu and its location.

    Returns (gap, position) where gap = max over breakpoints of
    u_mu - u_nu; a positive gap witnesses failure of the convex order.
    """
    u_mu, u_nu = potential_of(mu), potential_of(nu)
    grid = np.union1d(u_mu.ys, u_nu.ys)
    diff = u_mu.evaluate(grid) - u_nu.evaluate(grid)
    idx = int(np.argmax(diff))
    return float(diff[idx]), float(grid[idx])


def in_convex_order(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float | None = None) -> bool:
    """True iff mu <=_c nu up to `tol`: equal mass, equal mean, u_mu <= u_nu.

    Checking the potentials at the breakpoints of both is sufficient since
    the difference of two piecewise-linear potentials with matching
    asymptotes attains its extrema at breakpoints.
    """
    if mu.is_zero() and nu.is_zero():
        return True
    if tol is None:
        tol = default_order_tol(mu, nu)
    if abs(mu.total_mass - nu.total_mass) > tol:
        return False
    if mu.is_zero() or nu.is_zero():
        return False
    if abs(mu.barycenter() * mu.total_mass - nu.barycenter() * nu.total_mass) > tol:
        return False
    gap, _ = convex_order_gap(mu, nu)
    return gap <= tol


def _require_lattice_compatible(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[float, float]:
    if mu.is_zero() or nu.is_zero():
        raise ValueError("lattice operations need nonzero measures")
    mass_tol = 1e-9 * (1.0 + mu.total_mass)
    if abs(mu.total_mass - nu.total_mass) > mass_tol:
        raise ValueError(
            f"lattice operations need equal masses, got {mu.total_mass} and {nu.total_mass}"
        )
    m_mu, m_nu = mu.barycenter(), nu.barycenter()
    mean_tol = 1e-9 * (1.0 + abs(m_mu) + abs(m_nu))
    if abs(m_mu - m_nu) > mean_tol:
        raise ValueError(f"lattice operations need equal barycenters, got {m_mu} and {m_nu}")
    return 0.5 * (mu.total_mass + nu.total_mass), 0.5 * (m_mu + m_nu)


def _merged_grid_with_crossings(
    u: PotentialFunction, v: PotentialFunction, noise: float = 0.0
) -> np.ndarray:
    """Union of breakpoints plus exact linear crossings of the two graphs.

    Sign changes with either endpoint within `noise` of zero are ignored:
    those are roundoff grazes, not genuine crossings.
    """
    grid = np.union1d(u.ys, v.ys)
    du = u.evaluate(grid) - v.evaluate(grid)
    crossings = []
    for i in range(grid.size - 1):
        a, b = du[i], du[i + 1]
        if (a > noise and b < -noise) or (a < -noise and b > noise):
            t = a / (a - b)
            crossings.append(grid[i] + t * (grid[i + 1] - grid[i]))
    if crossings:
        grid = np.union1d(grid, np.asarray(crossings))
    return grid


def _potential_from_grid(grid: np.ndarray, values: np.ndarray, mass: float, mean: float) -> PotentialFunction:
    """Build a potential from grid samples, pruning collinear breakpoints.

    Grid points closer than roundoff spacing are coalesced first: the secant
    slope between near-duplicates is numerically meaningless and would break
    the convexity of the reconstruction.
    """
    spacing = 1e-13 * (1.0 + float(np.max(np.abs(grid))))
    values = np.array(values, dtype=float)
    kept = [0]
    for i in range(1, grid.size):
        if grid[i] - grid[kept[-1]] <= spacing:
            values[kept[-1]] = min(values[kept[-1]], values[i])
        else:
            kept.append(i)
    grid = grid[kept]
    values = values[kept]
    slopes = np.concatenate([[-mass], np.diff(values) / np.diff(grid), [mass]])
    jumps = np.diff(slopes)
    keep = jumps > 1e-14 * (1.0 + mass)
    if not np.any(keep):
        # everything collapsed onto the asymptote pair: a single point mass
        return potential_of(DiscreteMeasure([mean], [mass]))
    return PotentialFunction(grid[keep], values[keep], mass, mean)


def convex_sup(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Smallest measure dominating both in convex order (potential max)."""
    mass, mean = _require_lattice_compatible(mu, nu)
    u, v = potential_of(mu), potential_of(nu)
    grid = _merged_grid_with_crossings(u, v)
    values = np.maximum(u.evaluate(grid), v.evaluate(grid))
    return _potential_from_grid(grid, values, mass, mean).measure()


def _lower_convex_hull(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertices of the lower convex hull of points sorted by x (monotone chain)."""
    hull: list[int] = []
    for i in range(xs.size):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # pop k if it lies on or above segment j-i
            cross = (xs[k] - xs[j]) * (ys[i] - ys[j]) - (ys[k] - ys[j]) * (xs[i] - xs[j])
            if cross <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    idx = np.asarray(hull, dtype=int)
    return xs[idx], ys[idx]


def convex_inf(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Largest measure dominated by both: lower convex envelope of the min."""
    mass, mean = _require_lattice_compatible(mu, nu)
    u, v = potential_of(mu), potential_of(nu)
    grid = _merged_grid_with_crossings(u, v)
    values = np.minimum(u.evaluate(grid), v.evaluate(grid))
    hull_x, hull_v = _lower_convex_hull(grid, values)
    return _potential_from_grid(hull_x, hull_v, mass, mean).measure()


def compactify(p: DiscreteMeasure, radius: float) -> DiscreteMeasure:
    """Closest convex-order minorant of `p` concentrated on [-radius, radius].

    For a probability measure p with barycenter m1 this is the convex
    infimum of p and the two-point measure on {-radius, radius} with mean
    m1; when radius < |m1| (no such two-point measure exists) it collapses
    to the point mass at m1.
    """
    if radius < 0.0:
        raise ValueError("radius must be nonnegative")
    if abs(p.total_mass - 1.0) > 1e-9:
        raise ValueError("compactify expects a probability measure")
    m1 = p.barycenter()
    if radius == 0.0 or radius < abs(m1):
        return DiscreteMeasure([m1], [p.total_mass])
    lo, hi = p.support_bounds()
    if lo >= -radius and hi <= radius:
        return p
    w_hi = (radius + m1) / (2.0 * radius)
    envelope = DiscreteMeasure([-radius, radius], [(1.0 - w_hi) * p.total_mass, w_hi * p.total_mass])
    return convex_inf(p, envelope)


@dataclass(frozen=True)
class IrreducibleDecomposition:
    """Splitting of an ordered pair into irreducible sub-pairs plus a common part.

    Each component carries an open interval (lo, hi) on which the potentials
    differ strictly, the restriction mu_n of the smaller measure, and the
    matched portion nu_n of the larger one; `eta` is the first measure
    restricted to the set where the potentials agree.
    """

    components: tuple[tuple[tuple[float, float], DiscreteMeasure, DiscreteMeasure], ...]
    eta: DiscreteMeasure

    def to_json_obj(self) -> dict:
        return {
            "components": [
                {
                    "l": lo,
                    "r": hi,
                    "mu": mu.to_json_obj()["atoms"],
                    "nu": nu.to_json_obj()["atoms"],
                }
                for (lo, hi), mu, nu in self.components
            ],
            "eta": self.eta.to_json_obj()["atoms"],
        }


def irreducible_components(
    mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float | None = None
) -> IrreducibleDecomposition:
    """Decompose a convex-ordered pair into irreducible components.

    The strict-inequality region of the potentials is computed exactly as a
    finite union of open intervals whose endpoints are breakpoints or linear
    crossing points.  Mass of the larger measure sitting exactly on a
    component endpoint is split so that each component's mass and mean match
    (the 2x2 balance pins the split down uniquely).
    """
    if not in_convex_order(mu, nu, tol):
        gap, pos = convex_order_gap(mu, nu)
        raise ValueError(f"measures are not in convex order (gap {gap} at {pos})")
    if mu == nu:
        return IrreducibleDecomposition((), mu)

    u, v = potential_of(mu), potential_of(nu)
    pre_grid = np.union1d(u.ys, v.ys)
    scale = float(np.max(np.abs(pre_grid))) if pre_grid.size else 0.0
    strict_tol = 1e-12 * (1.0 + mu.total_mass * scale)
    grid = _merged_grid_with_crossings(v, u, noise=strict_tol)
    diff = v.evaluate(grid) - u.evaluate(grid)
    positive = diff > strict_tol

    intervals: list[tuple[float, float]] = []
    i = 0
    n = grid.size
    while i < n:
        if positive[i]:
            j = i
            while j + 1 < n and positive[j + 1]:
                j += 1
            if i == 0 or j == n - 1:
                raise RuntimeError("potential difference does not close at the support ends")
            intervals.append((float(grid[i - 1]), float(grid[j + 1])))
            i = j + 1
        i += 1

    components = []
    # leftover mass of nu available at every potential endpoint position
    avail: dict[float, float] = {}
    alloc_tol = 1e-9 * (1.0 + nu.total_mass)
    for lo, hi in intervals:
        mu_n = mu.restrict(lo, hi, include_lo=False, include_hi=False)
        nu_int = nu.restrict(lo, hi, include_lo=False, include_hi=False)
        need_mass = mu_n.total_mass - nu_int.total_mass
        need_first = (
            (mu_n.barycenter() * mu_n.total_mass if not mu_n.is_zero() else 0.0)
            - (nu_int.barycenter() * nu_int.total_mass if not nu_int.is_zero() else 0.0)
        )
        take_hi = (need_first - lo * need_mass) / (hi - lo)
        take_lo = need_mass - take_hi
        for pos, amount in ((lo, take_lo), (hi, take_hi)):
            if amount < -alloc_tol:
                raise RuntimeError(f"negative boundary allocation {amount} at {pos}")
            if pos not in avail:
                avail[pos] = nu.cdf(pos) - nu.cdf_left(pos)
            if amount > avail[pos] + alloc_tol:
                raise RuntimeError(
                    f"boundary atom at {pos} too small: need {amount}, have {avail[pos]}"
                )
            avail[pos] -= amount
        nu_n = nu_int
        if take_lo > 0.0:
            nu_n = nu_n + DiscreteMeasure([lo], [take_lo])
        if take_hi > 0.0:
            nu_n = nu_n + DiscreteMeasure([hi], [take_hi])
        components.append(((lo, hi), mu_n, nu_n))

    inside = np.zeros(mu.positions.size, dtype=bool)
    for lo, hi in intervals:
        inside |= (mu.positions > lo) & (mu.positions < hi)
    eta = DiscreteMeasure(mu.positions[~inside], mu.weights[~inside])

    # consistency: nu must be exhausted by the components plus eta
    recombined = eta
    for _, _, nu_n in components:
        recombined = recombined + nu_n
    check_tol = 1e-9 * (1.0 + nu.total_mass)
    probe = np.union1d(recombined.positions, nu.positions)
    cdf_gap = max(
        (abs(recombined.cdf(x) - nu.cdf(x)) for x in probe),
        default=0.0,
    )
    if cdf_gap > check_tol:
        raise RuntimeError(
            f"irreducible decomposition does not exhaust the larger measure (gap {cdf_gap})"
        )
    return IrreducibleDecomposition(tuple(components), eta)
