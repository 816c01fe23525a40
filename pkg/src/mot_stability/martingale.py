"""Martingale couplings: validation, construction and surgery.

A coupling is a martingale coupling when every disintegration kernel has
barycenter equal to its base point.  Existence between two measures is
equivalent to the convex order; construction here solves the corresponding
linear program, picking the plan of least mean displacement so that results
are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .measures import DiscreteMeasure, zero_measure
from .potentials import IrreducibleDecomposition, convex_order_gap, in_convex_order
from .transport import Coupling, CouplingRow, identity_coupling, wasserstein_1d

__all__ = [
    "ConvexOrderViolation",
    "MartingaleDiagnostics",
    "martingale_diagnostics",
    "strassen_coupling",
    "min_cost_martingale",
    "compose",
    "decompose_coupling",
    "slice_by_quantiles",
]


class ConvexOrderViolation(ValueError):
    """Raised when no martingale coupling can exist between two measures.

    Carries a witness: the position where the potential of the first
    measure exceeds the potential of the second by `gap`.
    """

    def __init__(self, message: str, position: float, gap: float):
        super().__init__(message)
        self.position = position
        self.gap = gap


@dataclass(frozen=True)
class MartingaleDiagnostics:
    """Row-wise barycenter defects of a coupling."""

    max_defect: float
    mean_defect: float
    is_martingale: bool


def _position_scale(p: Coupling) -> float:
    return 1.0 + max((abs(r.x) for r in p.rows), default=0.0)


def martingale_diagnostics(p: Coupling, tol: float | None = None) -> MartingaleDiagnostics:
    """Exact per-row defects |barycenter(kernel) - x| and their maximum."""
    if tol is None:
        tol = 1e-9 * _position_scale(p)
    defects = np.array([abs(r.kernel.barycenter() - r.x) for r in p.rows])
    weights = np.array([r.weight for r in p.rows])
    if defects.size == 0:
        return MartingaleDiagnostics(0.0, 0.0, True)
    max_defect = float(np.max(defects))
    mean_defect = float(np.dot(weights, defects) / np.sum(weights))
    return MartingaleDiagnostics(max_defect, mean_defect, max_defect <= tol)


def _raise_order_violation(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    gap, pos = convex_order_gap(mu, nu)
    raise ConvexOrderViolation(
        f"no martingale coupling exists: potential gap {gap} at y={pos}", pos, gap
    )


def _martingale_lp(mu: DiscreteMeasure, nu: DiscreteMeasure) -> np.ndarray:
    """Least mean-displacement martingale transport plan, as an (n, m) array.

    Minimizes sum gamma_ij |x_i - y_j| over nonnegative gamma with row sums
    mu, column sums nu and row barycenters x_i.  The barycenter rows are
    scaled by 1/(1+|x_i|) for conditioning.  The solver's vertex solution is
    polished by re-solving the equality system on its support, which pushes
    feasibility residuals down to machine precision.
    """
    x, y = mu.positions, nu.positions
    n, m = x.size, y.size
    cost = np.abs(x[:, None] - y[None, :]).ravel()
    rows = []
    rhs = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = 1.0
        rows.append(row)
        rhs.append(mu.weights[i])
    for j in range(m - 1):  # last column sum is implied by the others
        row = np.zeros(n * m)
        row[j::m] = 1.0
        rows.append(row)
        rhs.append(nu.weights[j])
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m : (i + 1) * m] = (y - x[i]) / (1.0 + abs(x[i]))
        rows.append(row)
        rhs.append(0.0)
    a_eq = np.vstack(rows)
    b_eq = np.asarray(rhs)
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs")
    if not res.success:
        _raise_order_violation(mu, nu)
    flows = np.asarray(res.x)
    support = flows > 1e-12 * (1.0 + mu.total_mass)
    if support.any():
        polished, *_ = np.linalg.lstsq(a_eq[:, support], b_eq, rcond=None)
        floor = -1e-12 * (1.0 + mu.total_mass)
        if np.all(polished >= floor):
            residual = float(np.max(np.abs(a_eq[:, support] @ polished - b_eq)))
            if residual <= 1e-11 * (1.0 + mu.total_mass):
                refined = np.zeros_like(flows)
                refined[support] = np.maximum(polished, 0.0)
                flows = refined
    return flows.reshape(n, m)


def _coupling_from_plan(mu: DiscreteMeasure, nu: DiscreteMeasure, flows: np.ndarray) -> Coupling:
    rows = []
    for i in range(len(mu)):
        kernel_weights = flows[i] / mu.weights[i]
        keep = kernel_weights > 1e-14
        if not np.any(keep):
            # the solver zeroed a dust row (weight below its feasibility
            # tolerance); the diagonal kernel is exact and costs nothing
            kernel = DiscreteMeasure([mu.positions[i]], [1.0])
        else:
            kernel = DiscreteMeasure(nu.positions[keep], kernel_weights[keep])
            kernel = kernel * (1.0 / kernel.total_mass)
        rows.append(CouplingRow(float(mu.positions[i]), float(mu.weights[i]), kernel))
    return Coupling(rows)


def strassen_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """A martingale coupling between convex-ordered measures.

    The feasible set is a polytope; for reproducibility the returned plan
    minimizes the mean displacement sum gamma_ij |x_i - y_j|.  Raises
    :class:`ConvexOrderViolation` with a witness breakpoint when the convex
    order fails.
    """
    if mu.is_zero() and nu.is_zero():
        return Coupling([])
    if not in_convex_order(mu, nu):
        _raise_order_violation(mu, nu)
    if mu == nu:
        return identity_coupling(mu)
    flows = _martingale_lp(mu, nu)
    out = _coupling_from_plan(mu, nu, flows)
    diag = martingale_diagnostics(out)
    scale = _position_scale(out)
    if diag.max_defect > 1e-9 * scale:
        raise RuntimeError(f"martingale plan defect {diag.max_defect} exceeds tolerance")
    return out


def min_cost_martingale(mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """Martingale coupling minimizing the mean displacement.

    The optimal value never exceeds twice the Wasserstein-1 distance of the
    marginals, which bounds the extra transport cost incurred by the
    martingale constraint.
    """
    out = strassen_coupling(mu, nu)
    cost = sum(r.weight * r.kernel.moment(1.0, r.x) for r in out.rows)
    bound = 2.0 * wasserstein_1d(mu, nu, 1.0)
    if cost > bound + 1e-9:
        raise RuntimeError(f"martingale transport cost {cost} exceeds 2*W1 = {bound}")
    return out


def compose(p: Coupling, m: Coupling) -> Coupling:
    """Chain two couplings through their common middle marginal.

    The output kernel at x mixes the kernels of `m` over the intermediate
    points charged by p_x.  If both inputs are martingale couplings the
    output is one as well (tower property).
    """
    mid = p.second_marginal()
    first_m = m.first_marginal()
    tol = 1e-9 * (1.0 + mid.total_mass)
    probe = np.union1d(mid.positions, first_m.positions)
    gap = max((abs(mid.cdf(t) - first_m.cdf(t)) for t in probe), default=0.0)
    if gap > tol:
        raise ValueError(f"marginal mismatch in composition: CDF gap {gap}")
    m_xs = np.array([r.x for r in m.rows])
    rows = []
    for row in p.rows:
        mixed = zero_measure()
        for z, q in zip(row.kernel.positions, row.kernel.weights):
            idx = int(np.searchsorted(m_xs, z))
            best = None
            for cand in (idx - 1, idx, idx + 1):
                if 0 <= cand < m_xs.size:
                    d = abs(m_xs[cand] - z)
                    if best is None or d < best[1]:
                        best = (cand, d)
            if best is None or best[1] > 1e-9 * (1.0 + abs(z)):
                raise ValueError(f"intermediate point {z} missing from the second coupling")
            mixed = mixed + m.rows[best[0]].kernel * q
        rows.append(CouplingRow(row.x, row.weight, mixed))
    return Coupling(rows)


def decompose_coupling(
    p: Coupling, decomposition: IrreducibleDecomposition
) -> tuple[list[Coupling], Coupling | None]:
    """Split a martingale coupling along the irreducible components.

    Rows whose base point lies strictly inside a component interval form
    that component's sub-coupling; base points on the potential-equality
    set must carry identity kernels and form the common diagonal part.
    """
    parts: list[list[CouplingRow]] = [[] for _ in decomposition.components]
    chi_rows: list[CouplingRow] = []
    scale = _position_scale(p)
    for row in p.rows:
        placed = False
        for part, ((lo, hi), _, _) in zip(parts, decomposition.components):
            if lo < row.x < hi:
                part.append(row)
                placed = True
                break
        if not placed:
            if row.kernel.moment(1.0, row.x) > 1e-8 * scale:
                raise ValueError(
                    f"row at x={row.x} lies outside every component but is not diagonal"
                )
            chi_rows.append(CouplingRow(row.x, row.weight, DiscreteMeasure([row.x], [1.0])))
    couplings = []
    for part, (_, mu_n, nu_n) in zip(parts, decomposition.components):
        c = Coupling(part)
        if abs(c.total_mass - mu_n.total_mass) > 1e-9 * (1.0 + mu_n.total_mass):
            raise ValueError("coupling does not match the decomposition's first marginals")
        couplings.append(c)
    chi = Coupling(chi_rows) if chi_rows else None
    return couplings, chi


def slice_by_quantiles(
    p: Coupling, boundaries: list[tuple[float, float]]
) -> tuple[
    list[tuple[DiscreteMeasure, DiscreteMeasure, Coupling]],
    tuple[DiscreteMeasure, DiscreteMeasure, Coupling | None],
]:
    """Cut a probability martingale coupling along first-marginal quantiles.

    Each boundary (u_lo, u_hi) in (0,1) yields the measure carried by that
    quantile band together with its kernels; an atom straddling a boundary
    is split proportionally, keeping its kernel on both sides.  Because the
    input is a martingale coupling, every sliced pair of marginals is in
    convex order, and the slices plus the remainder re-sum to the input.
    """
    if abs(p.total_mass - 1.0) > 1e-9:
        raise ValueError("quantile slicing expects a probability coupling")
    diag = martingale_diagnostics(p, tol=1e-7 * _position_scale(p))
    if not diag.is_martingale:
        raise ValueError(f"quantile slicing expects a martingale coupling (defect {diag.max_defect})")
    bounds = sorted((float(lo), float(hi)) for lo, hi in boundaries)
    for (lo, hi) in bounds:
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"boundary ({lo}, {hi}) is not a subinterval of (0,1)")
    for (_, hi), (lo, _) in zip(bounds[:-1], bounds[1:]):
        if lo < hi:
            raise ValueError("quantile boundaries overlap")

    weights = np.array([r.weight for r in p.rows])
    edges = np.concatenate([[0.0], np.cumsum(weights)])
    taken = np.zeros(len(p.rows))
    slices = []
    for lo, hi in boundaries:
        rows = []
        for i, row in enumerate(p.rows):
            overlap = min(float(hi), float(edges[i + 1])) - max(float(lo), float(edges[i]))
            if overlap > 0.0:
                rows.append(CouplingRow(row.x, overlap, row.kernel))
                taken[i] += overlap
        sub = Coupling(rows)
        slices.append((sub.first_marginal(), sub.second_marginal(), sub))

    rem_rows = []
    for i, row in enumerate(p.rows):
        left = row.weight - taken[i]
        if left > 1e-15:
            rem_rows.append(CouplingRow(row.x, left, row.kernel))
    if rem_rows:
        rem = Coupling(rem_rows)
        remainder = (rem.first_marginal(), rem.second_marginal(), rem)
    else:
        remainder = (zero_measure(), zero_measure(), None)
    return slices, remainder
