"""Transfer of a coupling onto new marginals through its copula.

A coupling of probability measures is the pushforward of a copula under the
two quantile maps.  For discrete data the copula kernels are finite unions of
uniform-density blocks on (0,1], so re-attaching new marginals amounts to
exact interval arithmetic: average the kernel table over the new first
marginal's quantile jumps, then push forward by the new second marginal's
quantile function.  No sampling is involved anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure
from .transport import Coupling, CouplingRow, adapted_wasserstein, wasserstein_1d

__all__ = [
    "BlockKernel",
    "CopulaKernelTable",
    "copula_table",
    "transfer_coupling",
    "check_marginal_bound",
]


@dataclass(frozen=True)
class BlockKernel:
    """A measure on (0,1] made of uniform-density blocks.

    `blocks` lists (lo, hi, mass): mass spread uniformly over (lo, hi].
    """

    blocks: tuple[tuple[float, float, float], ...]

    @property
    def mass(self) -> float:
        return float(sum(m for _, _, m in self.blocks))

    def scaled(self, c: float) -> "BlockKernel":
        return BlockKernel(tuple((lo, hi, m * c) for lo, hi, m in self.blocks))

    def density_breakdown(self) -> list[tuple[float, float, float]]:
        """Disjoint (lo, hi, density) segments of the block mixture."""
        edges = sorted({e for lo, hi, _ in self.blocks for e in (lo, hi)})
        segments = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            dens = sum(
                m / (b - a) for a, b, m in self.blocks if a <= lo and hi <= b
            )
            if dens > 0.0:
                segments.append((lo, hi, dens))
        return segments


def _merge_blocks(blocks: list[tuple[float, float, float]]) -> tuple[tuple[float, float, float], ...]:
    merged: dict[tuple[float, float], float] = {}
    for lo, hi, m in blocks:
        if m <= 0.0:
            continue
        key = (lo, hi)
        merged[key] = merged.get(key, 0.0) + m
    return tuple((lo, hi, merged[(lo, hi)]) for lo, hi in sorted(merged))


def _cum_edges(m: DiscreteMeasure) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(m.weights)])


@dataclass(frozen=True)
class CopulaKernelTable:
    """Disintegration of a copula along the first coordinate.

    The unit interval is partitioned at `u_edges` (one cell per jump of the
    first marginal's CDF) and each cell carries a :class:`BlockKernel` of
    mass one; the kernel is constant within each cell.
    """

    u_edges: np.ndarray
    kernels: tuple[BlockKernel, ...]

    def average_over(self, lo: float, hi: float) -> BlockKernel:
        """Length-normalized mixture of the kernels over (lo, hi]."""
        if hi <= lo:
            raise ValueError("empty averaging interval")
        edges = self.u_edges
        blocks: list[tuple[float, float, float]] = []
        total = hi - lo
        for i, kernel in enumerate(self.kernels):
            a, b = float(edges[i]), float(edges[i + 1])
            if i == len(self.kernels) - 1:
                b = max(b, hi)  # absorb roundoff at the top edge
            overlap = min(hi, b) - max(lo, a)
            if overlap <= 0.0:
                continue
            blocks.extend(kernel.scaled(overlap / total).blocks)
        return BlockKernel(_merge_blocks(blocks))


def copula_table(p: Coupling) -> CopulaKernelTable:
    """Exact copula of a probability coupling.

    Each kernel atom (y, q) of a row becomes the block over the jump of the
    second marginal's CDF at y, carrying mass q; pushing the cell's kernel
    forward by the second marginal's quantile function recovers the row.
    """
    if abs(p.total_mass - 1.0) > 1e-9:
        raise ValueError("copula construction expects a probability coupling")
    nu = p.second_marginal()
    nu_edges = _cum_edges(nu)
    kernels = []
    for row in p.rows:
        blocks = []
        for y, q in zip(row.kernel.positions, row.kernel.weights):
            idx = int(np.searchsorted(nu.positions, y))
            if idx >= len(nu) or nu.positions[idx] != y:
                raise RuntimeError(f"kernel atom {y} missing from the second marginal")
            blocks.append((float(nu_edges[idx]), float(nu_edges[idx + 1]), float(q)))
        kernels.append(BlockKernel(_merge_blocks(blocks)))
    return CopulaKernelTable(_cum_edges(p.first_marginal()), tuple(kernels))


def _push_blocks_to_measure(kernel: BlockKernel, target: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward of a block kernel by the target's quantile function."""
    edges = _cum_edges(target)
    weights = np.zeros(len(target))
    for lo, hi, mass in kernel.blocks:
        hi_eff = min(hi, float(edges[-1]))  # absorb roundoff at the top edge
        width = hi - lo
        # atoms j cover (edges[j], edges[j+1]]
        j = max(int(np.searchsorted(edges, lo, side="right")) - 1, 0)
        while j < len(target) and edges[j] < hi_eff:
            overlap = min(hi_eff, edges[j + 1]) - max(lo, edges[j])
            if overlap > 0.0:
                weights[j] += mass * overlap / width
            j += 1
    keep = weights > 0.0
    return DiscreteMeasure(target.positions[keep], weights[keep])


def transfer_coupling(
    p: Coupling, mu_new: DiscreteMeasure, nu_new: DiscreteMeasure
) -> Coupling:
    """Re-attach the dependence structure of `p` to new probability marginals.

    The returned coupling has first marginal `mu_new` and second marginal
    `nu_new` exactly; its kernel at each new atom is the quantile-jump
    average of the copula of `p`, pushed forward by the quantile function of
    `nu_new`.  When the new marginals equal the old ones the output is `p`
    itself.
    """
    if abs(mu_new.total_mass - 1.0) > 1e-9 or abs(nu_new.total_mass - 1.0) > 1e-9:
        raise ValueError("transfer_coupling expects probability marginals")
    table = copula_table(p)
    edges = _cum_edges(mu_new)
    rows = []
    for i in range(len(mu_new)):
        lo, hi = float(edges[i]), float(edges[i + 1])
        averaged = table.average_over(lo, hi)
        kernel = _push_blocks_to_measure(averaged, nu_new)
        rows.append(CouplingRow(float(mu_new.positions[i]), float(mu_new.weights[i]), kernel))
    out = Coupling(rows)
    # the construction is exact interval arithmetic; guard against drift
    second = out.second_marginal()
    probe = np.union1d(second.positions, nu_new.positions)
    gap = max((abs(second.cdf(t) - nu_new.cdf(t)) for t in probe), default=0.0)
    if gap > 1e-9:
        raise RuntimeError(f"transferred coupling misses its second marginal by {gap}")
    return out


def check_marginal_bound(p: Coupling, p_new: Coupling, r: float = 1.0) -> tuple[float, float, bool]:
    """Compare the adapted distance against the marginal-error bound.

    Returns (lhs, rhs, holds) with lhs the r-th power of the adapted
    distance between the couplings and rhs the sum of the r-th power
    Wasserstein errors of their marginals.  The bound holds whenever every
    CDF jump of the new first marginal nests inside a jump of the old one.
    """
    lhs = adapted_wasserstein(p, p_new, r).distance ** r
    rhs = (
        wasserstein_1d(p.first_marginal(), p_new.first_marginal(), r) ** r
        + wasserstein_1d(p.second_marginal(), p_new.second_marginal(), r) ** r
    )
    return lhs, rhs, lhs <= rhs + 1e-9
