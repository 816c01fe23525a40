"""Stability toolkit for one-dimensional martingale optimal transport.

Compute adapted Wasserstein distances between finitely supported couplings,
construct martingale couplings between measures in convex order, and
approximate a given martingale coupling by martingale couplings on perturbed
marginals with certified diagnostics.
"""

from .measures import Atom, DiscreteMeasure, QuantilePartition, tail_moment, zero_measure
from .potentials import (
    IrreducibleDecomposition,
    PotentialFunction,
    compactify,
    convex_inf,
    convex_order_gap,
    convex_sup,
    in_convex_order,
    irreducible_components,
    measure_from_potential,
    potential_of,
)
from .transport import (
    AdaptedResult,
    Coupling,
    CouplingRow,
    TransportPlan,
    adapted_wasserstein,
    adapted_wasserstein_embedded,
    identity_coupling,
    set_threads,
    solve_transport,
    wasserstein_1d,
)
from .copula import (
    BlockKernel,
    CopulaKernelTable,
    check_marginal_bound,
    copula_table,
    transfer_coupling,
)
from .martingale import (
    ConvexOrderViolation,
    MartingaleDiagnostics,
    compose,
    decompose_coupling,
    martingale_diagnostics,
    min_cost_martingale,
    slice_by_quantiles,
    strassen_coupling,
)

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "DiscreteMeasure",
    "QuantilePartition",
    "tail_moment",
    "zero_measure",
    "IrreducibleDecomposition",
    "PotentialFunction",
    "compactify",
    "convex_inf",
    "convex_order_gap",
    "convex_sup",
    "in_convex_order",
    "irreducible_components",
    "measure_from_potential",
    "potential_of",
    "AdaptedResult",
    "Coupling",
    "CouplingRow",
    "TransportPlan",
    "adapted_wasserstein",
    "adapted_wasserstein_embedded",
    "identity_coupling",
    "set_threads",
    "solve_transport",
    "wasserstein_1d",
    "BlockKernel",
    "CopulaKernelTable",
    "check_marginal_bound",
    "copula_table",
    "transfer_coupling",
    "ConvexOrderViolation",
    "MartingaleDiagnostics",
    "compose",
    "decompose_coupling",
    "martingale_diagnostics",
    "min_cost_martingale",
    "slice_by_quantiles",
    "strassen_coupling",
]
