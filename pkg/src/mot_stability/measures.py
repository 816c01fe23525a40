"""Finitely supported measures on the real line.

A :class:`DiscreteMeasure` is the universal carrier for marginals and
disintegration kernels: a sorted list of weighted atoms with CDF/quantile
calculus, moments and the measure algebra (add, scale, restrict, translate).
All values are immutable after construction and every operation is a pure
function, so measures can be freely shared across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Atom",
    "DiscreteMeasure",
    "QuantilePartition",
    "tail_moment",
    "zero_measure",
]


@dataclass(frozen=True)
class Atom:
    """A single weighted point mass."""

    position: float
    weight: float


def _merge_atoms(positions: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort by position and merge atoms at exactly equal positions.

    Position equality is exact binary comparison, which keeps the measure
    algebra associative and reproducible.
    """
    if positions.size == 0:
        return positions, weights
    order = np.argsort(positions, kind="stable")
    positions = positions[order]
    weights = weights[order]
    keep_new = np.empty(positions.size, dtype=bool)
    keep_new[0] = True
    keep_new[1:] = positions[1:] != positions[:-1]
    group = np.cumsum(keep_new) - 1
    merged_w = np.zeros(int(group[-1]) + 1)
    np.add.at(merged_w, group, weights)
    merged_x = positions[keep_new]
    positive = merged_w > 0.0
    return merged_x[positive], merged_w[positive]


class DiscreteMeasure:
    """A finite positive measure with finitely many atoms on the real line.

    Atom positions are strictly increasing (equal positions are merged at
    construction) and weights are strictly positive.  The empty measure is a
    first-class value representing the zero measure.
    """

    __slots__ = ("positions", "weights", "_cumweights")

    def __init__(self, positions: Iterable[float], weights: Iterable[float]):
        pos = np.asarray(list(positions), dtype=float)
        wts = np.asarray(list(weights), dtype=float)
        if pos.shape != wts.shape or pos.ndim != 1:
            raise ValueError("positions and weights must be 1-D sequences of equal length")
        if pos.size and not np.all(np.isfinite(pos)):
            raise ValueError("atom positions must be finite")
        if pos.size and not np.all(np.isfinite(wts)):
            raise ValueError("atom weights must be finite")
        if np.any(wts < 0.0):
            raise ValueError("atom weights must be nonnegative")
        pos, wts = _merge_atoms(pos, wts)
        pos.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", wts)
        cum = np.cumsum(wts)
        cum.setflags(write=False)
        object.__setattr__(self, "_cumweights", cum)

    def __setattr__(self, name, value):
        raise AttributeError("DiscreteMeasure is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "DiscreteMeasure":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def point(cls, position: float, weight: float = 1.0) -> "DiscreteMeasure":
        return cls([position], [weight])

    # -- basic queries -------------------------------------------------

    @property
    def total_mass(self) -> float:
        return float(self._cumweights[-1]) if self.weights.size else 0.0

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return tuple(Atom(float(x), float(w)) for x, w in zip(self.positions, self.weights))

    def is_zero(self) -> bool:
        return self.weights.size == 0

    def __len__(self) -> int:
        return int(self.positions.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.positions.shape == other.positions.shape
            and bool(np.all(self.positions == other.positions))
            and bool(np.all(self.weights == other.weights))
        )

    def __hash__(self):
        return hash((self.positions.tobytes(), self.weights.tobytes()))

    def __repr__(self) -> str:
        body = " + ".join(f"{w:g}*d({x:g})" for x, w in zip(self.positions, self.weights))
        return f"DiscreteMeasure({body or '0'})"

    def isclose(self, other: "DiscreteMeasure", tol: float = 1e-12) -> bool:
        """Atomwise comparison up to `tol` in weights and positions."""
        if len(self) != len(other):
            return False
        if len(self) == 0:
            return True
        scale = 1.0 + max(np.max(np.abs(self.positions)), np.max(np.abs(other.positions)))
        return bool(
            np.all(np.abs(self.positions - other.positions) <= tol * scale)
            and np.all(np.abs(self.weights - other.weights) <= tol * (1.0 + self.total_mass))
        )

    # -- CDF / quantile calculus ---------------------------------------

    def cdf(self, x: float) -> float:
        """Right-continuous cumulative mass of (-inf, x]."""
        idx = int(np.searchsorted(self.positions, x, side="right"))
        return float(self._cumweights[idx - 1]) if idx > 0 else 0.0

    def cdf_left(self, x: float) -> float:
        """Left limit of the CDF: mass of (-inf, x)."""
        idx = int(np.searchsorted(self.positions, x, side="left"))
        return float(self._cumweights[idx - 1]) if idx > 0 else 0.0

    def quantile(self, u: float) -> float:
        """Left-continuous generalized inverse of the CDF.

        `u` lives on the un-normalized mass scale (0, total_mass]; callers
        with probability semantics normalize themselves.
        """
        if not 0.0 < u <= self.total_mass:
            raise ValueError(f"quantile level {u} outside (0, {self.total_mass}]")
        idx = int(np.searchsorted(self._cumweights, u, side="left"))
        return float(self.positions[idx])

    def barycenter(self) -> float:
        if self.is_zero():
            raise ValueError("barycenter of the zero measure is undefined")
        return float(np.dot(self.positions, self.weights) / self.total_mass)

    def moment(self, r: float, x0: float = 0.0) -> float:
        """Absolute moment sum(w * |x - x0|**r), for r >= 1."""
        if r < 1.0:
            raise ValueError("moment order must satisfy r >= 1")
        if self.is_zero():
            return 0.0
        return float(np.dot(self.weights, np.abs(self.positions - x0) ** r))

    def support_bounds(self) -> tuple[float, float]:
        if self.is_zero():
            raise ValueError("zero measure has no support")
        return float(self.positions[0]), float(self.positions[-1])

    # -- measure algebra ------------------------------------------------

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.weights, other.weights]),
        )

    def __mul__(self, c: float) -> "DiscreteMeasure":
        if c < 0.0:
            raise ValueError("measures scale by nonnegative factors only")
        if c == 0.0:
            return zero_measure()
        return DiscreteMeasure(self.positions, self.weights * c)

    __rmul__ = __mul__

    def subtract(self, other: "DiscreteMeasure", tol: float = 1e-12) -> "DiscreteMeasure":
        """Atomwise difference self - other; raises if the result is negative.

        `other` must live on a subset of self's atoms; deficits below
        `tol * (1 + total_mass)` are clamped to zero.
        """
        slack = tol * (1.0 + self.total_mass)
        pos = list(self.positions)
        wts = np.array(self.weights, dtype=float)
        for x, w in zip(other.positions, other.weights):
            idx = int(np.searchsorted(self.positions, x))
            if idx >= len(pos) or pos[idx] != x:
                if w > slack:
                    raise ValueError(f"cannot subtract mass at {x}: no atom there")
                continue
            wts[idx] -= w
            if wts[idx] < -slack:
                raise ValueError(f"negative mass {wts[idx]} at {x} after subtraction")
            if wts[idx] < 0.0:
                wts[idx] = 0.0
        return DiscreteMeasure(pos, wts)

    def translate(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.positions + c, self.weights)

    def restrict(
        self,
        lo: float = -np.inf,
        hi: float = np.inf,
        include_lo: bool = True,
        include_hi: bool = True,
    ) -> "DiscreteMeasure":
        """Restriction to an interval; each end closed or open per the flags."""
        left = self.positions >= lo if include_lo else self.positions > lo
        right = self.positions <= hi if include_hi else self.positions < hi
        keep = left & right
        return DiscreteMeasure(self.positions[keep], self.weights[keep])

    def scale_about_barycenter(self, alpha: float) -> "DiscreteMeasure":
        """Pushforward under y -> alpha*(y - m1) + m1 about the barycenter m1."""
        if alpha < 0.0:
            raise ValueError("dilation factor must be nonnegative")
        m1 = self.barycenter()
        return DiscreteMeasure(alpha * (self.positions - m1) + m1, self.weights)

    def scale_about(self, center: float, alpha: float) -> "DiscreteMeasure":
        """Pushforward under y -> alpha*(y - center) + center."""
        if alpha < 0.0:
            raise ValueError("dilation factor must be nonnegative")
        return DiscreteMeasure(alpha * (self.positions - center) + center, self.weights)

    def normalized(self) -> "DiscreteMeasure":
        mass = self.total_mass
        if mass <= 0.0:
            raise ValueError("cannot normalize the zero measure")
        return DiscreteMeasure(self.positions, self.weights / mass)

    # -- serialization ---------------------------------------------------

    def to_json_obj(self) -> dict:
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.positions, self.weights)]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DiscreteMeasure":
        if not isinstance(obj, dict) or "atoms" not in obj:
            raise ValueError("measure JSON must be an object with an 'atoms' key")
        atoms = obj["atoms"]
        return cls.from_pairs(atoms)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteMeasure":
        return cls.from_json_obj(json.loads(text))

    def to_csv(self) -> str:
        lines = ["position,weight"]
        lines += [f"{float(x)!r},{float(w)!r}" for x, w in zip(self.positions, self.weights)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or lines[0].replace(" ", "") != "position,weight":
            raise ValueError("line 1: expected header 'position,weight'")
        positions, weights = [], []
        for i, line in enumerate(lines[1:], start=2):
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"line {i}: expected two comma-separated fields")
            try:
                x, w = float(parts[0]), float(parts[1])
            except ValueError:
                raise ValueError(f"line {i}: could not parse '{line}' as numbers") from None
            if not np.isfinite(x):
                raise ValueError(f"line {i}: position must be finite")
            if not np.isfinite(w) or w <= 0.0:
                raise ValueError(f"line {i}: weight must be a finite positive number")
            positions.append(x)
            weights.append(w)
        return cls(positions, weights)


def zero_measure() -> DiscreteMeasure:
    return DiscreteMeasure([], [])


@dataclass(frozen=True)
class QuantilePartition:
    """The quantile function of a measure as a left-continuous step function.

    `breakpoints` lists (u, value) pairs: the quantile function takes the
    given value on the mass interval ending at u (the last u equals the
    total mass).  The original atom weights are retained so that
    reconstruction is exact in floating point.
    """

    breakpoints: tuple[tuple[float, float], ...]
    widths: tuple[float, ...]

    @classmethod
    def from_measure(cls, m: DiscreteMeasure) -> "QuantilePartition":
        cum = np.cumsum(m.weights)
        bps = tuple((float(u), float(x)) for u, x in zip(cum, m.positions))
        return cls(bps, tuple(float(w) for w in m.weights))

    def to_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure([v for _, v in self.breakpoints], self.widths)


def tail_moment(m: DiscreteMeasure, eps: float, r: float = 1.0, x0: float = 0.0) -> float:
    """Largest r-th moment about x0 carried by a sub-measure of mass <= eps.

    Equals the integral of the upper quantile tail of the image of `m`
    under x -> |x - x0|**r: the heaviest eps of mass is taken greedily from
    the atoms farthest from x0, with a fractional final atom.  For
    eps >= total_mass this is the plain r-th moment; for eps = 0 it is 0.
    """
    if eps < 0.0:
        raise ValueError("mass budget eps must be nonnegative")
    if r < 1.0:
        raise ValueError("moment order must satisfy r >= 1")
    if eps == 0.0 or m.is_zero():
        return 0.0
    values = np.abs(m.positions - x0) ** r
    order = np.argsort(values, kind="stable")[::-1]
    remaining = eps
    total = 0.0
    for idx in order:
        take = min(float(m.weights[idx]), remaining)
        total += take * float(values[idx])
        remaining -= take
        if remaining <= 0.0:
            break
    return total
