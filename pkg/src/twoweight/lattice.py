"""Finite dyadic lattice on [0,1)^n, leaf measures, averages and martingale differences.

Step functions are plain float arrays of leaf values in lexicographic leaf
order; a :class:`Measure` carries the lattice they live on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

MAX_LEAVES = 1 << 14

#: open interval of admissible Lebesgue exponents
EXPONENT_RANGE = (1.0, np.inf)


class CapacityError(ValueError):
    """Requested lattice or enumeration exceeds the configured size bound."""


class MeasureError(ValueError):
    """Invalid leaf masses."""


def check_exponent(p: float) -> float:
    lo, hi = EXPONENT_RANGE
    p = float(p)
    if not (lo < p < hi):
        raise ValueError(f"exponent {p} outside the open interval ({lo}, {hi})")
    return p


def dual_exponent(p: float) -> float:
    p = check_exponent(p)
    return p / (p - 1.0)


@dataclass(frozen=True, order=True)
class Cube:
    """Dyadic cube prod_i [index_i 2^-level, (index_i + 1) 2^-level)."""

    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        if self.level < 0 or any(i < 0 or i >= (1 << self.level) for i in self.index):
            raise ValueError(f"invalid cube level={self.level} index={self.index}")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    def ancestor(self, r: int, clamp: bool = False) -> Cube | None:
        """Q^{(r)}; ``None`` above the root unless ``clamp`` (then the root)."""
        if r < 0:
            raise ValueError("r must be nonnegative")
        if r > self.level:
            if not clamp:
                return None
            r = self.level
        return Cube(self.level - r, tuple(i >> r for i in self.index))

    def parent(self) -> Cube | None:
        return self.ancestor(1)

    def children(self) -> list[Cube]:
        n = self.dim
        out = []
        for bits in range(1 << n):
            # lexicographic: first coordinate is the most significant
            off = [(bits >> (n - 1 - d)) & 1 for d in range(n)]
            out.append(Cube(self.level + 1, tuple(2 * i + o for i, o in zip(self.index, off))))
        return out

    def descendants(self, r: int) -> list[Cube]:
        """ch^{(r)}(Q): cubes Q' with Q'^{(r)} = Q."""
        cubes = [self]
        for _ in range(r):
            cubes = [c for q in cubes for c in q.children()]
        return cubes

    def contains(self, other: Cube) -> bool:
        """Q ⊇ other."""
        if other.level < self.level:
            return False
        s = other.level - self.level
        return all((j >> s) == i for i, j in zip(self.index, other.index))

    def to_json(self) -> dict:
        return {"level": self.level, "index": list(self.index)}

    @classmethod
    def from_json(cls, d: dict) -> Cube:
        return cls(int(d["level"]), tuple(int(i) for i in d["index"]))

    def __repr__(self) -> str:
        return f"Cube({self.level}, {self.index})"


@dataclass(frozen=True)
class DyadicLattice:
    """Dyadic cubes of [0,1)^n down to level ``depth``; leaves sit at level ``depth``."""

    n: int
    depth: int
    max_leaves: int = field(default=MAX_LEAVES, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.depth < 0:
            raise ValueError("need n >= 1 and depth >= 0")
        if self.n * self.depth > 62 or (1 << (self.n * self.depth)) > self.max_leaves:
            raise CapacityError(
                f"2^(n*depth) = 2^{self.n * self.depth} leaves exceeds the bound {self.max_leaves}"
            )

    @property
    def num_leaves(self) -> int:
        return 1 << (self.n * self.depth)

    @property
    def root(self) -> Cube:
        return Cube(0, (0,) * self.n)

    def level_size(self, level: int) -> int:
        return 1 << (self.n * level)

    @cached_property
    def _offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([self.level_size(j) for j in range(self.depth + 1)])])

    @property
    def num_cubes(self) -> int:
        return int(self._offsets[-1])

    @cached_property
    def leaf_index(self) -> np.ndarray:
        """(num_leaves, n) integer coordinates of the leaves, lexicographic."""
        side = 1 << self.depth
        grid = np.indices((side,) * self.n).reshape(self.n, -1).T
        return np.ascontiguousarray(grid)

    @cached_property
    def labels(self) -> np.ndarray:
        """labels[j, leaf] = lexicographic position (within level j) of the level-j cube holding the leaf."""
        out = np.empty((self.depth + 1, self.num_leaves), dtype=np.int64)
        for j in range(self.depth + 1):
            coarse = self.leaf_index >> (self.depth - j)
            flat = np.zeros(self.num_leaves, dtype=np.int64)
            for d in range(self.n):
                flat = flat * (1 << j) + coarse[:, d]
            out[j] = flat
        return out

    def cubes(self, level: int | None = None) -> list[Cube]:
        """Cubes of one level (or all levels, coarse to fine), lexicographic within a level."""
        if level is None:
            return [c for j in range(self.depth + 1) for c in self.cubes(j)]
        side = 1 << level
        return [Cube(level, tuple(ix)) for ix in np.ndindex(*(side,) * self.n)]

    def __iter__(self) -> Iterator[Cube]:
        return iter(self.cubes())

    def __contains__(self, Q: Cube) -> bool:
        return Q.dim == self.n and Q.level <= self.depth

    def position(self, Q: Cube) -> int:
        """Lexicographic position of Q within its level."""
        flat = 0
        for i in Q.index:
            flat = flat * (1 << Q.level) + i
        return flat

    def cube_id(self, Q: Cube) -> int:
        if Q not in self:
            raise ValueError(f"{Q} is not a cube of {self}")
        return int(self._offsets[Q.level]) + self.position(Q)

    def cube_from_id(self, cid: int) -> Cube:
        return self.all_cubes[cid]

    @cached_property
    def all_cubes(self) -> list[Cube]:
        return self.cubes()

    @cached_property
    def cube_levels(self) -> np.ndarray:
        return np.array([Q.level for Q in self.all_cubes], dtype=np.int64)

    def is_leaf(self, Q: Cube) -> bool:
        return Q.level == self.depth

    def leaf_mask(self, Q: Cube) -> np.ndarray:
        if Q not in self:
            raise ValueError(f"{Q} is not a cube of {self}")
        return self.labels[Q.level] == self.position(Q)

    def indicator(self, Q: Cube) -> np.ndarray:
        return self.leaf_mask(Q).astype(float)

    @cached_property
    def membership(self) -> np.ndarray:
        """(num_cubes, num_leaves) float matrix of cube indicators in cube-id order."""
        M = np.zeros((self.num_cubes, self.num_leaves))
        for j in range(self.depth + 1):
            rows = self._offsets[j] + self.labels[j]
            M[rows, np.arange(self.num_leaves)] = 1.0
        return M

    def leaf_cube(self, leaf: int) -> Cube:
        return Cube(self.depth, tuple(self.leaf_index[leaf]))

    def ancestor(self, Q: Cube, r: int) -> Cube:
        """Q^{(r)} with ancestors beyond the root clamped to the root."""
        return Q.ancestor(r, clamp=True)

    def to_json(self) -> dict:
        return {"n": self.n, "depth": self.depth}


def build_lattice(n: int, depth: int, max_leaves: int = MAX_LEAVES) -> DyadicLattice:
    return DyadicLattice(int(n), int(depth), max_leaves)


@dataclass(frozen=True, eq=False)
class Measure:
    """Nonnegative masses on the leaf cells of a lattice."""

    lattice: DyadicLattice
    mass: np.ndarray

    def __post_init__(self):
        m = np.array(self.mass, dtype=float).reshape(-1)
        if m.shape[0] != self.lattice.num_leaves:
            raise MeasureError(f"expected {self.lattice.num_leaves} leaf masses, got {m.shape[0]}")
        bad = np.flatnonzero(~np.isfinite(m) | (m < 0))
        if bad.size:
            i = int(bad[0])
            raise MeasureError(f"leaf {i}: mass {m[i]!r} is not a finite nonnegative number")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @classmethod
    def lebesgue(cls, lattice: DyadicLattice) -> Measure:
        return cls(lattice, np.full(lattice.num_leaves, 1.0 / lattice.num_leaves))

    @property
    def positive(self) -> np.ndarray:
        return self.mass > 0

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def __call__(self, Q: Cube) -> float:
        return float(self.mass[self.lattice.leaf_mask(Q)].sum())

    def level_masses(self, level: int) -> np.ndarray:
        return np.bincount(self.lattice.labels[level], weights=self.mass,
                           minlength=self.lattice.level_size(level))

    @cached_property
    def cube_masses(self) -> np.ndarray:
        """Masses of all cubes in cube-id order."""
        return np.concatenate([self.level_masses(j) for j in range(self.lattice.depth + 1)])

    def integrate(self, f) -> float:
        return float(np.dot(np.asarray(f, dtype=float), self.mass))

    def inner(self, f, g) -> float:
        return float(np.sum(np.asarray(f) * np.asarray(g) * self.mass))

    def __eq__(self, other) -> bool:
        return (isinstance(other, Measure) and self.lattice == other.lattice
                and np.array_equal(self.mass, other.mass))

    __hash__ = None


def average(f, Q: Cube, m: Measure) -> float:
    """<f>_Q^m, with the convention <f>_Q = 0 when m(Q) = 0."""
    mask = m.lattice.leaf_mask(Q)
    mq = float(m.mass[mask].sum())
    if mq <= 0:
        return 0.0
    return float(np.dot(np.asarray(f, dtype=float)[mask], m.mass[mask]) / mq)


def level_averages(f, m: Measure, level: int) -> np.ndarray:
    """Leafwise sum_{Q in D_level} <f>_Q 1_Q."""
    lat = m.lattice
    labels = lat.labels[level]
    size = lat.level_size(level)
    num = np.bincount(labels, weights=np.asarray(f, dtype=float) * m.mass, minlength=size)
    den = np.bincount(labels, weights=m.mass, minlength=size)
    avg = np.divide(num, den, out=np.zeros(size), where=den > 0)
    return avg[labels]


def martingale_difference(f, Q: Cube, m: Measure) -> np.ndarray:
    """Delta_Q f = sum_{Q' in ch(Q)} <f>_{Q'} 1_{Q'} - <f>_Q 1_Q."""
    lat = m.lattice
    if lat.is_leaf(Q):
        raise ValueError(f"{Q} is a leaf; martingale differences need children")
    mask = lat.leaf_mask(Q)
    out = np.zeros(lat.num_leaves)
    out[mask] = (level_averages(f, m, Q.level + 1) - level_averages(f, m, Q.level))[mask]
    return out


def level_difference(f, m: Measure, level: int) -> np.ndarray:
    """sum_{Q in D_level} Delta_Q f, leafwise."""
    return level_averages(f, m, level + 1) - level_averages(f, m, level)


@dataclass(frozen=True, eq=False)
class HaarSystem:
    cube: Cube
    measure: Measure
    functions: np.ndarray  # (m(Q), num_leaves)

    @property
    def size(self) -> int:
        return self.functions.shape[0]

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return iter(self.functions)

    def coefficients(self, f) -> np.ndarray:
        return self.functions @ (np.asarray(f, dtype=float) * self.measure.mass)

    def project(self, f) -> np.ndarray:
        return self.coefficients(f) @ self.functions


def haar_system(Q: Cube, m: Measure) -> HaarSystem:
    """Orthonormal L^2(m) basis of mean-zero functions constant on the children of Q.

    Gram-Schmidt on (1_Q, 1_{c_1}, ..., 1_{c_k}) over the positive-mass children
    c_0 < c_1 < ... < c_k in lexicographic order; the leading constant is
    dropped.  Carried out as a QR factorization with positive diagonal.
    """
    lat = m.lattice
    if lat.is_leaf(Q):
        raise ValueError(f"{Q} is a leaf; Haar functions need children")
    kids = [c for c in Q.children() if m(c) > 0]
    if len(kids) < 2:
        return HaarSystem(Q, m, np.zeros((0, lat.num_leaves)))
    w = np.array([m(c) for c in kids])
    k = len(kids)
    V = np.zeros((k, k))
    V[:, 0] = 1.0
    V[np.arange(k - 1), np.arange(1, k)] = 1.0
    sw = np.sqrt(w)
    Qm, R = np.linalg.qr(sw[:, None] * V)
    Qm = Qm * np.sign(np.diag(R))[None, :]
    coef = Qm[:, 1:] / sw[:, None]  # child values of each Haar function
    funcs = np.zeros((k - 1, lat.num_leaves))
    for ci, c in enumerate(kids):
        funcs[:, lat.leaf_mask(c)] = coef[ci][:, None]
    return HaarSystem(Q, m, funcs)


def all_haar_functions(m: Measure) -> tuple[np.ndarray, np.ndarray]:
    """Stack the Haar functions of every non-leaf cube.

    Returns ``(H, owner)`` with ``H`` of shape (count, num_leaves) and
    ``owner[i]`` the cube id of the cube carrying row i.
    """
    lat = m.lattice
    rows, owner = [], []
    for Q in lat.all_cubes:
        if lat.is_leaf(Q):
            continue
        hs = haar_system(Q, m)
        rows.extend(hs.functions)
        owner.extend([lat.cube_id(Q)] * hs.size)
    H = np.array(rows) if rows else np.zeros((0, lat.num_leaves))
    return H, np.array(owner, dtype=np.int64)


def lp_norm(f, p: float, m: Measure) -> float:
    p = check_exponent(p)
    return float(np.dot(np.abs(np.asarray(f, dtype=float)) ** p, m.mass) ** (1.0 / p))


def vector_l2_lp_norm(fs: Sequence, p: float, m: Measure) -> float:
    """||(sum_i f_i^2)^{1/2}||_{L^p(m)}."""
    F = np.atleast_2d(np.asarray(fs, dtype=float))
    return lp_norm(np.sqrt(np.sum(F * F, axis=0)), p, m)


def square_function(f, k: int, m: Measure) -> np.ndarray:
    """(sum_{Q in D_k} |<f>_Q|^2 1_Q + sum_{l(Q) <= 2^-k} |Delta_Q f|^2)^{1/2}, leafwise."""
    D = m.lattice.depth
    if not 0 <= k <= D:
        raise ValueError(f"top level k={k} outside [0, {D}]")
    acc = level_averages(f, m, k) ** 2
    for j in range(k, D):
        acc += level_difference(f, m, j) ** 2
    return np.sqrt(acc)


def square_function_norm(f, k: int, m: Measure, p: float) -> float:
    return lp_norm(square_function(f, k, m), p, m)


def reconstruct(f, k: int, m: Measure) -> np.ndarray:
    """sum_{Q in D_k} <f>_Q 1_Q + sum_{l(Q) <= 2^-k} Delta_Q f."""
    D = m.lattice.depth
    if not 0 <= k <= D:
        raise ValueError(f"top level k={k} outside [0, {D}]")
    out = level_averages(f, m, k)
    for j in range(k, D):
        out = out + level_difference(f, m, j)
    return out
