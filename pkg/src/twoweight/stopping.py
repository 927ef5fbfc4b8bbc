"""Principal cubes, sparse and Carleson families, and the dyadic Carleson embedding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .lattice import Cube, DyadicLattice, Measure, average, check_exponent


@dataclass(frozen=True)
class CubeFamily:
    """A finite, deduplicated set of lattice cubes, optionally weighted."""

    lattice: DyadicLattice
    cubes: tuple[Cube, ...]
    weights: Mapping[Cube, float] | None = field(default=None, compare=False)

    def __init__(self, lattice: DyadicLattice, cubes: Iterable[Cube], weights: Mapping[Cube, float] | None = None):
        cubes = tuple(sorted(set(cubes)))
        for Q in cubes:
            if Q not in lattice:
                raise ValueError(f"{Q} does not belong to {lattice}")
        if weights is not None:
            weights = {Q: float(w) for Q, w in weights.items()}
            if any(w < 0 for w in weights.values()):
                raise ValueError("family weights must be nonnegative")
        object.__setattr__(self, "lattice", lattice)
        object.__setattr__(self, "cubes", cubes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def full(cls, lattice: DyadicLattice, max_level: int | None = None) -> CubeFamily:
        top = lattice.depth if max_level is None else max_level
        return cls(lattice, [Q for Q in lattice.all_cubes if Q.level <= top])

    def __iter__(self):
        return iter(self.cubes)

    def __len__(self) -> int:
        return len(self.cubes)

    def __contains__(self, Q: Cube) -> bool:
        return Q in set(self.cubes)

    def maximal(self) -> list[Cube]:
        return _maximal(self.cubes)

    def to_json(self) -> list[dict]:
        out = []
        for Q in self.cubes:
            rec = Q.to_json()
            if self.weights is not None and Q in self.weights:
                rec["weight"] = self.weights[Q]
            out.append(rec)
        return out

    @classmethod
    def from_json(cls, lattice: DyadicLattice, records: list[dict]) -> CubeFamily:
        cubes = [Cube.from_json(r) for r in records]
        weights = {Cube.from_json(r): r["weight"] for r in records if "weight" in r} or None
        return cls(lattice, cubes, weights)


def _maximal(cubes: Iterable[Cube]) -> list[Cube]:
    cubes = sorted(set(cubes))
    return [Q for Q in cubes if not any(P != Q and P.contains(Q) for P in cubes)]


@dataclass(frozen=True)
class StoppingTree:
    """A stopping family with its tree structure.

    ``children[F]`` are the maximal members strictly inside F; the exceptional
    set E(F) is F minus the union of its children.
    """

    lattice: DyadicLattice
    family: tuple[Cube, ...]
    children: Mapping[Cube, tuple[Cube, ...]]

    @classmethod
    def from_family(cls, lattice: DyadicLattice, cubes: Iterable[Cube]) -> StoppingTree:
        fam = sorted(set(cubes))
        kids = {}
        for F in fam:
            inside = [Q for Q in fam if Q != F and F.contains(Q)]
            kids[F] = tuple(_maximal(inside))
        return cls(lattice, tuple(fam), kids)

    @property
    def roots(self) -> list[Cube]:
        return _maximal(self.family)

    def generations(self) -> list[list[Cube]]:
        """[F_0, F_1, ...] with F_0 the maximal cubes."""
        gens = [self.roots]
        while True:
            nxt = [c for F in gens[-1] for c in self.children[F]]
            if not nxt:
                return gens
            gens.append(nxt)

    def pi(self, Q: Cube) -> Cube | None:
        """Smallest member containing Q."""
        best = None
        for F in self.family:
            if F.contains(Q) and (best is None or F.level > best.level):
                best = F
        return best

    def pi1(self, Q: Cube) -> Cube | None:
        """Smallest member strictly containing Q."""
        best = None
        for F in self.family:
            if F != Q and F.contains(Q) and (best is None or F.level > best.level):
                best = F
        return best

    def exceptional(self, F: Cube) -> np.ndarray:
        mask = self.lattice.leaf_mask(F).copy()
        for c in self.children[F]:
            mask &= ~self.lattice.leaf_mask(c)
        return mask

    def to_json(self) -> dict:
        return {
            "v": 1,
            "lattice": self.lattice.to_json(),
            "nodes": [
                {"cube": F.to_json(), "children": [c.to_json() for c in self.children[F]]}
                for F in self.family
            ],
        }


def principal_cubes(f, D0: CubeFamily | Iterable[Cube], m: Measure) -> StoppingTree:
    """Principal cubes of |f| inside D0: stop where the |f|-average more than doubles."""
    lat = m.lattice
    cubes = list(D0.cubes if isinstance(D0, CubeFamily) else sorted(set(D0)))
    absf = np.abs(np.asarray(f, dtype=float))
    avg = {Q: average(absf, Q, m) for Q in cubes}
    roots = _maximal(cubes)
    family = list(roots)
    children: dict[Cube, tuple[Cube, ...]] = {}
    frontier = roots
    while frontier:
        nxt = []
        for F in frontier:
            hits = [Q for Q in cubes if Q != F and F.contains(Q) and avg[Q] > 2.0 * avg[F]]
            kids = tuple(_maximal(hits))
            children[F] = kids
            nxt.extend(kids)
        family.extend(nxt)
        frontier = nxt
    return StoppingTree(lat, tuple(sorted(family)), children)


@dataclass(frozen=True)
class SparseCarlesonReport:
    sparse_ratio: float  # min mu(E(F)) / mu(F)
    carleson_ratio: float  # max sum_{F' ⊆ F} mu(F') / mu(F)
    worst_sparse: Cube | None
    worst_carleson: Cube | None
    sparse_ok: bool
    carleson_ok: bool

    @property
    def ok(self) -> bool:
        return self.sparse_ok and self.carleson_ok


def verify_sparse_carleson(T: StoppingTree, m: Measure, tol: float = 1e-12) -> SparseCarlesonReport:
    sparse, carl = np.inf, 0.0
    ws = wc = None
    for F in T.family:
        mf = m(F)
        below = sum(m(G) for G in T.family if F.contains(G))
        if mf <= 0:
            if below > 0:  # pragma: no cover - impossible for sub-cubes of a null cube
                carl, wc = np.inf, F
            continue
        s = float(m.mass[T.exceptional(F)].sum()) / mf
        if s < sparse:
            sparse, ws = s, F
        c = below / mf
        if c > carl:
            carl, wc = c, F
    return SparseCarlesonReport(sparse, carl, ws, wc, sparse >= 0.5 - tol, carl <= 2.0 + tol)


def carleson_constant(D0: CubeFamily | Iterable[Cube], m: Measure,
                      weights: Mapping[Cube, float] | None = None) -> float:
    """Smallest C' with sum_{Q' in D0, Q' ⊆ Q} a_{Q'} <= C' m(Q) for every Q in D0.

    ``a_{Q'}`` defaults to m(Q'); a family's own weights are used when present.
    """
    if isinstance(D0, CubeFamily):
        cubes = list(D0.cubes)
        if weights is None:
            weights = D0.weights
    else:
        cubes = sorted(set(D0))
    a = {Q: (m(Q) if weights is None else float(weights.get(Q, 0.0))) for Q in cubes}
    best = 0.0
    for Q in cubes:
        s = sum(a[P] for P in cubes if Q.contains(P))
        mq = m(Q)
        if mq <= 0:
            if s > 0:
                return float("inf")
            continue
        best = max(best, s / mq)
    return best


def embedding_matrix(D0: CubeFamily | Iterable[Cube], m: Measure) -> np.ndarray:
    """Leaf kernel of f -> sum_{Q in D0} <f>_Q^m 1_Q (null cubes contribute 0)."""
    lat = m.lattice
    cubes = D0.cubes if isinstance(D0, CubeFamily) else sorted(set(D0))
    A = np.zeros((lat.num_leaves, lat.num_leaves))
    for Q in cubes:
        mq = m(Q)
        if mq > 0:
            ind = lat.indicator(Q)
            A += np.outer(ind, ind) / mq
    return A


def carleson_embedding_constant(D0: CubeFamily | Iterable[Cube], m: Measure, p: float, budget=None):
    """Best C in ||sum_{Q in D0} <|f|>_Q 1_Q||_p <= C ||f||_p, as a certified NormEstimate.

    The map has a nonnegative kernel, so the supremum is taken over f >= 0; every
    cube indicator is included among the starts.
    """
    from .norms import Budget, ExponentPair, norm_lplq_ascent
    from .operators import GeneralOperator

    p = check_exponent(p)
    cubes = D0.cubes if isinstance(D0, CubeFamily) else sorted(set(D0))
    op = GeneralOperator(embedding_matrix(cubes, m))
    starts = [m.lattice.indicator(Q) for Q in cubes if m(Q) > 0]
    return norm_lplq_ascent(op, m, m, ExponentPair(p, p), budget or Budget(),
                            nonnegative=True, extra_starts=starts)
