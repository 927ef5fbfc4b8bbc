"""Positive dyadic operators, Haar multipliers and general leaf-matrix operators.

Every operator is lowered to a leaf kernel ``A``: for a measure ``mu``

    (T^mu f)(leaf j) = sum_i A[j, i] f(leaf i) mu(leaf i),

and the formal adjoint acting against ``nu`` has kernel ``A.T``, so that
<T^mu 1_Q, 1_R>_nu = <1_Q, T^nu 1_R>_mu holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .lattice import (Cube, DyadicLattice, Measure, all_haar_functions, average,
                      level_averages)


@dataclass(frozen=True, eq=False)
class GeneralOperator:
    matrix: np.ndarray
    r: int | None = None
    source: object = field(default=None, repr=False)

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"operator matrix must be square, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("operator matrix has non-finite entries")
        if self.r is not None and self.r < 0:
            raise ValueError("locality radius must be nonnegative")
        A.setflags(write=False)
        object.__setattr__(self, "matrix", A)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, f, mu: Measure) -> np.ndarray:
        """T^mu f."""
        return self.matrix @ (np.asarray(f, dtype=float) * mu.mass)

    def adjoint_apply(self, g, nu: Measure) -> np.ndarray:
        """T^nu g, the formal adjoint."""
        return self.matrix.T @ (np.asarray(g, dtype=float) * nu.mass)

    def adjoint(self) -> GeneralOperator:
        return GeneralOperator(self.matrix.T, self.r)

    def is_zero(self) -> bool:
        return not np.any(self.matrix)


@dataclass(frozen=True, eq=False)
class PositiveDyadic:
    """T^mu f = sum_Q lambda_Q (int_Q f dmu) 1_Q with lambda_Q >= 0."""

    lattice: DyadicLattice
    lam: Mapping[Cube, float]

    def __post_init__(self):
        lam = {Q: float(v) for Q, v in self.lam.items() if float(v) != 0.0}
        for Q, v in lam.items():
            if Q not in self.lattice:
                raise ValueError(f"{Q} is not a cube of the lattice")
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"lambda at {Q} must be a finite nonnegative number, got {v}")
        object.__setattr__(self, "lam", lam)

    r = None

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.lattice.num_leaves,) * 2)
        for Q, v in self.lam.items():
            ind = self.lattice.indicator(Q)
            A += v * np.outer(ind, ind)
        return A

    def localized_matrix(self, Q: Cube) -> np.ndarray:
        """Kernel of T_Q: only the cubes Q' ⊆ Q."""
        A = np.zeros((self.lattice.num_leaves,) * 2)
        for P, v in self.lam.items():
            if Q.contains(P):
                ind = self.lattice.indicator(P)
                A += v * np.outer(ind, ind)
        return A


@dataclass(frozen=True, eq=False)
class HaarMultiplier:
    """T^mu f = sum_I lambda_I <f, h_I>_mu h_I with Lebesgue-normalized Haar h_I (n = 1)."""

    lattice: DyadicLattice
    lam: Mapping[Cube, float]

    r = 0

    def __post_init__(self):
        if self.lattice.n != 1:
            raise ValueError(f"Haar multipliers are one-dimensional; lattice has n = {self.lattice.n}")
        lam = {Q: float(v) for Q, v in self.lam.items() if float(v) != 0.0}
        for Q in lam:
            if Q not in self.lattice or self.lattice.is_leaf(Q):
                raise ValueError(f"{Q} has no children in the lattice; h_I is undefined")
        object.__setattr__(self, "lam", lam)

    def haar(self, I: Cube) -> np.ndarray:
        left, right = I.children()
        return (self.lattice.indicator(left) - self.lattice.indicator(right)) / np.sqrt(I.side)

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.lattice.num_leaves,) * 2)
        for I, v in self.lam.items():
            h = self.haar(I)
            A += v * np.outer(h, h)
        return A


OperatorSpec = Union[PositiveDyadic, HaarMultiplier, GeneralOperator]


def apply_positive(S: PositiveDyadic, f, m: Measure) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    out = np.zeros(S.lattice.num_leaves)
    for Q, v in S.lam.items():
        mask = S.lattice.leaf_mask(Q)
        out[mask] += v * float(np.dot(f[mask], m.mass[mask]))
    return out


def apply_localized(S: PositiveDyadic, Q: Cube, f, m: Measure) -> np.ndarray:
    """T_Q^m f = sum_{Q' ⊆ Q} lambda_{Q'} (int_{Q'} f dm) 1_{Q'}."""
    sub = PositiveDyadic(S.lattice, {P: v for P, v in S.lam.items() if Q.contains(P)})
    return apply_positive(sub, f, m)


def haar_multiplier_apply(S: HaarMultiplier, f, m: Measure) -> np.ndarray:
    if S.lattice.n != 1:  # pragma: no cover - rejected at construction
        raise ValueError("Haar multipliers are one-dimensional")
    f = np.asarray(f, dtype=float)
    out = np.zeros(S.lattice.num_leaves)
    for I, v in S.lam.items():
        h = S.haar(I)
        out += v * float(np.dot(f * h, m.mass)) * h
    return out


def to_general(S: OperatorSpec, mu: Measure | None = None, nu: Measure | None = None) -> GeneralOperator:
    """Leaf-matrix normal form (the kernel does not depend on the measures)."""
    if isinstance(S, GeneralOperator):
        return S
    return GeneralOperator(S.matrix(), S.r, source=S)


@dataclass(frozen=True)
class LocalityReport:
    r: int
    passed: bool
    vacuous: bool
    max_violation: float
    worst: dict | None  # {"direction", "Q", "R", "k", "value"}
    pairs_checked: int

    @property
    def status(self) -> str:
        if self.vacuous:
            return "vacuously localized"
        return "pass" if self.passed else "fail"


def _ancestor_table(lat: DyadicLattice) -> np.ndarray:
    """anc[c, j] = id of the level-j ancestor of cube c (or -1 when j > level(c))."""
    K = lat.num_cubes
    anc = -np.ones((K, lat.depth + 1), dtype=np.int64)
    for cid, Q in enumerate(lat.all_cubes):
        for j in range(Q.level + 1):
            anc[cid, j] = lat.cube_id(Q.ancestor(Q.level - j))
    return anc


def forbidden_pairs(lat: DyadicLattice, r: int) -> np.ndarray:
    """F[Q, R] = True where lower-triangular localization demands <T 1_Q, h_R> = 0.

    Ancestors above the root are clamped to the root.
    """
    anc = _ancestor_table(lat)
    lev = lat.cube_levels
    ids = np.arange(lat.num_cubes)

    def inside(R_ids, P_ids):
        # R ⊆ P for every (P, R) pair: rows P, columns R
        lp = lev[P_ids][:, None]
        lr = lev[R_ids][None, :]
        ok = lr >= lp
        a = anc[R_ids[None, :], np.minimum(lp, lr)]
        return ok & (a == P_ids[:, None])

    lQ = lev[:, None]
    lR = lev[None, :]
    up = np.array([lat.cube_id(lat.ancestor(Q, r + 1)) for Q in lat.all_cubes])
    first = (lR >= lQ - 1) & ~inside(ids, up)
    second = (lR >= lQ + r) & ~inside(ids, ids)
    return first | second


def well_localized_check(S: OperatorSpec, mu: Measure, nu: Measure, r: int,
                         tol: float = 1e-9) -> LocalityReport:
    """Check both lower-triangular localization conditions with radius r."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    op = to_general(S)
    lat = mu.lattice
    F = forbidden_pairs(lat, r)
    M = lat.membership
    worst, worst_val, checked, any_pair = None, 0.0, 0, False
    for direction, A, m1, m2 in (("direct", op.matrix, mu, nu), ("adjoint", op.matrix.T, nu, mu)):
        H, owner = all_haar_functions(m2)
        if H.shape[0] == 0:
            continue
        TQ = (A @ (M * m1.mass[None, :]).T).T  # rows: T 1_Q
        coef = TQ @ (H * m2.mass[None, :]).T  # (cubes, haar rows)
        mask = F[:, owner]
        any_pair = any_pair or bool(mask.any())
        checked += int(mask.sum())
        viol = np.where(mask, np.abs(coef), 0.0)
        if viol.size and viol.max() > worst_val:
            qi, hi = np.unravel_index(int(np.argmax(viol)), viol.shape)
            worst_val = float(viol[qi, hi])
            R = lat.cube_from_id(int(owner[hi]))
            k = int(hi - np.flatnonzero(owner == owner[hi])[0])
            worst = {"direction": direction, "Q": lat.cube_from_id(int(qi)), "R": R, "k": k,
                     "value": float(coef[qi, hi])}
    return LocalityReport(r, worst_val <= tol, not any_pair, worst_val, worst, checked)


def paraproduct_apply(S: OperatorSpec, D0: Iterable[Cube], f, mu: Measure, nu: Measure, r: int) -> np.ndarray:
    """sum_{Q in D0} <f>_Q^mu sum_{R in ch^(r)(Q)} Delta_R^nu T^mu 1_Q."""
    op = to_general(S)
    lat = mu.lattice
    cubes = getattr(D0, "cubes", D0)
    out = np.zeros(lat.num_leaves)
    for Q in cubes:
        if Q.level + r > lat.depth:
            raise ValueError(f"{Q}: ch^({r}) leaves the lattice of depth {lat.depth}")
        j = Q.level + r
        if j == lat.depth:
            continue  # leaves carry no martingale differences
        g = op.apply(lat.indicator(Q), mu)
        proj = (level_averages(g, nu, j + 1) - level_averages(g, nu, j)) * lat.leaf_mask(Q)
        out += average(f, Q, mu) * proj
    return out


# ---------------------------------------------------------------- JSON

def operator_to_json(S: OperatorSpec) -> dict:
    if isinstance(S, PositiveDyadic):
        return {"kind": "positive", "lambda": [{"cube": Q.to_json(), "value": v} for Q, v in sorted(S.lam.items())]}
    if isinstance(S, HaarMultiplier):
        return {"kind": "haar", "lambda": [{"cube": Q.to_json(), "value": v} for Q, v in sorted(S.lam.items())],
                "r": 0}
    return {"kind": "general", "matrix": S.matrix.tolist(), "r": S.r}


def operator_from_json(lattice: DyadicLattice, d: dict) -> OperatorSpec:
    kind = d.get("kind")
    if kind in ("positive", "haar"):
        lam = {Cube.from_json(e["cube"]): float(e["value"]) for e in d.get("lambda", [])}
        return PositiveDyadic(lattice, lam) if kind == "positive" else HaarMultiplier(lattice, lam)
    if kind == "general":
        A = np.array(d["matrix"], dtype=float)
        if A.shape != (lattice.num_leaves,) * 2:
            raise ValueError(f"operator.matrix: expected {lattice.num_leaves}x{lattice.num_leaves}, got {A.shape}")
        return GeneralOperator(A, d.get("r"))
    raise ValueError(f"operator.kind: unknown kind {kind!r}")
