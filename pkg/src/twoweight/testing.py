"""Sawyer and square-function testing constants, and the norm-equivalence experiments.

A testing problem pairs every cube Q (of positive mass for the measure on the
input side) with one or more test functions g:

* ``localized``: g = T_Q 1_Q, the localized positive dyadic operator;
* ``restricted``: g = 1_R T 1_Q for every admissible R of side l(Q) inside
  Q^{(r+1)}, and also every R of side 2 l(Q) there (covered by its children);
* ``plain``: g = T 1_Q.

The square-function constant is

    sup  ||(sum_Q a_Q^2 g_Q^2)^{1/2}||_{L^q(nu)} / ||(sum_Q a_Q^2 1_Q)^{1/2}||_{L^p(mu)}

over finite families, a_Q >= 0 and R-assignments.  With b = a^2 both sides are
(quasi-)norms of linear images of b, which is what the optimizer works on.
All suprema are over the finite truncated lattice.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .lattice import CapacityError, Cube, Measure
from .norms import Budget, ExponentPair, NormEstimate, operator_norm
from .operators import GeneralOperator, HaarMultiplier, OperatorSpec, PositiveDyadic, to_general

Direction = Literal["direct", "adjoint"]

CARLESON_ENUMERATION_LIMIT = 20
RANDOMIZED_ENUMERATION_LIMIT = 12
REPORT_HEADER = "constants are suprema over the finite truncated dyadic lattice"


@dataclass
class _Problem:
    """Data of one testing problem (one direction)."""

    cubes: list[Cube]  # cubes with positive input-side mass
    owner: np.ndarray  # candidate -> index into cubes
    region: list[Cube | None]  # candidate -> R (None: no restriction)
    G: np.ndarray  # (candidates, leaves) test functions
    H: np.ndarray  # (cubes, leaves) indicators
    w_num: np.ndarray
    w_den: np.ndarray
    p: float  # exponent on the input side
    q: float  # exponent on the output side
    den_mass: np.ndarray  # input-side mass of each cube
    mode: str

    def candidates(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owner == i)


def _source(op: OperatorSpec):
    if isinstance(op, GeneralOperator):
        return op.source
    return op


def _resolve_mode(op: OperatorSpec, mode: str | None, r: int | None) -> tuple[str, int | None]:
    if r is None:
        r = getattr(op, "r", None)
    if mode is None:
        if isinstance(_source(op), PositiveDyadic):
            mode = "localized"
        elif r is not None:
            mode = "restricted"
        else:
            mode = "plain"
    if mode == "localized" and not isinstance(_source(op), PositiveDyadic):
        raise ValueError("localized testing needs a positive dyadic operator")
    if mode == "restricted" and r is None:
        raise ValueError("restricted testing needs a locality radius r")
    if mode not in ("localized", "restricted", "plain"):
        raise ValueError(f"unknown testing mode {mode!r}")
    return mode, r


def build_problem(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                  direction: Direction = "direct", mode: str | None = None,
                  r: int | None = None) -> _Problem:
    mode, r = _resolve_mode(op, mode, r)
    lat = mu.lattice
    A = to_general(op).matrix
    if direction == "direct":
        m_in, m_out, p, q, K = mu, nu, e.p, e.q, A
    elif direction == "adjoint":
        m_in, m_out, p, q, K = nu, mu, e.q_dual, e.p_dual, A.T
    else:
        raise ValueError(f"direction must be 'direct' or 'adjoint', got {direction!r}")
    cubes = [Q for Q in lat.all_cubes if m_in(Q) > 0]
    G, owner, region = [], [], []
    src = _source(op)
    for i, Q in enumerate(cubes):
        ind = lat.indicator(Q)
        if mode == "localized":
            KQ = src.localized_matrix(Q)
            G.append((KQ if direction == "direct" else KQ.T) @ (ind * m_in.mass))
            owner.append(i)
            region.append(None)
            continue
        g = K @ (ind * m_in.mass)
        if mode == "plain":
            G.append(g)
            owner.append(i)
            region.append(None)
            continue
        top = lat.ancestor(Q, r + 1)
        for lev in (Q.level, Q.level - 1):
            if lev < top.level:
                continue
            for R in top.descendants(lev - top.level):
                G.append(g * lat.leaf_mask(R))
                owner.append(i)
                region.append(R)
    H = np.array([lat.indicator(Q) for Q in cubes]).reshape(len(cubes), lat.num_leaves)
    G = np.array(G).reshape(len(G), lat.num_leaves)
    return _Problem(cubes, np.array(owner, dtype=np.int64), region, G, H,
                    m_out.mass.copy(), m_in.mass.copy(), p, q,
                    np.array([m_in(Q) for Q in cubes]), mode)


def _lp(values, w, s):
    return float(np.dot(np.abs(values) ** s, w) ** (1.0 / s))


# ------------------------------------------------------------------ Sawyer

@dataclass(frozen=True)
class SawyerResult:
    value: float
    cube: Cube | None
    region: Cube | None
    direction: str
    mode: str


def _sawyer_from_problem(prob: _Problem, direction: str) -> SawyerResult:
    best, bc, br = 0.0, None, None
    for c in range(prob.G.shape[0]):
        i = prob.owner[c]
        v = _lp(prob.G[c], prob.w_num, prob.q) / prob.den_mass[i] ** (1.0 / prob.p)
        if v > best:
            best, bc, br = v, prob.cubes[i], prob.region[c]
    return SawyerResult(best, bc, br, direction, prob.mode)


def sawyer_constant(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                    direction: Direction = "direct", mode: str | None = None,
                    r: int | None = None) -> SawyerResult:
    """max over cubes (and admissible regions) of ||g_Q||_q / m(Q)^{1/p}."""
    prob = build_problem(op, mu, nu, e, direction, mode, r)
    return _sawyer_from_problem(prob, direction)


# ------------------------------------------------------------------ square function

def square_ratio(prob: _Problem, items: np.ndarray, cand: np.ndarray, b: np.ndarray) -> float:
    """Exact square-function ratio for weights b = a^2 on the chosen cubes/candidates."""
    b = np.maximum(np.asarray(b, dtype=float), 0.0)
    num = np.dot(b, prob.G[cand] ** 2)
    den = np.dot(b, prob.H[items])
    D = float(np.dot(den ** (prob.p / 2.0), prob.w_den))
    if D <= 0:
        return 0.0
    N = float(np.dot(num ** (prob.q / 2.0), prob.w_num))
    return N ** (1.0 / prob.q) / D ** (1.0 / prob.p)


def _neg_log_ratio(b, Gs, Hs, wn, wd, p, q):
    # the ratio is invariant under b -> c b, so work with b / max(b)
    scale = float(np.max(b, initial=0.0))
    if scale <= 0:
        return 50.0, np.zeros_like(b)
    val, grad = _neg_log_ratio_unit(b / scale, Gs, Hs, wn, wd, p, q)
    return val, grad / scale


def _neg_log_ratio_unit(b, Gs, Hs, wn, wd, p, q):
    num = b @ Gs
    den = b @ Hs
    dn = 1e-14 * max(float(num.max(initial=0.0)), 1e-300)
    dd = 1e-14 * max(float(den.max(initial=0.0)), 1e-300)
    N = float(np.dot((num + dn) ** (q / 2.0), wn))
    D = float(np.dot((den + dd) ** (p / 2.0), wd))
    if N <= 0 or D <= 0:
        return 50.0, np.zeros_like(b)
    val = -(np.log(N) / q - np.log(D) / p)
    gN = Gs @ (wn * (num + dn) ** (q / 2.0 - 1.0)) / N
    gD = Hs @ (wd * (den + dd) ** (p / 2.0 - 1.0)) / D
    return val, -0.5 * (gN - gD)


def _optimize_weights(prob: _Problem, items: np.ndarray, cand: np.ndarray, starts, iterations: int):
    """Maximize the square ratio over b >= 0 from several starts (L-BFGS-B)."""
    Gs = prob.G[cand] ** 2
    Hs = prob.H[items]
    best_b, best_v = None, -1.0
    for b0 in starts:
        b0 = np.asarray(b0, dtype=float)
        if b0.sum() <= 0:
            continue
        b0 = b0 / b0.sum()
        res = minimize(_neg_log_ratio, b0, jac=True, method="L-BFGS-B",
                       args=(Gs, Hs, prob.w_num, prob.w_den, prob.p, prob.q),
                       bounds=[(0.0, None)] * len(b0), options={"maxiter": iterations})
        for b in (res.x, b0):
            v = square_ratio(prob, items, cand, b)
            if v > best_v:
                best_v, best_b = v, np.maximum(b, 0.0)
    return best_b, best_v


def _carleson_masks(masses: np.ndarray, cubes: list[Cube], factor: float = 2.0) -> np.ndarray:
    """Bitmasks of the maximal ``factor``-Carleson subfamilies (exhaustive)."""
    K = len(cubes)
    if K > CARLESON_ENUMERATION_LIMIT:
        raise CapacityError(f"{K} cubes exceeds the Carleson enumeration bound {CARLESON_ENUMERATION_LIMIT}")
    sets = np.arange(1 << K, dtype=np.int64)
    B = ((sets[:, None] >> np.arange(K)[None, :]) & 1).astype(bool)
    ok = np.ones(1 << K, dtype=bool)
    for i, Q in enumerate(cubes):
        below = np.array([Q.contains(P) for P in cubes]) * masses
        s = B.astype(float) @ below
        ok &= ~(B[:, i] & (s > factor * masses[i] * (1 + 1e-12)))
    maximal = ok.copy()
    for i in range(K):
        bit = np.int64(1) << i
        without = (sets & bit) == 0
        maximal[without] &= ~ok[sets[without] | bit]
    return sets[maximal]


def _random_carleson_families(masses, cubes, rng, count, factor=2.0):
    """Greedy maximal Carleson families from random insertion orders."""
    K = len(cubes)
    inside = np.array([[P.contains(Q) for Q in cubes] for P in cubes])  # [P, Q]: Q ⊆ P
    fams = []
    for _ in range(count):
        chosen = np.zeros(K, dtype=bool)
        for i in rng.permutation(K):
            trial = chosen.copy()
            trial[i] = True
            sums = inside[:, trial] @ masses[trial]
            if np.all(~trial | (sums <= factor * masses * (1 + 1e-12))):
                chosen = trial
        fams.append(np.flatnonzero(chosen))
    return fams


@dataclass
class TestingConstant:
    value: float
    direction: str
    policy: str
    mode: str
    sawyer: float
    family: list[Cube] = field(default_factory=list)
    a: dict = field(default_factory=dict)  # Cube -> a_Q
    assignment: dict = field(default_factory=dict)  # Cube -> R (restricted mode)
    best_so_far: bool = False
    families_examined: int = 0

    def to_json(self) -> dict:
        return {
            "value": self.value, "direction": self.direction, "policy": self.policy,
            "mode": self.mode, "sawyer": self.sawyer, "best_so_far": self.best_so_far,
            "families_examined": self.families_examined,
            "witness": [{"cube": Q.to_json(), "a": self.a[Q],
                         "R": self.assignment[Q].to_json() if self.assignment.get(Q) is not None else None}
                        for Q in self.family],
        }


def _screen_families(prob: _Problem, families, sawyer_cand, budget: Budget, keep: int | None = None):
    """Rank families by a cheap score and keep the most promising ones.

    The score is the best ratio over a few fixed weightings restricted to the
    family (uniform, mass-proportional, inverse-mass); every family remains a
    certified lower bound, so screening only affects how close to the sup we get.
    """
    keep = keep or max(4, budget.restarts // 2)
    if len(families) <= keep:
        return families
    scores = []
    for items in families:
        cand = sawyer_cand[items]
        m = prob.den_mass[items]
        scores.append(max(square_ratio(prob, items, cand, w) for w in (np.ones(len(items)), m, 1.0 / m)))
    order = np.argsort(scores, kind="stable")[::-1][:keep]
    return [families[i] for i in order]


def _solve_family(prob: _Problem, items: np.ndarray, budget: Budget, rng, sawyer_cand: np.ndarray):
    """Alternate between weights and R-assignment on one family of cube indices."""
    cand = sawyer_cand[items].copy()
    n = len(items)
    starts = [np.ones(n)]
    single = [_lp(prob.G[c], prob.w_num, prob.q) / prob.den_mass[i] ** (1.0 / prob.p)
              for i, c in zip(items, cand)]
    for j in np.argsort(single)[::-1][:4]:
        s = np.full(n, 1e-3)
        s[j] = 1.0
        starts.append(s)
    starts.extend(rng.dirichlet(np.ones(n)) for _ in range(max(budget.restarts // 4, 2)))
    b, v = _optimize_weights(prob, items, cand, starts, budget.iterations)
    for _ in range(6):
        changed = False
        for pos, i in enumerate(items):
            alts = prob.candidates(i)
            if len(alts) < 2 or b[pos] <= 0:
                continue
            for c in alts:
                if c == cand[pos]:
                    continue
                trial = cand.copy()
                trial[pos] = c
                tv = square_ratio(prob, items, trial, b)
                if tv > v * (1 + 1e-12):
                    cand, v, changed = trial, tv, True
        if not changed:
            break
        b2, v2 = _optimize_weights(prob, items, cand, [b] + starts[:2], budget.iterations)
        if v2 > v:
            b, v = b2, v2
    return b, cand, v


def square_testing_constant(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                            direction: Direction = "direct",
                            family_policy: Literal["all", "carleson"] = "all",
                            budget: Budget | None = None, mode: str | None = None,
                            r: int | None = None) -> TestingConstant:
    """Square-function testing constant (a certified lower bound on the supremum).

    ``all``: every finite subfamily, realized by optimizing a >= 0 over every
    cube.  ``carleson``: only 2-Carleson families (w.r.t. the input-side
    measure), by enumerating the maximal ones; above the enumeration bound,
    random greedy maximal families are searched and ``best_so_far`` is set.
    Singletons are always admissible, so the result is at least the Sawyer value.
    """
    budget = budget or Budget()
    prob = build_problem(op, mu, nu, e, direction, mode, r)
    saw = _sawyer_from_problem(prob, direction)
    result = TestingConstant(saw.value, direction, family_policy, prob.mode, saw.value)
    if saw.cube is not None:
        i = prob.cubes.index(saw.cube)
        result.family, result.a = [saw.cube], {saw.cube: 1.0}
        result.assignment = {saw.cube: saw.region}
    if not prob.cubes or saw.value == 0.0:
        return result
    rng = np.random.default_rng(budget.seed)
    # per-cube candidate with the largest single-cube ratio
    sawyer_cand = np.empty(len(prob.cubes), dtype=np.int64)
    for i in range(len(prob.cubes)):
        cs = prob.candidates(i)
        vals = [_lp(prob.G[c], prob.w_num, prob.q) for c in cs]
        sawyer_cand[i] = cs[int(np.argmax(vals))]
    if family_policy == "all":
        families = [np.arange(len(prob.cubes))]
    elif family_policy == "carleson":
        try:
            masks = _carleson_masks(prob.den_mass, prob.cubes)
            families = [np.flatnonzero((int(mk) >> np.arange(len(prob.cubes))) & 1) for mk in masks]
        except CapacityError:
            families = _random_carleson_families(prob.den_mass, prob.cubes, rng, budget.restarts)
            result.best_so_far = True
    else:
        raise ValueError(f"unknown family policy {family_policy!r}")
    families = [f for f in families if len(f)]
    if len(families) > 1:
        families = _screen_families(prob, families, sawyer_cand, budget)
    for items in families:
        b, cand, v = _solve_family(prob, items, budget, rng, sawyer_cand)
        result.families_examined += 1
        if v > result.value:
            keep = b > 0
            result.value = v
            result.family = [prob.cubes[i] for i in items[keep]]
            scale = np.sqrt(b[keep] / b[keep].max())
            result.a = dict(zip(result.family, map(float, scale)))
            result.assignment = {prob.cubes[i]: prob.region[c] for i, c in zip(items[keep], cand[keep])}
    return result


def evaluate_square_witness(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                            tc: TestingConstant, r: int | None = None) -> float:
    """Recompute the ratio of a TestingConstant witness straight from the definition."""
    lat = mu.lattice
    A = to_general(op).matrix
    src = _source(op)
    m_in, m_out, p, q = (mu, nu, e.p, e.q) if tc.direction == "direct" else (nu, mu, e.q_dual, e.p_dual)
    K = A if tc.direction == "direct" else A.T
    num = np.zeros(lat.num_leaves)
    den = np.zeros(lat.num_leaves)
    for Q in tc.family:
        a = tc.a[Q]
        ind = lat.indicator(Q)
        if tc.mode == "localized":
            KQ = src.localized_matrix(Q)
            g = (KQ if tc.direction == "direct" else KQ.T) @ (ind * m_in.mass)
        else:
            g = K @ (ind * m_in.mass)
            R = tc.assignment.get(Q)
            if R is not None:
                g = g * lat.leaf_mask(R)
        num += (a * g) ** 2
        den += (a * ind) ** 2
    d = _lp(np.sqrt(den), m_in.mass, p)
    return _lp(np.sqrt(num), m_out.mass, q) / d if d > 0 else 0.0


# ------------------------------------------------------------------ randomized

@dataclass
class RandomizedConstant:
    value: float
    square: float
    moment: str
    family: list[Cube]
    a: np.ndarray
    sampled: bool

    @property
    def ratio(self) -> float:
        return self.value / self.square if self.square > 0 else 1.0


def _expected(norms, grads, moment_s):
    """(E norm^s)^{1/s} and its gradient."""
    if moment_s == 1.0:
        return float(norms.mean()), grads.mean(axis=0)
    Es = float(np.mean(norms ** moment_s))
    if Es <= 0:
        return 0.0, np.zeros(grads.shape[1])
    g = np.mean((norms ** (moment_s - 1.0))[:, None] * grads, axis=0)
    return Es ** (1.0 / moment_s), Es ** (1.0 / moment_s - 1.0) * g


def _sampled_norms(G, a, w, s, signs):
    V = (signs * a[None, :]) @ G
    absV = np.abs(V)
    norms = (absV ** s @ w) ** (1.0 / s)
    psi = np.sign(V) * absV ** (s - 1.0) * w[None, :]
    scale = np.where(norms > 0, norms, 1.0) ** (1.0 - s) * (norms > 0)
    return norms, signs * (psi @ G.T) * scale[:, None]


def randomized_testing_constant(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                                direction: Direction = "direct", budget: Budget | None = None,
                                family: list[Cube] | None = None, moment: str = "first",
                                mode: str | None = None, r: int | None = None,
                                samples: int | None = None) -> RandomizedConstant:
    """Best C in E||sum eps_Q a_Q g_Q||_q <= C E||sum eps_Q a_Q 1_Q||_p over a >= 0.

    ``moment="first"`` uses plain expectations; ``moment="matched"`` uses
    (E||.||_q^q)^{1/q} and (E||.||_p^p)^{1/p}, which at p = q = 2 is exactly the
    square-function ratio.  Families above 12 cubes need ``samples``.
    """
    budget = budget or Budget()
    prob = build_problem(op, mu, nu, e, direction, mode, r)
    idx = list(range(len(prob.cubes))) if family is None else [prob.cubes.index(Q) for Q in family if Q in prob.cubes]
    items = np.array(idx, dtype=np.int64)
    N = len(items)
    if N == 0:
        return RandomizedConstant(0.0, 0.0, moment, [], np.zeros(0), False)
    sampled = N > RANDOMIZED_ENUMERATION_LIMIT
    rng = np.random.default_rng(budget.seed)
    if sampled:
        if not samples:
            raise CapacityError(f"{N} cubes exceeds the sign enumeration bound {RANDOMIZED_ENUMERATION_LIMIT}; pass samples")
        signs = rng.choice([-1.0, 1.0], size=(samples, N))
    cand = np.array([prob.candidates(i)[int(np.argmax([_lp(prob.G[c], prob.w_num, prob.q)
                                                        for c in prob.candidates(i)]))] for i in items])
    Gn, Hd = prob.G[cand], prob.H[items]
    s_num, s_den = (1.0, 1.0) if moment == "first" else (prob.q, prob.p)
    if moment not in ("first", "matched"):
        raise ValueError(f"unknown moment {moment!r}")

    def norms(M, a, w, s):
        if sampled:
            return _sampled_norms(M, a, w, s, signs)
        return _kernels.sign_sum_norms(M, a, w, s)

    def parts(a):
        nn, gn = norms(Gn, a, prob.w_num, prob.q)
        nd, gd = norms(Hd, a, prob.w_den, prob.p)
        return _expected(nn, gn, s_num), _expected(nd, gd, s_den)

    def objective(a):
        (vn, gn), (vd, gd) = parts(a)
        if vn <= 0 or vd <= 0:
            return 50.0, np.zeros_like(a)
        return -(np.log(vn) - np.log(vd)), -(gn / vn - gd / vd)

    def ratio(a):
        (vn, _), (vd, _) = parts(np.maximum(a, 0.0))
        return vn / vd if vd > 0 else 0.0

    starts = [np.ones(N)] + [np.eye(N)[j] for j in range(N)]
    starts += [rng.random(N) for _ in range(max(budget.restarts // 4, 2))]
    best_a, best = None, -1.0
    for a0 in starts:
        res = minimize(objective, a0, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] * N,
                       options={"maxiter": budget.iterations})
        for a in (res.x, a0):
            v = ratio(a)
            if v > best:
                best, best_a = v, np.maximum(a, 0.0)
    # square-function constant on the same family and assignment
    sq_starts = [np.ones(N)] + [np.eye(N)[j] + 1e-3 for j in range(N)] + [best_a ** 2]
    _, sq = _optimize_weights(prob, items, cand, sq_starts, budget.iterations)
    return RandomizedConstant(best, sq, moment, [prob.cubes[i] for i in items], best_a, sampled)


# ------------------------------------------------------------------ reports

@dataclass
class TestingReport:
    sawyer_direct: float
    sawyer_adjoint: float
    square_direct: float
    square_adjoint: float
    norm: float
    norm_method: str
    p: float
    q: float
    meta: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        """||T|| / (T + T*), defined as 0 when everything vanishes."""
        s = self.square_direct + self.square_adjoint
        if s == 0:
            return 0.0 if self.norm == 0 else float("inf")
        return self.norm / s

    @property
    def square_over_norm(self) -> float:
        return self.square_direct / self.norm if self.norm > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "v": 1, "header": REPORT_HEADER, "p": self.p, "q": self.q,
            "sawyer_direct": self.sawyer_direct, "sawyer_adjoint": self.sawyer_adjoint,
            "square_direct": self.square_direct, "square_adjoint": self.square_adjoint,
            "norm": self.norm, "norm_method": self.norm_method,
            "ratio_norm_over_testing": self.ratio, "ratio_square_over_norm": self.square_over_norm,
            "meta": self.meta, "witnesses": self.witnesses,
        }


def testing_report(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair,
                   budget: Budget | None = None, family_policy: str | None = None,
                   mode: str | None = None, r: int | None = None,
                   norm: NormEstimate | None = None, meta: dict | None = None) -> TestingReport:
    budget = budget or Budget()
    mode, r = _resolve_mode(op, mode, r)
    if family_policy is None:
        family_policy = "carleson" if mode == "localized" else "all"
    positive = isinstance(_source(op), PositiveDyadic)
    if norm is None:
        norm = operator_norm(op, mu, nu, e, budget, nonnegative=positive, cube_starts=True)
    sd = square_testing_constant(op, mu, nu, e, "direct", family_policy, budget, mode, r)
    sa = square_testing_constant(op, mu, nu, e, "adjoint", family_policy, budget, mode, r)
    return TestingReport(sd.sawyer, sa.sawyer, sd.value, sa.value, norm.value, norm.method,
                         e.p, e.q, dict(meta or {}, mode=mode, policy=family_policy, r=r,
                                        best_so_far=sd.best_so_far or sa.best_so_far),
                         {"square_direct": sd.to_json(), "square_adjoint": sa.to_json(),
                          "norm": norm.to_json()})


@dataclass
class ExperimentReport:
    kind: str
    p: float
    q: float
    alarm: float
    rows: list[dict]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r["ratio"] for r in self.rows])

    @property
    def flagged(self) -> list[dict]:
        return [r for r in self.rows if r["alarm"] or r["incomplete"]]

    @property
    def hard_failures(self) -> list[dict]:
        return [r for r in self.rows if not (r["sawyer_necessity"] and r["order"] and r["l2_collapse"])]

    def summary(self) -> dict:
        rat = self.ratios
        return {
            "kind": self.kind, "p": self.p, "q": self.q, "trials": len(self.rows),
            "ratio_min": float(rat.min()) if rat.size else None,
            "ratio_median": float(np.median(rat)) if rat.size else None,
            "ratio_max": float(rat.max()) if rat.size else None,
            "flags": len(self.flagged), "hard_failures": len(self.hard_failures),
            "header": REPORT_HEADER,
        }

    def to_json(self) -> dict:
        return {"v": 1, "summary": self.summary(), "rows": self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(CSV_FIELDS))
            w.writeheader()
            for r in self.rows:
                w.writerow({k: r.get(k) for k in CSV_FIELDS})
        return buf.getvalue()


CSV_FIELDS = ("seed", "depth", "p", "q", "sawyer_direct", "sawyer_adjoint", "square_direct",
              "square_adjoint", "norm", "ratio", "square_over_norm", "sawyer_necessity", "order",
              "l2_collapse", "alarm", "incomplete")


def instance_checks(rep: TestingReport, tol: float = 1e-6) -> dict:
    """The per-instance checks recorded by the experiments."""
    norm = rep.norm
    hilbert = rep.p == 2.0 and rep.q == 2.0
    collapse = True
    if hilbert:
        collapse = (abs(rep.square_direct - rep.sawyer_direct) <= tol * max(1.0, rep.sawyer_direct)
                    and abs(rep.square_adjoint - rep.sawyer_adjoint) <= tol * max(1.0, rep.sawyer_adjoint))
    return {
        "sawyer_necessity": bool(max(rep.sawyer_direct, rep.sawyer_adjoint) <= norm * (1 + tol) + 1e-12),
        "order": bool(rep.sawyer_direct <= rep.square_direct + 1e-9 and rep.sawyer_adjoint <= rep.square_adjoint + 1e-9),
        "l2_collapse": bool(collapse),
    }


def equivalence_experiment(kind: Literal["positive-thm31", "well-localized-thm43"], config, e: ExponentPair,
                           trials: int, budget: Budget | None = None, alarm: float = 10.0) -> ExperimentReport:
    """Seeded random instances; records ||T||, the testing constants and the checks."""
    from .generate import GeneratorConfig, generate

    budget = budget or Budget()
    if not isinstance(config, GeneratorConfig):
        config = GeneratorConfig(**config)
    if kind == "positive-thm31":
        op_kind = "positive"
    elif kind == "well-localized-thm43":
        op_kind = "haar"
    else:
        raise ValueError(f"unknown experiment kind {kind!r}")
    if config.depth > 4 or config.n not in (1, 2):
        raise ValueError("experiments are limited to depth <= 4 and n in {1, 2}")
    rows = []
    for t in range(trials):
        seed = config.seed + t
        bundle = generate(config.replace(seed=seed, operator_kind=op_kind))
        op, mu, nu = bundle.operator, bundle.mu, bundle.nu
        rep = testing_report(op, mu, nu, e, Budget(budget.restarts, budget.iterations, budget.tol, seed))
        row = {"seed": seed, "depth": config.depth, "p": e.p, "q": e.q,
               "sawyer_direct": rep.sawyer_direct, "sawyer_adjoint": rep.sawyer_adjoint,
               "square_direct": rep.square_direct, "square_adjoint": rep.square_adjoint,
               "norm": rep.norm, "ratio": rep.ratio, "square_over_norm": rep.square_over_norm}
        row.update(instance_checks(rep))
        row["alarm"] = bool(rep.ratio > alarm)
        row["incomplete"] = bool(rep.meta.get("best_so_far"))
        rows.append(row)
    return ExperimentReport(kind, e.p, e.q, alarm, rows)


# ------------------------------------------------------------------ gap search

@dataclass
class GapSearchReport:
    p: float
    trace: list[dict]
    best: dict | None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["depth", "evaluations", "depth_best_ratio", "best_ratio"])
        w.writeheader()
        for row in self.trace:
            w.writerow({k: row[k] for k in w.fieldnames})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"v": 1, "p": self.p, "exploratory": True, "trace": self.trace, "best": self.best}


def sawyer_gap_ratio(op: OperatorSpec, mu: Measure, nu: Measure, e: ExponentPair, budget: Budget) -> tuple[float, float, float, float]:
    """(||T|| / (T_S + T_S^*), ||T||, T_S, T_S^*) with plain single-cube testing."""
    nrm = operator_norm(op, mu, nu, e, budget, cube_starts=True).value
    sd = sawyer_constant(op, mu, nu, e, "direct", mode="plain").value
    sa = sawyer_constant(op, mu, nu, e, "adjoint", mode="plain").value
    s = sd + sa
    return (nrm / s if s > 0 else 0.0), nrm, sd, sa


def gap_search(e: ExponentPair, config, budget: Budget | None = None, evaluations: int = 40,
               depths=None) -> GapSearchReport:
    """Random plus mutation search over Haar multipliers for large ||T|| / (T_S + T_S^*).

    Exploratory only: the trace reports, per depth, the best ratio found at
    that depth and the running best over all depths so far.
    """
    from .generate import GeneratorConfig, random_measure
    from .lattice import build_lattice

    budget = budget or Budget()
    if not isinstance(config, GeneratorConfig):
        config = GeneratorConfig(**config)
    if config.n != 1:
        raise ValueError("Haar multipliers are one-dimensional")
    depths = list(depths) if depths is not None else list(range(1, config.depth + 1))
    rng = np.random.default_rng(config.seed)
    trace, best_all, best_rec = [], 0.0, None
    small = Budget(16, min(budget.iterations, 200), 1e-10, budget.seed)
    for d in depths:
        lat = build_lattice(1, d)
        inner = [Q for Q in lat.all_cubes if not lat.is_leaf(Q)]
        best_d, cur = 0.0, None
        for ev in range(evaluations):
            if cur is None or ev < evaluations // 2:
                lam = {Q: rng.standard_normal() for Q in inner if rng.random() < max(config.sparsity, 0.2)}
                if not lam:
                    lam = {inner[0]: 1.0}
                mu, nu = random_measure(lat, "log-uniform", rng), random_measure(lat, "log-uniform", rng)
            else:
                lam0, mu0, nu0 = cur
                lam = {Q: v * np.exp(0.3 * rng.standard_normal()) for Q, v in lam0.items()}
                mu = Measure(lat, mu0.mass * np.exp(0.5 * rng.standard_normal(lat.num_leaves)))
                nu = Measure(lat, nu0.mass * np.exp(0.5 * rng.standard_normal(lat.num_leaves)))
            op = HaarMultiplier(lat, lam)
            ratio = sawyer_gap_ratio(op, mu, nu, e, small)[0]
            if ratio > best_d:
                best_d, cur = ratio, (lam, mu, nu)
                if ratio > best_all:
                    best_all = ratio
                    best_rec = {"depth": d, "ratio": ratio, "mu": mu.mass.tolist(), "nu": nu.mass.tolist(),
                                "lambda": [{"cube": Q.to_json(), "value": v} for Q, v in sorted(lam.items())]}
        trace.append({"depth": d, "evaluations": evaluations, "depth_best_ratio": best_d, "best_ratio": best_all})
    return GapSearchReport(e.p, trace, best_rec)
