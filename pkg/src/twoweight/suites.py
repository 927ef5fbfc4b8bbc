"""Invariant suites run by ``twoweight verify``; each returns a list of checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generate import InstanceBundle
from .lattice import haar_system, lp_norm, martingale_difference, reconstruct
from .norms import (BRUTEFORCE_MAX_LEAVES, Budget, norm_bruteforce, norm_l2_exact,
                    norm_lplq_ascent, operator_norm)
from .operators import PositiveDyadic, to_general, well_localized_check
from .stopping import (CubeFamily, carleson_constant, carleson_embedding_constant, principal_cubes,
                       verify_sparse_carleson)
from .testing import instance_checks, testing_report

SUITES = ("core", "stopping", "thm31", "thm43")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None = None
    hard: bool = True  # soft checks are warnings
    detail: str = ""

    def to_json(self) -> dict:
        value = None if self.value is None else float(self.value)
        return {"name": self.name, "passed": bool(self.passed), "value": value,
                "hard": self.hard, "detail": self.detail}


def core_suite(b: InstanceBundle, budget: Budget) -> list[Check]:
    lat, out = b.lattice, []
    rng = np.random.default_rng(budget.seed)
    for name, m in (("mu", b.mu), ("nu", b.nu)):
        f = rng.standard_normal(lat.num_leaves)
        pos = m.positive
        err = float(np.max(np.abs(reconstruct(f, 0, m) - f)[pos], initial=0.0))
        out.append(Check(f"reconstruction[{name}]", err <= 1e-9, err))
        orth = zero = energy = 0.0
        for Q in lat.all_cubes:
            if lat.is_leaf(Q):
                continue
            hs = haar_system(Q, m)
            if hs.size:
                G = (hs.functions * m.mass) @ hs.functions.T
                orth = max(orth, float(np.max(np.abs(G - np.eye(hs.size)))))
                zero = max(zero, float(np.max(np.abs(hs.functions @ m.mass))))
            energy += float(np.dot(martingale_difference(f, Q, m) ** 2, m.mass))
        out.append(Check(f"haar_orthonormal[{name}]", orth <= 1e-9, orth))
        out.append(Check(f"haar_mean_zero[{name}]", zero <= 1e-9, zero))
        mean = float(np.dot(f, m.mass) / m.total)
        total = energy + mean ** 2 * m.total
        fn = lp_norm(f * pos, 2.0, m) ** 2
        rel = abs(fn - total) / max(fn, 1e-300)
        out.append(Check(f"pythagoras[{name}]", rel <= 1e-8, rel))
    A = to_general(b.operator).matrix
    M = lat.membership
    lhs = (M * b.nu.mass) @ A @ (M * b.mu.mass).T  # <T^mu 1_Q, 1_R>_nu as [R, Q]
    rhs = ((M * b.mu.mass) @ A.T @ (M * b.nu.mass).T).T
    err = float(np.max(np.abs(lhs - rhs))) / max(1.0, float(np.max(np.abs(lhs))))
    out.append(Check("adjoint_identity", err <= 1e-9, err))
    e = b.e
    asc = norm_lplq_ascent(b.operator, b.mu, b.nu, e, budget)
    if e.hilbert:
        svd = norm_l2_exact(b.operator, b.mu, b.nu).value
        rel = abs(asc.value - svd) / max(svd, 1e-300) if svd > 0 else asc.value
        out.append(Check("ascent_vs_svd", rel <= 1e-6, rel))
    if int(b.mu.positive.sum()) <= BRUTEFORCE_MAX_LEAVES:
        bf = norm_bruteforce(b.operator, b.mu, b.nu, e, grid=60)
        slack = bf.diagnostics["slack"]
        ok = bf.value - 1e-9 <= asc.value * (1 + 1e-9) and asc.value <= bf.value + slack + 1e-9
        out.append(Check("ascent_vs_bruteforce", bool(ok), asc.value - bf.value, detail=f"slack={slack:.3g}"))
    return out


def stopping_suite(b: InstanceBundle, budget: Budget) -> list[Check]:
    lat, out = b.lattice, []
    rng = np.random.default_rng(budget.seed)
    for name, m in (("mu", b.mu), ("nu", b.nu)):
        f = rng.standard_normal(lat.num_leaves) * np.exp(2 * rng.standard_normal(lat.num_leaves))
        tree = principal_cubes(f, CubeFamily.full(lat), m)
        rep = verify_sparse_carleson(tree, m)
        out.append(Check(f"principal_sparse[{name}]", rep.sparse_ok, rep.sparse_ratio))
        out.append(Check(f"principal_carleson[{name}]", rep.carleson_ok, rep.carleson_ratio))
        fam = [Q for Q in lat.all_cubes if rng.random() < 0.5] or [lat.root]
        for p in (1.5, 2.0, 3.0):
            Cp = carleson_constant(fam, m)
            C = carleson_embedding_constant(fam, m, p, budget).value
            out.append(Check(f"embedding_exact[{name},p={p}]", Cp <= C ** p + 1e-6, C ** p - Cp))
    return out


def _testing_checks(b: InstanceBundle, budget: Budget, alarm: float) -> tuple[list[Check], dict]:
    positive = isinstance(b.operator, PositiveDyadic)
    nrm = operator_norm(b.operator, b.mu, b.nu, b.e, budget, nonnegative=positive, cube_starts=True)
    rep = testing_report(b.operator, b.mu, b.nu, b.e, budget, norm=nrm, meta={"seed": b.seed})
    chk = instance_checks(rep)
    out = [Check("sawyer_necessity", chk["sawyer_necessity"], max(rep.sawyer_direct, rep.sawyer_adjoint) - rep.norm),
           Check("order", chk["order"], min(rep.square_direct - rep.sawyer_direct, rep.square_adjoint - rep.sawyer_adjoint)),
           Check("l2_collapse", chk["l2_collapse"], abs(rep.square_direct - rep.sawyer_direct)),
           Check("alarm", rep.ratio <= alarm, rep.ratio, hard=False, detail=f"alarm={alarm}"),
           Check("complete", not rep.meta.get("best_so_far"), None, hard=False)]
    return out, rep.to_json()


def thm31_suite(b: InstanceBundle, budget: Budget, alarm: float = 10.0) -> list[Check]:
    if not isinstance(b.operator, PositiveDyadic):
        return [Check("operator_kind", False, detail="thm31 needs a positive dyadic operator")]
    return _testing_checks(b, budget, alarm)[0]


def thm43_suite(b: InstanceBundle, budget: Budget, alarm: float = 10.0) -> list[Check]:
    op = b.operator
    r = getattr(op, "r", None)
    if r is None:
        return [Check("operator_kind", False, detail="thm43 needs an operator with a locality radius r")]
    loc = well_localized_check(op, b.mu, b.nu, r)
    worst = "" if loc.worst is None else f"{loc.worst['direction']} Q={loc.worst['Q']} R={loc.worst['R']}"
    checks = [Check("well_localized", loc.passed, loc.max_violation, detail=worst)]
    return checks + _testing_checks(b, budget, alarm)[0]


def run_suite(b: InstanceBundle, suite: str, budget: Budget | None = None) -> list[Check]:
    budget = budget or Budget()
    if suite == "core":
        return core_suite(b, budget)
    if suite == "stopping":
        return stopping_suite(b, budget)
    if suite == "thm31":
        return thm31_suite(b, budget)
    if suite == "thm43":
        return thm43_suite(b, budget)
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
