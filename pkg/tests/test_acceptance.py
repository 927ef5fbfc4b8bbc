"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS`` / ``FAIL`` line (visible even when pytest
captures output) before asserting.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import in_cube, oracle_average
from twoweight import testing as tw
from twoweight.generate import GeneratorConfig, generate, random_measure, random_operator
from twoweight.lattice import (Cube, Measure, build_lattice, haar_system, level_difference, lp_norm,
                               reconstruct)
from twoweight.norms import (Budget, ExponentPair, norm_bruteforce, norm_l2_exact, norm_lplq_ascent,
                             vector_extension_norm)
from twoweight.operators import paraproduct_apply, well_localized_check
from twoweight.signs import khintchine_moments
from twoweight.stopping import CubeFamily, carleson_constant, carleson_embedding_constant

BASELINE = Path(__file__).parent / "baselines" / "sufficiency.json"
LAWS = ("uniform", "log-uniform", "atomic-with-zeros")
EXPONENTS = (1.5, 2.0, 3.0)


@pytest.fixture
def report(capsys):
    def emit(name, passed, detail=""):
        with capsys.disabled():
            print(f"\n[acceptance] {'PASS' if passed else 'FAIL'}  {name}  {detail}")
        return passed
    return emit


# ---------------------------------------------------------------- martingales

def test_martingale_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    rec = orth = zero = pyth = 0.0
    for k in range(200):
        n = 1 + k % 2
        depth = int(rng.integers(1, 5))
        lat = build_lattice(n, depth)
        m = random_measure(lat, LAWS[k % 3], rng)
        f = rng.standard_normal(lat.num_leaves)
        pos = m.positive
        rec = max(rec, float(np.max(np.abs(reconstruct(f, 0, m) - f)[pos])))
        for Q in lat.all_cubes:
            if lat.is_leaf(Q):
                continue
            hs = haar_system(Q, m)
            if hs.size:
                G = (hs.functions * m.mass) @ hs.functions.T
                orth = max(orth, float(np.max(np.abs(G - np.eye(hs.size)))))
                zero = max(zero, float(np.max(np.abs(hs.functions @ m.mass))))
        # differences of distinct cubes at one level have disjoint supports
        energy = sum(lp_norm(level_difference(f, m, j), 2.0, m) ** 2 for j in range(depth))
        mean = np.dot(f, m.mass) / m.total
        lhs = lp_norm(f * pos, 2.0, m) ** 2
        pyth = max(pyth, abs(lhs - energy - mean ** 2 * m.total) / lhs)
    elapsed = time.perf_counter() - t0
    ok = rec <= 1e-9 and orth <= 1e-9 and zero <= 1e-9 and pyth <= 1e-8 and elapsed < 10
    report("martingale identities (200 instances)", ok,
           f"recon={rec:.1e} orth={orth:.1e} mean={zero:.1e} pythagoras={pyth:.1e} time={elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- Carleson

def test_carleson_embedding(report):
    rng = np.random.default_rng(77)
    worst_gap = -np.inf
    converse = {p: 0.0 for p in EXPONENTS}
    linear = {p: 0.0 for p in EXPONENTS}
    for k in range(100):
        lat = build_lattice(1 + k % 2, 3 if k % 2 == 0 else 2)
        m = random_measure(lat, LAWS[k % 3], rng)
        fam = [Q for Q in lat.all_cubes if rng.random() < 0.5] or [lat.root]
        Cp = carleson_constant(fam, m)
        for p in EXPONENTS:
            C = carleson_embedding_constant(fam, m, p, Budget(seed=k)).value
            worst_gap = max(worst_gap, Cp - C ** p)
            converse[p] = max(converse[p], C / Cp ** (1 / p))
            linear[p] = max(linear[p], C / Cp)
    exact_ok = worst_gap <= 1e-6
    # sum_Q <f>_Q 1_Q has norm at most p p' C' by duality and the Carleson lemma
    bound_ok = all(linear[p] <= p * p / (p - 1) for p in EXPONENTS)
    lat = build_lattice(1, 1)
    worked = carleson_constant([lat.root, Cube(1, (0,)), Cube(1, (1,))], Measure.lebesgue(lat))
    ok = exact_ok and bound_ok and worked == pytest.approx(2.0, abs=1e-12)
    detail = " ".join(f"p={p}: C/C'^(1/p)<={converse[p]:.3f}" for p in EXPONENTS)
    report("Carleson embedding (100 families)", ok,
           f"max(C'-C^p)={worst_gap:.1e} {detail} worked C'={worked}")
    assert ok


# ---------------------------------------------------------------- norm oracles

def test_norm_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    worst_bf, bf_count = 0.0, 0
    for k in range(24):
        lat = build_lattice(1, 2) if k % 2 else build_lattice(2, 1)
        mu, nu = random_measure(lat, LAWS[k % 3], rng), random_measure(lat, LAWS[(k + 1) % 3], rng)
        T = random_operator(lat, ("positive", "general")[k % 2], 0.6, rng)
        e = ExponentPair(*rng.choice(EXPONENTS, 2))
        asc = norm_lplq_ascent(T, mu, nu, e, Budget(seed=k)).value
        bf = norm_bruteforce(T, mu, nu, e, grid=60)
        slack = bf.diagnostics["slack"]
        # ascent is a lower bound; the grid misses the optimum by at most slack
        excess = max(bf.value - asc - 1e-9, asc - bf.value - slack - 1e-9)
        worst_bf = max(worst_bf, excess)
        bf_count += 1
    worst_svd = 0.0
    for k in range(100):
        n = 1 + k % 2
        lat = build_lattice(n, int(rng.integers(1, 4 if n == 1 else 3)))
        mu, nu = random_measure(lat, LAWS[k % 3], rng), random_measure(lat, LAWS[(k + 2) % 3], rng)
        T = random_operator(lat, ("positive", "general", "haar")[k % 3] if n == 1 else "general", 0.5, rng)
        e = ExponentPair(2, 2)
        svd = norm_l2_exact(T, mu, nu).value
        asc = norm_lplq_ascent(T, mu, nu, e, Budget(seed=k)).value
        worst_svd = max(worst_svd, abs(asc - svd) / svd if svd > 0 else asc)
    elapsed = time.perf_counter() - t0
    ok = worst_bf <= 0 and worst_svd <= 1e-6 and elapsed < 60
    report("norm oracles", ok, f"bruteforce excess={worst_bf:.1e} over {bf_count} | "
                               f"svd rel={worst_svd:.1e} over 100 | time={elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- testing constants

def _instances(count, seed, exps):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        kind = ("positive", "haar", "general")[k % 3]
        n = 1 if kind == "haar" or k % 4 else 2
        depth = int(rng.integers(1, 4)) if n == 1 else 1
        lat = build_lattice(n, depth)
        mu, nu = random_measure(lat, LAWS[k % 3], rng), random_measure(lat, LAWS[(k + 1) % 3], rng)
        out.append((random_operator(lat, kind, 0.6, rng), mu, nu, exps(k, rng), k))
    return out


@pytest.fixture(scope="module")
def hilbert_reports():
    reps = []
    for T, mu, nu, e, k in _instances(100, 404, lambda k, rng: ExponentPair(2, 2)):
        nrm = norm_l2_exact(T, mu, nu)
        reps.append((tw.testing_report(T, mu, nu, e, Budget(seed=k), norm=nrm), T, mu, nu))
    return reps


@pytest.fixture(scope="module")
def general_reports():
    reps = []
    pick = lambda k, rng: ExponentPair(*rng.choice(EXPONENTS, 2))
    for T, mu, nu, e, k in _instances(40, 505, pick):
        reps.append((tw.testing_report(T, mu, nu, e, Budget(seed=k)), T, mu, nu))
    return reps


def test_order_and_l2_collapse(report, hilbert_reports, general_reports):
    order_gap = max(max(r.sawyer_direct - r.square_direct, r.sawyer_adjoint - r.square_adjoint)
                    for r, *_ in hilbert_reports + general_reports)
    collapse = max(max(abs(r.square_direct - r.sawyer_direct) / max(1.0, r.sawyer_direct),
                       abs(r.square_adjoint - r.sawyer_adjoint) / max(1.0, r.sawyer_adjoint))
                   for r, *_ in hilbert_reports)
    ok = order_gap <= 1e-9 and collapse <= 1e-6
    report("testing-constant order and L2 collapse", ok,
           f"max(T_S - T)={order_gap:.1e} over {len(hilbert_reports) + len(general_reports)} | "
           f"L2 collapse={collapse:.1e} over {len(hilbert_reports)}")
    assert ok


def test_necessity_and_vector_extension(report, hilbert_reports):
    worst = 0.0
    for r, *_ in hilbert_reports:  # the SVD norm certifies these
        worst = max(worst, max(r.sawyer_direct, r.sawyer_adjoint) / (r.norm * (1 + 1e-6)) if r.norm > 0 else 0.0)
    rng = np.random.default_rng(606)
    certified = len(hilbert_reports)
    for k in range(20):  # at most 6 leaves: brute force plus slack is an upper bound
        lat = build_lattice(1, 2) if k % 2 else build_lattice(2, 1)
        mu, nu = random_measure(lat, "uniform", rng), random_measure(lat, "log-uniform", rng)
        T = random_operator(lat, ("positive", "general")[k % 2], 0.6, rng)
        e = ExponentPair(*rng.choice(EXPONENTS, 2))
        bf = norm_bruteforce(T, mu, nu, e, grid=60)
        upper = bf.value + bf.diagnostics["slack"]
        for d in ("direct", "adjoint"):
            s = tw.sawyer_constant(T, mu, nu, e, d).value
            worst = max(worst, s / (upper * (1 + 1e-6)))
        certified += 1
    vec = 0.0
    for T, mu, nu, e, k in _instances(12, 707, lambda k, rng: ExponentPair(2, 2)):
        scalar = norm_l2_exact(T, mu, nu).value
        for width in (1, 2, 4):
            v = vector_extension_norm(T, mu, nu, e, width, Budget(seed=k)).value
            vec = max(vec, abs(v / scalar - 1.0))
    ok = worst <= 1.0 and vec <= 1e-6
    report("necessity and vector extension", ok,
           f"max sawyer/(norm(1+1e-6))={worst:.6f} over {certified} certified | "
           f"max |ratio-1| at k=1,2,4: {vec:.1e}")
    assert ok


# ---------------------------------------------------------------- sufficiency

def _sufficiency_sweep():
    out = {}
    for p, q in itertools.product(EXPONENTS, EXPONENTS):
        e = ExponentPair(p, q)
        reps = [tw.equivalence_experiment("positive-thm31", GeneratorConfig(n=1, depth=3, seed=1000), e, 25),
                tw.equivalence_experiment("positive-thm31", GeneratorConfig(n=2, depth=1, seed=2000), e, 25)]
        rows = [row for rep in reps for row in rep.rows]
        out[f"{p:g},{q:g}"] = {"max_ratio": max(r["ratio"] for r in rows),
                               "alarms": sum(r["alarm"] for r in rows),
                               "hard_failures": sum(not (r["sawyer_necessity"] and r["order"] and r["l2_collapse"])
                                                    for r in rows),
                               "instances": len(rows)}
    return out


def test_sufficiency(report):
    t0 = time.perf_counter()
    sweep = _sufficiency_sweep()
    elapsed = time.perf_counter() - t0
    hilbert = sweep["2,2"]["max_ratio"]
    alarms = sum(v["alarms"] for v in sweep.values())
    hard = sum(v["hard_failures"] for v in sweep.values())
    base = json.loads(BASELINE.read_text())
    drift = max(abs(sweep[k]["max_ratio"] - base["max_ratio"][k]) for k in sweep)
    ok = hilbert <= 1 + 1e-6 and alarms == 0 and hard == 0 and drift <= 1e-6 and elapsed < 300
    report("sufficiency (50 positive instances per (p,q))", ok,
           f"max ratio at 2,2={hilbert:.6f} overall={max(v['max_ratio'] for v in sweep.values()):.6f} "
           f"alarms={alarms} hard={hard} baseline drift={drift:.1e} time={elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- localization

def test_haar_multipliers_are_well_localized(report):
    rng = np.random.default_rng(808)
    worst, count = 0.0, 0
    for k in range(60):
        lat = build_lattice(1, 1 + k % 4)
        T = random_operator(lat, "haar", float(rng.uniform(0.2, 1.0)), rng)
        leb = Measure.lebesgue(lat)
        rep = well_localized_check(T, leb, leb, 0)
        worst = max(worst, rep.max_violation)
        count += rep.passed
    ok = count == 60 and worst <= 1e-9
    report("well-localized: Haar multipliers with Lebesgue", ok, f"{count}/60 pass, max violation={worst:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, reason="positive dyadic operators always satisfy the r = 0 conditions")
def test_positive_instance_fails_localization(report):
    rng = np.random.default_rng(909)
    worst, pair = 0.0, None
    for k in range(200):
        cfg = GeneratorConfig(n=1 + k % 2, depth=1 + k % 3 if k % 2 == 0 else 1 + k % 2,
                              weight_law=LAWS[k % 3], operator_kind="positive", seed=int(rng.integers(1 << 30)))
        b = generate(cfg)
        rep = well_localized_check(b.operator, b.mu, b.nu, 0)
        if rep.max_violation > worst:
            worst, pair = rep.max_violation, rep.worst
    failed = worst > 1e-9
    report("well-localized: some positive instance fails", failed,
           f"max violation over 200 positive instances={worst:.1e} pair={pair}")
    assert failed


# ---------------------------------------------------------------- paraproduct

def _delta(g, R, nu, lat):
    out = np.zeros(lat.num_leaves)
    for c in R.children():
        out[in_cube(lat, c)] += oracle_average(g, c, nu)
    out[in_cube(lat, R)] -= oracle_average(g, R, nu)
    return out


def test_paraproduct_oracle(report):
    rng = np.random.default_rng(1111)
    worst = 0.0
    for k in range(50):
        lat = build_lattice(1 + k % 2, 2 if k % 2 else 3)
        mu, nu = random_measure(lat, LAWS[k % 3], rng), random_measure(lat, LAWS[(k + 1) % 3], rng)
        T = random_operator(lat, "general", 0.7, rng)
        r = int(rng.integers(0, 2))
        D0 = [Q for Q in lat.all_cubes if Q.level <= lat.depth - r and rng.random() < 0.6]
        f = rng.standard_normal(lat.num_leaves)
        ref = np.zeros(lat.num_leaves)
        for Q in D0:
            g = T.matrix @ (in_cube(lat, Q) * mu.mass)
            for R in Q.descendants(r):
                if R.level < lat.depth:
                    ref += oracle_average(f, Q, mu) * _delta(g, R, nu, lat)
        got = paraproduct_apply(T, CubeFamily(lat, D0), f, mu, nu, r)
        worst = max(worst, float(np.max(np.abs(got - ref)) / max(1.0, float(np.max(np.abs(ref))))))
    ok = worst <= 1e-10
    report("paraproduct oracle (50 instances)", ok, f"max error={worst:.1e}")
    assert ok


# ---------------------------------------------------------------- Khintchine

def test_khintchine_band(report):
    rng = np.random.default_rng(1212)
    lower = upper = 0.0
    for _ in range(1000):
        x = rng.standard_normal(int(rng.integers(1, 13))) * 10.0 ** rng.uniform(-3, 3)
        k = khintchine_moments(x)
        lower = max(lower, k.first / k.second - 1.0)
        upper = max(upper, k.second / (np.sqrt(2.0) * k.first) - 1.0)
    ok = lower <= 1e-12 and upper <= 1e-12
    report("Kahane-Khintchine band (1000 vectors)", ok,
           f"max E|S|/(ES^2)^(1/2) - 1={lower:.1e}  max (ES^2)^(1/2)/(sqrt2 E|S|) - 1={upper:.1e}")
    assert ok
