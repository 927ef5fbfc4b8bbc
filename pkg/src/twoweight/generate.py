"""Seeded instance generation and the versioned instance bundle."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .lattice import CapacityError, DyadicLattice, Measure, MeasureError, build_lattice
from .norms import ExponentPair
from .operators import (GeneralOperator, HaarMultiplier, OperatorSpec, PositiveDyadic,
                        operator_from_json, operator_to_json)

SCHEMA_VERSION = 1
WEIGHT_LAWS = ("uniform", "log-uniform", "atomic-with-zeros", "lebesgue")
OPERATOR_KINDS = ("positive", "haar", "general")
MAX_GEN_LEAVES = 256


class BundleError(ValueError):
    """Schema violation; the message names the offending field."""


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 1
    depth: int = 3
    weight_law: str = "log-uniform"
    operator_kind: str = "positive"
    sparsity: float = 0.5
    seed: int = 0
    p: float = 2.0
    q: float = 2.0

    def __post_init__(self):
        if self.n < 1 or self.depth < 0:
            raise ValueError("n must be >= 1 and depth >= 0")
        if 2 ** (self.n * self.depth) > MAX_GEN_LEAVES:
            raise CapacityError(f"n={self.n}, depth={self.depth} exceeds {MAX_GEN_LEAVES} leaves")
        if self.weight_law not in WEIGHT_LAWS:
            raise ValueError(f"weight-law must be one of {WEIGHT_LAWS}, got {self.weight_law!r}")
        if self.operator_kind not in OPERATOR_KINDS:
            raise ValueError(f"operator-kind must be one of {OPERATOR_KINDS}, got {self.operator_kind!r}")
        if self.operator_kind == "haar" and self.n != 1:
            raise ValueError("operator-kind haar needs n = 1 (Haar multipliers are one-dimensional)")
        if self.operator_kind == "haar" and self.depth < 1:
            raise ValueError("operator-kind haar needs depth >= 1")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in [0, 1]")

    def replace(self, **kw) -> GeneratorConfig:
        return replace(self, **kw)


def random_measure(lat: DyadicLattice, law: str, rng: np.random.Generator) -> Measure:
    L = lat.num_leaves
    if law == "uniform":
        m = 1.0 - rng.random(L)  # (0, 1]
    elif law == "log-uniform":
        m = 10.0 ** rng.uniform(-3.0, 3.0, L)
    elif law == "atomic-with-zeros":
        m = np.where(rng.random(L) < 0.4, 0.0, 10.0 ** rng.uniform(-1.0, 1.0, L))
        if not m.any():
            m[rng.integers(L)] = 1.0
    elif law == "lebesgue":
        return Measure.lebesgue(lat)
    else:
        raise ValueError(f"unknown weight law {law!r}")
    return Measure(lat, m)


def random_operator(lat: DyadicLattice, kind: str, sparsity: float, rng: np.random.Generator) -> OperatorSpec:
    """Each coefficient is kept with probability ``sparsity``; never the zero operator."""
    if kind == "positive":
        cubes = lat.all_cubes
        keep = rng.random(len(cubes)) < sparsity
        if not keep.any():
            keep[rng.integers(len(cubes))] = True
        vals = 1.0 - rng.random(len(cubes))
        return PositiveDyadic(lat, {Q: float(v) for Q, v, k in zip(cubes, vals, keep) if k})
    if kind == "haar":
        cubes = [Q for Q in lat.all_cubes if not lat.is_leaf(Q)]
        keep = rng.random(len(cubes)) < sparsity
        if not keep.any():
            keep[rng.integers(len(cubes))] = True
        vals = rng.standard_normal(len(cubes))
        return HaarMultiplier(lat, {Q: float(v) for Q, v, k in zip(cubes, vals, keep) if k})
    if kind == "general":
        L = lat.num_leaves
        A = rng.standard_normal((L, L)) * (rng.random((L, L)) < max(sparsity, 1.0 / L))
        if not A.any():
            A[0, 0] = 1.0
        return GeneralOperator(A)
    raise ValueError(f"unknown operator kind {kind!r}")


@dataclass(frozen=True, eq=False)
class InstanceBundle:
    lattice: DyadicLattice
    mu: Measure
    nu: Measure
    operator: OperatorSpec
    e: ExponentPair
    seed: int | None = None
    config: dict | None = None

    def to_json(self) -> dict:
        d = {"v": SCHEMA_VERSION, "n": self.lattice.n, "depth": self.lattice.depth,
             "mu": self.mu.mass.tolist(), "nu": self.nu.mass.tolist(),
             "operator": operator_to_json(self.operator), "p": self.e.p, "q": self.e.q,
             "seed": self.seed}
        if self.config is not None:
            d["config"] = self.config
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    def __eq__(self, other) -> bool:
        return isinstance(other, InstanceBundle) and self.to_json() == other.to_json()

    __hash__ = None

    @classmethod
    def from_json(cls, d: dict) -> InstanceBundle:
        return parse_bundle(d)

    @classmethod
    def loads(cls, text: str) -> InstanceBundle:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BundleError(f"not valid JSON: {exc}") from exc
        return parse_bundle(d)


def _field(d: dict, name: str, kind):
    if name not in d:
        raise BundleError(f"{name}: missing field")
    v = d[name]
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise BundleError(f"{name}: expected an integer, got {v!r}")
    if kind is float and (isinstance(v, bool) or not isinstance(v, (int, float))):
        raise BundleError(f"{name}: expected a number, got {v!r}")
    if kind is list and not isinstance(v, list):
        raise BundleError(f"{name}: expected an array")
    if kind is dict and not isinstance(v, dict):
        raise BundleError(f"{name}: expected an object")
    return v


def parse_bundle(d: dict) -> InstanceBundle:
    """Validate against the schema before building anything."""
    if not isinstance(d, dict):
        raise BundleError("bundle: expected a JSON object")
    if d.get("v") != SCHEMA_VERSION:
        raise BundleError(f"v: expected schema version {SCHEMA_VERSION}, got {d.get('v')!r}")
    n, depth = _field(d, "n", int), _field(d, "depth", int)
    if n < 1 or depth < 0:
        raise BundleError("n/depth: need n >= 1 and depth >= 0")
    try:
        lat = build_lattice(n, depth)
    except CapacityError as exc:
        raise BundleError(f"depth: {exc}") from exc
    masses = {}
    for name in ("mu", "nu"):
        arr = _field(d, name, list)
        if len(arr) != lat.num_leaves:
            raise BundleError(f"{name}: expected {lat.num_leaves} leaf masses, got {len(arr)}")
        for i, x in enumerate(arr):
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x) or x < 0:
                raise BundleError(f"{name}[{i}]: leaf {i} mass {x!r} is not a finite nonnegative number")
        try:
            masses[name] = Measure(lat, np.array(arr, dtype=float))
        except MeasureError as exc:  # pragma: no cover - checked above
            raise BundleError(f"{name}: {exc}") from exc
    p = _field(d, "p", float) if "p" in d else 2.0
    q = _field(d, "q", float) if "q" in d else 2.0
    try:
        e = ExponentPair(p, q)
    except ValueError as exc:
        raise BundleError(f"p/q: {exc}") from exc
    opd = _field(d, "operator", dict)
    try:
        op = operator_from_json(lat, opd)
    except (KeyError, TypeError) as exc:
        raise BundleError(f"operator: malformed ({exc})") from exc
    except ValueError as exc:
        msg = str(exc)
        raise BundleError(msg if msg.startswith("operator") else f"operator: {msg}") from exc
    seed = d.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise BundleError(f"seed: expected an integer or null, got {seed!r}")
    return InstanceBundle(lat, masses["mu"], masses["nu"], op, e, seed, d.get("config"))


def generate(config: GeneratorConfig) -> InstanceBundle:
    """Deterministic instance for config.seed."""
    rng = np.random.default_rng(config.seed)
    lat = build_lattice(config.n, config.depth)
    mu = random_measure(lat, config.weight_law, rng)
    nu = random_measure(lat, config.weight_law, rng)
    op = random_operator(lat, config.operator_kind, config.sparsity, rng)
    return InstanceBundle(lat, mu, nu, op, ExponentPair(config.p, config.q), config.seed, asdict(config))
