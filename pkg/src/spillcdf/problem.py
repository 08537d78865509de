"""JSON problem files and algorithm dispatch.

Independent problem::

    {"kind": "independent", "n": 3, "c": [1, 2], "x": [0.3333, 0.6667],
     "distributions": {"name": "uniform", "a": 0, "b": 1},
     "algorithm": "spill", "options": {"prune": true}}

``distributions`` is one spec shared by all variables or a list of ``n``.

Chain problem::

    {"kind": "chain", "n": 3, "c": [3], "x": [0],
     "kernel": {"q_dn": 0.3, "q_0": 0.4, "q_up": 0.3}, "initial": 0}

``kernel`` may instead be ``{"offsets": [...], "probs": [...]}`` or
``{"rows": [[...], ...], "lo": int}``; ``initial`` is a starting value or a
first-step distribution ``{"values": [...], "probs": [...]}``; ``bounds``
optionally truncates the support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import distributions as dist
from .baselines import (
    DEFAULT_ENUM_CAP,
    MonteCarloResult,
    brute_force,
    independent_sampler,
    monte_carlo,
    solve_boncelet,
)
from .dependent import (
    DEFAULT_PATH_CAP,
    MarkovChain,
    MicroBinSpec,
    boundary_sets,
    chain_sampler,
    enumerate_paths_oracle,
    markov_chain_adapter,
    solve_dependent,
    solve_markov_chain,
)
from .errors import QueryValidationError
from .query import OrderQuery, bin_probabilities, validate_and_canonicalize
from .spill import solve_independent

TOP_KEYS = {"kind", "n", "c", "x", "distributions", "kernel", "initial", "bounds",
            "algorithm", "trials", "seed", "options"}
OPTION_KEYS = {"prune", "precompute_sums", "H", "workers"}
ALGORITHMS = ("spill", "boncelet", "brute", "mc", "mrf")


@dataclass
class Problem:
    kind: str
    query: OrderQuery
    algorithm: str = "spill"
    trials: int = 10000
    seed: int = 0
    options: dict = field(default_factory=dict)
    dists: list | None = None
    chain: MarkovChain | None = None

    @property
    def prune(self) -> bool:
        return bool(self.options.get("prune", True))


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise QueryValidationError(f"problem spec is missing {key!r}")
    return cfg[key]


def _chain_from(cfg: dict, n: int) -> MarkovChain:
    kernel = dict(_require(cfg, "kernel"))
    initial = cfg.get("initial", 0)
    bounds = cfg.get("bounds")
    bounds = tuple(int(b) for b in bounds) if bounds is not None else None
    if set(kernel) == {"q_dn", "q_0", "q_up"}:
        offsets, probs = (-1, 0, 1), (kernel["q_dn"], kernel["q_0"], kernel["q_up"])
    elif set(kernel) == {"offsets", "probs"}:
        offsets, probs = kernel["offsets"], kernel["probs"]
    elif set(kernel) == {"rows", "lo"}:
        lo = int(kernel["lo"])
        rows = np.asarray(kernel["rows"], dtype=float)
        if isinstance(initial, dict):
            first = np.zeros(rows.shape[0])
            for v, q in zip(initial["values"], initial["probs"]):
                if not lo <= int(v) < lo + rows.shape[0]:
                    raise QueryValidationError(f"initial value {v} outside the kernel support")
                first[int(v) - lo] += float(q)
            return MarkovChain.from_rows(rows, lo, first=first)
        return MarkovChain.from_rows(rows, lo, initial=int(initial))
    else:
        raise QueryValidationError(f"unrecognized kernel keys {sorted(kernel)}")
    if isinstance(initial, dict):
        raise QueryValidationError("a first-step distribution needs an explicit 'rows' kernel")
    return MarkovChain.from_steps(offsets, probs, int(initial), n=n, bounds=bounds)


def parse_problem(cfg: dict[str, Any]) -> Problem:
    if not isinstance(cfg, dict):
        raise QueryValidationError("problem spec must be a JSON object")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise QueryValidationError(f"unknown keys in problem spec: {sorted(unknown)}")
    options = dict(cfg.get("options") or {})
    bad = set(options) - OPTION_KEYS
    if bad:
        raise QueryValidationError(f"unknown option keys: {sorted(bad)}")
    kind = _require(cfg, "kind")
    n = _require(cfg, "n")
    query = validate_and_canonicalize(_require(cfg, "c"), _require(cfg, "x"), n)
    algorithm = cfg.get("algorithm", "spill")
    if algorithm not in ALGORITHMS:
        raise QueryValidationError(f"unknown algorithm {algorithm!r}")
    prob = Problem(kind, query, algorithm, int(cfg.get("trials", 10000)), int(cfg.get("seed", 0)), options)
    if kind == "independent":
        spec = _require(cfg, "distributions")
        if isinstance(spec, list):
            if len(spec) != query.n:
                raise QueryValidationError(f"expected {query.n} distributions, got {len(spec)}")
            prob.dists = [dist.from_config(s) for s in spec]
        else:
            prob.dists = [dist.from_config(spec)] * query.n
    elif kind == "chain":
        prob.chain = _chain_from(cfg, query.n)
    else:
        raise QueryValidationError(f"kind must be 'independent' or 'chain', got {kind!r}")
    return prob


def load_problem(path: str | Path) -> Problem:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise QueryValidationError(f"cannot read problem spec {path}: {exc}") from None
    return parse_problem(cfg)


def solve(prob: Problem, algorithm: str | None = None) -> float | MonteCarloResult:
    """Run one algorithm; Monte Carlo returns the full estimate record."""
    alg = algorithm or prob.algorithm
    q = prob.query
    workers = int(prob.options.get("workers", 1))
    if prob.kind == "independent":
        p = bin_probabilities(q, prob.dists)
        if alg == "spill":
            return solve_independent(q, p, prune=prob.prune,
                                     precompute_sums=bool(prob.options.get("precompute_sums", False)),
                                     workers=workers)
        if alg == "boncelet":
            return solve_boncelet(q, p)
        if alg == "brute":
            return brute_force(q, p)
        if alg == "mc":
            return monte_carlo(q, independent_sampler(prob.dists), prob.trials, prob.seed, workers)
        if alg == "mrf":
            H = int(prob.options.get("H", 1))
            micro = MicroBinSpec.uniform(q.x, H)
            rows = np.array([micro.micro_row(f) for f in prob.dists])
            rows /= rows.sum(axis=1, keepdims=True)
            cond = dist.independent_conditional(rows)
            return solve_dependent(q, micro, boundary_sets([], q.n), cond, prune=prob.prune, workers=workers)
    else:
        chain = prob.chain
        if alg == "spill":
            return solve_markov_chain(chain, q, prune=prob.prune)
        if alg == "mrf":
            schedule, cond, micro = markov_chain_adapter(chain, q)
            return solve_dependent(q, micro, schedule, cond, prune=prob.prune, workers=workers)
        if alg == "brute":
            return enumerate_paths_oracle(chain, q)
        if alg == "mc":
            return monte_carlo(q, chain_sampler(chain, q.n), prob.trials, prob.seed, workers)
        if alg == "boncelet":
            raise QueryValidationError("the Boncelet baseline covers independent variables only")
    raise QueryValidationError(f"unknown algorithm {alg!r}")


def oracle_feasible(prob: Problem) -> bool:
    q = prob.query
    if prob.kind == "independent":
        return (q.d + 1) ** q.n <= DEFAULT_ENUM_CAP
    P = prob.chain.P
    width = max(int(np.count_nonzero(prob.chain.first)), int(np.diff(P.indptr).max()))
    return width**q.n <= DEFAULT_PATH_CAP
