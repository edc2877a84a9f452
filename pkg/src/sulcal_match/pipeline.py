"""Method dispatch shared by the command line and the benchmark."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .affinity import KernelBandwidths, estimate_bandwidths, node_affinity
from .assignment import BulkAssignment
from .graphs import GraphPopulation, PaddedPopulation, pad_with_dummies
from .multigraph import build_target, cao_cst, mals, msync
from .multigraph.consistency import mean_graph_consistency
from .pairwise import pairwise_all

log = logging.getLogger(__name__)

METHODS = ("pairwise", "msync", "mals", "cao")

DEFAULT_PARAMS = {
    "pairwise": {"max_iters": 100, "tol": 1e-6},
    "msync": {"reference": 0, "tol": 1e-8},
    "mals": {"alpha": 0.1, "lambda": 20.0, "rank_factor": 2.0, "threshold": 0.5, "max_sweeps": 50,
             "tol": 5e-4, "affinity_weight": 0.0, "seed": 0},
    "cao": {"max_sweeps": 20},
}


class UnknownMethodError(ValueError):
    pass


def method_params(method: str, overrides: dict | None = None) -> dict:
    if method not in DEFAULT_PARAMS:
        raise UnknownMethodError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    params = dict(DEFAULT_PARAMS[method])
    for k, v in (overrides or {}).items():
        if k not in params:
            raise UnknownMethodError(f"method {method!r} has no parameter {k!r}")
        params[k] = type(params[k])(v) if params[k] is not None else v
    return params


@dataclass
class MethodRun:
    method: str
    bulk: BulkAssignment
    seconds: float
    params: dict
    meta: dict = field(default_factory=dict)


def run_pairwise(padded: PaddedPopulation, bw: KernelBandwidths, params: dict) -> MethodRun:
    t0 = time.perf_counter()
    run = pairwise_all(padded, bw, max_iters=int(params["max_iters"]), tol=float(params["tol"]))
    its = list(run.iterations.values())
    meta = dict(run.meta, mean_iterations=float(np.mean(its)), max_iterations=int(np.max(its)))
    return MethodRun("pairwise", run.bulk, time.perf_counter() - t0, params, meta)


def run_multigraph(method: str, padded: PaddedPopulation, bw: KernelBandwidths, init: BulkAssignment,
                   params: dict) -> MethodRun:
    """Refine a pairwise bulk with one multi-graph method.

    ``seconds`` covers the refinement only; add the pairwise time for an
    end-to-end figure.
    """
    t0 = time.perf_counter()
    if method == "msync":
        res = msync(init, reference=int(params["reference"]), tol=float(params["tol"]))
        bulk, meta = res.bulk, dict(res.meta)
        meta["consistency"] = mean_graph_consistency(bulk)
    elif method == "mals":
        pop = padded.population
        sizes = padded.real_sizes
        w = float(params["affinity_weight"])

        def psi(i, j):
            return node_affinity(pop[i], pop[j], bw.gamma_v)

        K = build_target(init, psi if w > 0 else None, sizes, w)
        rank = int(round(float(params["rank_factor"]) * padded.n_max))
        res = mals(K, sizes, padded.n_max, alpha=float(params["alpha"]), lam=float(params["lambda"]),
                   rank=rank, threshold=float(params["threshold"]), max_sweeps=int(params["max_sweeps"]),
                   tol=float(params["tol"]), seed=int(params["seed"]))
        del K
        bulk = res.bulk
        meta = dict(res.meta, objective_trace=res.objective_trace,
                    residual_trace=[list(r) for r in res.residual_trace])
    elif method == "cao":
        res = cao_cst(init, max_sweeps=int(params["max_sweeps"]))
        bulk = res.bulk
        meta = dict(res.meta, sweeps=res.sweeps, changes=res.changes, consistency_trace=res.consistency_trace)
    else:
        raise UnknownMethodError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return MethodRun(method, bulk, time.perf_counter() - t0, params, meta)


def prepare(population: GraphPopulation) -> tuple[PaddedPopulation, KernelBandwidths]:
    padded = pad_with_dummies(population)
    return padded, estimate_bandwidths(padded)
