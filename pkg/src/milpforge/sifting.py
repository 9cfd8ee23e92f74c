"""Sifting: solve a restricted master over a subset of columns (or rows),
price the rest with duals (or violations), and grow the subset until nothing
prices out. Termination with an empty pricing set certifies full optimality.

Column sifting expects standard form (min c'x, Ax = b, x >= 0) and is the
n >> m case; constraint sifting works on any GroundModel and is the m >> n
case. Integer models are sifted on their LP relaxation only.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import IterationLimit, MissingDuals, RestrictedInfeasible
from .ir import GroundModel
from .solver import FEASIBILITY_TOL, ScipyEngine, Solution, SolverParams, Status, solve


@dataclass
class SiftConfig:
    initial_size: int = 0  # 0 = max(2m, 10) columns / rows
    initial_indices: Optional[Sequence[int]] = None
    seed: int = 0
    pricing_tol: float = 1e-7
    max_iterations: int = 200
    batch_cap: int = 0  # max additions per iteration, 0 = unlimited
    gap_stop: Optional[float] = None  # relative-change stop, None = exact
    engine: object = None

    def __post_init__(self):
        if self.pricing_tol <= 0:
            raise ValueError("pricing tolerance must be positive")
        if self.initial_size < 0:
            raise ValueError("initial selection size must be >= 1 (0 picks a default)")


@dataclass
class SiftHistory:
    rows: list = field(default_factory=list)  # dicts per iteration
    terminated_by: str = ""  # 'priced_out' | 'gap' | 'all_included'

    def record(self, iteration, active, objective, candidates, wall):
        self.rows.append({
            "iteration": iteration,
            "active": active,
            "objective": objective,
            "candidates": candidates,
            "wall_time": wall,
        })

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["iteration", "active", "objective", "candidates", "wall_time"]
        )
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()


@dataclass
class SiftingWorkspace:
    """Full standard-form problem plus the active column set."""

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    active: list
    pricing_tol: float = 1e-7

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csc_matrix(self.A)
        assert self.A.shape == (len(self.b), len(self.c))

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]


def price_columns(workspace: SiftingWorkspace, duals) -> np.ndarray:
    """Columns outside the active set whose reduced cost is negative.

    Returns indices sorted by most-negative reduced cost first. Ties break on
    the index so the scan is reproducible.
    """
    if duals is None:
        raise MissingDuals("the restricted solve returned no duals")
    y = np.asarray(duals, dtype=float)
    reduced = workspace.c - workspace.A.T @ y
    outside = np.ones(workspace.num_cols, dtype=bool)
    outside[list(workspace.active)] = False
    candidates = np.flatnonzero(outside & (reduced < -workspace.pricing_tol))
    order = np.lexsort((candidates, reduced[candidates]))
    return candidates[order]


def _standard_form_model(c, A, b, cols) -> GroundModel:
    cols = list(cols)
    A = sp.csc_matrix(A)
    sub = A[:, cols].tocsr()
    n = len(cols)
    m = len(b)
    return GroundModel(
        sense="minimize",
        c=np.asarray(c, dtype=float)[cols],
        obj_const=0.0,
        A=sub,
        b=np.asarray(b, dtype=float),
        senses=["="] * m,
        lb=np.zeros(n),
        ub=np.full(n, math.inf),
        integrality=np.zeros(n, dtype=int),
        col_names=[f"x{j}" for j in cols],
        row_names=[f"r{i}" for i in range(m)],
    )


def _initial_columns(config: SiftConfig, n: int, m: int) -> list:
    if config.initial_indices is not None:
        chosen = sorted(set(int(j) for j in config.initial_indices))
        if not chosen:
            raise ValueError("initial column selection is empty")
        if chosen[0] < 0 or chosen[-1] >= n:
            raise ValueError("initial column selection out of range")
        return chosen
    k = config.initial_size or min(n, max(2 * m, 10))
    rng = np.random.default_rng(config.seed)
    return sorted(rng.choice(n, size=min(k, n), replace=False).tolist())


def _coverage_columns(A: sp.csc_matrix, b: np.ndarray, active: set) -> list:
    """Feasibility-rescue heuristic: for every row, largest |b| first, add the
    outside column with the largest-magnitude entry in that row."""
    csr = A.tocsr()
    additions = []
    for i in np.argsort(-np.abs(b)):
        row = csr[int(i), :].tocoo()
        best, best_mag = None, 0.0
        for j, v in zip(row.col, row.data):
            if int(j) not in active and abs(v) > best_mag:
                best, best_mag = int(j), abs(v)
        if best is not None:
            additions.append(best)
    return sorted(set(additions) - active)


def sift_columns(c, A, b, config: Optional[SiftConfig] = None):
    """Column sifting for min c'x, Ax = b, x >= 0. Returns (Solution, history).

    The returned primal covers all n columns, zero on the never-activated ones.
    When the loop ends because nothing priced out, the objective equals the
    full-problem optimum.
    """
    config = config or SiftConfig()
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    A = sp.csc_matrix(A)
    m, n = A.shape
    if n <= m:
        import warnings

        warnings.warn("column sifting expects n >> m; the restricted master saves little")
    workspace = SiftingWorkspace(c=c, A=A, b=b, active=_initial_columns(config, n, m),
                                 pricing_tol=config.pricing_tol)
    engine = config.engine or ScipyEngine()
    if not engine.provides_duals:
        raise MissingDuals(f"engine '{engine.id}' cannot provide duals required for pricing")
    history = SiftHistory()
    rescue_used = False
    prev_obj = None
    started = time.perf_counter()

    for iteration in range(1, config.max_iterations + 1):
        restricted = _standard_form_model(c, A, b, workspace.active)
        sol = solve(restricted, SolverParams(), engine=engine)
        if sol.status is Status.INFEASIBLE:
            if rescue_used:
                raise RestrictedInfeasible(
                    f"restricted master infeasible with {len(workspace.active)} columns"
                )
            rescue_used = True
            extras = _coverage_columns(A, b, set(workspace.active))
            if not extras:
                raise RestrictedInfeasible("no columns available to rescue feasibility")
            workspace.active = sorted(set(workspace.active) | set(extras))
            continue
        if sol.status is not Status.OPTIMAL:
            history.record(iteration, len(workspace.active), None, 0,
                           time.perf_counter() - started)
            return sol, history
        y = np.array([sol.duals[f"r{i}"] for i in range(m)])
        priced = price_columns(workspace, y)
        history.record(iteration, len(workspace.active), sol.objective, len(priced),
                       time.perf_counter() - started)
        if len(priced) == 0:
            history.terminated_by = "priced_out"
            return _extend(sol, workspace, n), history
        if config.gap_stop is not None and prev_obj is not None:
            if abs(prev_obj - sol.objective) <= config.gap_stop * max(1.0, abs(sol.objective)):
                history.terminated_by = "gap"
                return _extend(sol, workspace, n), history
        prev_obj = sol.objective
        if config.batch_cap:
            priced = priced[: config.batch_cap]
        before = len(workspace.active)
        workspace.active = sorted(set(workspace.active) | set(priced.tolist()))
        assert len(workspace.active) > before, "active set must strictly grow"
        if len(workspace.active) == n:
            restricted = _standard_form_model(c, A, b, workspace.active)
            sol = solve(restricted, SolverParams(), engine=engine)
            history.record(iteration + 1, n, sol.objective, 0, time.perf_counter() - started)
            history.terminated_by = "all_included"
            return _extend(sol, workspace, n), history
    raise IterationLimit(f"column sifting exceeded {config.max_iterations} iterations")


def _extend(sol: Solution, workspace: SiftingWorkspace, n: int) -> Solution:
    full = np.zeros(n)
    for j, col in enumerate(workspace.active):
        full[col] = sol.primal[f"x{col}"]
    sol.primal = {f"x{j}": float(full[j]) for j in range(n)}
    return sol


def _violations(model: GroundModel, x: np.ndarray) -> np.ndarray:
    Ax = model.A @ x
    viol = np.zeros(model.num_rows)
    for i, sense in enumerate(model.senses):
        if sense == "<=":
            viol[i] = Ax[i] - model.b[i]
        elif sense == ">=":
            viol[i] = model.b[i] - Ax[i]
        else:
            viol[i] = abs(Ax[i] - model.b[i])
    return viol


def sift_constraints(model: GroundModel, config: Optional[SiftConfig] = None):
    """Constraint (row) sifting on a GroundModel. Returns (Solution, history).

    Iteratively solves a row-restricted relaxation and adds the rows the
    restricted optimum violates. No violation means the point is optimal for
    the full problem. Integer flags are dropped: sifting runs on the LP
    relaxation.
    """
    config = config or SiftConfig()
    m, n = model.A.shape
    if m <= n:
        import warnings

        warnings.warn("constraint sifting expects m >> n; the restricted problem saves little")
    relaxed = GroundModel(
        sense=model.sense, c=model.c, obj_const=model.obj_const, A=model.A, b=model.b,
        senses=list(model.senses), lb=model.lb, ub=model.ub,
        integrality=np.zeros(n, dtype=int), col_names=list(model.col_names),
        row_names=list(model.row_names),
    )
    if config.initial_indices is not None:
        active = sorted(set(int(i) for i in config.initial_indices))
        if not active or active[0] < 0 or active[-1] >= m:
            raise ValueError("initial row selection out of range")
    else:
        k = config.initial_size or min(m, max(2 * n, 10))
        rng = np.random.default_rng(config.seed)
        active = sorted(rng.choice(m, size=min(k, m), replace=False).tolist())
    engine = config.engine or ScipyEngine()
    history = SiftHistory()
    prev_obj = None
    started = time.perf_counter()

    for iteration in range(1, config.max_iterations + 1):
        restricted = relaxed.take_rows(active)
        sol = solve(restricted, SolverParams(), engine=engine)
        if sol.status is Status.INFEASIBLE:
            # the restriction is a relaxation: infeasible restricted => infeasible full
            history.record(iteration, len(active), None, 0, time.perf_counter() - started)
            history.terminated_by = "priced_out"
            return sol, history
        if sol.status is Status.UNBOUNDED:
            remaining = [i for i in range(m) if i not in set(active)]
            if not remaining:
                history.record(iteration, len(active), None, 0, time.perf_counter() - started)
                history.terminated_by = "all_included"
                return sol, history
            take = remaining if not config.batch_cap else remaining[: config.batch_cap]
            active = sorted(set(active) | set(take))
            continue
        if sol.status is not Status.OPTIMAL:
            history.record(iteration, len(active), None, 0, time.perf_counter() - started)
            return sol, history
        x = sol.primal_vector(relaxed)
        viol = _violations(relaxed, x)
        outside = np.ones(m, dtype=bool)
        outside[active] = False
        violated = np.flatnonzero(outside & (viol > FEASIBILITY_TOL))
        order = np.lexsort((violated, -viol[violated]))
        violated = violated[order]
        history.record(iteration, len(active), sol.objective, len(violated),
                       time.perf_counter() - started)
        if len(violated) == 0:
            history.terminated_by = "priced_out"
            return sol, history
        if config.gap_stop is not None and prev_obj is not None:
            if abs(prev_obj - sol.objective) <= config.gap_stop * max(1.0, abs(sol.objective)):
                history.terminated_by = "gap"
                return sol, history
        prev_obj = sol.objective
        if config.batch_cap:
            violated = violated[: config.batch_cap]
        active = sorted(set(active) | set(violated.tolist()))
    raise IterationLimit(f"constraint sifting exceeded {config.max_iterations} iterations")
