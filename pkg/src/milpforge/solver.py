"""Solving layer over GroundModel: engine adapters, status mapping, duals.

Two adapters ship by default. ScipyEngine runs HiGHS in process through
scipy.optimize and has no native structure support, so annotated models are
lowered first (the lowering is recorded on the returned Solution).
SubprocessEngine shells out to an external command that accepts an LP file and
writes a JSON solution file; annotations are passed natively in the LP text.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .errors import EngineFailure, EngineUnavailable
from .ir import GroundModel, lower_annotations

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-5
OBJECTIVE_REL_TOL = 1e-6


class Status(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ERROR = "Error"
    TIME_LIMIT = "TimeLimit"


@dataclass
class SolverParams:
    time_limit: Optional[float] = None
    mip_gap: Optional[float] = None
    presolve: bool = True

    @classmethod
    def from_dict(cls, doc: Optional[dict]) -> "SolverParams":
        doc = doc or {}
        unknown = set(doc) - {"time_limit", "mip_gap", "presolve"}
        if unknown:
            raise ValueError(f"unsupported solver parameters: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Solution:
    status: Status
    objective: Optional[float] = None
    primal: Optional[dict] = None  # column name -> value
    duals: Optional[dict] = None  # row name -> value, pure LP solves only
    iterations: int = 0
    wall_time: float = 0.0
    mip_gap: Optional[float] = None
    lowering: list = field(default_factory=list)
    message: str = ""

    def __post_init__(self):
        assert (self.objective is not None) == (self.status is Status.OPTIMAL)

    def primal_vector(self, model: GroundModel) -> np.ndarray:
        assert self.primal is not None
        return np.array([self.primal[name] for name in model.col_names])


class ScipyEngine:
    """In-process LP/MILP adapter over scipy's HiGHS interface."""

    id = "scipy-highs"
    provides_duals = True
    supports_annotations = False

    def solve(self, model: GroundModel, params: SolverParams) -> Solution:
        assert not model.annotations, "ScipyEngine expects a lowered model"
        started = time.perf_counter()
        minimize = model.sense == "minimize"
        c = model.c if minimize else -model.c

        rows_le = [i for i, s in enumerate(model.senses) if s == "<="]
        rows_ge = [i for i, s in enumerate(model.senses) if s == ">="]
        rows_eq = [i for i, s in enumerate(model.senses) if s == "="]
        A = model.A.tocsr()

        if model.integrality.any():
            res = self._solve_milp(model, c, A, params)
            status = self._map_milp_status(res, model, c, A, params)
            duals = None
            nit = 0
            gap = getattr(res, "mip_gap", None)
        else:
            A_ub_parts, b_ub_parts = [], []
            if rows_le:
                A_ub_parts.append(A[rows_le, :])
                b_ub_parts.append(model.b[rows_le])
            if rows_ge:
                A_ub_parts.append(-A[rows_ge, :])
                b_ub_parts.append(-model.b[rows_ge])
            A_ub = sp.vstack(A_ub_parts).tocsr() if A_ub_parts else None
            b_ub = np.concatenate(b_ub_parts) if b_ub_parts else None
            A_eq = A[rows_eq, :] if rows_eq else None
            b_eq = model.b[rows_eq] if rows_eq else None
            bounds = [
                (None if np.isinf(-lo) else lo, None if np.isinf(hi) else hi)
                for lo, hi in zip(model.lb, model.ub)
            ]
            options = {"presolve": params.presolve}
            if params.time_limit is not None:
                options["time_limit"] = params.time_limit
            res = linprog(
                c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                bounds=bounds, method="highs", options=options,
            )
            status = {0: Status.OPTIMAL, 1: Status.TIME_LIMIT, 2: Status.INFEASIBLE,
                      3: Status.UNBOUNDED}.get(res.status, Status.ERROR)
            nit = int(getattr(res, "nit", 0) or 0)
            gap = None
            duals = None
            if status is Status.OPTIMAL:
                y = np.zeros(model.num_rows)
                marg_ub = res.ineqlin.marginals if (rows_le or rows_ge) else np.zeros(0)
                for k, i in enumerate(rows_le):
                    y[i] = marg_ub[k]
                for k, i in enumerate(rows_ge):
                    y[i] = -marg_ub[len(rows_le) + k]
                if rows_eq:
                    for k, i in enumerate(rows_eq):
                        y[i] = res.eqlin.marginals[k]
                if not minimize:
                    y = -y
                duals = {model.row_names[i]: float(y[i]) for i in range(model.num_rows)}

        wall = time.perf_counter() - started
        if status is not Status.OPTIMAL:
            return Solution(status=status, wall_time=wall, iterations=nit,
                            message=str(getattr(res, "message", "")))
        x = np.asarray(res.x, dtype=float)
        obj = float(model.c @ x) + model.obj_const
        return Solution(
            status=Status.OPTIMAL,
            objective=obj,
            primal={name: float(x[j]) for j, name in enumerate(model.col_names)},
            duals=duals,
            iterations=nit,
            wall_time=wall,
            mip_gap=gap,
            message=str(getattr(res, "message", "")),
        )

    def _solve_milp(self, model, c, A, params):
        lo = np.where(np.array([s == ">=" for s in model.senses]), model.b, -np.inf)
        lo = np.where(np.array([s == "=" for s in model.senses]), model.b, lo)
        hi = np.where(np.array([s == "<=" for s in model.senses]), model.b, np.inf)
        hi = np.where(np.array([s == "=" for s in model.senses]), model.b, hi)
        constraints = LinearConstraint(A, lo, hi) if model.num_rows else None
        options = {"presolve": params.presolve}
        if params.time_limit is not None:
            options["time_limit"] = params.time_limit
        if params.mip_gap is not None:
            options["mip_rel_gap"] = params.mip_gap
        return milp(
            c=c,
            constraints=constraints,
            integrality=model.integrality,
            bounds=Bounds(model.lb, model.ub),
            options=options,
        )

    def _map_milp_status(self, res, model, c, A, params) -> Status:
        mapping = {0: Status.OPTIMAL, 1: Status.TIME_LIMIT, 2: Status.INFEASIBLE,
                   3: Status.UNBOUNDED}
        if res.status in mapping:
            return mapping[res.status]
        message = str(getattr(res, "message", "")).lower()
        if "unbounded or infeasible" in message:
            # disambiguate through the LP relaxation
            relaxed = GroundModel(
                sense=model.sense, c=model.c, obj_const=model.obj_const, A=model.A,
                b=model.b, senses=model.senses, lb=model.lb, ub=model.ub,
                integrality=np.zeros(model.num_cols, dtype=int),
                col_names=model.col_names, row_names=model.row_names,
            )
            rstat = self.solve(relaxed, SolverParams(presolve=params.presolve)).status
            if rstat in (Status.INFEASIBLE, Status.UNBOUNDED):
                return rstat
        return Status.ERROR


class SubprocessEngine:
    """Adapter for external solvers driven through LP files.

    ``command`` is a list of argv entries where ``{lp}`` and ``{out}`` expand
    to the model file and the expected JSON solution file. The solution file
    holds {status, objective, primal, duals?, iterations?, mip_gap?}.
    """

    supports_annotations = True

    def __init__(self, command, id="subprocess", provides_duals=False, timeout=300.0):
        self.command = list(command)
        self.id = id
        self.provides_duals = provides_duals
        self.timeout = timeout

    def solve(self, model: GroundModel, params: SolverParams) -> Solution:
        from .lp_io import write_lp

        started = time.perf_counter()
        with tempfile.TemporaryDirectory(prefix="mfsolve_") as tmp:
            lp_path = Path(tmp) / "model.lp"
            out_path = Path(tmp) / "solution.json"
            lp_path.write_text(write_lp(model))
            argv = [a.format(lp=str(lp_path), out=str(out_path)) for a in self.command]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout
                )
            except FileNotFoundError as exc:
                raise EngineUnavailable(f"solver command not found: {argv[0]}") from exc
            except subprocess.TimeoutExpired:
                return Solution(status=Status.TIME_LIMIT,
                                wall_time=time.perf_counter() - started,
                                message="subprocess timeout")
            if proc.returncode != 0:
                raise EngineFailure(proc.stderr.strip() or f"exit code {proc.returncode}")
            if not out_path.exists():
                raise EngineFailure("solver produced no solution file")
            doc = json.loads(out_path.read_text())
        try:
            status = Status(doc["status"])
        except (KeyError, ValueError) as exc:
            raise EngineFailure(f"bad solution file: {exc}") from exc
        duals = doc.get("duals") if self.provides_duals else None
        return Solution(
            status=status,
            objective=doc.get("objective") if status is Status.OPTIMAL else None,
            primal=doc.get("primal") if status is Status.OPTIMAL else None,
            duals=duals if status is Status.OPTIMAL else None,
            iterations=int(doc.get("iterations", 0)),
            wall_time=time.perf_counter() - started,
            mip_gap=doc.get("mip_gap"),
            message=str(doc.get("message", "")),
        )


def solve(model: GroundModel, params: Optional[SolverParams] = None, engine=None) -> Solution:
    """Solve a ground model, lowering annotations when the engine lacks support."""
    params = params or SolverParams()
    engine = engine or ScipyEngine()
    lowering: list = []
    target = model
    if model.annotations and not engine.supports_annotations:
        target, lowering = lower_annotations(model)
    sol = engine.solve(target, params)
    sol.lowering = lowering + sol.lowering
    if sol.primal is not None and target is not model:
        sol.primal = {name: sol.primal[name] for name in model.col_names}
        sol.duals = None
    if sol.primal is not None and model.annotations:
        sol.duals = None  # duals are only meaningful for pure-continuous models
    return sol


def check_feasible(model: GroundModel, x: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
    """Does x satisfy every row, bound, and integrality flag of the model?"""
    if np.any(x < model.lb - tol) or np.any(x > model.ub + tol):
        return False
    if model.integrality.any():
        frac = np.abs(x - np.round(x))
        if np.any(frac[model.integrality == 1] > INTEGRALITY_TOL):
            return False
    Ax = model.A @ x
    for i, sense in enumerate(model.senses):
        if sense == "<=" and Ax[i] > model.b[i] + tol:
            return False
        if sense == ">=" and Ax[i] < model.b[i] - tol:
            return False
        if sense == "=" and abs(Ax[i] - model.b[i]) > tol:
            return False
    return True


def duality_gap(model: GroundModel, sol: Solution) -> float:
    """|c'x - b'y| for a continuous solve of a model whose only bounds are x >= 0."""
    assert sol.duals is not None and sol.primal is not None
    x = sol.primal_vector(model)
    y = np.array([sol.duals[name] for name in model.row_names])
    return abs(float(model.c @ x) - float(model.b @ y))
