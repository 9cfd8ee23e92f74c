"""Formulation equivalence via labeled bipartite graph isomorphism.

Two formulations are equivalent when a one-to-one correspondence between
their variables and constraints preserves every coefficient, each
constraint's relation and right-hand side, and each variable's objective
coefficient, bounds, and integrality. That strictness is deliberate: two
formulations with the same feasible set but different algebra are NOT
equivalent here.

Rows with a ``>=`` relation are normalized to ``<=`` before graphing so a
trivially flipped constraint still matches. Coefficients compare exactly by
default; pass ``tol`` to compare grounded models with rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import SearchBudgetExceeded
from .ir import GroundModel

DEFAULT_BUDGET = 10_000_000


@dataclass
class FormulationGraph:
    var_nodes: dict  # name -> label tuple (obj coeff, lb, ub, integer)
    cons_nodes: dict  # name -> label tuple (relation, rhs)
    edges: dict  # (var name, cons name) -> coefficient

    def __post_init__(self):
        assert not (self.var_nodes.keys() & self.cons_nodes.keys()), "node sets must be disjoint"
        for (v, c), coeff in self.edges.items():
            assert v in self.var_nodes and c in self.cons_nodes, "edge endpoint missing"
            assert coeff != 0, "zero-coefficient edges are not allowed"

    def adjacency(self) -> dict:
        adj: dict = {("v", v): {} for v in self.var_nodes}
        adj.update({("c", c): {} for c in self.cons_nodes})
        for (v, c), coeff in self.edges.items():
            adj[("v", v)][("c", c)] = coeff
            adj[("c", c)][("v", v)] = coeff
        return adj


@dataclass
class Correspondence:
    variables: dict  # g1 var name -> g2 var name
    constraints: dict  # g1 cons name -> g2 cons name


@dataclass
class NotEquivalent:
    reason: str
    detail: dict = field(default_factory=dict)


def _round(value: float, tol: Optional[float]) -> float:
    if tol is None:
        return float(value)
    return round(float(value) / tol) * tol


def to_graph(model: GroundModel, tol: Optional[float] = None) -> FormulationGraph:
    """Coefficient-labeled bipartite graph of a ground model.

    An edge (x_j, c_i) exists iff a_ij != 0 after >=-to-<= normalization.
    """
    var_nodes = {
        name: (
            _round(model.c[j], tol),
            _round(model.lb[j], tol) if np.isfinite(model.lb[j]) else -np.inf,
            _round(model.ub[j], tol) if np.isfinite(model.ub[j]) else np.inf,
            int(model.integrality[j]),
        )
        for j, name in enumerate(model.col_names)
    }
    cons_nodes = {}
    flip = np.array([-1.0 if s == ">=" else 1.0 for s in model.senses])
    for i, name in enumerate(model.row_names):
        sense = "<=" if model.senses[i] == ">=" else model.senses[i]
        cons_nodes[name] = (sense, _round(flip[i] * model.b[i], tol))
    edges = {}
    coo = model.A.tocoo()
    for i, j, v in zip(coo.row, coo.col, coo.data):
        if v == 0.0:
            continue
        label = _round(flip[i] * v, tol)
        if label != 0.0:
            edges[(model.col_names[j], model.row_names[i])] = label
    return FormulationGraph(var_nodes=var_nodes, cons_nodes=cons_nodes, edges=edges)


def graph_to_formulation(vertices, edges) -> GroundModel:
    """Encode a simple undirected graph as a feasibility formulation.

    One continuous variable per vertex; per edge (u, v) one constraint
    x_u + x_v = 1. The objective is the zero function.
    """
    vertices = list(vertices)
    index = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    rows, data, ri, ci = [], [], [], []
    seen = set()
    for k, (u, v) in enumerate(edges):
        if u == v:
            raise ValueError(f"self-loop on {u!r}: the graph must be simple")
        key = (min(index[u], index[v]), max(index[u], index[v]))
        if key in seen:
            raise ValueError(f"duplicate edge {u!r}-{v!r}")
        seen.add(key)
        data.extend([1.0, 1.0])
        ri.extend([k, k])
        ci.extend([index[u], index[v]])
        rows.append(f"e{k}")
    return GroundModel(
        sense="minimize",
        c=np.zeros(n),
        obj_const=0.0,
        A=sp.csr_matrix((data, (ri, ci)), shape=(len(rows), n)),
        b=np.ones(len(rows)),
        senses=["="] * len(rows),
        lb=np.zeros(n),
        ub=np.full(n, np.inf),
        integrality=np.zeros(n, dtype=int),
        col_names=[f"x{v}" for v in vertices],
        row_names=rows,
    )


def _refine(adj, labels, rounds):
    interned: dict = {}

    def intern(key):
        if key not in interned:
            interned[key] = len(interned)
        return interned[key]

    current = {node: intern(("base", label)) for node, label in labels.items()}
    for _ in range(rounds):
        new = {}
        for node, neighbors in adj.items():
            signature = tuple(sorted((coeff, current[nb]) for nb, coeff in neighbors.items()))
            new[node] = intern((current[node], signature))
        if new == current:
            break
        current = new
    return current


def _class_histogram(assignment) -> dict:
    hist: dict = {}
    for cls in assignment.values():
        hist[cls] = hist.get(cls, 0) + 1
    return hist


def check_equivalence(
    g1: FormulationGraph,
    g2: FormulationGraph,
    budget: int = DEFAULT_BUDGET,
):
    """Search for a label-preserving bijection between two formulation graphs.

    Returns a verified Correspondence or NotEquivalent with the pruning
    invariant that ruled the pair out. Exhausting the node-expansion budget
    raises SearchBudgetExceeded; it is never reported as NotEquivalent.
    """
    if len(g1.var_nodes) != len(g2.var_nodes):
        return NotEquivalent(
            "variable counts differ",
            {"left": len(g1.var_nodes), "right": len(g2.var_nodes)},
        )
    if len(g1.cons_nodes) != len(g2.cons_nodes):
        return NotEquivalent(
            "constraint counts differ",
            {"left": len(g1.cons_nodes), "right": len(g2.cons_nodes)},
        )
    if len(g1.edges) != len(g2.edges):
        return NotEquivalent(
            "edge counts differ", {"left": len(g1.edges), "right": len(g2.edges)}
        )

    adj1, adj2 = g1.adjacency(), g2.adjacency()
    labels1 = {("v", n): ("v", lab) for n, lab in g1.var_nodes.items()}
    labels1.update({("c", n): ("c", lab) for n, lab in g1.cons_nodes.items()})
    labels2 = {("v", n): ("v", lab) for n, lab in g2.var_nodes.items()}
    labels2.update({("c", n): ("c", lab) for n, lab in g2.cons_nodes.items()})

    rounds = max(3, len(adj1).bit_length())
    # refine both graphs together so class ids are comparable
    merged_adj = {("L", k): {("L", nb): c for nb, c in nbs.items()} for k, nbs in adj1.items()}
    merged_adj.update(
        {("R", k): {("R", nb): c for nb, c in nbs.items()} for k, nbs in adj2.items()}
    )
    merged_labels = {("L", k): v for k, v in labels1.items()}
    merged_labels.update({("R", k): v for k, v in labels2.items()})
    refined = _refine(merged_adj, merged_labels, rounds)
    classes1 = {k: refined[("L", k)] for k in adj1}
    classes2 = {k: refined[("R", k)] for k in adj2}
    if _class_histogram(classes1) != _class_histogram(classes2):
        return NotEquivalent(
            "signature class sizes differ",
            {
                "left": sorted(_class_histogram(classes1).items()),
                "right": sorted(_class_histogram(classes2).items()),
            },
        )

    by_class2: dict = {}
    for node, cls in classes2.items():
        by_class2.setdefault(cls, []).append(node)

    nodes1 = list(adj1)
    mapping: dict = {}
    reverse: dict = {}
    expansions = 0

    def pick_next():
        best, best_key = None, None
        for node in nodes1:
            if node in mapping:
                continue
            mapped_neighbors = sum(1 for nb in adj1[node] if nb in mapping)
            key = (-mapped_neighbors, len(by_class2[classes1[node]]), -len(adj1[node]))
            if best_key is None or key < best_key:
                best, best_key = node, key
        return best

    def consistent(n1, n2):
        if classes1[n1] != classes2[n2]:
            return False
        for nb1, coeff in adj1[n1].items():
            if nb1 in mapping:
                partner = mapping[nb1]
                if adj2[n2].get(partner) != coeff:
                    return False
        for nb2, coeff in adj2[n2].items():
            if nb2 in reverse:
                partner = reverse[nb2]
                if adj1[n1].get(partner) != coeff:
                    return False
        return True

    def search() -> bool:
        nonlocal expansions
        if len(mapping) == len(nodes1):
            return True
        n1 = pick_next()
        for n2 in by_class2[classes1[n1]]:
            if n2 in reverse:
                continue
            expansions += 1
            if expansions > budget:
                raise SearchBudgetExceeded(f"exceeded {budget} node expansions")
            if not consistent(n1, n2):
                continue
            mapping[n1] = n2
            reverse[n2] = n1
            if search():
                return True
            del mapping[n1]
            del reverse[n2]
        return False

    if not search():
        return NotEquivalent("search exhausted without a correspondence", {})

    correspondence = Correspondence(
        variables={k[1]: v[1] for k, v in mapping.items() if k[0] == "v"},
        constraints={k[1]: v[1] for k, v in mapping.items() if k[0] == "c"},
    )
    assert _verify(g1, g2, correspondence), "search returned an unverifiable correspondence"
    return correspondence


def _verify(g1: FormulationGraph, g2: FormulationGraph, corr: Correspondence) -> bool:
    """Full re-check of a correspondence, independent of the search internals."""
    if sorted(corr.variables) != sorted(g1.var_nodes) or sorted(
        corr.variables.values()
    ) != sorted(g2.var_nodes):
        return False
    if sorted(corr.constraints) != sorted(g1.cons_nodes) or sorted(
        corr.constraints.values()
    ) != sorted(g2.cons_nodes):
        return False
    for v, lab in g1.var_nodes.items():
        if g2.var_nodes[corr.variables[v]] != lab:
            return False
    for c, lab in g1.cons_nodes.items():
        if g2.cons_nodes[corr.constraints[c]] != lab:
            return False
    mapped_edges = {
        (corr.variables[v], corr.constraints[c]): coeff for (v, c), coeff in g1.edges.items()
    }
    return mapped_edges == g2.edges
