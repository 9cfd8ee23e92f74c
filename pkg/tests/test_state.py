import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from milpforge.errors import (
    DuplicateSymbol,
    SchemaViolation,
    ShapeMismatch,
    UnknownClause,
    UnknownSymbol,
)
from milpforge.state import Clause, ConnectionGraph, Parameter, State, Variable


def factory_state() -> State:
    s = State("factory planning")
    s.add_symbol(Parameter("Hours", ("K",), "hours per unit"))
    s.add_symbol(Parameter("Profit", ("K",), "profit per unit"))
    s.add_symbol(Parameter("MaxHours", (), "available hours"))
    s.add_symbol(Variable("x", ("K",), "units made"))
    s.add_clause(Clause("c1", "Constraint", "hours cap"))
    s.add_clause(Clause("obj", "Objective", "profit"))
    s.connect("c1", "Hours").connect("c1", "x").connect("c1", "MaxHours")
    s.connect("obj", "Profit").connect("obj", "x")
    s.bind_data("Hours", [2, 4, 3])
    s.bind_data("Profit", [30, 50, 40])
    s.bind_data("MaxHours", 100)
    return s


class TestBasics:
    def test_new_state_empty(self):
        s = State("factory production")
        assert not s.parameters and not s.clauses and len(s.graph) == 0

    def test_empty_background_accepted(self):
        s = State("")
        assert s.background == ""
        assert State.loads(s.dumps()) == s

    def test_duplicate_symbol_rejected(self):
        s = State()
        s.add_symbol(Parameter("C"))
        with pytest.raises(DuplicateSymbol):
            s.add_symbol(Parameter("C"))
        with pytest.raises(DuplicateSymbol):
            s.add_symbol(Variable("C"))

    def test_variable_node_degree_zero(self):
        s = State()
        s.add_symbol(Variable("x", ("K",), vartype="Binary"))
        assert s.graph.clauses_of("x") == []

    def test_shape_check_on_bind(self):
        s = State()
        s.add_symbol(Parameter("Hours", ("K",)))
        s.add_symbol(Parameter("u", ("K",)))
        s.bind_data("Hours", [1, 2, 3])
        s.bind_data("u", [5, 6, 7])
        with pytest.raises(ShapeMismatch):
            s.bind_data("u", [5, 6, 7, 8])

    def test_negative_dim_rejected(self):
        from milpforge.errors import InvalidShape

        with pytest.raises(InvalidShape):
            Parameter("A", (-1,))

    def test_binary_bounds_inside_unit_interval(self):
        from milpforge.errors import InvalidShape

        with pytest.raises(InvalidShape):
            Variable("z", (), vartype="Binary", bounds=(0, 2))


class TestGraph:
    def test_connect_is_idempotent(self):
        s = State()
        s.add_symbol(Variable("x"))
        s.add_clause(Clause("c1", "Constraint"))
        s.connect("c1", "x").connect("c1", "x")
        assert len(s.graph) == 1

    def test_connect_unknown_symbol(self):
        s = State()
        s.add_clause(Clause("c1", "Constraint"))
        with pytest.raises(UnknownSymbol):
            s.connect("c1", "nosuch")

    def test_connect_unknown_clause(self):
        s = State()
        s.add_symbol(Variable("x"))
        with pytest.raises(UnknownClause):
            s.connect("nope", "x")

    def test_edge_count(self):
        s = State()
        s.add_symbol(Variable("x"))
        s.add_symbol(Parameter("u"))
        s.add_clause(Clause("c1", "Constraint"))
        s.connect("c1", "x").connect("c1", "u")
        assert len(s.graph) == 2

    def test_context_for_neighborhood(self):
        s = factory_state()
        ctx = s.context_for("c1")
        assert [p.symbol for p in ctx["parameters"]] == ["Hours", "MaxHours"]
        assert [v.symbol for v in ctx["variables"]] == ["x"]

    def test_context_for_empty(self):
        s = State()
        s.add_clause(Clause("c1", "Constraint"))
        ctx = s.context_for("c1")
        assert ctx == {"parameters": [], "variables": []}

    def test_context_for_unknown_clause(self):
        with pytest.raises(UnknownClause):
            State().context_for("c1")


class TestPersistence:
    def test_round_trip_factory(self, tmp_path):
        s = factory_state()
        path = tmp_path / "state.json"
        s.save(path)
        assert State.load(path) == s

    def test_golden_state_file(self, data_dir):
        golden = data_dir / "golden" / "factory_state.json"
        state = State.load(golden)
        assert state.dumps() == golden.read_text()

    def test_edge_to_unknown_symbol_rejected(self):
        s = factory_state()
        doc = s.to_dict()
        doc["graph"].append(["c1", "ghost"])
        with pytest.raises(SchemaViolation) as err:
            State.from_dict(doc)
        assert "graph" in str(err.value)

    def test_truncated_file_is_schema_violation(self):
        text = factory_state().dumps()
        with pytest.raises(SchemaViolation):
            State.loads(text[: len(text) // 2])

    def test_unknown_field_rejected_with_path(self):
        doc = factory_state().to_dict()
        doc["extra"] = 1
        with pytest.raises(SchemaViolation) as err:
            State.from_dict(doc)
        assert "$.extra" in str(err.value)

    def test_wrong_version_rejected(self):
        doc = factory_state().to_dict()
        doc["version"] = 99
        with pytest.raises(SchemaViolation):
            State.from_dict(doc)


# --- generated-state properties ------------------------------------------------

_symbols = st.lists(
    st.text(alphabet="ABCDEFGH", min_size=1, max_size=3), min_size=1, max_size=12,
    unique=True,
)


@st.composite
def states(draw):
    names = draw(_symbols)
    n_params = draw(st.integers(0, len(names)))
    s = State(draw(st.text(max_size=20)))
    dims = {}
    rng = np.random.default_rng(draw(st.integers(0, 2**16)))
    for i, name in enumerate(names):
        dim_name = draw(st.sampled_from(["K", "N", ""]))
        shape = (dim_name,) if dim_name else ()
        if i < n_params:
            s.add_symbol(Parameter(name, shape, f"def {name}"))
            if shape and draw(st.booleans()):
                size = dims.setdefault(dim_name, draw(st.integers(1, 4)))
                s.bind_data(name, rng.uniform(-5, 5, size).round(3))
            elif not shape and draw(st.booleans()):
                s.bind_data(name, float(draw(st.integers(0, 9))))
        else:
            s.add_symbol(Variable(name, shape, f"def {name}",
                                  draw(st.sampled_from(["Continuous", "Integer", "Binary"]))))
    n_clauses = draw(st.integers(0, 5))
    for i in range(n_clauses):
        kind = "Objective" if i == 0 and draw(st.booleans()) else "Constraint"
        s.add_clause(Clause(f"q{i}", kind, f"clause {i}"))
        for name in draw(st.lists(st.sampled_from(names), max_size=4, unique=True)):
            s.connect(f"q{i}", name)
    return s


@given(states())
@settings(max_examples=120, deadline=None)
def test_round_trip_identity(state):
    assert State.loads(state.dumps()) == state


@given(states())
@settings(max_examples=120, deadline=None)
def test_bipartite_and_disjoint(state):
    assert not (state.parameters.keys() & state.variables.keys())
    for clause_id, symbol in state.graph.edges:
        assert clause_id in state.clauses
        assert state.has_symbol(symbol)
        assert symbol not in state.clauses


@given(states())
@settings(max_examples=120, deadline=None)
def test_context_matches_exhaustive_scan(state):
    for clause_id in state.clauses:
        ctx = state.context_for(clause_id)
        got = {p.symbol for p in ctx["parameters"]} | {v.symbol for v in ctx["variables"]}
        brute = {s for (c, s) in state.graph.edges if c == clause_id}
        assert got == brute
