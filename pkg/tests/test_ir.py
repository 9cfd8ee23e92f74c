import numpy as np
import pytest

from milpforge.errors import (
    IndexOutOfRange,
    MissingData,
    NonlinearTerm,
    ParseError,
    ShapeMismatch,
    UnknownSymbol,
)
from milpforge.ir import (
    IndicatorAnnotation,
    IRConstraint,
    IRObjective,
    LinTerm,
    Ref,
    build_fragment,
    document_from_dict,
    document_to_dict,
    fragment_from_dict,
    fragment_to_dict,
    ground,
    lower_annotations,
    validate,
    ModelDocument,
)
from milpforge.state import Clause, Parameter, State, Variable


def context_of(state):
    return {"parameters": state.parameters, "variables": state.variables}


@pytest.fixture
def factory():
    s = State("factory")
    s.add_symbol(Parameter("Hours", ("K",), "hours per unit"))
    s.add_symbol(Parameter("Profit", ("K",), "profit per unit"))
    s.add_symbol(Parameter("MaxHours", (), "available hours"))
    s.add_symbol(Variable("x", ("K",), "units made"))
    s.bind_data("Hours", [2, 4, 3])
    s.bind_data("Profit", [30, 50, 40])
    s.bind_data("MaxHours", 100)
    return s


class TestGrammar:
    def test_canonical_sum(self, factory):
        frag = build_fragment("c1", "sum_j x_j <= MaxHours", context_of(factory))
        assert isinstance(frag, IRConstraint)
        assert frag.index_sets == [("j", ("K",))]
        assert frag.forall == ()
        assert frag.lhs_terms[0].sum_over == ("j",)

    def test_nonlinear_rejected(self, factory):
        factory.add_symbol(Variable("y", ("K",)))
        with pytest.raises(NonlinearTerm):
            build_fragment("c1", "x_1 y_1 <= 5", context_of(factory))

    def test_unknown_symbol(self, factory):
        with pytest.raises(UnknownSymbol):
            build_fragment("c1", "sum_j w_j <= MaxHours", context_of(factory))

    def test_objective_sense_and_terms(self, factory):
        frag = build_fragment("obj", "maximize sum_j Profit_j x_j", context_of(factory))
        assert isinstance(frag, IRObjective)
        assert frag.sense == "maximize"
        assert frag.terms[0].param.symbol == "Profit"

    def test_forall_family(self, factory):
        frag = build_fragment("c1", "x_j <= MaxHours forall j", context_of(factory))
        assert frag.forall == ("j",)

    def test_unicode_accepted(self, factory):
        frag = build_fragment("c1", "sum_j Hours_j x_j ≤ MaxHours", context_of(factory))
        assert frag.relation == "<="

    def test_undeclared_index_rejected(self, factory):
        with pytest.raises(ParseError):
            build_fragment("c1", "x_j <= MaxHours", context_of(factory))

    def test_arity_mismatch_rejected(self, factory):
        with pytest.raises(ParseError):
            build_fragment("c1", "sum_j MaxHours_j x_j <= 4", context_of(factory))

    def test_two_relations_rejected(self, factory):
        with pytest.raises(ParseError):
            build_fragment("c1", "1 <= x_1 <= 2", context_of(factory))

    def test_parenthesized_distribution(self, factory):
        factory.add_symbol(Variable("z", (), vartype="Binary"))
        frag = build_fragment("c1", "x_1 >= MaxHours - MaxHours (1 - z)", context_of(factory))
        # expansion: x_1 >= MaxHours - MaxHours + MaxHours z
        rhs_vars = [t for t in frag.rhs_terms if t.var is not None]
        assert rhs_vars[0].var.symbol == "z" and rhs_vars[0].param.symbol == "MaxHours"

    def test_objective_with_free_index_rejected(self, factory):
        with pytest.raises(ParseError):
            build_fragment("obj", "maximize Profit_j x_j", context_of(factory))

    def test_division_by_literal(self, factory):
        frag = build_fragment("c1", "sum_j x_j / 2 <= MaxHours", context_of(factory))
        assert frag.lhs_terms[0].scale == pytest.approx(0.5)

    def test_render_parses_back(self, factory):
        text = "sum_j Hours_j x_j <= MaxHours"
        frag = build_fragment("c1", text, context_of(factory))
        again = build_fragment("c1", frag.render(), context_of(factory))
        assert fragment_to_dict(frag) == fragment_to_dict(again)


class TestGrounding:
    def test_two_var_lp_transcription(self):
        s = State()
        s.add_symbol(Variable("x"))
        s.add_symbol(Variable("y"))
        ctx = context_of(s)
        frags = [
            build_fragment("c1", "x + y <= 4", ctx),
            build_fragment("c2", "x <= 2", ctx),
            build_fragment("obj", "maximize 3 x + 2 y", ctx),
        ]
        g = ground(frags, s)
        assert g.c.tolist() == [3, 2]
        assert g.A.toarray().tolist() == [[1, 1], [1, 0]]
        assert g.b.tolist() == [4, 2]
        assert g.senses == ["<=", "<="]

    def test_factory_c_vector_hand_expansion(self, factory):
        ctx = context_of(factory)
        frags = [build_fragment("c1", "sum_j Hours_j x_j <= MaxHours", ctx),
                 build_fragment("obj", "maximize sum_j Profit_j x_j", ctx)]
        g = ground(frags, factory)
        # K = 3 by hand: c = (Profit_1, Profit_2, Profit_3)
        assert g.c.tolist() == [30.0, 50.0, 40.0]
        assert g.A.toarray().tolist() == [[2.0, 4.0, 3.0]]
        assert g.sense == "maximize"

    def test_index_out_of_range(self, factory):
        ctx = context_of(factory)
        frags = [build_fragment("c1", "sum_j Hours_j x_4 <= MaxHours", ctx),
                 build_fragment("obj", "maximize sum_j Profit_j x_j", ctx)]
        with pytest.raises(IndexOutOfRange) as err:
            ground(frags, factory)
        assert "x" in str(err.value)

    def test_missing_data(self):
        s = State()
        s.add_symbol(Parameter("c", ("K",)))
        s.add_symbol(Variable("x", ("K",)))
        frags = [build_fragment("obj", "minimize sum_j c_j x_j", context_of(s))]
        with pytest.raises(MissingData):
            ground(frags, s)

    def test_grounding_deterministic(self, factory):
        ctx = context_of(factory)
        frags = [build_fragment("c1", "sum_j Hours_j x_j <= MaxHours", ctx),
                 build_fragment("obj", "maximize sum_j Profit_j x_j", ctx)]
        g1, g2 = ground(frags, factory), ground(frags, factory)
        assert g1.content_equal(g2)
        from milpforge.lp_io import write_lp

        assert write_lp(g1) == write_lp(g2)

    def test_random_models_match_loop_expansion_oracle(self):
        rng = np.random.default_rng(5)
        for trial in range(12):
            K = int(rng.integers(2, 5))
            N = int(rng.integers(2, 4))
            a = rng.uniform(-3, 3, K).round(2)
            B = rng.uniform(-3, 3, (N, K)).round(2)
            d = rng.uniform(-2, 2, N).round(2)
            cap = float(rng.uniform(5, 20))
            s = State()
            s.add_symbol(Parameter("a", ("K",)))
            s.add_symbol(Parameter("B", ("N", "K")))
            s.add_symbol(Parameter("d", ("N",)))
            s.add_symbol(Parameter("cap", ()))
            s.add_symbol(Variable("x", ("K",)))
            s.bind_data("a", a)
            s.bind_data("B", B)
            s.bind_data("d", d)
            s.bind_data("cap", cap)
            ctx = context_of(s)
            frags = [
                build_fragment("c1", "sum_j a_j x_j <= cap", ctx),
                build_fragment("c2", "sum_j B_{i,j} x_j >= d_i forall i", ctx),
                build_fragment("c3", "x_j <= cap forall j", ctx),
                build_fragment("obj", "minimize sum_j a_j x_j", ctx),
            ]
            g = ground(frags, s)
            # independent oracle: plain nested loops over the same data
            rows = [(list(a), "<=", cap)]
            for i in range(N):
                rows.append((list(B[i, :]), ">=", float(d[i])))
            for j in range(K):
                row = [0.0] * K
                row[j] = 1.0
                rows.append((row, "<=", cap))
            dense = g.A.toarray()
            assert dense.shape == (len(rows), K)
            for i, (coeffs, sense, rhs) in enumerate(rows):
                assert dense[i, :].tolist() == pytest.approx(coeffs)
                assert g.senses[i] == sense
                assert g.b[i] == pytest.approx(rhs)
            assert g.c.tolist() == pytest.approx(list(a))


class TestValidate:
    def test_unused_variable_warning(self):
        s = State()
        s.add_symbol(Variable("x"))
        s.add_symbol(Variable("unusedvar"))
        frags = [build_fragment("c1", "x <= 2", context_of(s)),
                 build_fragment("obj", "maximize x", context_of(s))]
        notes = validate(ground(frags, s))
        assert any("unusedvar" in n for n in notes)

    def test_clean_model_no_diagnostics(self, factory):
        ctx = context_of(factory)
        frags = [build_fragment("c1", "sum_j Hours_j x_j <= MaxHours", ctx),
                 build_fragment("obj", "maximize sum_j Profit_j x_j", ctx)]
        assert validate(ground(frags, factory)) == []

    def test_impossible_empty_row(self):
        s = State()
        s.add_symbol(Variable("x"))
        frags = [build_fragment("c1", "0 x <= 0 - 1", context_of(s)),
                 build_fragment("obj", "minimize x", context_of(s))]
        notes = validate(ground(frags, s))
        assert any("never hold" in n for n in notes)


class TestSerialization:
    def test_fragment_round_trip(self, factory):
        ctx = context_of(factory)
        for text in ("sum_j Hours_j x_j <= MaxHours",
                     "x_j <= MaxHours forall j",
                     "maximize sum_j Profit_j x_j"):
            frag = build_fragment("c1" if "maximize" not in text else "obj", text, ctx)
            doc = fragment_to_dict(frag)
            assert fragment_to_dict(fragment_from_dict(doc)) == doc

    def test_document_round_trip(self, factory):
        ctx = context_of(factory)
        doc = ModelDocument()
        doc.fragments["f1"] = build_fragment("c1", "sum_j Hours_j x_j <= MaxHours", ctx)
        doc.fragments["f2"] = build_fragment("obj", "maximize sum_j Profit_j x_j", ctx)
        doc.annotations.append(IndicatorAnnotation(
            trigger=Ref("x", (("idx", "k"),)), terms=[LinTerm(var=Ref("x", (("idx", "k"),)))],
            const=0.0, relation="<=", rhs=1.0, expand=[("k", ("K",))]))
        payload = document_to_dict(doc)
        again = document_to_dict(document_from_dict(payload))
        assert payload == again


class TestLowering:
    def test_indicator_big_m_rows(self):
        s = State()
        s.add_symbol(Variable("z", (), vartype="Binary"))
        s.add_symbol(Variable("y", ()))
        ctx = context_of(s)
        frags = [build_fragment("c1", "y <= 100", ctx),
                 build_fragment("obj", "maximize y", ctx)]
        ann = IndicatorAnnotation(trigger=Ref("z"), trigger_value=1,
                                  terms=[LinTerm(var=Ref("y"))], const=0.0,
                                  relation="<=", rhs=5.0)
        g = ground(frags, s, annotations=[ann])
        lowered, records = lower_annotations(g, default_big_m=1000.0)
        assert not lowered.annotations
        assert any("big-M" in r for r in records)
        # z=1 must force y <= 5: row y + M z <= 5 + M
        extra = lowered.A.toarray()[-1, :]
        assert extra.tolist() == [1000.0, 1.0]
        assert lowered.b[-1] == pytest.approx(1005.0)
