import math

import numpy as np
import pytest
import scipy.sparse as sp

from milpforge.errors import LpSyntaxError
from milpforge.ir import (
    GroundIndicator,
    GroundModel,
    GroundPWL,
    GroundSemiCont,
    GroundSOS,
)
from milpforge.lp_io import parse_lp, write_lp


def random_model(rng, with_annotations=True) -> GroundModel:
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 6))
    dense = rng.uniform(-5, 5, (m, n)).round(3)
    dense[rng.uniform(0, 1, (m, n)) < 0.4] = 0.0
    for i in range(m):
        if not dense[i].any():
            dense[i, rng.integers(0, n)] = 1.0
    c = rng.uniform(-4, 4, n).round(3)
    b = rng.uniform(-10, 10, m).round(3)
    senses = [str(rng.choice(["<=", ">=", "="])) for _ in range(m)]
    lb = np.where(rng.uniform(0, 1, n) < 0.3, -rng.uniform(0, 5, n).round(2), 0.0)
    ub = np.where(rng.uniform(0, 1, n) < 0.4, rng.uniform(5, 20, n).round(2), math.inf)
    integrality = (rng.uniform(0, 1, n) < 0.4).astype(int)
    col_names = [f"v{j}" for j in range(n)]
    annotations = []
    if with_annotations and n >= 3:
        kind = rng.integers(0, 3)
        if kind == 0:
            members = list(rng.choice(n, size=min(3, n), replace=False))
            annotations.append(GroundSOS(kind=int(rng.integers(1, 3)),
                                         members=[int(x) for x in members],
                                         weights=list(range(1, len(members) + 1))))
        elif kind == 1:
            trig = int(rng.integers(0, n))
            integrality[trig] = 1
            lb[trig], ub[trig] = 0.0, 1.0
            other = int((trig + 1) % n)
            annotations.append(GroundIndicator(
                trigger_col=trig, trigger_value=int(rng.integers(0, 2)),
                coeffs={other: round(float(rng.uniform(-3, 3)), 2)},
                relation=str(rng.choice(["<=", ">=", "="])),
                rhs=round(float(rng.uniform(-5, 5)), 2)))
        else:
            col = int(rng.integers(0, n))
            integrality[col] = 0
            lb[col], ub[col] = 1.0, round(float(rng.uniform(2, 9)), 1)
            annotations.append(GroundSemiCont(col=col))
    return GroundModel(
        sense=str(rng.choice(["minimize", "maximize"])),
        c=c,
        obj_const=float(rng.choice([0.0, 2.5])),
        A=sp.csr_matrix(dense),
        b=b,
        senses=senses,
        lb=lb.astype(float),
        ub=ub.astype(float),
        integrality=integrality,
        col_names=col_names,
        row_names=[f"r{i}" for i in range(m)],
        annotations=annotations,
    )


class TestRoundTrip:
    def test_fifty_random_models(self):
        rng = np.random.default_rng(123)
        for _ in range(50):
            model = random_model(rng)
            text = write_lp(model)
            again = parse_lp(text)
            assert model.content_equal(again)
            assert write_lp(again) == text

    def test_golden_two_var(self, data_dir):
        golden = data_dir / "golden" / "two_var.lp"
        model = parse_lp(golden.read_text())
        assert write_lp(model) == golden.read_text()

    def test_scuc_fixture_parses(self, data_dir):
        model = parse_lp((data_dir / "lp" / "scuc_like.lp").read_text())
        assert model.num_rows == 1036 and model.num_cols == 240
        assert write_lp(parse_lp(write_lp(model))) == write_lp(model)

    def test_sos_weights_are_member_order(self):
        rng = np.random.default_rng(0)
        model = random_model(rng, with_annotations=False)
        model.annotations = [GroundSOS(kind=1, members=[0, 1], weights=[1, 2])]
        text = write_lp(model)
        assert "S1 ::" in text
        assert "v0:1 v1:2" in text

    def test_column_order_preserved_without_objective_mention(self):
        # c = 0 for the first column; order must still survive the round trip
        model = GroundModel(
            sense="minimize", c=np.array([0.0, 1.0]), obj_const=0.0,
            A=sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])),
            b=np.array([1.0, 2.0]), senses=["<=", "<="],
            lb=np.zeros(2), ub=np.full(2, math.inf),
            integrality=np.zeros(2, dtype=int),
            col_names=["later", "earlier"], row_names=["r0", "r1"])
        again = parse_lp(write_lp(model))
        assert again.col_names == ["later", "earlier"]
        assert model.content_equal(again)


class TestPwlPreLowering:
    def test_pwl_is_lowered_before_writing(self):
        model = GroundModel(
            sense="minimize", c=np.array([0.0, 1.0]), obj_const=0.0,
            A=sp.csr_matrix((0, 2)), b=np.zeros(0), senses=[],
            lb=np.zeros(2), ub=np.array([20.0, math.inf]),
            integrality=np.zeros(2, dtype=int),
            col_names=["q", "cost"], row_names=[],
            annotations=[GroundPWL(x_col=0, y_col=1, points=[(0, 0), (10, 5), (20, 40)])])
        text = write_lp(model)
        assert "SOS" in text and "S2 ::" in text
        parsed = parse_lp(text)
        assert parsed.num_cols > 2  # interpolation weights appeared


class TestParseErrors:
    def test_missing_objective(self):
        with pytest.raises(LpSyntaxError):
            parse_lp("Subject To\n c1: x <= 1\nEnd\n")

    def test_bad_token_position(self):
        with pytest.raises(LpSyntaxError) as err:
            parse_lp("Minimize\n obj: x\nSubject To\n c1: x § 1\nEnd\n")
        assert err.value.line == 4

    def test_truncated_bound(self):
        with pytest.raises(LpSyntaxError):
            parse_lp("Minimize\n obj: x\nBounds\n 1 <=\nEnd\n")

    def test_foreign_file_first_appearance_order(self):
        text = """Minimize
 obj: 2 b + a
Subject To
 r1: a + b >= 1
End
"""
        model = parse_lp(text)
        assert model.col_names == ["b", "a"]
        assert model.c.tolist() == [2.0, 1.0]
