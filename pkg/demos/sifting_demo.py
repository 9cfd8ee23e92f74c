"""Sifting on a wide LP (columns) and on the bundled tall LP (rows).

Prints the per-iteration history the CLI would dump as CSV: watch the active
set grow until nothing prices out, and compare against the full solve.
"""

from pathlib import Path

import numpy as np

from milpforge.lp_io import parse_lp
from milpforge.sifting import SiftConfig, _standard_form_model, sift_columns, sift_constraints
from milpforge.solver import solve

DATA = Path(__file__).parent.parent / "src" / "milpforge" / "data"


def column_demo():
    print("== column sifting: min c'x, Ax = b, x >= 0 with n >> m ==")
    rng = np.random.default_rng(7)
    m, n = 10, 400
    A = rng.uniform(-1, 1, (m, n))
    x0 = np.where(rng.uniform(0, 1, n) < 0.25, rng.uniform(0, 2, n), 0.0)
    b = A @ x0
    c = rng.uniform(0.05, 10.0, n)

    full = solve(_standard_form_model(c, A, b, range(n)))
    sol, history = sift_columns(c, A, b, SiftConfig(initial_size=25, seed=7))
    print(history.to_csv())
    print(f"full solve: {full.objective:.6f}")
    print(f"sifted:     {sol.objective:.6f} "
          f"using {history.rows[-1]['active']}/{n} columns\n")


def row_demo():
    print("== constraint sifting: the bundled unit-commitment-flavored LP ==")
    model = parse_lp((DATA / "lp" / "scuc_like.lp").read_text())
    print(f"{model.num_rows} rows x {model.num_cols} columns; "
          "most rows are inactive at the optimum")
    full = solve(model)
    sol, history = sift_constraints(model, SiftConfig(initial_size=60, seed=11))
    print(history.to_csv())
    print(f"full solve: {full.objective:.4f}")
    share = history.rows[-1]["active"] / model.num_rows
    print(f"sifted:     {sol.objective:.4f} "
          f"with {history.rows[-1]['active']}/{model.num_rows} rows active ({share:.0%})")


if __name__ == "__main__":
    column_demo()
    row_demo()
