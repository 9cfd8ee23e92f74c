"""Reference subprocess solver: reads an LP file, writes a JSON solution file.

Usage: python -m milpforge._worker <model.lp> <solution.json>

This is the contract implementation for SubprocessEngine and a template for
wrapping third-party solver binaries.
"""

import json
import sys

from .lp_io import parse_lp
from .solver import ScipyEngine, SolverParams, solve


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m milpforge._worker <model.lp> <solution.json>", file=sys.stderr)
        return 2
    lp_path, out_path = argv
    with open(lp_path) as fh:
        model = parse_lp(fh.read())
    sol = solve(model, SolverParams(), engine=ScipyEngine())
    doc = {
        "status": sol.status.value,
        "objective": sol.objective,
        "primal": sol.primal,
        "duals": sol.duals,
        "iterations": sol.iterations,
        "mip_gap": sol.mip_gap,
        "message": sol.message,
    }
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
