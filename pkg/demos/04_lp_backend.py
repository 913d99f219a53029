"""The LP layer on its own: build, solve, export, round-trip.

A small product-mix LP goes through the reference simplex, then through
the MPS writer and back, and finally the complementarity MIR of a toy
siting instance is exported for an external MILP solver and its incumbent
is read back in.

Run:  python3 demos/04_lp_backend.py
"""

import tempfile
from pathlib import Path

import numpy as np

from windplan.lp import LpBuilder, solve
from windplan.mps import export_mps, import_mps, import_solution, write_solution
from windplan.resource import CriticalityMatrix, SiteCatalog, make_site
from windplan.siting import (
    CardinalityPlan, PartitionQuota, build_comp_mir, local_search,
    mir_solution_to_init, AnnealParams,
)
from windplan.timeseries import TimeSeries

workdir = Path(tempfile.mkdtemp(prefix="windplan_lp_"))

# 1. A product-mix LP: maximise 3x + 5y (minimise the negation).
builder = LpBuilder(name="product_mix")
x = builder.add_var("x", 0.0, 4.0, -3.0)
y = builder.add_var("y", 0.0, 6.0, -5.0)
row = builder.add_row("machine", "<", 18.0)
builder.add_entry(row, x, 3.0)
builder.add_entry(row, y, 2.0)
lp = builder.build()
solution = solve(lp)
print(f"status {solution.status}, objective {solution.objective:.1f}, "
      f"x = {solution.x.round(3)}")
print(f"row dual {solution.duals.round(4)}, reduced costs {solution.reduced_costs.round(4)}")

# 2. MPS round trip is exact.
path = export_mps(lp, workdir / "product_mix.mps")
again = solve(import_mps(path))
print(f"after MPS round trip: objective {again.objective:.1f}")
print("---- file head ----")
print("\n".join(path.read_text().splitlines()[:8]))

# 3. The complementarity MIR of a 4-site toy, exported for an external
#    MILP solver.  Here we fake the external incumbent with our own file.
cf = TimeSeries([0.5, 0.5])
sites = tuple(make_site(f"s{i}", float(i), 50.0, "Z", 0.0, 400.0, cf) for i in range(4))
catalog = SiteCatalog(sites)
bits = np.array([
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [1, 1, 0, 0, 0],
    [1, 1, 1, 1, 1],
], dtype=bool)
matrix = CriticalityMatrix.from_bool(bits, 1, 1, tuple(s.id for s in sites))
plan = CardinalityPlan((PartitionQuota("Z", 2 * 1327.5, 4, 0, 2, 2),))
mir = build_comp_mir(matrix, catalog, plan)
mir_path = export_mps(mir, workdir / "comp_mir.mps")
print(f"\nMIR exported: {mir.n_vars} columns "
      f"({int(mir.integer.sum())} binary), {mir.n_rows} rows -> {mir_path.name}")

incumbent = {name: 0.0 for name in mir.var_names}
incumbent.update({"x|s2": 1.0, "x|s3": 1.0})
write_solution(workdir / "external.sol", list(incumbent), list(incumbent.values()))
imported, report = import_solution(workdir / "external.sol", mir.var_names, mir)
init = mir_solution_to_init(dict(zip(mir.var_names, imported.x)), matrix, catalog, plan)
print(f"external incumbent -> init {sorted(init.selected)} covering {init.objective:.0f}")

polished = local_search(init, matrix, catalog, plan,
                        AnnealParams(iterations=50, neighbors=10), rng=0)
print(f"after local search: {sorted(polished.selected)} covering {polished.objective:.0f}")
