"""windplan: offshore wind siting and power-system capacity expansion.

The package is organised in two stages.  Stage one selects a set of
renewable generation sites from a catalog of candidates, either by
aggregate output (``solve_prod``) or by spatiotemporal complementarity
(greedy initialisation plus annealed local search over a window
criticality matrix).  Stage two builds a capacity-expansion linear
program over a bus network (``cep``) and solves it with the bundled
reference simplex solver (``lp``) or exports it as an MPS file for an
external solver.
"""

from windplan.timeseries import TimeSeries, resample_mean, window_aggregate, empirical_quantile
from windplan.powercurve import PowerCurve, select_turbine, smooth_power_curve, apply_transfer
from windplan.resource import Site, SiteCatalog, CriticalityMatrix, build_criticality_matrix
from windplan.siting import (
    AnnealParams,
    CardinalityPlan,
    PartitionQuota,
    SitingSolution,
    adjust_cardinality,
    build_plan,
    compute_cardinalities,
    coverage_count,
    greedy_init,
    local_search,
    residual_demand,
    run_multistart,
    sample_neighbor,
    solve_prod,
)
from windplan.lp import CanonicalLp, LpBuilder, LpSolution, solve
from windplan.cep import (
    Bus,
    CepInstance,
    CepSolution,
    Line,
    Placement,
    SitedAsset,
    Technology,
    annualize,
    build_lp,
    capacity_credit,
    decode_solution,
)
from windplan.hydro import (
    HydroCountryParams,
    RunoffGrid,
    calibrate_flow_multiplier,
    phs_storage,
    ror_capacity_factors,
    sto_inflows,
)

__version__ = "0.1.0"

__all__ = [
    "TimeSeries", "resample_mean", "window_aggregate", "empirical_quantile",
    "PowerCurve", "select_turbine", "smooth_power_curve", "apply_transfer",
    "Site", "SiteCatalog", "CriticalityMatrix", "build_criticality_matrix",
    "AnnealParams", "CardinalityPlan", "PartitionQuota", "SitingSolution",
    "adjust_cardinality", "build_plan", "compute_cardinalities", "coverage_count",
    "greedy_init", "local_search", "residual_demand", "run_multistart",
    "sample_neighbor", "solve_prod",
    "CanonicalLp", "LpBuilder", "LpSolution", "solve",
    "Bus", "CepInstance", "CepSolution", "Line", "Placement", "SitedAsset",
    "Technology", "annualize", "build_lp", "capacity_credit", "decode_solution",
    "HydroCountryParams", "RunoffGrid", "calibrate_flow_multiplier",
    "phs_storage", "ror_capacity_factors", "sto_inflows",
    "__version__",
]
