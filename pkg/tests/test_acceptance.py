"""Acceptance suite: one test per release criterion, each printing a
PASS line with its runtime (run ``pytest tests/test_acceptance.py -v -s``)."""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import (
    ScriptedRng, brute_force_comp, brute_force_prod, build_catalog, naive_coverage,
    plan_for,
)
from lp_oracle import dual_objective, generate_box_lp, vertex_enum_optimum
from windplan.cep import (
    Bus, CepInstance, Line, Placement, Technology, annualize, build_lp, decode_solution,
)
from windplan.cli import main
from windplan.hydro import HydroCountryParams, RunoffCell, RunoffGrid, phs_storage, ror_capacity_factors
from windplan.lp import solve
from windplan.mps import export_mps, import_mps
from windplan.resource import CriticalityMatrix
from windplan.siting import (
    AnnealParams, adjust_cardinality, compute_cardinalities, coverage_count,
    greedy_init, local_search, run_multistart,
)
from windplan.synth import gen_synthetic
from windplan.timeseries import TimeSeries


def report(number: int, message: str, started: float) -> None:
    print(f"ACCEPTANCE {number} PASS: {message} ({time.perf_counter() - started:.2f}s)")


# ---------------------------------------------------------------------------
# 1. Cardinality preprocessing reproduces the published per-zone quotas
# ---------------------------------------------------------------------------

ZONE_TABLE = [
    # zone, target GW, candidates, legacy sites, raw quota, final quota
    ("UK", 80, 700, 39, 61, 61),
    ("NL", 60, 102, 8, 46, 46),
    ("FR", 57, 231, 7, 43, 43),
    ("DE", 36, 81, 17, 28, 28),
    ("DK", 35, 119, 15, 27, 27),
    ("NO", 30, 187, 1, 23, 23),
    ("PL", 28, 51, 10, 22, 22),
    ("IE", 22, 219, 5, 17, 17),
    ("IT", 20, 112, 2, 16, 16),
    ("SE", 20, 254, 9, 16, 16),
    ("FI", 15, 128, 5, 12, 12),
    ("ES", 13, 77, 0, 10, 10),
    ("GR", 10, 39, 11, 8, 11),
    ("PT", 9, 17, 1, 7, 7),
    ("BE", 6, 4, 2, 5, 4),
    ("LV", 4, 8, 1, 4, 4),
    ("LT", 3, 49, 0, 3, 3),
    ("EE", 1, 47, 2, 1, 2),
    ("HR", 1, 47, 0, 1, 1),
]


def test_acceptance_1_cardinality_table():
    started = time.perf_counter()
    targets = {zone: gw * 1000.0 for zone, gw, *_ in ZONE_TABLE}
    raw = compute_cardinalities(targets)  # defaults: 6 MW/km2, 442.5 km2, 50%
    total = 0
    for zone, _, candidates, legacy, expect_raw, expect_final in ZONE_TABLE:
        assert raw[zone] == expect_raw, zone
        final = adjust_cardinality(raw[zone], candidates, legacy)
        assert final == expect_final, zone
        total += final
    assert total == 353
    assert sum(raw.values()) == 350
    assert time.perf_counter() - started < 1.0
    report(1, "19-zone quota table reproduced, total 353", started)


# ---------------------------------------------------------------------------
# 2. PROD equals brute force on 200 random instances
# ---------------------------------------------------------------------------

def test_acceptance_2_prod_optimality():
    started = time.perf_counter()
    from windplan.siting import solve_prod

    rng = np.random.default_rng(2024)
    for trial in range(200):
        n = int(rng.integers(3, 13))
        n_parts = int(rng.integers(1, 4))
        parts = [f"P{rng.integers(0, n_parts)}" for _ in range(n)]
        with_legacy = trial % 2 == 0
        legacy = [150.0 if with_legacy and rng.random() < 0.25 else 0.0 for _ in range(n)]
        catalog = build_catalog(rng.uniform(0, 1, (n, 5)), parts, legacy_MW=legacy)
        quotas = {}
        for pid, ids in catalog.partitions.items():
            n_leg = sum(1 for s in ids if catalog.site(s).is_legacy)
            hi = min(len(ids), max(n_leg, 4))
            quotas[pid] = int(rng.integers(max(1, n_leg), hi + 1))
        plan = plan_for(catalog, quotas)
        solution = solve_prod(catalog, plan)
        assert solution.objective == brute_force_prod(catalog, plan), trial
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report(2, "200 random instances match exhaustive enumeration exactly", started)


# ---------------------------------------------------------------------------
# 3. Bitset coverage equals the naive recount
# ---------------------------------------------------------------------------

def test_acceptance_3_coverage_oracle():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    for trial in range(100):
        n_sites = int(rng.integers(2, 65))
        n_windows = int(rng.integers(10, 1001))
        bits = rng.random((n_sites, n_windows)) < rng.uniform(0.05, 0.6)
        ids = tuple(f"s{i:02d}" for i in range(n_sites))
        selected = [sid for sid in ids if rng.random() < 0.4]
        for c in (1, math.ceil(n_sites / 2), n_sites):
            matrix = CriticalityMatrix.from_bool(bits, c, 1, ids)
            assert coverage_count(matrix, selected) == naive_coverage(matrix, selected)
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0
    report(3, "100 random matrices, three thresholds each, exact agreement", started)


# ---------------------------------------------------------------------------
# 4. Local search quality on the seeded benchmark instance
# ---------------------------------------------------------------------------

def test_acceptance_4_local_search_quality():
    started = time.perf_counter()
    rng = np.random.default_rng(40)
    catalog = build_catalog(rng.uniform(0, 1, (10, 8)), "P")
    bits = rng.random((10, 200)) < 0.10
    matrix = CriticalityMatrix.from_bool(bits, 1, 1, tuple(catalog.index_of))
    plan = plan_for(catalog, {"P": 3})
    optimum, _ = brute_force_comp(matrix, catalog, plan)
    greedy = greedy_init(matrix, catalog, plan)
    params = AnnealParams(iterations=200, neighbors=100, radius=1,
                          return_mode="best_visited")
    hits = 0
    for base_seed in range(0, 5000, 100):  # 50 distinct base seeds
        best = run_multistart(matrix, catalog, plan, params, n_runs=5,
                              base_seed=base_seed)
        assert best.objective >= greedy.objective  # required in 100% of seeds
        if best.objective == optimum:
            hits += 1
    assert hits >= 45, f"optimum reached in only {hits}/50 seeds"
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    report(4, f"optimum in {hits}/50 seeds, never below the greedy start", started)


# ---------------------------------------------------------------------------
# 5. Annealing loop matches a hand-simulated trace
# ---------------------------------------------------------------------------

def _fidelity_setup():
    catalog = build_catalog(np.full((4, 5), 0.5), "P")
    bits = np.array([
        [1, 0, 0, 0, 0],
        [0, 1, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [1, 1, 1, 1, 1],
    ], dtype=bool)
    matrix = CriticalityMatrix.from_bool(bits, 1, 1, tuple(catalog.index_of))
    plan = plan_for(catalog, {"P": 2})
    return catalog, matrix, plan


def _scripted(sequence):
    def sampler(current, i, j, rng):
        return sequence[(i, j)]
    return sampler


def test_acceptance_5_algorithm_fidelity():
    """Hand-simulated trace on the 4-site instance.

    Coverage table: s00 -> {w0}, s01 -> {w1}, s02 -> {w0, w1},
    s03 -> {w0..w4}.  The greedy start picks s03 (covers all five windows)
    and then s00 on an all-zero-gain tie, so the incumbent starts at
    f = 5 with {s00, s03}.  Schedule: T(0) = 100, T(1) = 100 * exp(-5).
    """
    started = time.perf_counter()
    catalog, matrix, plan = _fidelity_setup()
    params = AnnealParams(iterations=2, neighbors=1, radius=1, t0=100.0, decay=10.0)
    assert params.temperature(0) == pytest.approx(100.0)
    assert params.temperature(1) == pytest.approx(100.0 * math.exp(-5.0), rel=1e-12)
    init = greedy_init(matrix, catalog, plan)
    assert init.selected == {"s00", "s03"} and init.objective == 5

    def run(sequence, uniforms, mode):
        trace = []
        out = local_search(
            init, matrix, catalog, plan,
            AnnealParams(iterations=2, neighbors=1, radius=1, t0=100.0, decay=10.0,
                         return_mode=mode),
            ScriptedRng(uniforms),
            neighbor_sampler=_scripted(sequence),
            on_iteration=lambda i, d, acc, f: trace.append((i, d, acc, f)),
        )
        return out, trace

    # Run A: downhill accepted (u = 0.9 < exp(-3/100) = 0.97045), then a
    # strict improvement accepted without any Bernoulli draw (the scripted
    # uniform list holds exactly one value, so a second draw would fail).
    out_a, trace_a = run({(0, 0): ("s00", "s02"), (1, 0): ("s02", "s03")}, [0.9],
                         "final_incumbent")
    assert trace_a == [(0, -3.0, True, 2), (1, 3.0, True, 5)]
    assert out_a.objective == 5

    # Run B: downhill rejected just above p at T(0), the same move accepted
    # just below p at the much colder T(1).
    p0 = math.exp(-3.0 / 100.0)
    p1 = math.exp(-3.0 / (100.0 * math.exp(-5.0)))
    assert p0 == pytest.approx(0.9704455335, abs=1e-9)
    assert 0.009 < p1 < 0.013
    sequence = {(0, 0): ("s00", "s01"), (1, 0): ("s00", "s01")}
    out_b, trace_b = run(sequence, [p0 + 1e-4, p1 - 1e-3], "final_incumbent")
    assert trace_b == [(0, -3.0, False, 5), (1, -3.0, True, 2)]
    assert out_b.objective == 2  # the plain annealing incumbent may end below the start
    assert out_b.selected == {"s00", "s01"}

    # best_visited mode returns the best solution ever evaluated instead.
    out_c, _ = run(sequence, [p0 + 1e-4, p1 - 1e-3], "best_visited")
    assert out_c.objective == 5
    assert out_c.selected == init.selected
    report(5, "incumbent trajectory matches the hand-simulated trace", started)


# ---------------------------------------------------------------------------
# 6. Sizing toy optimum and storage recursion
# ---------------------------------------------------------------------------

def test_acceptance_6_cep_toy_optimum():
    started = time.perf_counter()
    gas = Technology(id="gas", kind="dispatchable", capex=100.0, lifetime_years=25.0,
                     fixed_om=5.0, variable_om=2.0)
    instance = CepInstance(
        buses=(Bus(id="b1", demand=TimeSeries([1.0, 1.0]), reserve_margin=0.2),),
        technologies=(gas,),
        placements=(Placement(bus="b1", tech="gas"),),
        shed_penalty=1000.0,
        weight_hours=1.0,
        firm_technologies=frozenset({"gas"}),
        discount_rate=0.0,
    )
    lp, index = build_lp(instance)
    sol = solve(lp)
    assert sol.status == "optimal"
    decoded = decode_solution(sol, index, instance)
    zeta = annualize(100.0, 25.0, 0.0)
    expected_cost = (zeta + 5.0) * 1.2 + 2.0 * 2.0
    assert decoded.tech_capacity_total[("b1", "gas")] == pytest.approx(1.2, rel=1e-6)
    assert decoded.objective == pytest.approx(expected_cost, rel=1e-6)
    assert decoded.served_MWh == pytest.approx(2.0, rel=1e-6)
    residual = decoded.generation[("b1", "gas")] + decoded.ens["b1"] - np.array([1.0, 1.0])
    assert np.all(np.abs(residual) <= 1e-6)

    # storage-augmented variant: cyclic state of charge must close
    bat = Technology(id="bat", kind="storage", capex=30.0, energy_capex=10.0,
                     lifetime_years=10.0, variable_om=0.01, eta_charge=0.9,
                     eta_discharge=0.9, eta_self=0.99)
    aug = CepInstance(
        buses=(Bus(id="b1", demand=TimeSeries([1.0, 3.0, 1.0, 2.5, 0.5, 2.0])),),
        technologies=(gas, bat),
        placements=(Placement(bus="b1", tech="gas"), Placement(bus="b1", tech="bat")),
        shed_penalty=1000.0,
        weight_hours=1.0,
        firm_technologies=frozenset({"gas"}),
        discount_rate=0.0,
    )
    lp2, index2 = build_lp(aug)
    decoded2 = decode_solution(solve(lp2), index2, aug)
    key = ("b1", "bat")
    e, pc, pd = decoded2.soc[key], decoded2.charge[key], decoded2.discharge[key]
    assert decoded2.storage_energy_new[key] > 0.0
    for t in range(len(e)):
        forward = 0.99 * e[(t - 1) % len(e)] + 0.9 * pc[t] - pd[t] / 0.9
        assert abs(e[t] - forward) <= 1e-6
    for bus in aug.buses:
        resid = (decoded2.generation[("b1", "gas")] + pd - pc + decoded2.ens["b1"]
                 - bus.demand.values)
        assert np.all(np.abs(resid) <= 1e-6 * np.maximum(1.0, bus.demand.values))
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0
    report(6, "hand-solved sizing toy and cyclic storage recursion", started)


# ---------------------------------------------------------------------------
# 7. CO2 budget monotonicity and the forced-shedding corner
# ---------------------------------------------------------------------------

def test_acceptance_7_co2_monotonicity():
    started = time.perf_counter()
    gas = Technology(id="gas", kind="dispatchable", annuity=0.0, variable_om=0.5,
                     efficiency=0.5, co2_per_mwh_th=0.2)
    demand_a = TimeSeries([2.0, 1.0])
    demand_b = TimeSeries([1.0, 1.5])
    omega = 2.0
    costs = []
    for budget in (100.0, 1.0, 0.5, 0.2, 0.0):
        instance = CepInstance(
            buses=(Bus(id="A", demand=demand_a, reserve_margin=0.2),
                   Bus(id="B", demand=demand_b, reserve_margin=0.2)),
            technologies=(gas,),
            placements=(Placement(bus="A", tech="gas"), Placement(bus="B", tech="gas")),
            lines=(Line(id="AB", from_bus="A", to_bus="B", legacy_MW=10.0),),
            co2_budget=budget,
            shed_penalty=50.0,
            weight_hours=omega,
            firm_technologies=frozenset({"gas"}),
        )
        lp, index = build_lp(instance)
        sol = solve(lp)
        assert sol.status == "optimal"
        decode_solution(sol, index, instance)
        costs.append(sol.objective)
    for tighter, looser in zip(costs[1:], costs[:-1]):
        assert tighter >= looser - 1e-9
    expected = 50.0 * omega * float(demand_a.values.sum() + demand_b.values.sum())
    assert costs[-1] == pytest.approx(expected, rel=1e-12)
    report(7, f"costs non-decreasing over budgets, zero-budget corner exact", started)


# ---------------------------------------------------------------------------
# 8. LP backend: vertex oracle, strong duality, MPS round trips
# ---------------------------------------------------------------------------

def test_acceptance_8_lp_backend():
    started = time.perf_counter()
    rng = np.random.default_rng(88)
    for trial in range(50):
        lp = generate_box_lp(rng, max_vars=8, max_rows=8)
        out = solve(lp)
        assert out.status == "optimal", trial
        oracle = vertex_enum_optimum(lp)
        assert out.objective == pytest.approx(oracle, abs=1e-8), trial
        gap = abs(dual_objective(lp, out) - out.objective)
        assert gap <= 1e-6 * max(1.0, abs(out.objective)), trial

    from test_mps import assert_same_lp, random_lp

    rng2 = np.random.default_rng(89)
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        for trial in range(20):
            lp = random_lp(rng2)
            path = Path(tmp) / f"acc{trial}.mps"
            export_mps(lp, path)
            assert_same_lp(lp, import_mps(path))
    report(8, "50 oracle matches, strong duality, 20 exact MPS round trips", started)


# ---------------------------------------------------------------------------
# 9. Hydro preprocessing
# ---------------------------------------------------------------------------

def test_acceptance_9_hydro():
    started = time.perf_counter()
    grid = RunoffGrid((RunoffCell("c1", "XX", 1.0, TimeSeries([0.1] * 9 + [1.0])),))
    params = {"XX": HydroCountryParams(country="XX", flood_threshold=0.9)}
    result = ror_capacity_factors(grid, params)["XX"]
    assert result.clip_level == pytest.approx(0.19, abs=1e-12)

    assert phs_storage(2000.0) == pytest.approx(12000.0)

    rng = np.random.default_rng(9)
    for _ in range(100):
        raw = rng.uniform(0.0, 1.0, int(rng.integers(20, 200))) + 1e-9
        g = RunoffGrid((RunoffCell("c1", "YY", 1.0, TimeSeries(raw)),))
        normalized = raw / raw.max()
        previous = None
        for threshold in (1.0, 0.85, 0.6):
            p = {"YY": HydroCountryParams(country="YY", flood_threshold=threshold)}
            values = ror_capacity_factors(g, p, renormalize=False)["YY"].capacity_factors.values
            assert np.all(values <= normalized + 1e-15)
            assert np.all(values >= 0.0) and np.all(values <= 1.0)
            if previous is not None:
                assert np.all(values <= previous + 1e-15)
            previous = values
    report(9, "clip level exact, PHS default, clipping monotone on 100 series", started)


# ---------------------------------------------------------------------------
# 10. End-to-end determinism of the pipeline
# ---------------------------------------------------------------------------

def _digest_dir(directory: Path) -> dict:
    return {
        p.name: hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(Path(directory).iterdir())
    }


def test_acceptance_10_pipeline_determinism(tmp_path):
    started = time.perf_counter()
    data = tmp_path / "data"
    gen_synthetic(data, seed=42, n_sites=6, n_partitions=2, n_periods=144)
    config = {
        "paths": {
            "catalog": "data/sites.csv",
            "wind_speeds": "data/wind_speeds.csv",
            "demand": "data/demand.csv",
            "output_dir": "out",
        },
        "resolution_hours": 1.0,
        "resample_factor": 3,
        "siting": {
            "scheme": "comp",
            "partitioned": True,
            "varsigma": 0.3,
            "delta": 1,
            "targets_MW": {"P1": 2000.0, "P2": 2000.0},
            "anneal": {"iterations": 25, "neighbors": 15, "radius": 1},
            "n_runs": 3,
            "base_seed": 42,
        },
        "cep": {"solver": "embedded", "reserve_margin": 0.2, "shed_penalty": 500.0},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config, indent=1), encoding="utf-8")
    digests = []
    for label, threads in (("run1", 1), ("run2", 1), ("run8", 8)):
        out = tmp_path / label
        assert main(["pipeline", str(config_path), "--out", str(out),
                     "--threads", str(threads)]) == 0
        digests.append(_digest_dir(out))
    assert digests[0] == digests[1], "same seed, same thread count"
    assert digests[0] == digests[2], "thread count must not alter outputs"
    report(10, "byte-identical outputs across reruns and thread counts 1/8", started)
