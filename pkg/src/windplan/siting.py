"""Site selection schemes.

Two schemes are implemented over a common :class:`~windplan.resource.SiteCatalog`:

* ``prod`` — pick the highest-mean-capacity-factor sites per partition.
  The problem decomposes by partition, so a sort is globally optimal.
* ``comp`` — maximise the number of non-critical time windows (windows in
  which at least ``c`` selected sites cover demand).  The integer program
  is attacked with a deterministic greedy initialiser followed by an
  annealed local search over fixed-cardinality swaps; a mixed-integer
  relaxation can alternatively be exported as an MPS file and the incumbent
  of any external solver imported back as the initial point.

Cardinality preprocessing converts per-partition capacity targets into
site counts, and residual-demand diagnostics summarise what a selection
does to the system load.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from windplan.resource import CriticalityMatrix, SiteCatalog
from windplan.timeseries import TimeSeries

DEFAULT_POWER_DENSITY_MW_KM2 = 6.0
DEFAULT_SITE_AREA_KM2 = 442.5
DEFAULT_UTILIZATION = 0.5

_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


# ---------------------------------------------------------------------------
# Cardinality preprocessing
# ---------------------------------------------------------------------------

def compute_cardinalities(
    targets_MW: Mapping[str, float],
    power_density_MW_km2: float = DEFAULT_POWER_DENSITY_MW_KM2,
    site_area_km2: float = DEFAULT_SITE_AREA_KM2,
    utilization: float = DEFAULT_UTILIZATION,
) -> dict[str, int]:
    """Raw per-partition site counts from capacity targets.

    A single generic site accommodates ``density * area * utilization`` MW,
    so the raw count is the ceiling of the target divided by that amount.
    """
    if power_density_MW_km2 <= 0 or site_area_km2 <= 0 or utilization <= 0:
        raise ValueError("power density, site area and utilization must all be positive")
    per_site = power_density_MW_km2 * site_area_km2 * utilization
    out: dict[str, int] = {}
    for partition, target in targets_MW.items():
        if target <= 0:
            raise ValueError(f"partition {partition}: capacity target must be positive")
        out[partition] = math.ceil(target / per_site)
    return out


def adjust_cardinality(raw_k: int, candidate_count: int, legacy_count: int) -> int:
    """Clamp a raw site count to what the partition can actually host:
    never fewer than its legacy sites, never more than its candidates."""
    if legacy_count > candidate_count:
        raise ValueError(
            f"catalog inconsistency: {legacy_count} legacy sites but only "
            f"{candidate_count} candidates"
        )
    return min(candidate_count, max(legacy_count, raw_k))


@dataclass(frozen=True)
class PartitionQuota:
    partition_id: str
    target_capacity_MW: float
    candidate_count: int
    legacy_count: int
    raw_k: int
    final_k: int

    def __post_init__(self) -> None:
        if not self.legacy_count <= self.final_k <= self.candidate_count:
            raise ValueError(
                f"partition {self.partition_id}: quota {self.final_k} outside "
                f"[{self.legacy_count}, {self.candidate_count}]"
            )
        if self.final_k != adjust_cardinality(self.raw_k, self.candidate_count, self.legacy_count):
            raise ValueError(f"partition {self.partition_id}: final quota is not the clamped raw quota")


@dataclass(frozen=True)
class CardinalityPlan:
    """Per-partition deployment quotas plus the system-wide total."""

    quotas: tuple[PartitionQuota, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "quotas", tuple(self.quotas))
        ids = [q.partition_id for q in self.quotas]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate partition in plan")

    @property
    def k(self) -> int:
        return sum(q.final_k for q in self.quotas)

    @property
    def by_partition(self) -> dict[str, PartitionQuota]:
        return {q.partition_id: q for q in self.quotas}

    def default_threshold(self) -> int:
        """Coverage threshold requiring at least half the deployments."""
        return math.ceil(self.k / 2)


def build_plan(
    catalog: SiteCatalog,
    targets_MW: Mapping[str, float],
    power_density_MW_km2: float = DEFAULT_POWER_DENSITY_MW_KM2,
    site_area_km2: float = DEFAULT_SITE_AREA_KM2,
    utilization: float = DEFAULT_UTILIZATION,
    partitioned: bool = True,
) -> CardinalityPlan:
    """Assemble the deployment plan for a catalog.

    With ``partitioned=False`` the per-partition quotas are first computed
    as in the partitioned case, then collapsed into a single pool covering
    the whole catalog (total quota re-clamped to the catalog size).
    """
    unknown = set(targets_MW) - set(catalog.partitions)
    if unknown:
        raise ValueError(f"targets reference unknown partitions: {sorted(unknown)}")
    raw = compute_cardinalities(targets_MW, power_density_MW_km2, site_area_km2, utilization)
    quotas = []
    for partition, raw_k in raw.items():
        ids = catalog.partitions[partition]
        legacy = sum(1 for sid in ids if catalog.site(sid).is_legacy)
        quotas.append(
            PartitionQuota(
                partition_id=partition,
                target_capacity_MW=float(targets_MW[partition]),
                candidate_count=len(ids),
                legacy_count=legacy,
                raw_k=raw_k,
                final_k=adjust_cardinality(raw_k, len(ids), legacy),
            )
        )
    if partitioned:
        return CardinalityPlan(tuple(quotas))
    total_k = sum(q.final_k for q in quotas)
    candidates = sum(q.candidate_count for q in quotas)
    legacy = sum(q.legacy_count for q in quotas)
    merged = PartitionQuota(
        partition_id=_MERGED_PARTITION,
        target_capacity_MW=float(sum(targets_MW.values())),
        candidate_count=candidates,
        legacy_count=legacy,
        raw_k=total_k,
        final_k=adjust_cardinality(total_k, candidates, legacy),
    )
    return CardinalityPlan((merged,))


_MERGED_PARTITION = "__all__"


def _partition_members(catalog: SiteCatalog, plan: CardinalityPlan) -> dict[str, tuple[str, ...]]:
    """Site ids per plan partition (the merged pseudo-partition spans all)."""
    if len(plan.quotas) == 1 and plan.quotas[0].partition_id == _MERGED_PARTITION:
        return {_MERGED_PARTITION: tuple(site.id for site in catalog.sites)}
    members = {}
    for quota in plan.quotas:
        if quota.partition_id not in catalog.partitions:
            raise ValueError(f"plan references unknown partition {quota.partition_id!r}")
        members[quota.partition_id] = catalog.partitions[quota.partition_id]
    return members


# ---------------------------------------------------------------------------
# Solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SitingSolution:
    """A feasible selection: every legacy site included, exact quotas met."""

    scheme: str
    selected: frozenset[str]
    per_partition_counts: dict[str, int]
    objective: float
    rng_seed: int | None = None


def _finish_solution(
    catalog: SiteCatalog,
    plan: CardinalityPlan,
    selected: Iterable[str],
    objective: float,
    scheme: str,
    rng_seed: int | None = None,
) -> SitingSolution:
    selected = frozenset(selected)
    members = _partition_members(catalog, plan)
    counts: dict[str, int] = {}
    for quota in plan.quotas:
        chosen = [sid for sid in members[quota.partition_id] if sid in selected]
        if len(chosen) != quota.final_k:
            raise ValueError(
                f"partition {quota.partition_id}: selected {len(chosen)} sites, "
                f"quota is {quota.final_k}"
            )
        counts[quota.partition_id] = len(chosen)
    missing_legacy = catalog.legacy_ids - selected
    if missing_legacy:
        raise ValueError(f"legacy sites missing from selection: {sorted(missing_legacy)}")
    return SitingSolution(scheme, selected, counts, float(objective), rng_seed)


# ---------------------------------------------------------------------------
# Output-maximising scheme
# ---------------------------------------------------------------------------

def solve_prod(catalog: SiteCatalog, plan: CardinalityPlan) -> SitingSolution:
    """Globally optimal aggregate-output selection.

    In each partition the legacy sites are kept and the remaining slots go
    to the candidates with the highest mean capacity factor (ties to the
    lower catalog index).  The objective is the mean of the selected sites'
    mean capacity factors.
    """
    members = _partition_members(catalog, plan)
    selected: list[str] = []
    for quota in plan.quotas:
        ids = members[quota.partition_id]
        legacy = [sid for sid in ids if catalog.site(sid).is_legacy]
        others = [sid for sid in ids if not catalog.site(sid).is_legacy]
        free_slots = quota.final_k - len(legacy)
        if free_slots < 0 or quota.final_k > len(ids):
            raise ValueError(f"partition {quota.partition_id}: infeasible quota {quota.final_k}")
        ranked = sorted(others, key=lambda sid: (-catalog.site(sid).mean_cf, catalog.index_of[sid]))
        selected.extend(legacy)
        selected.extend(ranked[:free_slots])
    # fsum: exactly rounded, so the objective is independent of summation order
    objective = math.fsum(catalog.site(sid).mean_cf for sid in selected) / plan.k
    return _finish_solution(catalog, plan, selected, objective, "prod")


# ---------------------------------------------------------------------------
# Coverage counting
# ---------------------------------------------------------------------------

def coverage_count(matrix: CriticalityMatrix, selected: Iterable[str]) -> int:
    """Number of windows covered by at least ``threshold_c`` selected sites.

    Pure function over the packed bit rows: the selection is packed into a
    site bitmask, AND-ed against every window row and popcounted.
    """
    ids = list(selected)
    unknown = [sid for sid in ids if sid not in matrix.index_of]
    if unknown:
        raise ValueError(f"site ids not indexed in matrix: {unknown}")
    if not ids:
        return 0
    mask_bits = np.zeros(matrix.n_sites, dtype=bool)
    mask_bits[[matrix.index_of[sid] for sid in ids]] = True
    mask = np.packbits(mask_bits)
    hits = _POP8[matrix.packed_rows & mask[None, :]].sum(axis=1, dtype=np.int64)
    return int(np.count_nonzero(hits >= matrix.threshold_c))


def _counts_for(matrix: CriticalityMatrix, indices: np.ndarray) -> np.ndarray:
    """Per-window count of selected covering sites (dense int32)."""
    counts = np.zeros(matrix.n_windows, dtype=np.int32)
    for idx in indices:
        counts += matrix.dense[idx]
    return counts


def _objective(counts: np.ndarray, c: int) -> int:
    return int(np.count_nonzero(counts >= c))


# ---------------------------------------------------------------------------
# Greedy initialisation
# ---------------------------------------------------------------------------

def greedy_init(
    matrix: CriticalityMatrix,
    catalog: SiteCatalog,
    plan: CardinalityPlan,
) -> SitingSolution:
    """Deterministic coverage-greedy starting point.

    Starts from the legacy sites and repeatedly adds the candidate whose
    addition covers the most additional windows, restricted to partitions
    with remaining quota; ties break to the lower catalog index.  Stands in
    for solving a mixed-integer relaxation with an external solver (see
    :func:`build_comp_mir` for that escape hatch).
    """
    members = _partition_members(catalog, plan)
    dense = matrix.dense
    c = matrix.threshold_c
    selected: list[str] = []
    remaining: dict[str, int] = {}
    partition_of: dict[str, str] = {}
    for quota in plan.quotas:
        legacy = [sid for sid in members[quota.partition_id] if catalog.site(sid).is_legacy]
        selected.extend(legacy)
        remaining[quota.partition_id] = quota.final_k - len(legacy)
        for sid in members[quota.partition_id]:
            partition_of[sid] = quota.partition_id
    counts = _counts_for(matrix, np.array([matrix.index_of[sid] for sid in selected], dtype=np.intp))
    chosen = set(selected)
    candidates = [site.id for site in catalog.sites if site.id not in chosen and site.id in partition_of]
    while any(v > 0 for v in remaining.values()):
        open_ids = [sid for sid in candidates if sid not in chosen and remaining[partition_of[sid]] > 0]
        if not open_ids:
            raise ValueError("quota left open but no candidates remain")
        idx = np.array([matrix.index_of[sid] for sid in open_ids], dtype=np.intp)
        needy = (counts == c - 1).astype(np.int64)
        gains = dense[idx] @ needy
        best = int(np.argmax(gains))  # first occurrence = lowest catalog index
        pick = open_ids[best]
        chosen.add(pick)
        selected.append(pick)
        remaining[partition_of[pick]] -= 1
        counts += dense[matrix.index_of[pick]]
    return _finish_solution(catalog, plan, selected, _objective(counts, c), "comp")


# ---------------------------------------------------------------------------
# Neighbourhood structure
# ---------------------------------------------------------------------------

class _SearchSpace:
    """Index-level view of the swap neighbourhood.

    Selected and unselected non-legacy sites are kept in flat arrays grouped
    by partition; per-partition segment sizes are invariant under swaps, so
    the feasible allocation set of a radius is fixed for the whole search.
    """

    def __init__(self, matrix: CriticalityMatrix, catalog: SiteCatalog,
                 plan: CardinalityPlan, selected: Iterable[str]):
        members = _partition_members(catalog, plan)
        selected = set(selected)
        self.matrix = matrix
        self.catalog = catalog
        self.plan = plan
        self.legacy_idx = np.array(
            sorted(matrix.index_of[sid] for sid in catalog.legacy_ids), dtype=np.intp
        )
        sel_segments: list[np.ndarray] = []
        uns_segments: list[np.ndarray] = []
        for quota in plan.quotas:
            ids = members[quota.partition_id]
            sel = [matrix.index_of[s] for s in ids if s in selected and not catalog.site(s).is_legacy]
            uns = [matrix.index_of[s] for s in ids if s not in selected and not catalog.site(s).is_legacy]
            sel_segments.append(np.array(sel, dtype=np.intp))
            uns_segments.append(np.array(uns, dtype=np.intp))
        self.sel_sizes = np.array([seg.size for seg in sel_segments], dtype=np.intp)
        self.uns_sizes = np.array([seg.size for seg in uns_segments], dtype=np.intp)
        self.sel_off = np.concatenate([[0], np.cumsum(self.sel_sizes)[:-1]])
        self.uns_off = np.concatenate([[0], np.cumsum(self.uns_sizes)[:-1]])
        self.sel_flat = (
            np.concatenate(sel_segments) if sel_segments else np.empty(0, dtype=np.intp)
        )
        self.uns_flat = (
            np.concatenate(uns_segments) if uns_segments else np.empty(0, dtype=np.intp)
        )
        self.caps = np.minimum(self.sel_sizes, self.uns_sizes)

    def allocations(self, r: int) -> tuple[list[tuple[int, ...]], int]:
        """Feasible per-partition swap allocations for radius ``r``.

        Returns the lexicographically ordered allocation vectors and the
        effective radius (reduced when the pools cannot host ``r`` swaps).
        """
        r_eff = int(min(r, int(self.caps.sum())))
        if r_eff == 0:
            raise ValueError("no feasible swap anywhere: every partition pool is empty")
        return _compositions(r_eff, [int(cap) for cap in self.caps]), r_eff

    def selection_ids(self) -> frozenset[str]:
        ids = [self.matrix.site_ids[i] for i in self.sel_flat]
        ids += [self.matrix.site_ids[i] for i in self.legacy_idx]
        return frozenset(ids)

    def apply_swap(self, partition: int, out_pos: np.ndarray, in_pos: np.ndarray) -> None:
        sel_at = self.sel_off[partition] + out_pos
        uns_at = self.uns_off[partition] + in_pos
        out_sites = self.sel_flat[sel_at].copy()
        self.sel_flat[sel_at] = self.uns_flat[uns_at]
        self.uns_flat[uns_at] = out_sites


def _compositions(total: int, caps: Sequence[int]) -> list[tuple[int, ...]]:
    out: list[tuple[int, ...]] = []
    vec = [0] * len(caps)

    def rec(i: int, remaining: int) -> None:
        if i == len(caps) - 1:
            if remaining <= caps[i]:
                vec[i] = remaining
                out.append(tuple(vec))
            return
        for v in range(min(caps[i], remaining) + 1):
            vec[i] = v
            rec(i + 1, remaining - v)

    if caps:
        rec(0, total)
    return out


def sample_neighbor(
    selected: Iterable[str],
    matrix: CriticalityMatrix,
    catalog: SiteCatalog,
    plan: CardinalityPlan,
    r: int,
    rng: np.random.Generator,
) -> frozenset[str]:
    """Draw one feasible neighbour of a selection uniformly at random.

    The number of swaps per partition is drawn uniformly over the feasible
    allocations of the radius (partitions without swappable sites always
    receive zero), then that many selected/unselected non-legacy sites are
    exchanged uniformly within each partition.  The result meets the same
    per-partition quotas and shares ``k - r`` members with the input
    whenever the pools can host ``r`` swaps.
    """
    solution = _finish_solution(catalog, plan, selected, 0.0, "probe")
    space = _SearchSpace(matrix, catalog, plan, solution.selected)
    allocations, _ = space.allocations(r)
    alloc = allocations[int(rng.integers(0, len(allocations)))]
    for partition, s in enumerate(alloc):
        if s == 0:
            continue
        out_pos = rng.choice(int(space.sel_sizes[partition]), size=s, replace=False)
        in_pos = rng.choice(int(space.uns_sizes[partition]), size=s, replace=False)
        space.apply_swap(partition, np.asarray(out_pos), np.asarray(in_pos))
    return space.selection_ids()


# ---------------------------------------------------------------------------
# Annealed local search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnnealParams:
    """Local-search schedule: ``temperature(i) = t0 * exp(-decay * i / iterations)``."""

    iterations: int = 5000
    neighbors: int = 500
    radius: int = 1
    t0: float = 100.0
    decay: float = 10.0
    return_mode: str = "best_visited"

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.neighbors < 1:
            raise ValueError("neighbors per iteration must be >= 1")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if not self.t0 > 0:
            raise ValueError("initial temperature must be positive")
        if self.return_mode not in ("best_visited", "final_incumbent"):
            raise ValueError(f"unknown return mode {self.return_mode!r}")

    def temperature(self, i: int) -> float:
        return self.t0 * math.exp(-self.decay * i / self.iterations)


def local_search(
    init: SitingSolution,
    matrix: CriticalityMatrix,
    catalog: SiteCatalog,
    plan: CardinalityPlan,
    params: AnnealParams,
    rng: np.random.Generator | int,
    neighbor_sampler: Callable[[tuple[str, ...], int, int, object], Iterable[str]] | None = None,
    on_iteration: Callable[[int, float, bool, int], None] | None = None,
) -> SitingSolution:
    """Simulated-annealing style local search over fixed-cardinality swaps.

    Each iteration draws ``params.neighbors`` candidates, keeps the best
    coverage gain, accepts it outright when strictly positive and otherwise
    with Bernoulli probability ``exp(gain / temperature(i))`` (a zero gain
    is therefore always accepted).  Legacy sites never move and are
    re-attached to the returned selection.

    ``neighbor_sampler(current_non_legacy_ids, i, j, rng)`` may be supplied
    to script the neighbour sequence (it must return the full non-legacy
    selection of neighbour ``j``); ``on_iteration(i, gain, accepted,
    incumbent_objective)`` observes the incumbent trajectory.

    In ``best_visited`` mode the highest-coverage solution ever evaluated
    (the initial one included) is returned, so the result never scores
    below the input; ``final_incumbent`` returns the last incumbent as in
    the plain annealing loop.
    """
    if isinstance(rng, (int, np.integer)):
        seed: int | None = int(rng)
        rng = np.random.default_rng(seed)
    else:
        seed = getattr(rng, "windplan_seed", None)
    f_init = coverage_count(matrix, init.selected)
    solution = _finish_solution(catalog, plan, init.selected, f_init, "comp", seed)
    space = _SearchSpace(matrix, catalog, plan, solution.selected)
    # Nothing to explore once every pool is frozen (all-legacy quotas or
    # full selections): the initial point is the whole neighbourhood.
    if params.iterations == 0 or int(space.caps.sum()) == 0:
        return solution
    free_slots = plan.k - len(catalog.legacy_ids & solution.selected)
    if params.radius > free_slots:
        raise ValueError(f"radius {params.radius} exceeds the {free_slots} swappable slots")

    dense = matrix.dense
    c = matrix.threshold_c
    counts = _counts_for(matrix, np.concatenate([space.sel_flat, space.legacy_idx]))
    f_cur = _objective(counts, c)
    best_f = f_cur
    best_sel = space.sel_flat.copy()

    allocations, r_eff = space.allocations(params.radius)
    single_swap = r_eff == 1 and neighbor_sampler is None
    if single_swap:
        # With radius one an allocation is just a choice of partition.
        feas_parts = np.array([next(p for p, s in enumerate(a) if s) for a in allocations],
                              dtype=np.intp)

    n = params.neighbors
    for i in range(params.iterations):
        if neighbor_sampler is not None:
            delta_best = -math.inf
            best_counts = counts
            chosen_sel = space.sel_flat
            current_ids = tuple(matrix.site_ids[s] for s in space.sel_flat)
            for j in range(n):
                cand_ids = tuple(neighbor_sampler(current_ids, i, j, rng))
                cand_idx = np.array([matrix.index_of[s] for s in cand_ids], dtype=np.intp)
                cand_counts = _counts_for(matrix, np.concatenate([cand_idx, space.legacy_idx]))
                delta = _objective(cand_counts, c) - f_cur
                if delta > delta_best:
                    delta_best, best_counts, chosen_sel = delta, cand_counts, cand_idx
            if _objective(best_counts, c) > best_f:
                best_f = _objective(best_counts, c)
                best_sel = chosen_sel.copy()
            accepted = _accept(delta_best, params.temperature(i), rng)
            if accepted:
                _replace_selection(space, chosen_sel)
                counts, f_cur = best_counts, f_cur + int(delta_best)
        elif single_swap:
            part = feas_parts[rng.integers(0, len(feas_parts), size=n)]
            out_pos = rng.integers(0, space.sel_sizes[part])
            in_pos = rng.integers(0, space.uns_sizes[part])
            out_site = space.sel_flat[space.sel_off[part] + out_pos]
            in_site = space.uns_flat[space.uns_off[part] + in_pos]
            trial = counts[None, :] + dense[in_site].astype(np.int32) - dense[out_site]
            f_new = (trial >= c).sum(axis=1)
            j_star = int(np.argmax(f_new))  # ties to the lowest draw index
            delta_best = int(f_new[j_star]) - f_cur
            if int(f_new[j_star]) > best_f:
                best_f = int(f_new[j_star])
                best_sel = space.sel_flat.copy()
                best_sel[space.sel_off[part[j_star]] + out_pos[j_star]] = in_site[j_star]
            accepted = _accept(delta_best, params.temperature(i), rng)
            if accepted:
                space.apply_swap(int(part[j_star]),
                                 np.array([out_pos[j_star]]), np.array([in_pos[j_star]]))
                counts = trial[j_star]
                f_cur += delta_best
        else:
            delta_best = -math.inf
            best_counts = counts
            pending: list[tuple[int, np.ndarray, np.ndarray]] = []
            for j in range(n):
                alloc = allocations[int(rng.integers(0, len(allocations)))]
                delta_counts = np.zeros_like(counts)
                swaps = []
                for partition, s in enumerate(alloc):
                    if s == 0:
                        continue
                    out_pos = np.asarray(rng.choice(int(space.sel_sizes[partition]), size=s, replace=False))
                    in_pos = np.asarray(rng.choice(int(space.uns_sizes[partition]), size=s, replace=False))
                    outs = space.sel_flat[space.sel_off[partition] + out_pos]
                    ins = space.uns_flat[space.uns_off[partition] + in_pos]
                    delta_counts += dense[ins].sum(axis=0, dtype=np.int32)
                    delta_counts -= dense[outs].sum(axis=0, dtype=np.int32)
                    swaps.append((partition, out_pos, in_pos))
                cand_counts = counts + delta_counts
                delta = _objective(cand_counts, c) - f_cur
                if delta > delta_best:
                    delta_best, best_counts, pending = delta, cand_counts, swaps
            if _objective(best_counts, c) > best_f:
                best_f = _objective(best_counts, c)
                best_sel = _swapped_copy(space, pending)
            accepted = _accept(delta_best, params.temperature(i), rng)
            if accepted:
                for partition, out_pos, in_pos in pending:
                    space.apply_swap(partition, out_pos, in_pos)
                counts, f_cur = best_counts, f_cur + int(delta_best)
        if on_iteration is not None:
            on_iteration(i, float(delta_best), bool(accepted), int(f_cur))

    final_sel = best_sel if params.return_mode == "best_visited" else space.sel_flat
    ids = [matrix.site_ids[s] for s in final_sel] + [matrix.site_ids[s] for s in space.legacy_idx]
    objective = coverage_count(matrix, ids)
    return _finish_solution(catalog, plan, ids, objective, "comp", seed)


def _accept(delta: float, temperature: float, rng) -> bool:
    if delta > 0:
        return True
    exponent = delta / temperature
    p = math.exp(exponent) if exponent > -700 else 0.0
    return bool(rng.random() < p)


def _swapped_copy(space: _SearchSpace, swaps) -> np.ndarray:
    """Selection array after applying swaps, without mutating the space."""
    sel = space.sel_flat.copy()
    for partition, out_pos, in_pos in swaps:
        sel[space.sel_off[partition] + out_pos] = space.uns_flat[space.uns_off[partition] + in_pos]
    return sel


def _replace_selection(space: _SearchSpace, new_sel: np.ndarray) -> None:
    """Overwrite the pools with an externally supplied non-legacy selection."""
    catalog, plan = space.catalog, space.plan
    members = _partition_members(catalog, plan)
    new_ids = {space.matrix.site_ids[i] for i in new_sel}
    sel_segments, uns_segments = [], []
    for p, quota in enumerate(plan.quotas):
        sel, uns = [], []
        for sid in members[quota.partition_id]:
            if catalog.site(sid).is_legacy:
                continue
            (sel if sid in new_ids else uns).append(space.matrix.index_of[sid])
        if len(sel) != space.sel_sizes[p]:
            raise ValueError(
                f"scripted neighbour changes the quota of partition {quota.partition_id}"
            )
        sel_segments.append(np.array(sel, dtype=np.intp))
        uns_segments.append(np.array(uns, dtype=np.intp))
    space.sel_flat[:] = np.concatenate(sel_segments) if sel_segments else ()
    space.uns_flat[:] = np.concatenate(uns_segments) if uns_segments else ()


def run_multistart(
    matrix: CriticalityMatrix,
    catalog: SiteCatalog,
    plan: CardinalityPlan,
    params: AnnealParams,
    n_runs: int = 30,
    base_seed: int = 0,
    threads: int = 1,
    init: SitingSolution | None = None,
) -> SitingSolution:
    """Best of ``n_runs`` independent local searches.

    Run ``i`` is seeded with ``base_seed + i`` and all runs start from the
    same (deterministic) greedy initialisation, so the result only depends
    on the inputs and the base seed.  Ties go to the lowest seed, which
    makes the reduction independent of the thread count.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if init is None:
        init = greedy_init(matrix, catalog, plan)

    def one(seed: int) -> SitingSolution:
        return local_search(init, matrix, catalog, plan, params, seed)

    seeds = [base_seed + i for i in range(n_runs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(seed) for seed in seeds]
    best = results[0]
    for result in results[1:]:
        if result.objective > best.objective:
            best = result
    return best


# ---------------------------------------------------------------------------
# Mixed-integer relaxation escape hatch
# ---------------------------------------------------------------------------

def build_comp_mir(matrix: CriticalityMatrix, catalog: SiteCatalog, plan: CardinalityPlan):
    """Mixed-integer relaxation of the complementarity problem.

    Site variables stay binary while window indicators are relaxed to
    [0, 1]; the canonical LP (minimisation of the negated window count) can
    be exported with :func:`windplan.mps.export_mps` and handed to any MILP
    solver.  Use :func:`mir_solution_to_init` to turn the returned site
    values into a search initialisation.
    """
    from windplan.lp import LpBuilder

    members = _partition_members(catalog, plan)
    builder = LpBuilder(name="comp_mir")
    x_vars = {}
    for sid in matrix.site_ids:
        legacy = catalog.site(sid).is_legacy
        x_vars[sid] = builder.add_var(
            f"x|{sid}", lower=1.0 if legacy else 0.0, upper=1.0, objective=0.0, integer=True
        )
    y_vars = []
    for w in range(matrix.n_windows):
        y_vars.append(builder.add_var(f"y|{w}", lower=0.0, upper=1.0, objective=-1.0))
    dense = matrix.dense
    for w in range(matrix.n_windows):
        row = builder.add_row(f"cov|{w}", sense=">", rhs=0.0)
        for sid in matrix.site_ids:
            if dense[matrix.index_of[sid], w]:
                builder.add_entry(row, x_vars[sid], 1.0)
        builder.add_entry(row, y_vars[w], -float(matrix.threshold_c))
    for quota in plan.quotas:
        row = builder.add_row(f"card|{quota.partition_id}", sense="=", rhs=float(quota.final_k))
        for sid in members[quota.partition_id]:
            builder.add_entry(row, x_vars[sid], 1.0)
    return builder.build()


def mir_solution_to_init(
    values: Mapping[str, float],
    matrix: CriticalityMatrix,
    catalog: SiteCatalog,
    plan: CardinalityPlan,
) -> SitingSolution:
    """Interpret external solver values for the MIR site variables.

    Any feasible incumbent is accepted: site variables at or above 0.5 are
    read as selected.
    """
    chosen = [sid for sid in matrix.site_ids if values.get(f"x|{sid}", 0.0) >= 0.5]
    objective = coverage_count(matrix, chosen)
    return _finish_solution(catalog, plan, chosen, objective, "comp")


# ---------------------------------------------------------------------------
# Residual demand diagnostics
# ---------------------------------------------------------------------------

def residual_demand(
    demand: TimeSeries,
    catalog: SiteCatalog,
    selected: Iterable[str],
    deploy_MW_per_site: float,
) -> TimeSeries:
    """System demand minus the feed-in of the selected sites, each deployed
    at a uniform ``deploy_MW_per_site``."""
    if len(demand) != catalog.time_length:
        raise ValueError("demand length does not match catalog series length")
    feed_in = np.zeros(len(demand))
    # Sorted accumulation keeps the float result independent of set order.
    for sid in sorted(selected):
        feed_in += deploy_MW_per_site * catalog.site(sid).capacity_factors.values
    return demand.with_values(demand.values - feed_in)


def block_spread(series: TimeSeries, block_hours: float) -> np.ndarray:
    """Max-minus-min spread over disjoint blocks of the given duration.

    The block must span a whole number of periods; a trailing partial block
    is dropped.
    """
    periods = block_hours / series.resolution_hours
    if abs(periods - round(periods)) > 1e-9 or round(periods) < 1:
        raise ValueError(
            f"block of {block_hours} h is not a whole number of {series.resolution_hours} h periods"
        )
    periods = int(round(periods))
    n_blocks = len(series) // periods
    if n_blocks == 0:
        raise ValueError("series shorter than one block")
    blocks = series.values[: n_blocks * periods].reshape(n_blocks, periods)
    return blocks.max(axis=1) - blocks.min(axis=1)


def residual_summary(residual: TimeSeries) -> dict[str, dict[str, float]]:
    """Quartile summaries of the residual series and of its 12-hourly and
    daily block spreads."""
    def describe(values: np.ndarray) -> dict[str, float]:
        q1, med, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
        return {
            "min": float(values.min()),
            "q1": float(q1),
            "median": float(med),
            "q3": float(q3),
            "max": float(values.max()),
        }

    return {
        "residual": describe(residual.values),
        "spread_12h": describe(block_spread(residual, 12.0)),
        "spread_daily": describe(block_spread(residual, 24.0)),
    }
