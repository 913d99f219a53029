"""Documented on-disk formats (schema version 1).

Time-series CSV
    Optional ``#`` comment lines, then a header of series ids (one column
    per site/bus/cell) and one row per period.  Resolution is supplied by
    the caller, not stored in the file.

Site catalog CSV
    Columns ``id, lon, lat, partition, legacy_MW, potential_MW``.  The
    legacy flag is derived from the configured capacity threshold.

Power curve CSV
    ``# key=value`` comment lines carrying ``cut_in``, ``rated_speed`` and
    ``cut_out``, then ``wind_speed_ms, power_pu`` breakpoints.

Hydro country CSV
    Columns ``country, flood_threshold, ror_capacity_MW, sto_capacity_MW,
    sto_energy_MWh, yearly_hydro_MWh, flow_multiplier, avg_head_m,
    phs_power_MW, phs_energy_MWh, phs_duration_h`` (blank = unknown).

Runoff manifest CSV
    Columns ``cell_id, country, area_km2, series_path`` where the series
    path points at a time-series CSV (relative to the manifest) whose
    column header equals the cell id.

Criticality matrix
    Packed binary: see :meth:`windplan.resource.CriticalityMatrix.to_bytes`.

Siting solution
    JSON object plus a GeoJSON point collection for mapping.

CEP instance
    JSON document referencing time-series CSVs by relative path.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from windplan.cep import Bus, CepInstance, CepSolution, Line, Placement, SitedAsset, Technology
from windplan.hydro import HydroCountryParams, RunoffCell, RunoffGrid
from windplan.powercurve import PowerCurve
from windplan.resource import CriticalityMatrix, Site, SiteCatalog, make_site
from windplan.siting import SitingSolution
from windplan.timeseries import TimeSeries


def _fmt(value: float) -> str:
    return repr(float(value))


def _data_lines(path: Path) -> list[str]:
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line for line in lines if line.strip() and not line.lstrip().startswith("#")]


# ---------------------------------------------------------------------------
# Time-series CSV
# ---------------------------------------------------------------------------

def write_series_csv(
    path: str | Path,
    series: Mapping[str, TimeSeries],
    comments: Sequence[str] = (),
) -> Path:
    path = Path(path)
    ids = list(series)
    if not ids:
        raise ValueError("no series to write")
    length = len(series[ids[0]])
    for sid in ids:
        if len(series[sid]) != length:
            raise ValueError(f"series {sid!r} length differs")
    rows = ["# " + c for c in comments]
    rows.append(",".join(ids))
    values = np.column_stack([series[sid].values for sid in ids])
    for row in values:
        rows.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path


def read_series_csv(
    path: str | Path,
    resolution_hours: float = 1.0,
    start_label: str = "",
) -> dict[str, TimeSeries]:
    path = Path(path)
    lines = _data_lines(path)
    if not lines:
        raise ValueError(f"{path}: empty series file")
    header = [h.strip() for h in lines[0].split(",")]
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged series table")
    return {
        name: TimeSeries(data[:, j], resolution_hours, start_label)
        for j, name in enumerate(header)
    }


# ---------------------------------------------------------------------------
# Site catalog CSV
# ---------------------------------------------------------------------------

CATALOG_HEADER = ("id", "lon", "lat", "partition", "legacy_MW", "potential_MW")


def write_catalog_csv(path: str | Path, rows: Iterable[Mapping], comments: Sequence[str] = ()) -> Path:
    path = Path(path)
    out = ["# " + c for c in comments]
    out.append(",".join(CATALOG_HEADER))
    for row in rows:
        out.append(",".join([
            str(row["id"]), _fmt(row["lon"]), _fmt(row["lat"]), str(row["partition"]),
            _fmt(row["legacy_MW"]), _fmt(row["potential_MW"]),
        ]))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def read_catalog_csv(path: str | Path) -> list[dict]:
    path = Path(path)
    lines = _data_lines(path)
    reader = csv.DictReader(lines)
    missing = set(CATALOG_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: catalog columns missing: {sorted(missing)}")
    rows = []
    for record in reader:
        rows.append({
            "id": record["id"],
            "lon": float(record["lon"]),
            "lat": float(record["lat"]),
            "partition": record["partition"],
            "legacy_MW": float(record["legacy_MW"]),
            "potential_MW": float(record["potential_MW"]),
        })
    return rows


def load_catalog(
    catalog_csv: str | Path,
    capacity_factors: Mapping[str, TimeSeries],
    legacy_threshold_MW: float = 100.0,
) -> SiteCatalog:
    """Assemble a catalog from its CSV and per-site capacity factors."""
    sites: list[Site] = []
    for row in read_catalog_csv(catalog_csv):
        if row["id"] not in capacity_factors:
            raise ValueError(f"no capacity-factor series for site {row['id']!r}")
        sites.append(make_site(
            id=row["id"],
            longitude=row["lon"],
            latitude=row["lat"],
            partition_id=row["partition"],
            legacy_capacity_MW=row["legacy_MW"],
            technical_potential_MW=row["potential_MW"],
            capacity_factors=capacity_factors[row["id"]],
            legacy_threshold_MW=legacy_threshold_MW,
        ))
    return SiteCatalog(tuple(sites), legacy_threshold_MW)


# ---------------------------------------------------------------------------
# Power curve CSV
# ---------------------------------------------------------------------------

def write_power_curve_csv(path: str | Path, curve: PowerCurve) -> Path:
    path = Path(path)
    out = [
        f"# cut_in={_fmt(curve.cut_in)}",
        f"# rated_speed={_fmt(curve.rated_speed)}",
        f"# cut_out={_fmt(curve.cut_out)}",
        f"# smoothed={int(curve.smoothed)}",
        "wind_speed_ms,power_pu",
    ]
    for speed, power in zip(curve.speeds, curve.powers):
        out.append(f"{_fmt(speed)},{_fmt(power)}")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def read_power_curve_csv(path: str | Path) -> PowerCurve:
    path = Path(path)
    meta: dict[str, float] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped.startswith("#") and "=" in stripped:
            key, _, value = stripped.lstrip("# ").partition("=")
            meta[key.strip()] = float(value)
    required = {"cut_in", "rated_speed", "cut_out"}
    if not required <= set(meta):
        raise ValueError(f"{path}: missing curve metadata {sorted(required - set(meta))}")
    lines = _data_lines(path)
    speeds, powers = [], []
    for line in lines[1:]:
        s, p = line.split(",")
        speeds.append(float(s))
        powers.append(float(p))
    return PowerCurve(
        np.array(speeds), np.array(powers),
        cut_in=meta["cut_in"], rated_speed=meta["rated_speed"], cut_out=meta["cut_out"],
        smoothed=bool(meta.get("smoothed", 0)),
    )


def load_default_curves() -> dict[str, PowerCurve]:
    """Bundled generic low-wind and high-wind class curves."""
    from importlib import resources

    curves: dict[str, PowerCurve] = {}
    package = resources.files("windplan") / "data" / "power_curves"
    for entry in sorted(package.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".csv"):
            with resources.as_file(entry) as concrete:
                curves[entry.name[:-4]] = read_power_curve_csv(concrete)
    return curves


def load_curves_dir(directory: str | Path) -> dict[str, PowerCurve]:
    directory = Path(directory)
    curves = {}
    for entry in sorted(directory.glob("*.csv")):
        curves[entry.stem] = read_power_curve_csv(entry)
    if not curves:
        raise ValueError(f"no curve CSVs found in {directory}")
    return curves


# ---------------------------------------------------------------------------
# Hydro CSVs
# ---------------------------------------------------------------------------

HYDRO_HEADER = (
    "country", "flood_threshold", "ror_capacity_MW", "sto_capacity_MW", "sto_energy_MWh",
    "yearly_hydro_MWh", "flow_multiplier", "avg_head_m", "phs_power_MW", "phs_energy_MWh",
    "phs_duration_h",
)


def write_hydro_params_csv(
    path: str | Path,
    params: Mapping[str, HydroCountryParams],
    comments: Sequence[str] = (),
) -> Path:
    path = Path(path)
    out = ["# " + c for c in comments]
    out.append(",".join(HYDRO_HEADER))
    for country in sorted(params):
        p = params[country]
        def opt(v):
            return "" if v is None else _fmt(v)
        out.append(",".join([
            p.country, _fmt(p.flood_threshold), _fmt(p.ror_capacity_MW),
            _fmt(p.sto_capacity_MW), _fmt(p.sto_energy_MWh), _fmt(p.yearly_hydro_MWh),
            opt(p.flow_multiplier), _fmt(p.avg_head_m), _fmt(p.phs_power_MW),
            opt(p.phs_energy_MWh), opt(p.phs_duration_h),
        ]))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def read_hydro_params_csv(path: str | Path) -> dict[str, HydroCountryParams]:
    path = Path(path)
    reader = csv.DictReader(_data_lines(path))
    missing = set(HYDRO_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: hydro columns missing: {sorted(missing)}")
    out: dict[str, HydroCountryParams] = {}
    for record in reader:
        def opt(key):
            raw = record[key].strip()
            return None if raw == "" else float(raw)
        out[record["country"]] = HydroCountryParams(
            country=record["country"],
            flood_threshold=float(record["flood_threshold"]),
            ror_capacity_MW=float(record["ror_capacity_MW"]),
            sto_capacity_MW=float(record["sto_capacity_MW"]),
            sto_energy_MWh=float(record["sto_energy_MWh"]),
            yearly_hydro_MWh=float(record["yearly_hydro_MWh"]),
            flow_multiplier=opt("flow_multiplier"),
            avg_head_m=float(record["avg_head_m"]),
            phs_power_MW=float(record["phs_power_MW"]),
            phs_energy_MWh=opt("phs_energy_MWh"),
            phs_duration_h=opt("phs_duration_h"),
        )
    return out


def read_runoff_manifest(path: str | Path, resolution_hours: float = 1.0) -> RunoffGrid:
    path = Path(path)
    reader = csv.DictReader(_data_lines(path))
    needed = {"cell_id", "country", "area_km2", "series_path"}
    missing = needed - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: runoff manifest columns missing: {sorted(missing)}")
    series_cache: dict[Path, dict[str, TimeSeries]] = {}
    cells = []
    for record in reader:
        series_path = (path.parent / record["series_path"]).resolve()
        if series_path not in series_cache:
            series_cache[series_path] = read_series_csv(series_path, resolution_hours)
        table = series_cache[series_path]
        if record["cell_id"] not in table:
            raise ValueError(f"{series_path}: no column for cell {record['cell_id']!r}")
        cells.append(RunoffCell(
            cell_id=record["cell_id"],
            country=record["country"],
            area_km2=float(record["area_km2"]),
            runoff_m=table[record["cell_id"]],
        ))
    return RunoffGrid(tuple(cells))


# ---------------------------------------------------------------------------
# Criticality matrix persistence
# ---------------------------------------------------------------------------

def save_criticality(path: str | Path, matrix: CriticalityMatrix) -> Path:
    path = Path(path)
    path.write_bytes(matrix.to_bytes())
    return path


def load_criticality(path: str | Path, site_ids: tuple[str, ...] = ()) -> CriticalityMatrix:
    return CriticalityMatrix.from_bytes(Path(path).read_bytes(), site_ids)


# ---------------------------------------------------------------------------
# Siting solution outputs
# ---------------------------------------------------------------------------

def write_solution_json(
    path: str | Path,
    solution: SitingSolution,
    extra: Mapping | None = None,
) -> Path:
    path = Path(path)
    doc = {
        "scheme": solution.scheme,
        "seed": solution.rng_seed,
        "objective": solution.objective,
        "per_partition_counts": dict(sorted(solution.per_partition_counts.items())),
        "site_ids": sorted(solution.selected),
    }
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_solution_geojson(
    path: str | Path,
    solution: SitingSolution,
    catalog: SiteCatalog,
    extra: Mapping | None = None,
) -> Path:
    path = Path(path)
    features = []
    for site in catalog.sites:
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [site.longitude, site.latitude]},
            "properties": {
                "id": site.id,
                "partition": site.partition_id,
                "selected": site.id in solution.selected,
                "legacy": site.is_legacy,
            },
        })
    doc = {"type": "FeatureCollection", "features": features}
    if extra:
        doc["properties"] = dict(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# CEP instance JSON and report CSV
# ---------------------------------------------------------------------------

def _series_ref(doc: Mapping | None, base: Path, resolution_hours: float) -> TimeSeries | None:
    if doc is None:
        return None
    table = read_series_csv(base / doc["csv"], resolution_hours)
    column = doc["column"]
    if column not in table:
        raise ValueError(f"{doc['csv']}: no column {column!r}")
    return table[column]


_TECH_FIELDS = (
    "id", "kind", "capex", "lifetime_years", "annuity", "fixed_om", "variable_om",
    "fuel_cost", "efficiency", "co2_per_mwh_th", "ramp_up", "ramp_down", "must_run",
    "capacity_credit", "charge_ratio", "eta_charge", "eta_discharge", "eta_self",
    "min_soc", "energy_capex", "energy_annuity",
)


def technology_from_dict(doc: Mapping) -> Technology:
    unknown = set(doc) - set(_TECH_FIELDS)
    if unknown:
        raise ValueError(f"unknown technology fields: {sorted(unknown)}")
    return Technology(**doc)


def read_instance_json(path: str | Path) -> CepInstance:
    """Load a CEP instance document; series CSVs are resolved relative to
    the document's directory."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    resolution = float(doc.get("resolution_hours", 1.0))
    buses = tuple(
        Bus(
            id=b["id"],
            demand=_series_ref(b["demand"], base, resolution),
            reserve_margin=None if b.get("reserve_margin") is None
            else float(b["reserve_margin"]),
        )
        for b in doc["buses"]
    )
    technologies = tuple(technology_from_dict(t) for t in doc["technologies"])
    placements = tuple(
        Placement(
            bus=p["bus"],
            tech=p["tech"],
            legacy_MW=float(p.get("legacy_MW", 0.0)),
            potential_MW=p.get("potential_MW"),
            availability=_series_ref(p.get("availability"), base, resolution),
            inflow=_series_ref(p.get("inflow"), base, resolution),
            legacy_energy_MWh=float(p.get("legacy_energy_MWh", 0.0)),
            potential_energy_MWh=p.get("potential_energy_MWh"),
        )
        for p in doc.get("placements", ())
    )
    lines = tuple(
        Line(
            id=l["id"],
            from_bus=l["from_bus"],
            to_bus=l["to_bus"],
            legacy_MW=float(l.get("legacy_MW", 0.0)),
            potential_MW=l.get("potential_MW"),
            capex=l.get("capex"),
            lifetime_years=l.get("lifetime_years"),
            annuity=l.get("annuity"),
            fixed_om=float(l.get("fixed_om", 0.0)),
            variable_om=float(l.get("variable_om", 0.0)),
            kind=l.get("kind", "AC"),
            length_km=l.get("length_km"),
            efficiency_per_1000km=float(l.get("efficiency_per_1000km", 1.0)),
        )
        for l in doc.get("lines", ())
    )
    sited = tuple(
        SitedAsset(
            id=s["id"],
            bus=s["bus"],
            legacy_MW=float(s.get("legacy_MW", 0.0)),
            potential_MW=float(s["potential_MW"]),
            cf=_series_ref(s["cf"], base, resolution),
        )
        for s in doc.get("sited", ())
    )
    return CepInstance(
        buses=buses,
        technologies=technologies,
        placements=placements,
        lines=lines,
        sited=sited,
        sited_technology=doc.get("sited_technology"),
        co2_budget=doc.get("co2_budget"),
        shed_penalty=float(doc.get("shed_penalty", 1000.0)),
        weight_hours=float(doc.get("weight_hours", resolution)),
        firm_technologies=frozenset(doc.get("firm_technologies", ())),
        discount_rate=float(doc.get("discount_rate", 0.07)),
        storage_cyclic=bool(doc.get("storage_cyclic", True)),
        apply_line_losses=bool(doc.get("apply_line_losses", False)),
    )


def write_instance_json(path: str | Path, instance: CepInstance,
                        series_dir: str | Path | None = None) -> Path:
    """Serialize an instance as a JSON document referencing series CSVs.

    Series are written next to the document (or into ``series_dir``) and
    referenced by relative path, so the pair round-trips through
    :func:`read_instance_json`.
    """
    path = Path(path)
    base = path.parent if series_dir is None else Path(series_dir)
    base.mkdir(parents=True, exist_ok=True)

    def rel(target: Path) -> str:
        return str(target.relative_to(path.parent)) if target.is_relative_to(path.parent) \
            else str(target)

    demand_csv = base / "demand.csv"
    write_series_csv(demand_csv, {bus.id: bus.demand for bus in instance.buses})
    refs: dict[str, dict] = {}
    extra_series: dict[str, TimeSeries] = {}
    for pl in instance.placements:
        for role, series in (("availability", pl.availability), ("inflow", pl.inflow)):
            if series is not None:
                extra_series[f"{role}|{pl.bus}|{pl.tech}"] = series
                refs[f"{role}|{pl.bus}|{pl.tech}"] = None  # filled below
    if extra_series:
        series_csv = base / "placement_series.csv"
        write_series_csv(series_csv, extra_series)
        for key in extra_series:
            refs[key] = {"csv": rel(series_csv), "column": key}
    if instance.sited:
        cf_csv = base / "site_cf.csv"
        write_series_csv(cf_csv, {asset.id: asset.cf for asset in instance.sited})

    def tech_doc(tech: Technology) -> dict:
        return {field: getattr(tech, field) for field in _TECH_FIELDS}

    doc = {
        "resolution_hours": instance.buses[0].demand.resolution_hours,
        "weight_hours": instance.weight_hours,
        "co2_budget": instance.co2_budget,
        "shed_penalty": instance.shed_penalty,
        "discount_rate": instance.discount_rate,
        "storage_cyclic": instance.storage_cyclic,
        "apply_line_losses": instance.apply_line_losses,
        "firm_technologies": sorted(instance.firm_technologies),
        "sited_technology": instance.sited_technology,
        "buses": [
            {"id": bus.id, "reserve_margin": bus.reserve_margin,
             "demand": {"csv": rel(demand_csv), "column": bus.id}}
            for bus in instance.buses
        ],
        "technologies": [tech_doc(tech) for tech in instance.technologies],
        "placements": [
            {"bus": pl.bus, "tech": pl.tech, "legacy_MW": pl.legacy_MW,
             "potential_MW": pl.potential_MW,
             "legacy_energy_MWh": pl.legacy_energy_MWh,
             "potential_energy_MWh": pl.potential_energy_MWh,
             "availability": refs.get(f"availability|{pl.bus}|{pl.tech}"),
             "inflow": refs.get(f"inflow|{pl.bus}|{pl.tech}")}
            for pl in instance.placements
        ],
        "lines": [
            {"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
             "legacy_MW": ln.legacy_MW, "potential_MW": ln.potential_MW,
             "capex": ln.capex, "lifetime_years": ln.lifetime_years,
             "annuity": ln.annuity, "fixed_om": ln.fixed_om,
             "variable_om": ln.variable_om, "kind": ln.kind,
             "length_km": ln.length_km,
             "efficiency_per_1000km": ln.efficiency_per_1000km}
            for ln in instance.lines
        ],
        "sited": [
            {"id": asset.id, "bus": asset.bus, "legacy_MW": asset.legacy_MW,
             "potential_MW": asset.potential_MW,
             "cf": {"csv": rel(base / "site_cf.csv"), "column": asset.id}}
            for asset in instance.sited
        ],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_cep_report_csv(
    path: str | Path,
    solution: CepSolution,
    instance: CepInstance,
    comments: Sequence[str] = (),
) -> Path:
    """Capacity/production table: one row per technology group plus the
    total system cost (capacities in MW or MWh, production in MWh)."""
    path = Path(path)
    omega = instance.weight_hours
    rows = ["# " + c for c in comments]
    rows.append("row,capacity,production")
    offshore_k = sum(solution.site_capacity_total.values())
    offshore_p = omega * sum(float(v.sum()) for v in solution.site_generation.values())
    rows.append(f"W_off,{_fmt(offshore_k)},{_fmt(offshore_p)}")
    tech_ids = sorted({pl.tech for pl in instance.placements})
    for tech_id in tech_ids:
        tech = instance.technology(tech_id)
        keys = [k for k in solution.tech_capacity_total if k[1] == tech_id]
        cap = sum(solution.tech_capacity_total[k] for k in keys)
        if tech.kind == "storage":
            prod = omega * sum(float(solution.discharge[k].sum()) for k in keys)
        else:
            prod = omega * sum(float(solution.generation[k].sum()) for k in keys)
        rows.append(f"{tech_id},{_fmt(cap)},{_fmt(prod)}")
    line_cap = sum(solution.line_capacity_total.values())
    line_p = omega * sum(
        float(solution.flow_fw[l].sum() + solution.flow_bw[l].sum()) for l in solution.flow_fw
    )
    rows.append(f"transmission,{_fmt(line_cap)},{_fmt(line_p)}")
    rows.append(f"shed_energy,,{_fmt(solution.shed_MWh)}")
    rows.append(f"emissions_t,,{_fmt(solution.emissions_t)}")
    rows.append(f"total_cost,{_fmt(solution.objective)},")
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path
