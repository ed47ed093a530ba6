"""Experiment harness: scenarios, runners, traces, and summary metrics.

A Scenario fully describes one experiment (slices, environment, scripted
dynamics, algorithm, horizon, seed). `run` executes it deterministically:
every random draw descends from the scenario seed through named substreams,
so identical scenarios produce byte-identical traces. `run_matrix` crosses
scenario files with all algorithms, and `dump_oracle` materializes the
exhaustive-search dataset.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .agent import CandidateGrid, SliceAgent
from .baselines import (
    AtlasAgent,
    GboBaseline,
    OracleEntry,
    atlas_scale,
    exsearch_best,
    sweep_dataset,
)
from .coordinator import CoordinatorState, orchestrate_slot, resize
from .core import Action, CostParams, PerfVector, SliceSpec, normalized_performance, slice_cost
from .errors import ScenarioError
from .netenv import DynamicsEvent, EnvConfig, RanEnvironment, TrafficProfile, apply_events
from .rng import substream

ALGORITHMS = ("adaslicing", "gbo", "atlas", "exsearch")


@dataclass(frozen=True)
class AlgoParams:
    """Tunables of the orchestration algorithms; defaults suit the bundled scenarios."""

    rho: float = 2.0
    primal_tol: float = 0.5
    max_iters: int = 15
    dual_init: float = -5.0
    buffer_capacity: int = 40
    priority_decay: float = 0.95
    subsample: int = 30
    n_init: int = 3
    noise_var: float = 1e-4
    hyperopt_every: int = 5
    hedge_eta: float = 1.0
    kappa: float = 1.96
    # The log barrier turns into a bonus once the margin exceeds 1. Kept
    # at 0.5 so that bonus stays worth less than one resource block and
    # recommendations do not creep past the cheapest feasible allocation.
    barrier_coef: float = 0.5
    violation_penalty: float | None = None  # None: 10 * u_h * capacity
    sw_step: float = 0.1
    min_alive: int = 1
    probe_mode: str = "live"  # "surrogate" negotiates on the GPs, probing once per slot
    probes_per_slot: int = 15  # baseline BO probe budget, parity with max_iters
    grid_cap: int = 10**6

    def __post_init__(self) -> None:
        if self.probe_mode not in ("live", "surrogate"):
            raise ValueError(
                f"probe_mode must be 'live' or 'surrogate', got {self.probe_mode!r}"
            )
        if self.probes_per_slot < 1:
            raise ValueError(f"probes_per_slot must be >= 1, got {self.probes_per_slot}")


@dataclass(frozen=True)
class Scenario:
    """One fully specified experiment."""

    name: str
    seed: int
    slots: int
    algorithm: str
    env: EnvConfig
    slices: tuple[SliceSpec, ...]
    events: tuple[DynamicsEvent, ...] = ()
    cost: CostParams = field(default_factory=CostParams)
    algo: AlgoParams = field(default_factory=AlgoParams)

    def __post_init__(self) -> None:
        if self.slots <= 0:
            raise ScenarioError(f"slots: must be > 0, got {self.slots}")
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(
                f"algorithm: must be one of {ALGORITHMS}, got {self.algorithm!r}"
            )
        ids = [s.slice_id for s in self.slices]
        if not ids:
            raise ScenarioError("slices: at least one slice is required")
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"slices: duplicate slice_id in {ids}")


@dataclass(frozen=True)
class SlotRecord:
    """Emitted allocation and delivered performance of one slot."""

    slot: int
    actions: dict[str, Action]
    perfs: dict[str, PerfVector]
    per_slice_cost: dict[str, float]
    total_cost: float
    norm_perf: dict[str, float]
    mean_norm_perf: float
    admm_iterations: int
    primal_residual: float


# -- scenario i/o ---------------------------------------------------------------


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ScenarioError(f"{where}.{key}: missing required field")
    return mapping[key]


def scenario_from_dict(data: Mapping) -> Scenario:
    """Build and validate a Scenario, reporting errors with field paths."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario: expected a mapping at the top level")

    env_raw = _require(data, "env", "scenario")
    try:
        env = EnvConfig(
            capacity_h=_require(env_raw, "capacity_h", "env"),
            per_vrb_rate=env_raw.get("per_vrb_rate", 2.1),
            noise_std=env_raw.get("noise_std", 0.03),
            isolation_mode=env_raw.get("isolation_mode", "soft"),
        )
    except ValueError as exc:
        raise ScenarioError(f"env: {exc}") from exc

    cost_raw = data.get("cost", {})
    try:
        cost = CostParams(u_h=cost_raw.get("u_h", 1.0), u_s=cost_raw.get("u_s", 1.0))
    except ValueError as exc:
        raise ScenarioError(f"cost: {exc}") from exc

    slices = []
    for i, raw in enumerate(_require(data, "slices", "scenario")):
        where = f"slices[{i}]"
        profile_raw = _require(raw, "profile", where)
        try:
            profile = TrafficProfile(
                frame_rate=_require(profile_raw, "frame_rate", f"{where}.profile"),
                frame_size=_require(profile_raw, "frame_size", f"{where}.profile"),
                burstiness=profile_raw.get("burstiness", 0.0),
            )
            slices.append(
                SliceSpec(
                    slice_id=str(_require(raw, "slice_id", where)),
                    q_throughput=_require(raw, "q_throughput", where),
                    q_fps=_require(raw, "q_fps", where),
                    app_profile=profile,
                    active=bool(raw.get("active", True)),
                )
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc

    known_ids = {s.slice_id for s in slices}
    events = []
    for i, raw in enumerate(data.get("events", []) or []):
        where = f"events[{i}]"
        try:
            ev = DynamicsEvent(
                slot=_require(raw, "slot", where),
                kind=_require(raw, "kind", where),
                slice_id=str(_require(raw, "slice_id", where)),
                q_throughput=raw.get("q_throughput"),
                q_fps=raw.get("q_fps"),
            )
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
        if ev.slice_id not in known_ids:
            raise ScenarioError(f"{where}.slice_id: unknown slice {ev.slice_id!r}")
        events.append(ev)
    events.sort(key=lambda e: e.slot)

    algo_raw = data.get("algo_params", {}) or {}
    known_fields = {f.name for f in fields(AlgoParams)}
    for key in algo_raw:
        if key not in known_fields:
            raise ScenarioError(f"algo_params.{key}: unknown parameter")
    try:
        algo = AlgoParams(**algo_raw)
    except ValueError as exc:
        raise ScenarioError(f"algo_params: {exc}") from exc

    try:
        return Scenario(
            name=str(_require(data, "name", "scenario")),
            seed=int(_require(data, "seed", "scenario")),
            slots=int(_require(data, "slots", "scenario")),
            algorithm=str(_require(data, "algorithm", "scenario")),
            env=env,
            slices=tuple(slices),
            events=tuple(events),
            cost=cost,
            algo=algo,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario: {exc}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical plain-dict form, stable for hashing and round-trips."""
    return {
        "name": scenario.name,
        "seed": scenario.seed,
        "slots": scenario.slots,
        "algorithm": scenario.algorithm,
        "env": asdict(scenario.env),
        "cost": asdict(scenario.cost),
        "slices": [
            {
                "slice_id": s.slice_id,
                "q_throughput": s.q_throughput,
                "q_fps": s.q_fps,
                "active": s.active,
                "profile": asdict(s.app_profile) if s.app_profile else None,
            }
            for s in scenario.slices
        ],
        "events": [asdict(e) for e in scenario.events],
        "algo_params": asdict(scenario.algo),
    }


def scenario_digest(scenario: Scenario) -> str:
    canonical = json.dumps(scenario_to_dict(scenario), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return scenario_from_dict(data)


# -- runners ----------------------------------------------------------------------


def _violation_penalty(scenario: Scenario) -> float:
    if scenario.algo.violation_penalty is not None:
        return scenario.algo.violation_penalty
    return 10.0 * scenario.cost.u_h * scenario.env.capacity_h


def _make_record(
    slot: int,
    actions: Mapping[str, Action],
    perfs: Mapping[str, PerfVector],
    specs: Sequence[SliceSpec],
    cost: CostParams,
    iterations: int,
    residual: float,
) -> SlotRecord:
    spec_by_id = {s.slice_id: s for s in specs}
    per_cost = {sid: slice_cost(a, cost) for sid, a in actions.items()}
    norm = {sid: normalized_performance(perfs[sid], spec_by_id[sid]) for sid in actions}
    return SlotRecord(
        slot=slot,
        actions=dict(actions),
        perfs=dict(perfs),
        per_slice_cost=per_cost,
        total_cost=math.fsum(per_cost.values()),
        norm_perf=norm,
        mean_norm_perf=(math.fsum(norm.values()) / len(norm)) if norm else 0.0,
        admm_iterations=iterations,
        primal_residual=residual,
    )


def _bo_kwargs(p: AlgoParams) -> dict:
    return dict(
        buffer_capacity=p.buffer_capacity,
        priority_decay=p.priority_decay,
        subsample=p.subsample,
        n_init=p.n_init,
        noise_var=p.noise_var,
        hyperopt_every=p.hyperopt_every,
        hedge_eta=p.hedge_eta,
        kappa=p.kappa,
    )


def _run_adaslicing(scenario: Scenario) -> list[SlotRecord]:
    p = scenario.algo
    env = RanEnvironment(scenario.env, substream(scenario.seed, "env"))
    specs = list(scenario.slices)
    state = CoordinatorState(
        rho=p.rho, primal_tol=p.primal_tol, max_iters=p.max_iters, dual_init=p.dual_init
    )
    grid = CandidateGrid.for_capacity(scenario.env.capacity_h, p.min_alive, p.sw_step)
    peers_span = max(1.0, float(len(scenario.slices) - 1))
    design_offsets = {s.slice_id: i for i, s in enumerate(scenario.slices)}
    agents: dict[str, SliceAgent] = {}
    penalty = _violation_penalty(scenario)

    records = []
    for slot in range(scenario.slots):
        specs = apply_events(slot, scenario.events, specs)
        active_ids = [s.slice_id for s in specs if s.active]
        joined = [sid for sid in active_ids if sid not in state.z]
        left = [sid for sid in state.z if sid not in active_ids]
        resize(state, joined, left)
        for sid in joined:
            if sid not in agents:  # departed agents are retained for rejoin
                agents[sid] = SliceAgent(
                    sid,
                    grid,
                    substream(scenario.seed, f"agent:{sid}"),
                    substream(scenario.seed, f"hedge:{sid}"),
                    peers_sw_span=peers_span,
                    design_offset=design_offsets[sid],
                    **_bo_kwargs(p),
                )
        if not active_ids:
            records.append(_make_record(slot, {}, {}, specs, scenario.cost, 0, 0.0))
            continue
        outcome = orchestrate_slot(
            {sid: agents[sid] for sid in active_ids},
            env,
            specs,
            state,
            scenario.cost,
            slot,
            barrier_coef=p.barrier_coef,
            violation_penalty=penalty,
            min_alive=p.min_alive,
            probe_mode=p.probe_mode,
        )
        records.append(
            _make_record(
                slot, outcome.actions, outcome.perfs, specs, scenario.cost,
                outcome.iterations, outcome.primal_residual,
            )
        )
    return records


def _run_gbo(scenario: Scenario) -> list[SlotRecord]:
    p = scenario.algo
    env = RanEnvironment(replace(scenario.env, isolation_mode="hard"), substream(scenario.seed, "env"))
    specs = list(scenario.slices)
    penalty = _violation_penalty(scenario)
    gbo: GboBaseline | None = None
    current_ids: tuple[str, ...] = ()

    records = []
    for slot in range(scenario.slots):
        specs = apply_events(slot, scenario.events, specs)
        active = [s for s in specs if s.active]
        ids = tuple(s.slice_id for s in active)
        if not ids:
            records.append(_make_record(slot, {}, {}, specs, scenario.cost, 0, 0.0))
            continue
        if ids != current_ids:
            # A global optimizer has a fixed joint input space; population
            # changes force a rebuild from scratch.
            gbo = GboBaseline(
                ids,
                scenario.env.capacity_h,
                substream(scenario.seed, f"gbo:{slot}"),
                substream(scenario.seed, f"gbo-hedge:{slot}"),
                min_alive=p.min_alive,
                grid_cap=p.grid_cap,
                **_bo_kwargs(p),
            )
            current_ids = ids
        spec_map = {s.slice_id: s for s in active}
        for _ in range(p.probes_per_slot - 1):
            actions = gbo.suggest(spec_map, scenario.cost, p.barrier_coef, penalty)
            perfs = env.step(actions, active)
            gbo.observe(actions, perfs, spec_map, scenario.cost, p.barrier_coef, penalty, slot)
        # The slot's recorded allocation is the recommendation, not the last
        # exploratory probe.
        actions = gbo.incumbent(spec_map, scenario.cost, p.barrier_coef, penalty)
        perfs = env.step(actions, active)
        gbo.observe(actions, perfs, spec_map, scenario.cost, p.barrier_coef, penalty, slot)
        records.append(_make_record(slot, actions, perfs, specs, scenario.cost, 0, 0.0))
    return records


def _run_atlas(scenario: Scenario) -> list[SlotRecord]:
    p = scenario.algo
    env = RanEnvironment(replace(scenario.env, isolation_mode="hard"), substream(scenario.seed, "env"))
    specs = list(scenario.slices)
    penalty = _violation_penalty(scenario)
    agents: dict[str, AtlasAgent] = {}

    records = []
    for slot in range(scenario.slots):
        specs = apply_events(slot, scenario.events, specs)
        active = [s for s in specs if s.active]
        order = [s.slice_id for s in active]
        if not order:
            records.append(_make_record(slot, {}, {}, specs, scenario.cost, 0, 0.0))
            continue
        for s in active:
            if s.slice_id not in agents:
                agents[s.slice_id] = AtlasAgent(
                    s.slice_id,
                    scenario.env.capacity_h,
                    substream(scenario.seed, f"atlas:{s.slice_id}"),
                    substream(scenario.seed, f"atlas-hedge:{s.slice_id}"),
                    min_alive=p.min_alive,
                    **_bo_kwargs(p),
                )
        spec_map = {s.slice_id: s for s in active}

        def probe(proposals: dict[str, int]) -> tuple[dict[str, Action], dict[str, PerfVector]]:
            applied = atlas_scale(proposals, order, scenario.env.capacity_h, p.min_alive)
            acts = {sid: Action(applied[sid], 0.0) for sid in order}
            observed = env.step(acts, active)
            for sid in order:
                agents[sid].observe(
                    applied[sid], observed[sid], spec_map[sid], scenario.cost,
                    p.barrier_coef, penalty, slot,
                )
            return acts, observed

        for _ in range(p.probes_per_slot - 1):
            probe({
                sid: agents[sid].suggest(spec_map[sid], scenario.cost, p.barrier_coef, penalty)
                for sid in order
            })
        # Record each agent's recommendation, rescaled to fit, rather than
        # the last exploratory probe.
        actions, perfs = probe({
            sid: agents[sid].incumbent(spec_map[sid], scenario.cost, p.barrier_coef, penalty)
            for sid in order
        })
        records.append(_make_record(slot, actions, perfs, specs, scenario.cost, 0, 0.0))
    return records


def _run_exsearch(scenario: Scenario) -> list[SlotRecord]:
    p = scenario.algo
    env = RanEnvironment(replace(scenario.env, isolation_mode="hard"), substream(scenario.seed, "env"))
    specs = list(scenario.slices)
    datasets: dict[tuple[str, ...], list[OracleEntry]] = {}

    records = []
    for slot in range(scenario.slots):
        specs = apply_events(slot, scenario.events, specs)
        active = [s for s in specs if s.active]
        ids = tuple(s.slice_id for s in active)
        if not ids:
            records.append(_make_record(slot, {}, {}, specs, scenario.cost, 0, 0.0))
            continue
        if ids not in datasets:
            datasets[ids] = sweep_dataset(active, scenario.env, p.min_alive, p.grid_cap)
        best = exsearch_best(datasets[ids], active, scenario.cost)
        actions = {sid: Action(v, 0.0) for sid, v in zip(ids, best.svrbs)}
        perfs = env.step(actions, active)
        records.append(_make_record(slot, actions, perfs, specs, scenario.cost, 0, 0.0))
    return records


_RUNNERS = {
    "adaslicing": _run_adaslicing,
    "gbo": _run_gbo,
    "atlas": _run_atlas,
    "exsearch": _run_exsearch,
}


def run(scenario: Scenario) -> list[SlotRecord]:
    """Execute a scenario deterministically and return one record per slot."""
    return _RUNNERS[scenario.algorithm](scenario)


# -- summary metrics ---------------------------------------------------------------


def convergence_slot(costs: Sequence[float], window: int = 3, rel_tol: float = 0.05) -> int | None:
    """First slot after which total cost stays within rel_tol for `window` slots."""
    for t in range(len(costs) - window):
        ref = costs[t]
        denom = max(abs(ref), 1e-9)
        if all(abs(costs[s] - ref) <= rel_tol * denom for s in range(t + 1, t + window + 1)):
            return t
    return None


def converged_value(values: Sequence[float], costs: Sequence[float] | None = None) -> float:
    """Median of the post-convergence tail (last five values as a fallback)."""
    costs = costs if costs is not None else values
    t = convergence_slot(costs)
    tail = values[t:] if t is not None else values[-5:]
    return float(np.median(np.asarray(tail, dtype=float)))


@dataclass(frozen=True)
class MatrixRow:
    """Summary of one (scenario x algorithm) cell."""

    scenario: str
    algorithm: str
    n_slices: int
    status: str  # "ok" or "error"
    error: str
    converged_cost: float | None
    converged_norm_perf: float | None
    slots_to_convergence: int | None
    final_cost: float | None


def run_matrix(
    scenarios: Iterable[Scenario], algorithms: Sequence[str] | None = None
) -> list[MatrixRow]:
    """Cross scenarios with algorithms; cell failures become error rows."""
    rows = []
    for scn in scenarios:
        for algo in algorithms or ALGORITHMS:
            cell = replace(scn, algorithm=algo)
            try:
                records = run(cell)
            except Exception as exc:  # a failing cell must not halt the sweep
                rows.append(
                    MatrixRow(
                        scn.name, algo, len(scn.slices), "error",
                        f"{type(exc).__name__}: {exc}", None, None, None, None,
                    )
                )
                continue
            costs = [r.total_cost for r in records]
            norms = [r.mean_norm_perf for r in records]
            rows.append(
                MatrixRow(
                    scn.name,
                    algo,
                    len(scn.slices),
                    "ok",
                    "",
                    converged_value(costs),
                    converged_value(norms, costs),
                    convergence_slot(costs),
                    costs[-1],
                )
            )
    return rows


# -- file outputs -------------------------------------------------------------------


def trace_columns(slice_ids: Sequence[str]) -> list[str]:
    cols = ["slot", "admm_iterations", "primal_residual", "total_cost", "mean_norm_perf"]
    for sid in slice_ids:
        cols += [
            f"{sid}_svrb", f"{sid}_sw", f"{sid}_throughput",
            f"{sid}_fps", f"{sid}_cost", f"{sid}_norm_perf",
        ]
    return cols


def write_trace_csv(records: Sequence[SlotRecord], slice_ids: Sequence[str], path: str | Path) -> None:
    """One row per slot; inactive slices leave their cells empty.

    Floats are written with repr so traces are byte-stable and lossless.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace_columns(slice_ids))
        for r in records:
            row: list = [
                r.slot, r.admm_iterations, repr(r.primal_residual),
                repr(r.total_cost), repr(r.mean_norm_perf),
            ]
            for sid in slice_ids:
                if sid in r.actions:
                    row += [
                        r.actions[sid].svrb,
                        repr(r.actions[sid].sw),
                        repr(r.perfs[sid].throughput),
                        repr(r.perfs[sid].fps),
                        repr(r.per_slice_cost[sid]),
                        repr(r.norm_perf[sid]),
                    ]
                else:
                    row += ["", "", "", "", "", ""]
            writer.writerow(row)


def write_manifest(scenario: Scenario, path: str | Path) -> None:
    """Deterministic run manifest: what ran, from which scenario, which code."""
    from . import __version__

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": scenario.name,
        "algorithm": scenario.algorithm,
        "seed": scenario.seed,
        "slots": scenario.slots,
        "scenario_sha256": scenario_digest(scenario),
        "package_version": __version__,
        "trace_columns": trace_columns([s.slice_id for s in scenario.slices]),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_matrix_csv(rows: Sequence[MatrixRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "scenario", "algorithm", "n_slices", "status", "error",
                "converged_cost", "converged_norm_perf", "slots_to_convergence", "final_cost",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    r.scenario, r.algorithm, r.n_slices, r.status, r.error,
                    "" if r.converged_cost is None else repr(r.converged_cost),
                    "" if r.converged_norm_perf is None else repr(r.converged_norm_perf),
                    "" if r.slots_to_convergence is None else r.slots_to_convergence,
                    "" if r.final_cost is None else repr(r.final_cost),
                ]
            )


def dump_oracle(scenario: Scenario) -> list[OracleEntry]:
    """Materialize the exhaustive-search dataset for a scenario's initial slices."""
    active = [s for s in scenario.slices if s.active]
    return sweep_dataset(active, scenario.env, scenario.algo.min_alive, scenario.algo.grid_cap)


def write_oracle_csv(
    entries: Sequence[OracleEntry], slice_ids: Sequence[str], path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = [f"{sid}_svrb" for sid in slice_ids]
        header += [f"{sid}_throughput" for sid in slice_ids]
        header += [f"{sid}_fps" for sid in slice_ids]
        writer.writerow(header)
        for e in entries:
            row = [str(v) for v in e.svrbs]
            row += [repr(p.throughput) for p in e.perfs]
            row += [repr(p.fps) for p in e.perfs]
            writer.writerow(row)
