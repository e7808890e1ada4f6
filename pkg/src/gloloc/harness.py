"""Batch runs: F(T) sweeps, the multistart baseline, data export and replay.

Every file is written atomically (temporary file, then rename). Floats go
to CSV with 17 significant digits so reading back reproduces them exactly.
Each data file gets a JSON sidecar holding the full configuration, its hash,
package versions and the git revision, enough to replay the run.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import hybrid as hybrid_mod
from .control import BasisSpec
from .de import INIT_STREAM, DEConfig, Member, init_bounds, init_genome, member_rng
from .gradient import ControlObjective, control_samples
from .gpe import GpeParams, propagate
from .hybrid import HybridConfig
from .local import LocalOptConfig, group_optimize
from .problems import build_problem

log = logging.getLogger(__name__)

MODES = ("hybrid", "multistart", "single-local")
LEARNING_COLUMNS = ("generation", "best", "q25", "median", "q75", "local_opt_count", "cumulative_evals")


@dataclass
class RunConfig:
    problem: str = "CD"
    durations_ms: list = field(default_factory=lambda: [1.5])
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    local: LocalOptConfig = field(default_factory=LocalOptConfig)  # standalone local runs
    M: int = 12
    output_dir: str = "runs"
    mode: str = "hybrid"
    problem_overrides: dict = field(default_factory=dict)
    chain: bool = False  # warm-start each duration from the previous best genome

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.durations_ms or any(float(T) <= 0 for T in self.durations_ms):
            raise ValueError("durations must be positive")
        if self.M < 1:
            raise ValueError("M must be at least 1")

    @property
    def seed(self) -> int:
        return self.hybrid.master_seed


@dataclass
class SweepRecord:
    T_ms: float
    best_infidelity: float
    best_coeffs: list
    best_r: list
    evals: int
    wall_time: float
    config_hash: str
    error: str | None = None

    def __post_init__(self):
        if self.error is None and not 0.0 <= self.best_infidelity <= 1.0:
            raise ValueError(f"infidelity {self.best_infidelity} outside [0, 1]")


# ---------------------------------------------------------------- configuration


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["durations_ms"] = [float(T) for T in cfg.durations_ms]
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    hyb = dict(d.pop("hybrid", {}) or {})
    de = DEConfig(**(hyb.pop("de", {}) or {}))
    hlocal = hyb.pop("local", None)
    hlocal = LocalOptConfig(**hlocal) if hlocal else LocalOptConfig(max_iterations=50)
    local = LocalOptConfig(**(d.pop("local", {}) or {}))
    unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    return RunConfig(hybrid=HybridConfig(de=de, local=hlocal, **hyb), local=local, **d)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def set_dotted(d: dict, key: str, value) -> None:
    """Assign ``d['a']['b'] = value`` for key 'a.b', creating levels as needed."""
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """RunConfig from a YAML file, a JSON sidecar, or defaults, plus dotted overrides."""
    d = {}
    if path is not None:
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        d = data.get("config", data) if isinstance(data, dict) else {}
    d = json.loads(json.dumps(d))  # deep copy
    for key, value in (overrides or {}).items():
        set_dotted(d, key, value)
    return config_from_dict(d)


# ---------------------------------------------------------------- persistence


def _atomic_write(path, write) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> Path:
    def write(fh):
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])

    return _atomic_write(path, write)


def read_csv(path) -> tuple[list, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))


def write_json(path, data) -> Path:
    return _atomic_write(path, lambda fh: json.dump(data, fh, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def git_revision() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def versions() -> dict:
    import numba

    from importlib.metadata import PackageNotFoundError, version

    try:
        own = version("artifact")
    except PackageNotFoundError:
        own = None
    return {"python": platform.python_version(), "numpy": np.__version__, "numba": numba.__version__, "gloloc": own}


def metadata(cfg: RunConfig | None, **extra) -> dict:
    meta = {"versions": versions(), "git_revision": git_revision(), "created": time.strftime("%Y-%m-%dT%H:%M:%S")}
    if cfg is not None:
        meta.update(config=config_to_dict(cfg), config_hash=config_hash(cfg), seed=cfg.seed)
    meta.update(extra)
    return meta


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


# ---------------------------------------------------------------- runs


def make_problem(cfg: RunConfig):
    return build_problem(cfg.problem, cfg.problem_overrides)


def _initial_genome(seed: int, index: int, M: int, de_cfg: DEConfig) -> np.ndarray:
    lo, hi = init_bounds(M, de_cfg)
    return init_genome(member_rng(seed, 0, index, INIT_STREAM), lo, hi)


def _record(T_ms, member: Member, evals, t0, h, error=None) -> SweepRecord:
    infid = min(max(member.breakdown.infidelity, 0.0), 1.0) if member.breakdown else float("nan")
    return SweepRecord(
        float(T_ms), infid, member.c.tolist(), member.r.tolist(), int(evals), time.time() - t0, h, error
    )


def run_single(problem, T: float, cfg: RunConfig, start_genome=None) -> tuple[Member, int]:
    """One standalone GROUP run from initial-population member 0 (or ``start_genome``)."""
    g = _initial_genome(cfg.seed, 0, cfg.M, cfg.hybrid.de) if start_genome is None else np.asarray(start_genome)
    M = g.size // 2
    res = group_optimize(g[:M], BasisSpec(g[M:], T), ControlObjective(problem, T, cfg.hybrid.de.c_max), cfg.local)
    member = Member(np.concatenate([res.best_coeffs, g[M:]]), res.best_cost.total, res.best_cost)
    return member, res.evals


def run_multistart(problem, T: float, cfg: RunConfig, max_evals: int | None = None):
    """GROUP from each initial-population genome in turn, then from further random genomes.

    Starts use the same random streams as the hybrid's generation 0. Without
    ``max_evals`` each of the N initial genomes is optimized once; otherwise
    starts continue until the evaluation budget is spent.
    Returns ``(best member, evals, per-start results)``.
    """
    objective = ControlObjective(problem, T, cfg.hybrid.de.c_max)
    N = cfg.hybrid.de.population_size
    best, evals, runs = None, 0, []
    k = 0
    while (max_evals is None and k < N) or (max_evals is not None and evals < max_evals):
        g = _initial_genome(cfg.seed, k, cfg.M, cfg.hybrid.de)
        local_cfg = cfg.local
        if max_evals is not None:
            local_cfg = dataclasses.replace(cfg.local, max_cost_evals=min(cfg.local.max_cost_evals, max_evals - evals))
        res = group_optimize(g[: cfg.M], BasisSpec(g[cfg.M :], T), objective, local_cfg)
        evals += res.evals
        member = Member(np.concatenate([res.best_coeffs, g[cfg.M :]]), res.best_cost.total, res.best_cost)
        runs.append(member)
        if best is None or member.cost < best.cost:
            best = member
        k += 1
    return best, evals, runs


def run_point(cfg: RunConfig, T_ms: float, problem=None, start_genome=None, learning_path=None):
    """Run the configured mode at one duration; returns ``(SweepRecord, Member, records)``."""
    problem = problem or make_problem(cfg)
    T = problem.duration_from_ms(T_ms)
    h = config_hash(cfg)
    t0 = time.time()
    records = []
    if cfg.mode == "hybrid":
        res = hybrid_mod.run(problem, BasisSpec(np.zeros(cfg.M), T), cfg.hybrid)
        member, evals, records = res.best, res.evals, res.records
        if learning_path is not None:
            export_learning(records, learning_path, cfg, T_ms=T_ms)
    elif cfg.mode == "multistart":
        member, evals, _ = run_multistart(problem, T, cfg, cfg.hybrid.max_evals)
    else:
        member, evals = run_single(problem, T, cfg, start_genome)
    return _record(T_ms, member, evals, t0, h), member, records


def sweep_F_of_T(cfg: RunConfig, write: bool = True) -> list[SweepRecord]:
    """Best infidelity at each duration; failures are recorded and the sweep continues."""
    problem = make_problem(cfg)
    out_dir = Path(cfg.output_dir)
    records, previous = [], None
    for T_ms in cfg.durations_ms:
        t0 = time.time()
        learning = out_dir / f"learning_T{float(T_ms):g}ms.csv" if write and cfg.mode == "hybrid" else None
        try:
            start = previous if (cfg.chain and cfg.mode == "single-local") else None
            rec, member, _ = run_point(cfg, T_ms, problem, start, learning)
            previous = member.genome
        except Exception as err:  # noqa: BLE001 - one duration failing must not stop the sweep
            log.exception("duration %s ms failed", T_ms)
            rec = SweepRecord(float(T_ms), float("nan"), [], [], 0, time.time() - t0, config_hash(cfg),
                              f"{type(err).__name__}: {err}")
        records.append(rec)
        log.info("T = %s ms: infidelity %.3e (%d evals)", T_ms, rec.best_infidelity, rec.evals)
    if write:
        write_sweep(records, out_dir / f"{cfg.mode}_sweep.csv", cfg)
    return records


def multistart_baseline(cfg: RunConfig, write: bool = True) -> list[SweepRecord]:
    return sweep_F_of_T(dataclasses.replace(cfg, mode="multistart"), write)


def write_sweep(records, path, cfg: RunConfig) -> Path:
    rows = [(r.T_ms, r.best_infidelity, r.evals, r.wall_time) for r in records]
    write_csv(path, ("T_ms", "best_infidelity", "evals", "wall_time"), rows)
    write_json(sidecar_path(path), metadata(cfg, records=[dataclasses.asdict(r) for r in records]))
    return Path(path)


def export_learning(records, path, cfg: RunConfig | None = None, **extra) -> Path:
    """Per-generation cost statistics of a hybrid run as CSV plus metadata sidecar."""
    if not records:
        raise ValueError("no generation records to export")
    medians = np.array([r.median_cost for r in records])
    if np.any(np.diff(medians) > 0):
        raise ValueError("median cost increased between generations; per-member selection is broken")
    rows = [
        (r.generation, r.best_cost, r.q25, r.median_cost, r.q75, r.local_opt_count, r.cost_evals_cumulative)
        for r in records
    ]
    write_csv(path, LEARNING_COLUMNS, rows)
    write_json(sidecar_path(path), metadata(cfg, **extra))
    return Path(path)


def control_trace(member: Member, problem, T: float, n_snapshots: int = 11) -> dict:
    """Commanded and experienced control, <x>(t) and density snapshots of a genome."""
    samples = control_samples(member.c, BasisSpec(member.r, T), problem)
    params = GpeParams(mass=problem.params.mass, beta=problem.params.beta, dt=samples.dt)
    traj = propagate(problem.psi_initial, samples.v.u, problem, params, store=True)
    idx = np.unique(np.linspace(0, len(samples.t) - 1, n_snapshots).round().astype(int))
    return {
        "t": samples.t,
        "u": samples.u.u,
        "v": samples.v.u,
        "x_mean": traj.expect_x(),
        "snapshot_index": idx,
        "density": np.abs(traj.states[idx]) ** 2,
        "x": problem.grid.x,
    }


def export_control(member: Member, problem, T: float, path, cfg: RunConfig | None = None, n_snapshots: int = 11):
    """Write ``path`` (t, u, v, <x>) and ``<stem>_density.csv`` (one snapshot per row)."""
    tr = control_trace(member, problem, T, n_snapshots)
    path = Path(path)
    write_csv(path, ("t", "u", "v", "x_mean"), zip(tr["t"], tr["u"], tr["v"], tr["x_mean"]))
    dens_path = path.with_name(path.stem + "_density.csv")
    header = ["t"] + [f"x={x:.17g}" for x in tr["x"]]
    rows = [[tr["t"][j], *row] for j, row in zip(tr["snapshot_index"], tr["density"])]
    write_csv(dens_path, header, rows)
    write_json(sidecar_path(path), metadata(cfg, genome=member.genome, T=T, problem=problem.name))
    return path, dens_path


def replay(sidecar, T_ms: float | None = None):
    """Rerun the first (or the given) duration of a recorded run from its sidecar.

    Returns ``(SweepRecord, Member)``; raises if the stored hash does not
    match the reconstructed configuration.
    """
    meta = json.loads(Path(sidecar).read_text())
    cfg = config_from_dict(meta["config"])
    if config_hash(cfg) != meta["config_hash"]:
        raise ValueError("configuration hash mismatch; sidecar was edited or the schema changed")
    T_ms = cfg.durations_ms[0] if T_ms is None else T_ms
    rec, member, _ = run_point(cfg, T_ms)
    return rec, member

