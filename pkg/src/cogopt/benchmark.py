"""Tune-then-benchmark campaigns with resource metering, ranks, and statistics.

Every run derives its RNG seed from (master seed, pipeline index, instance
index, rep), so serial and parallel schedules produce identical records
(CPU time excepted, being wall-clock dependent).
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as t_dist

from . import gp, optimizers
from .errors import (
    DegenerateInput,
    DuplicatePipelineInGroup,
    InstanceSetTooSmall,
    MissingBaseline,
)
from .knowledge import AlgorithmEntry, ParameterSpec

DEFAULT_CHECKPOINTS = (6, 12, 18, 24, 30, 36)


@dataclass(frozen=True)
class EvaluationRecord:
    pipeline: str
    instance: str
    budget: int
    best_y: float
    cpu_time: float
    memory_bytes: float
    rank: float | None = None
    tuned_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.budget <= 0:
            raise DegenerateInput("budget must be > 0")


@dataclass(frozen=True)
class TestInstanceSet:
    instances: tuple[gp.Realization, ...]
    source_model: gp.GPModel
    master_seed: int

    def __len__(self):
        return len(self.instances)


def derive_seed(master_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence((master_seed,) + key).generate_state(1)[0])


def generate_test_functions(
    data: gp.Dataset,
    k: int,
    method: str = "decomposition",
    master_seed: int = 0,
    grid_size: int = gp.GRID_SIZE,
) -> TestInstanceSet:
    """Fit a GP to the process data and draw k unconditional instances."""
    model = gp.fit(data, noise=True)
    grid = gp.default_grid(data.bounds, grid_size)
    instances = tuple(
        gp.simulate_unconditional(model, grid, method=method, seed=derive_seed(master_seed, i))
        for i in range(k)
    )
    return TestInstanceSet(instances=instances, source_model=model, master_seed=master_seed)


def _checkpoint_slice(result: optimizers.OptResult, budget: int):
    i = min(budget, result.evals_used) - 1
    return (
        float(result.trace[i]),
        float(result.cpu_trace[i]),
        float(result.mem_trace[i]),
    )


def run_single(
    algorithm: str,
    objective,
    bounds,
    budget: int,
    seed: int,
    params: dict | None = None,
) -> optimizers.OptResult:
    problem = optimizers.OptProblem(objective=objective, bounds=bounds, budget=budget)
    return optimizers.run_optimizer(algorithm, problem, seed, params)


def _sample_params(rng, specs: tuple[ParameterSpec, ...]) -> dict:
    out = {}
    for p in specs:
        if p.kind == "categorical":
            out[p.name] = p.categories[rng.integers(len(p.categories))]
        elif p.kind == "integer":
            out[p.name] = int(rng.integers(int(p.min), int(p.max) + 1))
        else:
            out[p.name] = float(rng.uniform(p.min, p.max))
    return out


def tune_then_benchmark(
    pipeline_id: str,
    algorithm: str,
    param_specs: tuple[ParameterSpec, ...],
    S: TestInstanceSet,
    bounds,
    tuning_budget: int,
    bench_budget: int,
    reps: int = 10,
    seed: int = 0,
    checkpoints: tuple[int, ...] | None = None,
    tune_idx: int | None = None,
    bench_idx: int | None = None,
) -> list[EvaluationRecord]:
    """Random-search tuning on one instance, metered benchmarking on another.

    Tuning samples `tuning_budget` configurations (each scored by one seeded
    run on the tuning instance); the winner is then run `reps` times on a
    different instance and averaged, one record per budget checkpoint.
    Callers benchmarking several pipelines against each other pass shared
    `tune_idx`/`bench_idx` so their records fall into the same rank groups.
    """
    if len(S) < 2:
        raise InstanceSetTooSmall("need >= 2 instances to tune and benchmark separately")
    if checkpoints is None:
        checkpoints = (bench_budget,)
    checkpoints = tuple(b for b in checkpoints if b <= bench_budget)
    rng = np.random.default_rng(derive_seed(seed, 0xB))
    if tune_idx is None:
        tune_idx = int(rng.integers(len(S)))
    if bench_idx is None:
        others = [i for i in range(len(S)) if i != tune_idx]
        bench_idx = others[int(rng.integers(len(others)))]
    if tune_idx == bench_idx:
        raise InstanceSetTooSmall("tuning and benchmark instances must differ")

    tuned = {}
    if param_specs:
        best_score = np.inf
        for j in range(tuning_budget):
            params = _sample_params(rng, param_specs)
            try:
                res = run_single(algorithm, S.instances[tune_idx], bounds, bench_budget,
                                 derive_seed(seed, 1, j), params)
            except Exception:
                continue  # an infeasible sampled config just scores nothing
            if res.best_y < best_score:
                best_score = res.best_y
                tuned = params
        if not tuned:
            tuned = {}

    runs = [
        run_single(algorithm, S.instances[bench_idx], bounds, bench_budget,
                   derive_seed(seed, 2, rep), tuned)
        for rep in range(reps)
    ]
    records = []
    for b in checkpoints:
        sliced = [_checkpoint_slice(r, b) for r in runs]
        ys, cpus, mems = zip(*sliced)
        records.append(EvaluationRecord(
            pipeline=pipeline_id,
            instance=f"instance-{bench_idx}",
            budget=b,
            best_y=float(np.mean(ys)),
            cpu_time=float(np.mean(cpus)),
            memory_bytes=float(np.mean(mems)),
            tuned_params=dict(tuned),
        ))
    return records


@dataclass(frozen=True)
class CampaignTask:
    pipeline: str
    algorithm: str
    params: dict
    instance: str
    objective: object
    rep: int
    seed: int


def run_campaign(
    pipelines: list[tuple[str, str, dict]],
    objectives: dict[str, object],
    bounds,
    budget: int,
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS,
    reps: int = 10,
    master_seed: int = 0,
    workers: int = 1,
) -> list[EvaluationRecord]:
    """Run every (pipeline, objective, rep) combination and average over reps.

    `pipelines` holds (pipeline_id, algorithm, params) triples; `objectives`
    maps instance ids to callables.  Results are schedule-independent because
    seeds derive from indices and records are sorted by deterministic keys.
    """
    checkpoints = tuple(b for b in checkpoints if b <= budget)
    pnames = [p[0] for p in pipelines]
    inames = sorted(objectives)
    tasks = [
        CampaignTask(
            pipeline=pid, algorithm=algo, params=params,
            instance=iname, objective=objectives[iname], rep=rep,
            seed=derive_seed(master_seed, pi, ii, rep),
        )
        for pi, (pid, algo, params) in enumerate(pipelines)
        for ii, iname in enumerate(inames)
        for rep in range(reps)
    ]

    def work(task: CampaignTask):
        res = run_single(task.algorithm, task.objective, bounds, budget, task.seed, task.params)
        return task, res

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    grouped: dict[tuple[str, str], list[optimizers.OptResult]] = {}
    params_of: dict[str, dict] = {}
    for task, res in sorted(results, key=lambda tr: (tr[0].pipeline, tr[0].instance, tr[0].rep)):
        grouped.setdefault((task.pipeline, task.instance), []).append(res)
        params_of[task.pipeline] = task.params

    records = []
    for (pid, iname), runs in grouped.items():
        for b in checkpoints:
            sliced = [_checkpoint_slice(r, b) for r in runs]
            ys, cpus, mems = zip(*sliced)
            records.append(EvaluationRecord(
                pipeline=pid, instance=iname, budget=b,
                best_y=float(np.mean(ys)),
                cpu_time=float(np.mean(cpus)),
                memory_bytes=float(np.mean(mems)),
                tuned_params=dict(params_of[pid]),
            ))
    records.sort(key=lambda r: (r.instance, r.budget, pnames.index(r.pipeline) if r.pipeline in pnames else -1))
    return records


def rank_algorithms(records: list[EvaluationRecord], by: str = "best_y") -> list[EvaluationRecord]:
    """Assign within-(instance, budget) ranks; rank 1 is best, ties mid-ranked."""
    if by not in ("best_y", "aggregate"):
        raise DegenerateInput(f"unknown ranking criterion {by!r}")
    groups: dict[tuple[str, int], list[int]] = {}
    for i, rec in enumerate(records):
        key = (rec.instance, rec.budget)
        groups.setdefault(key, []).append(i)
    out = list(records)
    for key, idxs in groups.items():
        names = [records[i].pipeline for i in idxs]
        if len(set(names)) != len(names):
            raise DuplicatePipelineInGroup(f"duplicate pipeline in group {key}")
        vals = np.array([records[i].best_y for i in idxs])
        if by == "aggregate":
            vals = -vals  # larger aggregate is better
        ranks = rankdata(vals, method="average")
        for i, r in zip(idxs, ranks):
            out[i] = replace(records[i], rank=float(r))
    return out


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    t_statistic: float
    p_value: float
    df: int
    conf_int: tuple[float, float]


def pearson_correlation(a, b) -> CorrelationResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size or a.size < 3:
        raise DegenerateInput("need two equally sized samples of length >= 3")
    if np.var(a) == 0 or np.var(b) == 0:
        raise DegenerateInput("zero variance input")
    r = float(np.corrcoef(a, b)[0, 1])
    r = max(min(r, 1.0), -1.0)
    df = a.size - 2
    if abs(r) == 1.0:
        t_stat, p = np.inf, 0.0
    else:
        t_stat = r * np.sqrt(df / (1.0 - r * r))
        p = float(2.0 * t_dist.sf(abs(t_stat), df))
    # Fisher-z 95% confidence interval
    if abs(r) == 1.0:
        ci = (r, r)
    else:
        z = np.arctanh(r)
        se = 1.0 / np.sqrt(a.size - 3)
        ci = (float(np.tanh(z - 1.959963985 * se)), float(np.tanh(z + 1.959963985 * se)))
    return CorrelationResult(r=r, t_statistic=float(t_stat), p_value=p, df=df, conf_int=ci)


CSV_FIELDS = ("pipeline", "instance", "budget", "best_y", "cpu_time", "memory_bytes", "rank")


def records_to_csv(records: list[EvaluationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.pipeline, r.instance, r.budget,
                        repr(r.best_y), repr(r.cpu_time), repr(r.memory_bytes),
                        "" if r.rank is None else repr(r.rank)])


def records_from_csv(path) -> list[EvaluationRecord]:
    from .errors import MalformedInput
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(CSV_FIELDS) <= set(reader.fieldnames):
            raise MalformedInput(f"{path}: expected columns {CSV_FIELDS}")
        for row in reader:
            records.append(EvaluationRecord(
                pipeline=row["pipeline"], instance=row["instance"],
                budget=int(row["budget"]), best_y=float(row["best_y"]),
                cpu_time=float(row["cpu_time"]), memory_bytes=float(row["memory_bytes"]),
                rank=float(row["rank"]) if row["rank"] else None,
            ))
    return records
