"""Declarative experiment runner: loyalty sweeps, phase snapshots, and
hospital-set diagnostics, with CSV/JSON/SVG emission.

Runs are deterministic in (spec, base seed): per-run seeds are derived by
hashing, seeds fan out across processes, and aggregation is a fold over
seed-ordered rows, so the parallelism degree never changes output bytes.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _svg
from .engine import (
    UNMATCHED,
    LoyaltyAccept,
    MatchingState,
    RunOutcome,
    make_next_policy,
    run,
)
from .prefs import MarketShape, PreferenceOracle
from .seeding import KIND_POLICY, KIND_RUN, derive_seed

__all__ = [
    "ExperimentSpec",
    "SweepRow",
    "SweepResult",
    "RankHistogram",
    "SnapshotResult",
    "eval_k_expression",
    "sweep",
    "snapshot",
    "classify_hospitals",
    "emit",
    "emit_snapshot",
    "rows_from_csv",
    "PRESETS",
]

CSV_COLUMNS = (
    "market",
    "n",
    "k",
    "seed",
    "policy",
    "total_proposals",
    "proposals_balanced",
    "proposals_unbalanced",
    "avg_doctor_rank",
    "avg_hospital_rank",
    "heavy_doctors",
    "heavy_hospitals",
    "s_a_size",
    "t_size",
    "t_rematched",
    "termination",
)

_AGGREGATE_METRICS = (
    "total_proposals",
    "proposals_balanced",
    "proposals_unbalanced",
    "avg_doctor_rank",
    "avg_hospital_rank",
    "heavy_doctors",
    "heavy_hospitals",
    "s_a_size",
    "t_size",
    "t_rematched",
)

_K_FUNCS = {"sqrt": math.sqrt, "ln": math.log, "log": math.log}
_K_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
}


def eval_k_expression(expr: int | str, n: int) -> int:
    """Evaluate a loyalty-grid entry against the market size n.

    Strings may use n, sqrt(), ln()/log(), + - * / and parentheses, e.g.
    "n - sqrt(n)*ln(n)". Results are floored to integers.
    """
    if isinstance(expr, int):
        return expr

    def walk(node: ast.AST) -> float:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _K_BINOPS:
            return _K_BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            name = node.func.id
            if name in _K_FUNCS and len(node.args) == 1 and not node.keywords:
                return _K_FUNCS[name](walk(node.args[0]))
            raise ValueError(f"unsupported function in k expression: {name}")
        if isinstance(node, ast.Name) and node.id == "n":
            return float(n)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        raise ValueError(f"unsupported k expression node: {ast.dump(node)}")

    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"invalid k expression {expr!r}") from exc
    return math.floor(walk(tree))


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one figure-style experiment."""

    market: str
    n: int
    k_grid: tuple[int | str, ...]
    seeds: int
    base_seed: int = 0
    next_policy: str = "fifo"
    amnesiac: bool = False
    snapshots: bool = False
    shuffle_proposers: bool = True

    def __post_init__(self) -> None:
        if self.market not in ("balanced", "unbalanced"):
            raise ValueError(f"unknown market kind {self.market!r}")
        if self.n < 1 or self.seeds < 1 or not self.k_grid:
            raise ValueError("need positive n, at least one seed and one k")

    def shape(self) -> MarketShape:
        if self.market == "balanced":
            return MarketShape.balanced(self.n)
        return MarketShape.unbalanced(self.n)

    def resolved_k_grid(self) -> list[int]:
        num_doctors = self.shape().num_doctors
        ks = [eval_k_expression(k, self.n) for k in self.k_grid]
        for k in ks:
            if not 0 <= k <= num_doctors - 1:
                raise ValueError(f"loyalty {k} outside [0, {num_doctors - 1}]")
        return ks


@dataclass(frozen=True)
class SweepRow:
    """One (k, seed) run, in the exact shape of the CSV schema."""

    market: str
    n: int
    k: int
    seed: int
    policy: str
    total_proposals: int
    proposals_balanced: int
    proposals_unbalanced: int
    avg_doctor_rank: float
    avg_hospital_rank: float
    heavy_doctors: int
    heavy_hospitals: int
    s_a_size: int | None
    t_size: int | None
    t_rematched: int | None
    termination: str


def _proposer_order(num_doctors: int, base_seed: int, seed_index: int) -> list[int]:
    order = list(range(num_doctors))
    random.Random(derive_seed(base_seed, KIND_POLICY, seed_index)).shuffle(order)
    return order


def run_for_spec(spec: ExperimentSpec, k: int, seed_index: int) -> RunOutcome:
    """Execute the engine once for a grid point of the spec.

    Preferences depend on (base_seed, seed_index) only, so runs at the
    same seed index share preferences across the whole k grid. The
    proposer starting order is reshuffled per seed as well.
    """
    shape = spec.shape()
    oracle = PreferenceOracle(shape, derive_seed(spec.base_seed, KIND_RUN, seed_index))
    order = (
        _proposer_order(shape.num_doctors, spec.base_seed, seed_index)
        if spec.shuffle_proposers
        else None
    )
    policy = make_next_policy(spec.next_policy, order)
    return run(
        shape,
        oracle,
        LoyaltyAccept(k),
        policy,
        amnesiac=spec.amnesiac,
    )


def _row_from_outcome(spec: ExperimentSpec, k: int, seed_index: int, out: RunOutcome) -> SweepRow:
    t_set = out.t_set()
    return SweepRow(
        market=spec.market,
        n=spec.n,
        k=k,
        seed=seed_index,
        policy=spec.next_policy,
        total_proposals=out.total_proposals,
        proposals_balanced=out.proposals_balanced,
        proposals_unbalanced=out.proposals_unbalanced,
        avg_doctor_rank=out.avg_doctor_rank,
        avg_hospital_rank=out.avg_hospital_rank,
        heavy_doctors=out.heavy_doctor_count,
        heavy_hospitals=out.heavy_hospital_count,
        s_a_size=out.s_a_size,
        t_size=None if t_set is None else len(t_set),
        t_rematched=out.t_rematched_count(),
        termination=out.termination_cause,
    )


def _sweep_task(args: tuple[ExperimentSpec, int, int]) -> SweepRow:
    spec, k, seed_index = args
    return _row_from_outcome(spec, k, seed_index, run_for_spec(spec, k, seed_index))


@dataclass
class SweepResult:
    """All rows of a sweep plus per-k mean/std aggregates."""

    spec: ExperimentSpec
    k_values: list[int]
    rows: list[SweepRow]

    def rows_for_k(self, k: int) -> list[SweepRow]:
        return [r for r in self.rows if r.k == k]

    def aggregates(self) -> dict[int, dict[str, dict[str, float]]]:
        out: dict[int, dict[str, dict[str, float]]] = {}
        for k in self.k_values:
            rows = self.rows_for_k(k)
            stats: dict[str, dict[str, float]] = {}
            for metric in _AGGREGATE_METRICS:
                values = [getattr(r, metric) for r in rows]
                if any(v is None for v in values):
                    continue
                arr = np.asarray(values, dtype=float)
                stats[metric] = {
                    "mean": float(arr.mean()),
                    "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                }
            out[k] = stats
        return out

    def mean(self, k: int, metric: str) -> float:
        return self.aggregates()[k][metric]["mean"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([_format_cell(getattr(r, col)) for col in CSV_COLUMNS])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "k_values": self.k_values,
            "rows": len(self.rows),
            "aggregates": {
                str(k): stats for k, stats in self.aggregates().items()
            },
        }


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def rows_from_csv(text: str) -> list[SweepRow]:
    """Parse ``SweepResult.to_csv`` output back into typed rows."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != list(CSV_COLUMNS):
        raise ValueError(f"unexpected CSV header: {reader.fieldnames}")
    rows = []
    for rec in reader:
        rows.append(
            SweepRow(
                market=rec["market"],
                n=int(rec["n"]),
                k=int(rec["k"]),
                seed=int(rec["seed"]),
                policy=rec["policy"],
                total_proposals=int(rec["total_proposals"]),
                proposals_balanced=int(rec["proposals_balanced"]),
                proposals_unbalanced=int(rec["proposals_unbalanced"]),
                avg_doctor_rank=float(rec["avg_doctor_rank"]),
                avg_hospital_rank=float(rec["avg_hospital_rank"]),
                heavy_doctors=int(rec["heavy_doctors"]),
                heavy_hospitals=int(rec["heavy_hospitals"]),
                s_a_size=int(rec["s_a_size"]) if rec["s_a_size"] else None,
                t_size=int(rec["t_size"]) if rec["t_size"] else None,
                t_rematched=int(rec["t_rematched"]) if rec["t_rematched"] else None,
                termination=rec["termination"],
            )
        )
    return rows


def sweep(spec: ExperimentSpec, jobs: int | None = None) -> SweepResult:
    """Run the engine for every (k, seed) pair of the spec.

    ``jobs`` caps worker processes; 1 forces in-process execution. Output
    is byte-identical for a given spec whatever the parallelism.
    """
    ks = spec.resolved_k_grid()
    tasks = [(spec, k, si) for k in ks for si in range(spec.seeds)]
    if jobs == 1 or len(tasks) == 1:
        rows = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (8 * (jobs or 4)))
            rows = list(pool.map(_sweep_task, tasks, chunksize=chunk))
    return SweepResult(spec, ks, rows)


@dataclass
class RankHistogram:
    """Ranks hospitals give their current matches at one instant."""

    ranks: list[int]

    @property
    def counts(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.ranks:
            out[r] = out.get(r, 0) + 1
        return out

    @property
    def mass(self) -> int:
        return len(self.ranks)

    def binned(self, bin_size: int) -> dict[int, int]:
        """Counts grouped into [1+i*bin_size, (i+1)*bin_size] buckets."""
        out: dict[int, int] = {}
        for r in self.ranks:
            lo = ((r - 1) // bin_size) * bin_size + 1
            out[lo] = out.get(lo, 0) + 1
        return out


@dataclass
class SnapshotResult:
    """Rank histograms at the end of the balanced phase and at termination."""

    n: int
    k: int
    seed: int
    policy: str
    at_flip: RankHistogram
    final: RankHistogram
    rematched: list[int]
    s_a: list[int]
    t_set: list[int]

    @property
    def s_a_rematched_fraction(self) -> float:
        if not self.s_a:
            return 0.0
        rematched = set(self.rematched)
        return sum(1 for h in self.s_a if h in rematched) / len(self.s_a)

    @property
    def t_rematched_fraction(self) -> float:
        if not self.t_set:
            return 0.0
        rematched = set(self.rematched)
        return sum(1 for h in self.t_set if h in rematched) / len(self.t_set)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "policy": self.policy,
            "ranks_at_flip": self.at_flip.ranks,
            "ranks_final": self.final.ranks,
            "rematched_hospitals": [h + 1 for h in self.rematched],
            "s_a": [h + 1 for h in self.s_a],
            "t_set": [h + 1 for h in self.t_set],
            "s_a_rematched_fraction": self.s_a_rematched_fraction,
            "t_rematched_fraction": self.t_rematched_fraction,
        }


def snapshot(spec: ExperimentSpec) -> SnapshotResult:
    """Run one unbalanced instance and capture both rank histograms."""
    if spec.market != "unbalanced":
        raise ValueError("snapshots need an unbalanced market")
    if len(spec.k_grid) != 1 or spec.seeds != 1:
        raise ValueError("snapshot specs use a single k and a single seed")
    (k,) = spec.resolved_k_grid()
    out = run_for_spec(spec, k, 0)
    assert out.rank_at_flip is not None and out.matching_at_flip is not None
    return SnapshotResult(
        n=spec.n,
        k=k,
        seed=0,
        policy=spec.next_policy,
        at_flip=RankHistogram(list(out.rank_at_flip)),
        final=RankHistogram([r for r in out.rank_final if r > 0]),
        rematched=out.rematched_after_flip() or [],
        s_a=list(out.available_at_flip or []),
        t_set=list(out.t_set() or []),
    )


def classify_hospitals(
    state: MatchingState, oracle: PreferenceOracle, c: int
) -> dict[str, int]:
    """Partition hospitals by the rank of their current match.

    With b = n/c: F holds ranks [1, b] (final matches), H holds
    (b, b + sqrt(n)] (hard to match), M holds (b + sqrt(n), 2b], the E_i
    hold ((i+1)b, (i+2)b] for i in 1..c-2, and U holds the unmatched.
    Ranks beyond n (the extra doctor) land in the last E set.
    """
    n = state.shape.num_hospitals
    if c < 3:
        raise ValueError("c must be at least 3")
    if c * c >= n:
        raise ValueError("c must be below sqrt(n)")
    b = n / c
    root = math.sqrt(n)
    counts: dict[str, int] = {"F": 0, "H": 0, "M": 0}
    for i in range(1, c - 1):
        counts[f"E{i}"] = 0
    counts["U"] = 0
    for h, d in enumerate(state.mu_h):
        if d == UNMATCHED:
            counts["U"] += 1
            continue
        r = oracle.rank_of(h, d)
        if r <= b:
            counts["F"] += 1
        elif r <= b + root:
            counts["H"] += 1
        elif r <= 2 * b:
            counts["M"] += 1
        else:
            i = min(c - 2, max(1, math.ceil(r / b) - 2))
            counts[f"E{i}"] += 1
    return counts


def emit(
    result: SweepResult,
    out_dir: str | Path,
    formats: tuple[str, ...] = ("csv", "json", "svg"),
    name: str = "sweep",
) -> list[Path]:
    """Write sweep artifacts; returns the paths created."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    unknown = set(formats) - {"csv", "json", "svg"}
    if unknown:
        raise ValueError(f"unknown emit formats: {sorted(unknown)}")
    if "csv" in formats:
        written.append(_write_text(out / f"{name}.csv", result.to_csv()))
    if "json" in formats:
        payload = json.dumps(result.to_json_dict(), indent=2, sort_keys=True)
        written.append(_write_text(out / f"{name}_aggregates.json", payload + "\n"))
    if "svg" in formats:
        agg = result.aggregates()
        ks = result.k_values
        ranks = [agg[k]["avg_doctor_rank"]["mean"] for k in ks]
        chart = _svg.line_chart(
            f"Average doctor rank vs loyalty ({result.spec.market}, n={result.spec.n})",
            "loyalty k",
            "average doctor rank",
            [("avg doctor rank", [float(k) for k in ks], ranks)],
        )
        written.append(_write_text(out / f"{name}_rank_vs_k.svg", chart))
        series = [
            (
                "balanced phase",
                [float(k) for k in ks],
                [agg[k]["proposals_balanced"]["mean"] for k in ks],
            ),
            (
                "unbalanced phase",
                [float(k) for k in ks],
                [agg[k]["proposals_unbalanced"]["mean"] for k in ks],
            ),
        ]
        chart = _svg.line_chart(
            f"Proposals per phase vs loyalty ({result.spec.market}, n={result.spec.n})",
            "loyalty k",
            "mean proposals",
            series,
        )
        written.append(_write_text(out / f"{name}_phases.svg", chart))
    return written


def emit_snapshot(
    snap: SnapshotResult,
    out_dir: str | Path,
    formats: tuple[str, ...] = ("json", "svg"),
    name: str = "snapshot",
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    unknown = set(formats) - {"json", "svg"}
    if unknown:
        raise ValueError(f"unknown snapshot formats: {sorted(unknown)}")
    if "json" in formats:
        payload = json.dumps(snap.to_json_dict(), indent=2, sort_keys=True)
        written.append(_write_text(out / f"{name}.json", payload + "\n"))
    if "svg" in formats:
        x_max = snap.n + 1
        flip = _svg.rank_heat_strip(
            f"Hospital ranks at end of balanced phase (k={snap.k}, n={snap.n})",
            "rank of current match",
            snap.at_flip.counts,
            x_max,
        )
        written.append(_write_text(out / f"{name}_flip.svg", flip))
        final = _svg.rank_heat_strip(
            f"Hospital ranks at termination (k={snap.k}, n={snap.n})",
            "rank of current match",
            snap.final.counts,
            x_max,
        )
        written.append(_write_text(out / f"{name}_final.svg", final))
    return written


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return path


PRESETS: dict[str, dict] = {
    "fig1a": {
        "kind": "sweep",
        "market": "balanced",
        "n": 1000,
        "k_grid": ("0", "n/10", "n/4", "n/2", "3*n/4", "n - 1"),
        "seeds": 100,
    },
    "fig1b": {
        "kind": "sweep",
        "market": "unbalanced",
        "n": 1000,
        "k_grid": (
            "0",
            "n/5",
            "2*n/5",
            "3*n/5",
            "n - sqrt(n)*ln(n)",
            "9*n/10",
            "n - sqrt(n)",
            "n",
        ),
        "seeds": 100,
    },
    "fig3": {
        "kind": "sweep",
        "market": "unbalanced",
        "n": 1000,
        "k_grid": (
            "0",
            "n/5",
            "2*n/5",
            "3*n/5",
            "n - sqrt(n)*ln(n)",
            "9*n/10",
            "n - sqrt(n)",
            "n",
        ),
        "seeds": 100,
    },
    "fig4": {"kind": "snapshot", "market": "unbalanced", "n": 500, "k_grid": ("0",)},
    "fig5": {"kind": "snapshot", "market": "unbalanced", "n": 500, "k_grid": ("n/2",)},
    "fig6": {
        "kind": "snapshot",
        "market": "unbalanced",
        "n": 500,
        "k_grid": ("n - sqrt(n)*ln(n)",),
    },
    "fig7": {
        "kind": "snapshot",
        "market": "unbalanced",
        "n": 500,
        "k_grid": ("n - sqrt(n)",),
    },
}
