"""Command-line interface: run / sweep / snapshot / oracle / verify.

Every option can also come from a plain-text config file of ``key = value``
lines (dashes and underscores are interchangeable in keys); command-line
flags override the file. The effective configuration is echoed into the
output metadata. Exit codes: 0 success, 1 verification found blocking
pairs, 2 usage or config errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import oracle as oracle_mod
from .engine import LoyaltyAccept, run
from .experiments import (
    PRESETS,
    ExperimentSpec,
    emit,
    emit_snapshot,
    snapshot,
    sweep,
)
from .prefs import (
    InstanceFormatError,
    MalformedPermutationError,
    MarketShape,
    PreferenceOracle,
    load_instance,
)
from .stability import verify_stable

OUTPUT_DIR_ENV = "LOYALDA_OUTPUT_DIR"

EXIT_OK = 0
EXIT_UNSTABLE = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict[str, str]:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    config: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        config[key.strip().replace("-", "_")] = value.strip()
    return config


_CASTS = {
    "int": int,
    "float": float,
    "str": str,
}


def _cast_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _merge(args: argparse.Namespace, config: dict[str, str], key: str, cast: str, default):
    """Flag value if given, else config-file value, else the default."""
    given = getattr(args, key, None)
    if given is not None:
        return given
    if key in config:
        raw = config[key]
        try:
            if cast == "bool":
                return _cast_bool(raw)
            if cast == "list":
                return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
            return _CASTS[cast](raw)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"config key {key}: {exc}") from exc
    return default


def _default_out_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "out")


def _split_formats(value) -> tuple[str, ...]:
    if isinstance(value, tuple):
        return value
    return tuple(tok.strip() for tok in str(value).split(",") if tok.strip())


def _emit_json(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loyalda",
        description="Stable matching market simulator with hospital loyalty.",
    )
    parser.add_argument("--config", help="key = value config file; flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one instance, print the outcome JSON")
    market = p_run.add_mutually_exclusive_group()
    market.add_argument("--balanced", type=int, metavar="N", help="n doctors, n hospitals")
    market.add_argument(
        "--unbalanced", type=int, metavar="N", help="n+1 doctors, n hospitals"
    )
    market.add_argument("--instance", help="explicit-preference instance file")
    p_run.add_argument("--k", type=int, help="loyalty parameter (default 0)")
    p_run.add_argument("--seed", type=int, help="preference seed (default 0)")
    p_run.add_argument(
        "--policy", choices=("fifo", "lifo", "random"), help="proposer order"
    )
    p_run.add_argument("--amnesiac", action=argparse.BooleanOptionalAction)
    p_run.add_argument(
        "--history", action=argparse.BooleanOptionalAction, help="include proposal log"
    )

    p_sweep = sub.add_parser("sweep", help="run a (k x seed) grid, write artifacts")
    p_sweep.add_argument("--preset", choices=sorted(PRESETS), help="figure-style preset")
    p_sweep.add_argument("--market", choices=("balanced", "unbalanced"))
    p_sweep.add_argument("--n", type=int, help="number of hospitals")
    p_sweep.add_argument(
        "--k-grid", dest="k_grid", help="comma list of k values or expressions in n"
    )
    p_sweep.add_argument("--seeds", type=int, help="number of seeds per k")
    p_sweep.add_argument("--base-seed", dest="base_seed", type=int)
    p_sweep.add_argument("--policy", choices=("fifo", "lifo", "random"))
    p_sweep.add_argument("--amnesiac", action=argparse.BooleanOptionalAction)
    p_sweep.add_argument(
        "--shuffle-proposers", dest="shuffle_proposers", action=argparse.BooleanOptionalAction
    )
    p_sweep.add_argument("--out", help=f"output directory (default ${OUTPUT_DIR_ENV} or ./out)")
    p_sweep.add_argument("--formats", help="comma list from csv,json,svg")
    p_sweep.add_argument("--jobs", type=int, help="worker processes (default: cores)")
    p_sweep.add_argument("--name", help="artifact base name (default: preset or 'sweep')")

    p_snap = sub.add_parser(
        "snapshot", help="rank histograms at end of balanced phase and termination"
    )
    p_snap.add_argument("--preset", choices=sorted(PRESETS), help="fig4..fig7 presets")
    p_snap.add_argument("--n", type=int, help="number of hospitals")
    p_snap.add_argument("--k", help="loyalty value or expression in n")
    p_snap.add_argument("--base-seed", dest="base_seed", type=int)
    p_snap.add_argument("--policy", choices=("fifo", "lifo", "random"))
    p_snap.add_argument("--out", help="output directory")
    p_snap.add_argument("--formats", help="comma list from json,svg")
    p_snap.add_argument("--name", help="artifact base name")

    p_oracle = sub.add_parser("oracle", help="ground-truth simulators and enumeration")
    oracle_sub = p_oracle.add_subparsers(dest="oracle_command", required=True)

    p_coll = oracle_sub.add_parser("collector", help="uniform draws until all types seen")
    p_coll.add_argument("--n", type=int, required=True)
    p_coll.add_argument("--trials", type=int, required=True)
    p_coll.add_argument("--seed", type=int, default=0)

    p_am = oracle_sub.add_parser(
        "absent-minded", help="collection with keep probability q"
    )
    p_am.add_argument("--n", type=int, required=True)
    p_am.add_argument("--q", type=float, required=True)
    p_am.add_argument("--trials", type=int, required=True)
    p_am.add_argument("--seed", type=int, default=0)

    p_min = oracle_sub.add_parser("min-element", help="mean minimum of a k-subset")
    p_min.add_argument("--n", type=int, required=True)
    p_min.add_argument("--k", type=int, required=True)
    p_min.add_argument("--trials", type=int, required=True)
    p_min.add_argument("--seed", type=int, default=0)

    p_enum = oracle_sub.add_parser("enumerate", help="brute-force stable set")
    p_enum.add_argument("--instance", required=True)
    p_enum.add_argument("--k", type=int, default=0)
    p_enum.add_argument("--full-universe", action="store_true")

    p_rural = oracle_sub.add_parser(
        "rural", help="is the unmatched doctor unique across stable matchings (k=0)"
    )
    p_rural.add_argument("--instance", required=True)

    p_verify = sub.add_parser("verify", help="report blocking pairs of a matching")
    p_verify.add_argument("--instance", required=True)
    p_verify.add_argument("--k", type=int, help="loyalty parameter (default 0)")
    p_verify.add_argument("--matching", required=True, help="matching JSON file")
    p_verify.add_argument(
        "--sample", type=float, help="fraction of doctors to spot-check (default 1.0)"
    )
    p_verify.add_argument("--sample-seed", dest="sample_seed", type=int)
    return parser


def _cmd_run(args: argparse.Namespace, config: dict[str, str]) -> int:
    balanced = _merge(args, config, "balanced", "int", None)
    unbalanced = _merge(args, config, "unbalanced", "int", None)
    instance = _merge(args, config, "instance", "str", None)
    k = _merge(args, config, "k", "int", 0)
    seed = _merge(args, config, "seed", "int", 0)
    policy = _merge(args, config, "policy", "str", "fifo")
    amnesiac = _merge(args, config, "amnesiac", "bool", False)
    history = _merge(args, config, "history", "bool", False)
    sources = [s for s in (balanced, unbalanced, instance) if s is not None]
    if len(sources) != 1:
        raise ConfigError("pick exactly one of --balanced, --unbalanced, --instance")
    if instance is not None:
        oracle = load_instance(instance, seed=seed)
        shape = oracle.shape
    else:
        shape = (
            MarketShape.balanced(balanced)
            if balanced is not None
            else MarketShape.unbalanced(unbalanced)
        )
        oracle = PreferenceOracle(shape, seed)
    outcome = run(
        shape,
        oracle,
        LoyaltyAccept(k),
        policy,
        amnesiac=amnesiac,
        record_history=history,
    )
    payload = outcome.to_json_dict(include_history=history)
    payload["config"] = {
        "market": "instance" if instance else ("balanced" if balanced else "unbalanced"),
        "instance": instance,
        "n": shape.num_hospitals,
        "k": k,
        "seed": seed,
        "policy": policy,
        "amnesiac": amnesiac,
        "history": history,
    }
    _emit_json(payload)
    return EXIT_OK


def _spec_from_args(
    args: argparse.Namespace, config: dict[str, str], *, single_k: bool
) -> tuple[ExperimentSpec, str]:
    preset_name = _merge(args, config, "preset", "str", None)
    preset = PRESETS.get(preset_name, {}) if preset_name else {}
    if preset_name and preset_name not in PRESETS:
        raise ConfigError(f"unknown preset {preset_name!r}")
    if single_k:
        k = _merge(args, config, "k", "str", None)
        k_grid = (k,) if k is not None else preset.get("k_grid")
    else:
        k_grid = _merge(args, config, "k_grid", "list", None)
        if isinstance(k_grid, str):
            k_grid = tuple(tok.strip() for tok in k_grid.split(",") if tok.strip())
        if k_grid is None:
            k_grid = preset.get("k_grid")
    market = _merge(args, config, "market", "str", preset.get("market"))
    n = _merge(args, config, "n", "int", preset.get("n"))
    seeds = _merge(args, config, "seeds", "int", preset.get("seeds", 1)) if not single_k else 1
    base_seed = _merge(args, config, "base_seed", "int", 0)
    policy = _merge(args, config, "policy", "str", "fifo")
    amnesiac = _merge(args, config, "amnesiac", "bool", False)
    shuffle = _merge(args, config, "shuffle_proposers", "bool", True)
    if market is None or n is None or not k_grid:
        raise ConfigError("market, n and k values are required (flag, config, or preset)")
    spec = ExperimentSpec(
        market=market,
        n=n,
        k_grid=tuple(k_grid),
        seeds=seeds,
        base_seed=base_seed,
        next_policy=policy,
        amnesiac=amnesiac,
        snapshots=single_k,
        shuffle_proposers=shuffle,
    )
    default_name = preset_name or ("snapshot" if single_k else "sweep")
    name = _merge(args, config, "name", "str", default_name)
    return spec, name


def _write_meta(out_dir: Path, name: str, spec: ExperimentSpec, extra: dict) -> Path:
    meta = {"spec": asdict(spec), **extra}
    path = out_dir / f"{name}_meta.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _cmd_sweep(args: argparse.Namespace, config: dict[str, str]) -> int:
    spec, name = _spec_from_args(args, config, single_k=False)
    out_dir = Path(_merge(args, config, "out", "str", _default_out_dir()))
    formats = _split_formats(_merge(args, config, "formats", "list", ("csv", "json", "svg")))
    jobs = _merge(args, config, "jobs", "int", None)
    result = sweep(spec, jobs=jobs)
    written = emit(result, out_dir, formats, name=name)
    written.append(_write_meta(out_dir, name, spec, {"jobs": jobs, "formats": list(formats)}))
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_snapshot(args: argparse.Namespace, config: dict[str, str]) -> int:
    spec, name = _spec_from_args(args, config, single_k=True)
    out_dir = Path(_merge(args, config, "out", "str", _default_out_dir()))
    formats = _split_formats(_merge(args, config, "formats", "list", ("json", "svg")))
    snap = snapshot(spec)
    written = emit_snapshot(snap, out_dir, formats, name=name)
    written.append(_write_meta(out_dir, name, spec, {"formats": list(formats)}))
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace, config: dict[str, str]) -> int:
    cmd = args.oracle_command
    if cmd == "collector":
        stats = oracle_mod.coupon_collector_sim(args.n, args.trials, args.seed)
        _emit_json(stats.to_json_dict())
    elif cmd == "absent-minded":
        stats = oracle_mod.absent_minded_sim(args.n, args.q, args.trials, args.seed)
        _emit_json(stats.to_json_dict())
    elif cmd == "min-element":
        mean = oracle_mod.min_element_sim(args.n, args.k, args.trials, args.seed)
        _emit_json(
            {
                "n": args.n,
                "k": args.k,
                "trials": args.trials,
                "seed": args.seed,
                "mean_min": mean,
            }
        )
    elif cmd == "enumerate":
        oracle = load_instance(args.instance)
        stable = oracle_mod.enumerate_stable(
            oracle, LoyaltyAccept(args.k), full_universe=args.full_universe
        )
        payload = stable.to_json_dict()
        payload["k"] = args.k
        _emit_json(payload)
    elif cmd == "rural":
        oracle = load_instance(args.instance)
        _emit_json({"rural_hospital_holds": oracle_mod.rural_hospital_check(oracle)})
    else:  # pragma: no cover - argparse enforces choices
        raise ConfigError(f"unknown oracle command {cmd!r}")
    return EXIT_OK


def _load_matching(path: str, num_doctors: int, num_hospitals: int) -> list[int]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read matching {path}: {exc}") from exc
    entries = payload.get("hospital_of_doctor") if isinstance(payload, dict) else payload
    if not isinstance(entries, list) or len(entries) != num_doctors:
        raise ConfigError(
            f"matching must list one hospital (1-based, null = unmatched) "
            f"per doctor; expected {num_doctors} entries"
        )
    matching = []
    for d, entry in enumerate(entries):
        if entry is None:
            matching.append(-1)
            continue
        if not isinstance(entry, int) or not 1 <= entry <= num_hospitals:
            raise ConfigError(f"doctor {d + 1}: bad hospital id {entry!r}")
        matching.append(entry - 1)
    return matching


def _cmd_verify(args: argparse.Namespace, config: dict[str, str]) -> int:
    k = _merge(args, config, "k", "int", 0)
    sample = _merge(args, config, "sample", "float", 1.0)
    sample_seed = _merge(args, config, "sample_seed", "int", 0)
    oracle = load_instance(args.instance)
    matching = _load_matching(
        args.matching, oracle.shape.num_doctors, oracle.shape.num_hospitals
    )
    report = verify_stable(
        matching,
        oracle,
        LoyaltyAccept(k),
        sample_fraction=sample,
        sample_seed=sample_seed,
    )
    payload = report.to_json_dict()
    payload["config"] = {
        "instance": args.instance,
        "matching": args.matching,
        "k": k,
        "sample": sample,
        "sample_seed": sample_seed,
    }
    _emit_json(payload)
    return EXIT_OK if report.is_stable else EXIT_UNSTABLE


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        if args.command == "run":
            return _cmd_run(args, config)
        if args.command == "sweep":
            return _cmd_sweep(args, config)
        if args.command == "snapshot":
            return _cmd_snapshot(args, config)
        if args.command == "oracle":
            return _cmd_oracle(args, config)
        if args.command == "verify":
            return _cmd_verify(args, config)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, InstanceFormatError, MalformedPermutationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
