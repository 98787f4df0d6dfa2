"""Command-line pipeline: ``sweep``, ``mine``, ``train``, ``search`` and ``report-all``.

Every stage reads its inputs from disk and writes its artifacts into an
output directory, so stages can be rerun independently. All randomness is
derived from one manifest seed through named sub-seeds.

Manifest (JSON) keys, all optional except where a stage needs them::

    {"substrate": "AgarOnly" | "PhysarumAgar" | "PhysarumMinimalAgar"
                  | "crafted:and" | "crafted:threshold" | "crafted:xor" | "path/to/model.json",
     "seed": 1, "pins": 9, "frequencies": [250, 500, 1000, 2500],
     "duration_s": 0.032, "seconds_per_config": 0.15, "out_dir": "run",
     "target": "Ratio", "budget": 48, "max_epochs": 100,
     "gates": ["AND", "OR", "NAND", "NOR", "XOR", "XNOR"],
     "starts": 1000, "probe_iters": 10, "refine_iters": 500, "output_pins": null,
     "histogram_bin_s": 60,
     "stages": {"sweep": true, "mine": true, "train": true, "search": true}}
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
import zlib
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import report
from .gates import (SEARCH_GATES, XOR, difficulty_hierarchy, gate_by_name, gate_census,
                    group_records, reference_census, reference_columns, temporal_histogram,
                    xor_pin_matrix)
from .search import Allocation, GateTask, default_allocations, search_all_allocations
from .substrate import SubstrateKind, crafted_substrate, load_substrate, make_substrate
from .surrogate import (TargetKind, build_dataset, hyper_search, load_model,
                        save_model, write_history_csv)
from .sweep import (DEFAULT_DURATION_S, DEFAULT_FREQUENCIES, DEFAULT_SECONDS_PER_CONFIG,
                    LogFormatError, RecordLog, enumerate_configs, read_log, run_sweep, write_log)

LOG_NAME = "records.jsonl"
MODEL_NAME = "model.json"
DEFAULTS = {
    "substrate": "PhysarumAgar", "seed": 1, "pins": 9, "frequencies": list(DEFAULT_FREQUENCIES),
    "duration_s": DEFAULT_DURATION_S, "seconds_per_config": DEFAULT_SECONDS_PER_CONFIG,
    "out_dir": "run", "target": "Ratio", "budget": 48, "max_epochs": 100,
    "gates": [g.short_name for g in SEARCH_GATES], "starts": 1000, "probe_iters": 10,
    "refine_iters": 500, "output_pins": None, "histogram_bin_s": 60.0,
    "stages": {"sweep": True, "mine": True, "train": True, "search": True},
}


class CliError(Exception):
    pass


def sub_seed(seed: int, name: str) -> int:
    """Stable 32-bit child seed for a named stage."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _info(msg: str, quiet: bool) -> None:
    if not quiet:
        print(msg)


def resolve_substrate(name: str, pins: int, seed: int, base_dir: Optional[Path] = None):
    if name.startswith("crafted:"):
        return crafted_substrate(name.split(":", 1)[1], pins)
    if name in {k.value for k in SubstrateKind}:
        return make_substrate(name, pins, seed)
    path = Path(name)
    if base_dir is not None and not path.is_absolute() and not path.exists():
        path = base_dir / path
    if not path.exists():
        raise CliError(f"substrate {name!r} is neither a known kind nor an existing file")
    model = load_substrate(path)
    if model.pin_count != pins:
        raise CliError(f"substrate file has {model.pin_count} pins but the run asks for {pins}")
    return model


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {path} is not writable ({exc.strerror})") from None
    return path


def load_manifest(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read manifest {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"manifest {path} is not valid JSON (line {exc.lineno}: {exc.msg})") from None
    if not isinstance(data, dict):
        raise CliError("manifest must be a JSON object")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise CliError(f"unknown manifest keys: {', '.join(sorted(unknown))}")
    merged = json.loads(json.dumps(DEFAULTS))
    stages = {**merged["stages"], **data.get("stages", {})}
    merged.update(data)
    merged["stages"] = stages
    return merged


def _echo_manifest(src: Optional[Path], manifest: dict, out: Path) -> None:
    dest = out / "manifest.json"
    if src is not None:
        if src.resolve() != dest.resolve():
            shutil.copyfile(src, dest)
    else:
        dest.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# stages

def cmd_sweep(manifest: dict, out: Path, manifest_path: Optional[Path] = None,
              quiet: bool = False) -> Path:
    out = _ensure_dir(out)
    seed = int(manifest["seed"])
    pins = int(manifest["pins"])
    freqs = sorted(float(f) for f in manifest["frequencies"])
    base = manifest_path.parent if manifest_path is not None else None
    model = resolve_substrate(str(manifest["substrate"]), pins, seed, base)
    sweep_seed = sub_seed(seed, "sweep")
    configs = enumerate_configs(pins, freqs, float(manifest["duration_s"]),
                                float(manifest["seconds_per_config"]), seed=sweep_seed)
    log = run_sweep(model, configs, float(manifest["duration_s"]), freqs, seed,
                    float(manifest["seconds_per_config"]), label=str(manifest["substrate"]))
    path = out / LOG_NAME
    write_log(log, path)
    _echo_manifest(manifest_path, manifest, out)
    _info(f"sweep: {len(log)} records -> {path}", quiet)
    return path


def _read_log_or_empty(path: Path) -> RecordLog:
    try:
        if path.stat().st_size == 0:
            return RecordLog([], [], 9)
    except OSError as exc:
        raise CliError(f"cannot read log {path}: {exc.strerror}") from None
    try:
        return read_log(path)
    except LogFormatError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_mine(log_path: Optional[Path], out: Path, bin_width_s: float = 60.0,
             fixture: Optional[str] = None, quiet: bool = False) -> dict:
    out = _ensure_dir(out)
    if fixture is not None:
        if fixture not in reference_columns():
            raise CliError(f"unknown fixture column {fixture!r}; choose from {reference_columns()}")
        census = reference_census(fixture)
        groups = None
    else:
        log = _read_log_or_empty(log_path)
        if not log.records:
            _warn(f"{log_path} holds no records; writing an empty census")
        groups = group_records(log)
        census = gate_census(groups)
    hier = difficulty_hierarchy(census, SEARCH_GATES)
    report.census_csv(census, out / "census.csv")
    (out / "hierarchy.txt").write_text(report.hierarchy_text(hier), encoding="utf-8")
    artifacts = {"census": out / "census.csv", "hierarchy": out / "hierarchy.txt"}
    if groups is not None:
        report.matrix_csv(xor_pin_matrix(groups, XOR), out / "xor_matrix.csv")
        hist = temporal_histogram(groups, XOR, bin_width_s)
        report.histogram_csv(hist, out / "xor_histogram.csv")
        report.histogram_svg(hist, out / "xor_histogram.svg", "XOR groups by first sighting")
        artifacts.update(xor_matrix=out / "xor_matrix.csv",
                         histogram=out / "xor_histogram.csv", histogram_svg=out / "xor_histogram.svg")
    _info(f"mine: {census.total} groups; hierarchy {hier}", quiet)
    return artifacts


def cmd_train(log_path: Path, out: Path, target: str = "Ratio", budget: int = 48, seed: int = 1,
              max_epochs: int = 100, quiet: bool = False) -> Path:
    out = _ensure_dir(out)
    try:
        kind = TargetKind(target)
    except ValueError:
        raise CliError(f"unknown target {target!r}; choose from "
                       f"{', '.join(k.value for k in TargetKind)}") from None
    log = _read_log_or_empty(log_path)
    if not log.records:
        raise CliError(f"{log_path} holds no records; nothing to train on")
    data = build_dataset(log, kind)
    if len(data) < 100:
        raise CliError(f"insufficient data: {len(data)} samples, need at least 100 "
                       "for a 10% validation split")
    res = hyper_search(data, int(budget), sub_seed(seed, "init"), max_epochs=int(max_epochs),
                       split_seed=sub_seed(seed, "split"))
    d = res.best
    meta = {"target": kind.value, "frequency_set": list(log.frequency_set),
            "pin_count": log.pin_count, "seed": seed, "budget": int(budget),
            "best_index": res.best_index, "val_mse": res.best_val_mse,
            "learning_rate": d.learning_rate, "n_layers": d.n_layers,
            "units_per_layer": d.units_per_layer, "activation": d.activation}
    path = out / MODEL_NAME
    save_model(res.model, path, meta)
    write_history_csv(res.runs, out / "history.csv")
    _info(f"train: best draw {res.best_index} ({d.n_layers}x{d.units_per_layer} {d.activation}, "
          f"lr {d.learning_rate:.4g}) val MSE {res.best_val_mse:.4g} -> {path}", quiet)
    return path


def parse_gates(names) -> List[GateTask]:
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    tasks = []
    for n in names:
        try:
            tasks.append(GateTask(gate_by_name(n.strip())))
        except ValueError:
            valid = ", ".join(g.short_name for g in SEARCH_GATES)
            raise CliError(f"unknown gate {n.strip()!r}; valid gates: {valid}") from None
    return tasks


def cmd_search(model_path: Path, gates, out: Path, seed: int = 1, starts: int = 1000,
               probe_iters: int = 10, refine_iters: int = 500, output_pins=None,
               allocations: Optional[List[Allocation]] = None, quiet: bool = False) -> Path:
    out = _ensure_dir(out)
    tasks = parse_gates(gates)
    try:
        model = load_model(model_path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint {model_path}: {exc}") from None
    allocs = allocations or default_allocations(model.n_inputs, output_pins)
    best, everything = [], []
    for task in tasks:
        res = search_all_allocations(model, task, allocs, starts, probe_iters, refine_iters,
                                     sub_seed(seed, "search:" + task.gate.short_name))
        best.append(res.best)
        everything.extend(res.results)
        report.corner_svg(res.best, task.targets, out / f"search_{task.gate.short_name}.svg")
        _info(f"search: {task.gate.short_name} best E={res.best.error_discrete:.4g} on "
              f"{res.best.allocation}", quiet)
    path = out / "search_results.csv"
    report.search_csv(best, path)
    report.search_csv(everything, out / "search_allocations.csv")
    return path


def cmd_report_all(manifest_path: Path, out: Optional[Path] = None, quiet: bool = False) -> Path:
    manifest = load_manifest(manifest_path)
    out = _ensure_dir(Path(out if out is not None else manifest["out_dir"]))
    stages = manifest["stages"]
    seed = int(manifest["seed"])
    log_path = out / LOG_NAME
    model_path = out / MODEL_NAME
    if stages.get("sweep", True):
        cmd_sweep(manifest, out, manifest_path, quiet)
    else:
        _echo_manifest(manifest_path, manifest, out)
    if stages.get("mine", True):
        cmd_mine(log_path, out, float(manifest["histogram_bin_s"]), quiet=quiet)
    if stages.get("train", True):
        cmd_train(log_path, out, manifest["target"], int(manifest["budget"]), seed,
                  int(manifest["max_epochs"]), quiet)
    if stages.get("search", True):
        cmd_search(model_path, manifest["gates"], out, seed, int(manifest["starts"]),
                   int(manifest["probe_iters"]), int(manifest["refine_iters"]),
                   manifest["output_pins"], quiet=quiet)
    return out


# --------------------------------------------------------------------------
# argument parsing

def _freq_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad frequency list {text!r}") from None


def _pin_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad pin list {text!r}") from None


def _alloc(text: str) -> Allocation:
    try:
        a, b, o = (int(x) for x in text.split(","))
        return Allocation(a, b, o)
    except ValueError:
        raise argparse.ArgumentTypeError(f"allocation must be 'a,b,out', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="materio", description=__doc__.split("\n")[0])
    p.add_argument("-q", "--quiet", action="store_true", help="only print warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run an exhaustive stimulus sweep and write the record log")
    s.add_argument("--manifest", type=Path, help="JSON manifest; flags override its values")
    s.add_argument("--substrate", help="substrate kind, crafted:<name> or a JSON substrate file")
    s.add_argument("--seed", type=int)
    s.add_argument("--pins", type=int)
    s.add_argument("--frequencies", type=_freq_list, help="comma-separated hertz")
    s.add_argument("--duration", type=float, help="buffer duration in seconds")
    s.add_argument("--seconds-per-config", type=float)
    s.add_argument("--out", type=Path)

    m = sub.add_parser("mine", help="mine gates from a record log")
    m.add_argument("log", type=Path, nargs="?")
    m.add_argument("--fixture", help="use a bundled reference census column instead of a log")
    m.add_argument("--bin-width", type=float, default=60.0, help="histogram bin width in seconds")
    m.add_argument("--out", type=Path, default=Path("."))

    t = sub.add_parser("train", help="fit the surrogate network with a random hyperparameter search")
    t.add_argument("log", type=Path)
    t.add_argument("--target", default="Ratio",
                   help="Ratio, PeakFrequency or Compressibility")
    t.add_argument("--budget", type=int, default=48, help="number of hyperparameter draws")
    t.add_argument("--max-epochs", type=int, default=100)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", type=Path, default=Path("."))

    c = sub.add_parser("search", help="search the surrogate for gate configurations")
    c.add_argument("checkpoint", type=Path)
    c.add_argument("--gates", default=",".join(g.short_name for g in SEARCH_GATES))
    c.add_argument("--seed", type=int, default=1)
    c.add_argument("--starts", type=int, default=1000)
    c.add_argument("--probe-iters", type=int, default=10)
    c.add_argument("--refine-iters", type=int, default=500)
    c.add_argument("--output-pins", type=_pin_list, help="restrict which pins may be outputs")
    c.add_argument("--alloc", type=_alloc, action="append",
                   help="search only this allocation 'a,b,out' (repeatable)")
    c.add_argument("--out", type=Path, default=Path("."))

    r = sub.add_parser("report-all", help="run every enabled stage from a manifest")
    r.add_argument("manifest", type=Path)
    r.add_argument("--out", type=Path, help="override the manifest's out_dir")
    return p


def _sweep_manifest(args) -> dict:
    manifest = load_manifest(args.manifest) if args.manifest else json.loads(json.dumps(DEFAULTS))
    overrides = {"substrate": args.substrate, "seed": args.seed, "pins": args.pins,
                 "frequencies": args.frequencies, "duration_s": args.duration,
                 "seconds_per_config": args.seconds_per_config,
                 "out_dir": None if args.out is None else str(args.out)}
    changed = {k: v for k, v in overrides.items() if v is not None}
    manifest.update(changed)
    return manifest, bool(changed)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            manifest, changed = _sweep_manifest(args)
            out = Path(manifest["out_dir"])
            # a manifest is echoed verbatim only when no flag altered it
            src = args.manifest if args.manifest is not None and not changed else None
            cmd_sweep(manifest, out, src, args.quiet)
        elif args.command == "mine":
            if args.log is None and args.fixture is None:
                raise CliError("mine needs a log path or --fixture")
            cmd_mine(args.log, args.out, args.bin_width, args.fixture, args.quiet)
        elif args.command == "train":
            cmd_train(args.log, args.out, args.target, args.budget, args.seed, args.max_epochs,
                      args.quiet)
        elif args.command == "search":
            cmd_search(args.checkpoint, args.gates, args.out, args.seed, args.starts,
                       args.probe_iters, args.refine_iters, args.output_pins, args.alloc,
                       args.quiet)
        elif args.command == "report-all":
            cmd_report_all(args.manifest, args.out, args.quiet)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
