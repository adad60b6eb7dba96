"""Command-line entry point: ``generate``, ``run``, ``sweep``, ``audit``.

Configuration is a single flat JSON document plus command-line overrides
(flag > config file > default). All randomness flows from the one seed via
named sub-streams, so every artifact embeds enough (its config echo) to be
reproduced bit-for-bit.

Exit codes: 0 success, 2 usage/config error, 3 numeric divergence,
4 audit failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .datagen import assign_coverage, generate_lowrank_field, load_field_csv, \
    observe, write_field_csv
from .errors import CswaError, NumericError, ParameterError, ParseError
from .evaluation import SweepSpec, absolute_error, median_errors, \
    records_to_csv, run_sweep
from .model import Field, Hyperparams, build_window
from .protocol import TranscriptEntry, audit_transcript, run_simulation
from .rng import substream

_PARAM_DEFAULTS = {
    "num_participants": 10,
    "batch_size": 10,
    "max_subareas": 3,
    "window": 20,
    "latent": 2,
    "step_size": 1e-3,
    "reg_p": 1e-4,
    "reg_q": 1e-4,
    "grad_tol": 1e-4,
    "max_iters": 5000,
    "noise_sigma": 0.0,
    "seed": 0,
}

_FLAG_DEFAULTS = {
    "literal_update": False,
    "exclude_self": True,
    "require_convergence": False,
    "missing_only_error": False,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for one command invocation."""

    params: Hyperparams
    synthetic: dict | None        # {"num_subareas", "num_cycles", "rank"}
    field_csv: str | None
    end_cycle: int | None
    out_dir: Path
    unit: str
    literal_update: bool
    exclude_self: bool
    require_convergence: bool
    missing_only_error: bool
    sweep: dict | None            # {"axis", "values", "seeds", "methods"}

    def echo(self) -> dict:
        doc = dict(self.params.to_dict())
        doc.update({
            "synthetic": self.synthetic,
            "field_csv": self.field_csv,
            "end_cycle": self.end_cycle,
            "out": str(self.out_dir),
            "unit": self.unit,
            "literal_update": self.literal_update,
            "exclude_self": self.exclude_self,
            "require_convergence": self.require_convergence,
            "missing_only_error": self.missing_only_error,
            "sweep": self.sweep,
        })
        return doc


def _load_json(path: str) -> dict:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except OSError as err:
        raise ParameterError(f"cannot read config {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ParseError(f"config {path} is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ParseError(f"config {path} must be a JSON object")
    return doc


def build_config(doc: dict, overrides: dict) -> RunConfig:
    """Merge defaults, a config document, and CLI overrides (highest wins)."""
    merged = dict(doc)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value

    known = set(_PARAM_DEFAULTS) | set(_FLAG_DEFAULTS) | {
        "synthetic", "field_csv", "end_cycle", "out", "unit", "sweep"}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ParameterError(f"unknown config keys: {unknown}")

    param_values = {k: merged.get(k, v) for k, v in _PARAM_DEFAULTS.items()}
    for int_key in ("num_participants", "batch_size", "max_subareas",
                    "window", "latent", "max_iters", "seed"):
        try:
            param_values[int_key] = int(param_values[int_key])
        except (TypeError, ValueError):
            raise ParameterError(
                f"config key {int_key} must be an integer, "
                f"got {param_values[int_key]!r}") from None
    params = Hyperparams(**param_values)

    synthetic = merged.get("synthetic")
    field_csv = merged.get("field_csv")
    if (synthetic is None) == (field_csv is None):
        raise ParameterError(
            "exactly one field source required: 'synthetic' "
            "{num_subareas,num_cycles,rank} or 'field_csv'")
    if synthetic is not None:
        required = {"num_subareas", "num_cycles", "rank"}
        if not isinstance(synthetic, dict) or set(synthetic) != required:
            raise ParameterError(
                f"synthetic spec must have exactly the keys {sorted(required)}")
        synthetic = {k: int(v) for k, v in synthetic.items()}
        # known dimensions: fail before any field is built
        params.check_against(synthetic["num_subareas"])

    end_cycle = merged.get("end_cycle")
    if end_cycle is not None:
        end_cycle = int(end_cycle)

    flags = {k: bool(merged.get(k, v)) for k, v in _FLAG_DEFAULTS.items()}
    return RunConfig(
        params=params,
        synthetic=synthetic,
        field_csv=field_csv,
        end_cycle=end_cycle,
        out_dir=Path(merged.get("out", ".")),
        unit=str(merged.get("unit", "")),
        sweep=merged.get("sweep"),
        **flags,
    )


def _build_field(config: RunConfig) -> Field:
    if config.synthetic is not None:
        spec = config.synthetic
        return generate_lowrank_field(spec["num_subareas"], spec["num_cycles"],
                                      spec["rank"], config.params.seed)
    return load_field_csv(config.field_csv, unit=config.unit)


def _dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def cmd_generate(config: RunConfig) -> int:
    if config.synthetic is None:
        raise ParameterError("generate requires a 'synthetic' field spec")
    config.out_dir.mkdir(parents=True, exist_ok=True)
    field = _build_field(config)
    field_path = config.out_dir / "field.csv"
    write_field_csv(field, field_path)

    params = config.params
    params.check_against(field.num_subareas)
    schedule = assign_coverage(params, field.num_subareas,
                               substream(params.seed, "coverage"))
    schedule_path = config.out_dir / "schedule.json"
    _dump_json({"config": config.echo(), "schedule": schedule.to_jsonable()},
               schedule_path)
    print(f"wrote {field_path} and {schedule_path}")
    return 0


def _pipeline(config: RunConfig):
    """Shared datagen front half: field -> window -> schedule -> observations."""
    field = _build_field(config)
    params = config.params
    params.check_against(field.num_subareas)
    end_cycle = config.end_cycle if config.end_cycle is not None else field.num_cycles
    window = build_window(field, end_cycle, params.window)
    schedule = assign_coverage(params, field.num_subareas,
                               substream(params.seed, "coverage"))
    all_obs = observe(window, schedule, params.noise_sigma,
                      substream(params.seed, "observe"))
    return field, window, schedule, all_obs


def cmd_run(config: RunConfig, audit: bool = False,
            transcript_jsonl: bool = False) -> int:
    field, window, schedule, all_obs = _pipeline(config)
    result = run_simulation(all_obs, config.params,
                            exclude_self=config.exclude_self,
                            literal_update=config.literal_update,
                            require_convergence=config.require_convergence)
    err = absolute_error(result.recovered, window)

    doc = result.to_jsonable()
    doc["config"] = config.echo()
    doc["abs_error"] = err
    if config.missing_only_error:
        uncovered = schedule.union_mask() == 0.0
        doc["missing_only_abs_error"] = (
            absolute_error(result.recovered, window, where=uncovered)
            if uncovered.any() else None)

    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.out_dir / "run_result.json"
    _dump_json(doc, out_path)
    if transcript_jsonl:
        lines = "".join(json.dumps(e.to_jsonable(), sort_keys=True) + "\n"
                        for e in result.transcript)
        (config.out_dir / "transcript.jsonl").write_text(lines)

    print(f"abs_error={err!r} "
          f"chains_converged={result.converged_chains}/{config.params.batch_size} "
          f"scalars={result.scalars_transferred()}")
    if audit:
        report = audit_transcript(list(result.transcript))
        if report.passed:
            print("audit=pass")
        else:
            first = report.violations[0]
            print(f"audit=fail index={first.index} rule={first.rule}")
            return 4
    return 0


def cmd_sweep(config: RunConfig, workers: int) -> int:
    if config.sweep is None:
        raise ParameterError("sweep requires a 'sweep' config section "
                             "{axis, values, seeds, methods}")
    section = config.sweep
    required = {"axis", "values", "seeds", "methods"}
    if not isinstance(section, dict) or not required <= set(section):
        raise ParameterError(f"sweep section must define {sorted(required)}")
    spec = SweepSpec(base=config.params, axis=section["axis"],
                     values=tuple(section["values"]),
                     seeds=tuple(section["seeds"]),
                     methods=tuple(section["methods"]))
    field = _build_field(config)
    records = run_sweep(spec, field, end_cycle=config.end_cycle,
                        max_workers=workers,
                        exclude_self=config.exclude_self,
                        literal_update=config.literal_update,
                        require_convergence=config.require_convergence)

    config.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.out_dir / "sweep.csv"
    csv_path.write_text(records_to_csv(records))
    _dump_json({"config": config.echo(),
                "records": [r.to_jsonable() for r in records]},
               config.out_dir / "sweep.json")

    medians = median_errors(records)
    print(f"axis={spec.axis}  median abs_error by value and method")
    header = "value".ljust(10) + "".join(m.rjust(14) for m in spec.methods)
    print(header)
    for value in spec.values:
        row = str(value).ljust(10)
        for method in spec.methods:
            row += f"{medians[(value, method)]:14.6f}"
        print(row)
    print(f"wrote {csv_path}")
    return 0


def _read_transcript(path: Path) -> list[TranscriptEntry]:
    text = path.read_text()
    try:
        if path.suffix == ".jsonl":
            entries = [json.loads(line) for line in text.splitlines() if line.strip()]
        else:
            doc = json.loads(text)
            entries = doc["transcript"] if isinstance(doc, dict) else doc
        return [TranscriptEntry.from_jsonable(e) for e in entries]
    except (json.JSONDecodeError, KeyError, TypeError) as err:
        raise ParseError(f"{path} does not contain a transcript: {err}") from err


def cmd_audit(path: Path) -> int:
    report = audit_transcript(_read_transcript(path))
    if report.passed:
        print("audit=pass")
        return 0
    for v in report.violations:
        print(f"audit=fail index={v.index} rule={v.rule} detail={v.detail}")
    return 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cswa",
        description="Aggregation-free community sensing simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")

    gen = sub.add_parser("generate", help="write a synthetic field CSV and schedule")
    common(gen)

    run = sub.add_parser("run", help="one full decentralized recovery run")
    common(run)
    run.add_argument("--end-cycle", type=int, dest="end_cycle",
                     help="last cycle of the recovered window (default: latest)")
    run.add_argument("--audit", action="store_true",
                     help="audit the transcript after the run")
    run.add_argument("--transcript", action="store_true",
                     help="also write transcript.jsonl")

    sweep = sub.add_parser("sweep", help="factor sweep over methods and seeds")
    common(sweep)
    sweep.add_argument("--workers", type=int, default=1,
                       help="concurrent sweep cells (default 1)")

    audit = sub.add_parser("audit", help="audit a stored run or transcript")
    audit.add_argument("input", help="run_result.json or transcript.jsonl")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "audit":
            return cmd_audit(Path(args.input))
        doc = _load_json(args.config) if args.config else {}
        overrides = {"seed": args.seed, "out": args.out}
        if getattr(args, "end_cycle", None) is not None:
            overrides["end_cycle"] = args.end_cycle
        config = build_config(doc, overrides)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "run":
            return cmd_run(config, audit=args.audit,
                           transcript_jsonl=args.transcript)
        if args.command == "sweep":
            return cmd_sweep(config, workers=args.workers)
        raise ParameterError(f"unknown command {args.command!r}")
    except NumericError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except CswaError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
