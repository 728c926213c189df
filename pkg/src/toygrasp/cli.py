"""Command-line entry point.

Subcommands: generate | analyze | detpool-check | schedule | aggregate | report.
Exit codes: 0 success, 1 property-check failure, 2 config/input error,
3 I/O error. SHA-256 digests of outputs are printed so determinism is
auditable from the shell. The TOYGRASP_OUT environment variable overrides
the configured output directory (the --out flag wins over both).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis as analysis_mod
from . import evalharness
from .assembler import connectivity_check, generate_set
from .checks import run_detpool_checks
from .config import CliConfig, load_config
from .errors import ConfigError, IoFailure, SchemaViolation, ToygraspError
from .io import (
    build_manifest,
    manifest_json_bytes,
    obj_bytes,
    read_manifest,
    read_pgm,
    record_to_toy,
    stl_bytes,
)
from .mesh import mesh_toy

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _resolve_out(args_out: str | None, config: CliConfig) -> Path:
    if args_out:
        return Path(args_out)
    env = os.environ.get("TOYGRASP_OUT")
    if env:
        return Path(env)
    return Path(config.output_dir)


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out_dir = _resolve_out(args.out, config)
    mesh_dir = out_dir / "meshes"
    mesh_dir.mkdir(parents=True, exist_ok=True)

    toys = generate_set(config.generation)
    failures = sum(not connectivity_check(toy) for toy in toys)

    manifest = build_manifest(
        toys, config.generation, config.tessellation, config.n_directions
    )
    manifest_bytes = manifest_json_bytes(manifest)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_bytes(manifest_bytes)

    def toy_files(toy):
        mesh = mesh_toy(toy, config.tessellation)
        return toy.id, stl_bytes(mesh), obj_bytes(mesh)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rendered = list(pool.map(toy_files, toys))
    else:
        rendered = [toy_files(toy) for toy in toys]

    digest_lines = [f"{_sha256(manifest_bytes)}  manifest.json"]
    for toy_id, stl, obj in rendered:
        (mesh_dir / f"{toy_id}.stl").write_bytes(stl)
        (mesh_dir / f"{toy_id}.obj").write_bytes(obj)
        digest_lines.append(f"{_sha256(stl)}  meshes/{toy_id}.stl")
        digest_lines.append(f"{_sha256(obj)}  meshes/{toy_id}.obj")
    digests_text = "\n".join(digest_lines) + "\n"
    (out_dir / "digests.txt").write_text(digests_text)

    counts = config.generation.composition.counts()
    print(f"generated {len(toys)} toys into {out_dir}")
    print("  categories: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    print(f"  connectivity failures: {failures}")
    print(f"  manifest sha256: {_sha256(manifest_bytes)}")
    print(f"  outputs sha256: {_sha256(digests_text.encode())} ({len(digest_lines)} files)")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    manifest = read_manifest(args.manifest)
    out_path = Path(args.out) if args.out else _resolve_out(None, config) / "analysis.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)

    def analyze_record(record):
        toy = record_to_toy(record)
        mesh = mesh_toy(toy, config.tessellation)
        report = analysis_mod.analyze_toy(
            toy,
            mesh,
            config.gripper,
            config.build_edge,
            config.min_wall,
            config.n_directions,
        )
        return toy.id, report

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(analyze_record, manifest.toys))
    else:
        rows = [analyze_record(record) for record in manifest.toys]

    analysis_mod.write_feasibility_csv(rows, out_path)
    graspable = sum(1 for _, r in rows if r.graspable)
    fits = sum(1 for _, r in rows if r.fits_build_volume)
    thin = sum(1 for _, r in rows if r.thin_wall)
    print(f"analyzed {len(rows)} toys -> {out_path}")
    print(f"  graspable: {graspable}/{len(rows)}, fits build volume: {fits}/{len(rows)}, thin walls: {thin}")
    print(f"  csv sha256: {_sha256(out_path.read_bytes())}")
    return EXIT_OK


def cmd_detpool_check(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.precision != "float64":
        print(
            "toygrasp: [CONFIG] gradient verification requires float64 precision; "
            f"config requests {config.precision}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    mask = read_pgm(args.mask) if args.mask else None
    results = run_detpool_checks(
        config.encoder,
        seed=config.encoder_seed,
        mask=mask,
        fd_entries_per_tensor=None if args.full_gradients else 8,
    )
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status}  {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def _read_objects(path: str) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        data = json.loads(text)
        if not isinstance(data, list):
            raise SchemaViolation("objects JSON must be an array of ids")
        return [str(item) for item in data]
    return [line.strip() for line in text.splitlines() if line.strip()]


def cmd_schedule(args: argparse.Namespace) -> int:
    protocol = evalharness.Protocol(args.protocol)
    objects = _read_objects(args.objects)
    schedule = evalharness.make_schedule(protocol, objects, args.seed)
    evalharness.write_schedule(schedule, args.out)
    data = Path(args.out).read_bytes()
    print(
        f"scheduled {len(schedule.trials)} trials for {len(objects)} objects "
        f"({protocol.value}, seed {args.seed}) -> {args.out}"
    )
    print(f"  schedule sha256: {_sha256(data)}")
    return EXIT_OK


def cmd_aggregate(args: argparse.Namespace) -> int:
    outcomes = evalharness.read_outcomes_csv(args.outcomes)
    table = evalharness.aggregate(outcomes)
    print(evalharness.render_success_table(table), end="")
    print(f"overall: {table.overall_display}")
    if args.out:
        evalharness.write_success_csv(table, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    with open(args.rows, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != [
            "label",
            "demos",
            "success_percent",
        ]:
            raise SchemaViolation(
                "rows file must start with header 'label,demos,success_percent'"
            )
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((row[0], int(row[1]), float(row[2])))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"line {line_number}: {exc}") from exc
    evalharness.scaling_report(rows, args.out)
    out = Path(args.out)
    print(f"wrote {out} and {out.with_suffix('.txt')} ({len(rows)} rows)")
    print(f"  csv sha256: {_sha256(out.read_bytes())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toygrasp",
        description="Composite-toy generation, grasp/print analysis, encoder checks, and evaluation schedules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate the toy set, manifest, and STL/OBJ meshes")
    p.add_argument("--config", help="JSON config file (defaults are built in)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel mesh workers")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="per-toy grasp and print feasibility CSV")
    p.add_argument("--manifest", required=True, help="manifest.json from generate")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--jobs", type=int, default=1, help="parallel analysis workers")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("detpool-check", help="run the encoder verification suites")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--mask", help="PGM (P5) segmentation mask to use")
    p.add_argument(
        "--full-gradients",
        action="store_true",
        help="finite-difference every parameter entry (slower)",
    )
    p.set_defaults(func=cmd_detpool_check)

    p = sub.add_parser("schedule", help="emit a deterministic trial schedule")
    p.add_argument(
        "--protocol",
        required=True,
        choices=[proto.value for proto in evalharness.Protocol],
    )
    p.add_argument("--objects", required=True, help="object ids: text lines or JSON array")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="schedule JSON path")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("aggregate", help="aggregate a 0/1 outcomes CSV into success rates")
    p.add_argument("--outcomes", required=True, help="CSV: object,trial_index,success")
    p.add_argument("--out", help="write the success table CSV here")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("report", help="format scaling-study rows as CSV + text grid")
    p.add_argument("--rows", required=True, help="CSV: label,demos,success_percent")
    p.add_argument("--out", required=True, help="output CSV path (.txt written alongside)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaViolation) as exc:
        print(f"toygrasp: [CONFIG] {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoFailure as exc:
        print(f"toygrasp: [IO] {exc}", file=sys.stderr)
        return EXIT_IO
    except FileNotFoundError as exc:
        print(f"toygrasp: [IO] {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ToygraspError) as exc:
        print(f"toygrasp: [CONFIG] {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
