"""Command line entry point.

Subcommands: project, audit, compact-targets, select, probe, stats. Every
numeric flag is range-validated at parse time, before any data is loaded.
Exit codes: 0 success, 1 data errors (with file/line context), 2 usage
errors (naming the offending flag). Output files are written to a temp
file and atomically renamed, and each output gets a JSON run manifest
sidecar (`<output>.run.json`) recording the fully resolved configuration,
input digests, output digests and per-phase wall-clock times. Re-running
a subcommand with `--replay <run.json>` reproduces the run from the
manifest and verifies the output digests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from corpus_select import __version__
from corpus_select.compaction import KMeansConfig, compact_targets
from corpus_select.errors import DataError
from corpus_select.fixture import FixtureSpec, make_fixture
from corpus_select.probe import ProbeConfig, probe_matrix
from corpus_select.projection import ProjectionSpec, audit_cosine_preservation, make_projection, project_view
from corpus_select.relevance import AggregationMode, FusionWeights
from corpus_select.selection import SelectionConfig, batched_mmr, duration_baseline, random_baseline
from corpus_select.store import (
    _atomic_bytes,
    load_corpus,
    load_target_durations,
    load_targets,
    load_view,
    save_targets,
    save_view,
)

_ENV_THREADS = "CORPUS_SELECT_THREADS"


class UsageError(Exception):
    """Bad flag combination detected after parsing; exits with code 2."""


def _default_threads() -> int:
    env = os.environ.get(_ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _file_entry(path: Path) -> dict:
    return {"sha256": _sha256(path), "bytes": path.stat().st_size}


def _input_files(paths: list[Path]) -> dict:
    entries: dict[str, dict] = {}
    for path in sorted(set(Path(p) for p in paths)):
        if path.is_dir():
            for child in sorted(path.rglob("*")):
                if child.is_file():
                    entries[str(child)] = _file_entry(child)
        elif path.is_file():
            entries[str(path)] = _file_entry(path)
    return entries


def emit_run_manifest(
    sidecar: Path,
    subcommand: str,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
    phases: dict[str, float],
) -> Path:
    """Write the machine-readable sidecar describing a completed run."""
    manifest = {
        "tool": "corpus-select",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "inputs": _input_files(inputs),
        "outputs": {str(p): _file_entry(Path(p)) for p in outputs},
        "phases": {k: round(v, 6) for k, v in phases.items()},
    }
    payload = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8") + b"\n"
    _atomic_bytes(sidecar, lambda fh: fh.write(payload))
    return sidecar


# ---------- flag types (validated before any data is loaded) ----------

def _float_in(lo: float, hi: float, lo_open: bool = False):
    def convert(text: str) -> float:
        value = float(text)
        ok = (lo < value if lo_open else lo <= value) and value <= hi
        if not ok:
            bracket = "(" if lo_open else "["
            raise argparse.ArgumentTypeError(f"must be in {bracket}{lo}, {hi}], got {text}")
        return value

    return convert


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer, got {text}")
    return value


def _weights_arg(text: str) -> dict[str, float]:
    weights: dict[str, float] = {}
    for part in text.split(","):
        if "=" not in part:
            raise argparse.ArgumentTypeError(
                f"expected name=value pairs separated by commas, got {part!r}"
            )
        name, _, raw = part.partition("=")
        try:
            value = float(raw)
        except ValueError:
            raise argparse.ArgumentTypeError(f"weight for {name!r} is not a number: {raw!r}")
        if value < 0:
            raise argparse.ArgumentTypeError(f"weight for {name!r} must be >= 0, got {raw}")
        weights[name.strip()] = value
    if not weights or all(w == 0 for w in weights.values()):
        raise argparse.ArgumentTypeError("at least one weight must be positive")
    return weights


def _views_arg(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of view names")
    return names


def _view_dims_arg(text: str) -> dict[str, int]:
    dims: dict[str, int] = {}
    for part in text.split(","):
        name, sep, raw = part.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected name:dim pairs, got {part!r}")
        dims[name.strip()] = _positive_int(raw)
    return dims


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpus-select",
        description="Duration-budgeted corpus subset selection over embedding views.",
    )
    parser.add_argument("--version", action="version", version=f"corpus-select {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_replay(p):
        p.add_argument(
            "--replay",
            metavar="RUN_JSON",
            help="re-run from a recorded run manifest and verify output digests",
        )

    p = sub.add_parser("project", help="project a view to a lower dimension")
    p.add_argument("--in", dest="input", metavar="VIEW_EMB", help="input view file")
    p.add_argument("--out", metavar="VIEW_EMB", help="output view file")
    p.add_argument("--dim", type=_positive_int, default=256)
    p.add_argument("--seed", type=_seed, default=0)
    add_replay(p)

    p = sub.add_parser("audit", help="cosine-preservation audit between two views")
    p.add_argument("--hi", metavar="VIEW_EMB", help="high-dimensional view")
    p.add_argument("--lo", metavar="VIEW_EMB", help="projected view")
    p.add_argument("--pairs", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=_seed, default=0)
    add_replay(p)

    p = sub.add_parser("compact-targets", help="k-means compaction of target embeddings")
    p.add_argument("--targets", metavar="DIR", help="targets directory")
    p.add_argument("--k", type=_positive_int, default=200)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", metavar="DIR", help="output targets directory")
    p.add_argument(
        "--medoids",
        action="store_true",
        help="reserved: represent targets by nearest real rows instead of centroids",
    )
    add_replay(p)

    p = sub.add_parser("select", help="select a duration-budgeted subset")
    p.add_argument("--corpus", metavar="DIR", help="corpus directory")
    p.add_argument("--targets", metavar="DIR", help="targets directory")
    p.add_argument("--method", choices=("mmr", "random", "duration"), default="mmr")
    p.add_argument("--lambda", dest="lam", type=_float_in(0.0, 1.0), default=0.7)
    p.add_argument("--alpha", type=_float_in(0.0, 1.0, lo_open=True), default=0.05)
    p.add_argument("--rho", type=_float_in(0.0, 1.0, lo_open=True), default=0.15)
    p.add_argument("--batch", type=_positive_int, default=1024)
    p.add_argument("--weights", type=_weights_arg, default=None, metavar="NAME=W,...")
    p.add_argument("--aggregate", choices=("max", "mean"), default="max")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--bins", type=_positive_int, default=20, help="duration-baseline bins")
    p.add_argument("--out", metavar="JSONL", help="selection output file")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument(
        "--no-normalize",
        action="store_true",
        help="keep raw embedding rows instead of L2-normalizing at load",
    )
    add_replay(p)

    p = sub.add_parser("probe", help="cross-view predictability probe")
    p.add_argument("--corpus", metavar="DIR", help="corpus directory")
    p.add_argument("--views", type=_views_arg, default=None, metavar="NAME,...")
    p.add_argument("--clusters", type=_positive_int, default=100)
    p.add_argument("--train-fraction", type=_float_in(0.0, 1.0, lo_open=True), default=0.8)
    p.add_argument("--seed", type=_seed, default=0)
    add_replay(p)

    p = sub.add_parser("stats", help="corpus statistics or synthetic fixture generation")
    p.add_argument("--corpus", metavar="DIR", help="corpus directory to summarize")
    p.add_argument("--make-fixture", action="store_true", help="generate a synthetic fixture")
    p.add_argument("--out", metavar="DIR", help="fixture corpus directory")
    p.add_argument("--targets-out", metavar="DIR", help="fixture targets directory")
    p.add_argument("--utterances", type=_positive_int, default=2000)
    p.add_argument("--views", dest="view_dims", type=_view_dims_arg, default=None, metavar="NAME:DIM,...")
    p.add_argument("--clusters", type=_positive_int, default=10)
    p.add_argument("--spread", type=_float_in(0.0, 10.0), default=0.25)
    p.add_argument("--target-datasets", type=_positive_int, default=2)
    p.add_argument("--target-rows", type=_positive_int, default=120)
    p.add_argument("--seed", type=_seed, default=0)

    return parser


def _require(args_value, flag: str):
    if args_value is None:
        raise UsageError(f"argument {flag} is required")
    return args_value


# ---------- subcommand configs (fully resolved, JSON-able) ----------

def _config_from_args(args: argparse.Namespace) -> dict:
    sc = args.subcommand
    if sc == "project":
        return {
            "input": _require(args.input, "--in"),
            "out": _require(args.out, "--out"),
            "dim": args.dim,
            "seed": args.seed,
        }
    if sc == "audit":
        return {
            "hi": _require(args.hi, "--hi"),
            "lo": _require(args.lo, "--lo"),
            "pairs": args.pairs,
            "seed": args.seed,
        }
    if sc == "compact-targets":
        if args.medoids:
            raise UsageError("argument --medoids is reserved and not implemented")
        return {
            "targets": _require(args.targets, "--targets"),
            "k": args.k,
            "seed": args.seed,
            "out": _require(args.out, "--out"),
        }
    if sc == "select":
        config = {
            "corpus": _require(args.corpus, "--corpus"),
            "targets": args.targets,
            "method": args.method,
            "lambda": args.lam,
            "alpha": args.alpha,
            "rho": args.rho,
            "batch": args.batch,
            "weights": args.weights,
            "aggregate": args.aggregate,
            "seed": args.seed,
            "bins": args.bins,
            "out": _require(args.out, "--out"),
            "threads": args.threads if args.threads is not None else _default_threads(),
            "normalize": not args.no_normalize,
        }
        if args.method in ("mmr", "duration") and config["targets"] is None:
            raise UsageError(f"argument --targets is required for method {args.method!r}")
        return config
    if sc == "probe":
        return {
            "corpus": _require(args.corpus, "--corpus"),
            "views": args.views,
            "clusters": args.clusters,
            "train_fraction": args.train_fraction,
            "seed": args.seed,
        }
    if sc == "stats":
        if args.make_fixture:
            spec = FixtureSpec()
            return {
                "make_fixture": True,
                "out": _require(args.out, "--out"),
                "targets_out": _require(args.targets_out, "--targets-out"),
                "utterances": args.utterances,
                "view_dims": args.view_dims or dict(spec.view_dims),
                "clusters": args.clusters,
                "spread": args.spread,
                "target_datasets": args.target_datasets,
                "target_rows": args.target_rows,
                "seed": args.seed,
            }
        return {"make_fixture": False, "corpus": _require(args.corpus, "--corpus")}
    raise UsageError(f"unknown subcommand {sc!r}")


# ---------- handlers ----------

def _cmd_project(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    view = load_view(config["input"])
    t1 = time.perf_counter()
    matrix = make_projection(ProjectionSpec(view.dims, config["dim"], config["seed"]))
    projected = project_view(view, matrix)
    t2 = time.perf_counter()
    out = Path(config["out"])
    save_view(projected, out)
    t3 = time.perf_counter()
    print(f"projected {view.row_count} rows: {view.dims} -> {config['dim']} dims")
    phases = {"load_s": t1 - t0, "project_s": t2 - t1, "write_s": t3 - t2, "total_s": t3 - t0}
    return [Path(config["input"])], [out], phases


def _cmd_audit(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    hi = load_view(config["hi"])
    lo = load_view(config["lo"])
    t1 = time.perf_counter()
    corr = audit_cosine_preservation(hi, lo, config["pairs"], config["seed"])
    t2 = time.perf_counter()
    print(f"{corr:.6f}")
    phases = {"load_s": t1 - t0, "audit_s": t2 - t1, "total_s": t2 - t0}
    return [Path(config["hi"]), Path(config["lo"])], [], phases


def _cmd_compact(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    targets = load_targets(config["targets"])
    t1 = time.perf_counter()
    report: list[dict] = []
    compacted = compact_targets(
        targets, KMeansConfig(k=config["k"], seed=config["seed"]), report=report
    )
    t2 = time.perf_counter()
    out_dir = Path(config["out"])
    save_targets(compacted, out_dir)
    lines = [
        f"{row['dataset']}/{row['view']}: {row['rows_before']} -> {row['rows_after']} rows, "
        f"inertia {row['inertia']:.6f}, {row['iterations']} iterations"
        for row in report
    ]
    text = "\n".join(lines) + "\n"
    report_path = out_dir / "report.txt"
    _atomic_bytes(report_path, lambda fh: fh.write(text.encode("utf-8")))
    print(text, end="")
    t3 = time.perf_counter()
    outputs = [report_path] + [
        out_dir / ds.name / f"{view}.emb" for ds in compacted.datasets for view in ds.views
    ]
    phases = {"load_s": t1 - t0, "compact_s": t2 - t1, "write_s": t3 - t2, "total_s": t3 - t0}
    return [Path(config["targets"])], outputs, phases


def _write_selection(result, records, out: Path) -> None:
    def _write(fh):
        for pick in result.picks:
            row = {
                "rank": pick.rank,
                "id": records[pick.index].id,
                "relevance": pick.relevance,
                "diversity": pick.diversity,
                "mmr": pick.mmr,
                "cumulative_duration_s": pick.cumulative_duration_s,
            }
            fh.write(json.dumps(row).encode("utf-8") + b"\n")
        footer = {
            "budget_s": result.budget_s,
            "total_selected_s": result.total_selected_s,
            "pool_size": result.pool_size,
            "rounds": result.rounds,
            "exhausted": result.exhausted,
        }
        fh.write(json.dumps(footer).encode("utf-8") + b"\n")

    _atomic_bytes(out, _write)


def _cmd_select(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    weights = FusionWeights(config["weights"]) if config["weights"] else None
    view_names = weights.names if weights is not None else None
    corpus = load_corpus(config["corpus"], views=view_names, normalize=config["normalize"])
    inputs = [Path(config["corpus"])]
    t1 = time.perf_counter()

    method = config["method"]
    if method == "mmr":
        targets = load_targets(
            config["targets"], views=view_names, normalize=config["normalize"]
        )
        inputs.append(Path(config["targets"]))
        cfg = SelectionConfig(
            alpha=config["alpha"],
            lam=config["lambda"],
            rho=config["rho"],
            batch_size=config["batch"],
            weights=weights,
            aggregation=AggregationMode.from_name(config["aggregate"]),
            seed=config["seed"],
        )
        result = batched_mmr(
            corpus, corpus.view_matrices, targets, cfg, threads=config["threads"]
        )
    elif method == "random":
        result = random_baseline(corpus, config["alpha"], config["seed"])
    else:
        target_durations = load_target_durations(config["targets"])
        inputs.append(Path(config["targets"]))
        result = duration_baseline(
            corpus, target_durations, config["alpha"], config["seed"], bins=config["bins"]
        )
    t2 = time.perf_counter()

    out = Path(config["out"])
    _write_selection(result, corpus.records, out)
    t3 = time.perf_counter()
    hours = result.total_selected_s / 3600.0
    print(
        f"selected {len(result.picks)} of {len(corpus)} utterances "
        f"({hours:.2f} h, budget {result.budget_s / 3600.0:.2f} h, "
        f"pool {result.pool_size}, {result.rounds} rounds)"
    )
    phases = {"load_s": t1 - t0, "select_s": t2 - t1, "write_s": t3 - t2, "total_s": t3 - t0}
    return inputs, [out], phases


def _cmd_probe(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    corpus = load_corpus(config["corpus"], views=config["views"])
    t1 = time.perf_counter()
    probe_cfg = ProbeConfig(
        clusters=config["clusters"],
        train_fraction=config["train_fraction"],
        seed=config["seed"],
    )
    reports = probe_matrix(corpus.views, probe_cfg)
    t2 = time.perf_counter()

    names = list(corpus.views)
    by_pair = {(r.source, r.target): r for r in reports}
    width = max(len(n) for n in names) + 2
    header = "source\\target".ljust(max(width, 14)) + "".join(n.rjust(width) for n in names)
    print(header)
    for source in names:
        cells = "".join(
            f"{by_pair[(source, target)].accuracy * 100.0:.1f}".rjust(width)
            for target in names
        )
        print(source.ljust(max(width, 14)) + cells)
    chance = max(r.chance for r in reports)
    print(f"chance level: {chance * 100.0:.1f}%")
    phases = {"load_s": t1 - t0, "probe_s": t2 - t1, "total_s": t2 - t0}
    return [Path(config["corpus"])], [], phases


def _cmd_stats(config: dict) -> tuple[list[Path], list[Path], dict]:
    t0 = time.perf_counter()
    if config["make_fixture"]:
        spec = FixtureSpec(
            utterances=config["utterances"],
            view_dims=config["view_dims"],
            clusters=config["clusters"],
            cluster_spread=config["spread"],
            target_datasets=config["target_datasets"],
            target_rows=config["target_rows"],
            seed=config["seed"],
        )
        summary = make_fixture(config["out"], config["targets_out"], spec)
        print(json.dumps(summary, indent=2))
        t1 = time.perf_counter()
        outputs = [
            p
            for root in (config["out"], config["targets_out"])
            for p in sorted(Path(root).rglob("*"))
            if p.is_file()
        ]
        return [], outputs, {"total_s": t1 - t0}

    corpus = load_corpus(config["corpus"])
    t1 = time.perf_counter()
    durations = corpus.durations
    print(f"utterances: {len(corpus)}")
    print(f"total-hours: {durations.sum() / 3600.0:.2f}")
    print("datasets:")
    tags = sorted({r.dataset for r in corpus.records})
    for tag in tags:
        mask = np.array([r.dataset == tag for r in corpus.records])
        print(f"  {tag}  {int(mask.sum())}  {durations[mask].sum() / 3600.0:.2f}h")
    print("views:")
    for name, view in corpus.views.items():
        flag = "normalized" if view.normalized else "raw"
        print(f"  {name}  {view.dims} dims  {flag}")
    return [Path(config["corpus"])], [], {"total_s": t1 - t0}


_HANDLERS = {
    "project": _cmd_project,
    "audit": _cmd_audit,
    "compact-targets": _cmd_compact,
    "select": _cmd_select,
    "probe": _cmd_probe,
    "stats": _cmd_stats,
}


def _sidecar_path(subcommand: str, config: dict, outputs: list[Path]) -> Path | None:
    if subcommand == "compact-targets":
        return Path(config["out"]) / "run.json"
    if subcommand == "stats" and config.get("make_fixture"):
        return Path(config["out"]) / "run.json"
    if outputs:
        first = Path(outputs[0])
        return first.with_name(first.name + ".run.json")
    return None


def _verify_replay_inputs(manifest: dict) -> None:
    for path_str, entry in manifest.get("inputs", {}).items():
        path = Path(path_str)
        if not path.is_file():
            raise DataError(f"replay input missing: {path}")
        if _sha256(path) != entry["sha256"]:
            raise DataError(f"replay input changed since the recorded run: {path}")


def _verify_replay_outputs(manifest: dict) -> None:
    for path_str, entry in manifest.get("outputs", {}).items():
        digest = _sha256(Path(path_str))
        if digest != entry["sha256"]:
            raise DataError(
                f"replay produced a different digest for {path_str}: "
                f"{digest} != recorded {entry['sha256']}"
            )
    print("replay: outputs match recorded digests")


def run(argv: list[str]) -> int:
    """Parse argv, dispatch, and map errors to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        replay_manifest = None
        replay_path = getattr(args, "replay", None)
        if replay_path is not None:
            path = Path(replay_path)
            if not path.is_file():
                raise DataError(f"replay manifest missing: {path}")
            replay_manifest = json.loads(path.read_text(encoding="utf-8"))
            recorded = replay_manifest.get("subcommand")
            if recorded != args.subcommand:
                raise UsageError(
                    f"--replay manifest records subcommand {recorded!r}, "
                    f"not {args.subcommand!r}"
                )
            _verify_replay_inputs(replay_manifest)
            config = replay_manifest["config"]
        else:
            config = _config_from_args(args)

        inputs, outputs, phases = _HANDLERS[args.subcommand](config)

        sidecar = _sidecar_path(args.subcommand, config, outputs)
        if sidecar is not None:
            emit_run_manifest(sidecar, args.subcommand, config, inputs, outputs, phases)
        if replay_manifest is not None:
            _verify_replay_outputs(replay_manifest)
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename or exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
