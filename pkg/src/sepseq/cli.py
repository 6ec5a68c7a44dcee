"""Command-line surface: ingest, synth, train, evaluate, grid, forecast,
gradcheck.

Exit codes: 0 success, 1 validation error (anything derived from
SepseqError), 2 runtime failure. Grid cells are independent tasks with
per-cell manifests, so an interrupted run resumes without retraining
completed cells; result files are written via temp-file-then-rename.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .catalog import (
    CatalogEntry,
    EventCatalog,
    EventRecord,
    SClass,
    format_instant,
    load_event,
    load_event_store,
    parse_instant,
    read_catalog,
    write_catalog,
    write_flux_csv,
)
from .errors import (
    ConfigError,
    InsufficientHistory,
    SepseqError,
    UnknownEvent,
)
from .evaluation import (
    GridReport,
    MetricsReport,
    cross_validate,
    evaluate_fold,
    preprocess_spec_for,
    write_grid_reports,
)
from .model import (
    Mode,
    ModelConfig,
    forward_batch,
    init_params,
    parse_strategy,
    parse_structure,
)
from .optim import grad_check
from .preprocess import (
    Features,
    Sample,
    event_channel_matrix,
    make_windows,
    stratified_folds,
    windows_for_events,
)
from .synthetic import synth_event_set, write_event_set
from .training import TrainSpec, load_checkpoint, save_checkpoint, train


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _parse_mix(text: str) -> dict[SClass, int]:
    mix: dict[SClass, int] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            name, count = part.split("=")
            mix[SClass(name.strip())] = int(count)
        except ValueError:
            raise ConfigError(f"bad class mix entry {part!r}; expected e.g. S1=4") from None
    if not mix:
        raise ConfigError("class mix is empty")
    return mix


def _load_events(data: Path) -> list[EventRecord]:
    catalog_path = data if data.is_file() else data / "catalog.csv"
    if not catalog_path.exists():
        raise ConfigError(f"no catalog at {catalog_path}")
    return load_event_store(catalog_path)


def _model_config(args, input_len: int, output_len: int) -> ModelConfig:
    features, variant, mode = parse_strategy(args.strategy)
    hidden, embed = parse_structure(args.structure)
    return ModelConfig(
        hidden=hidden,
        embed=embed,
        features=features,
        variant=variant,
        mode=mode,
        input_len=input_len,
        output_len=output_len,
    )


# --- subcommands -----------------------------------------------------------------

def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog_path = Path(args.catalog)
    catalog = read_catalog(catalog_path)
    base = catalog_path.parent
    entries = []
    for entry in catalog.entries:
        try:
            proton = base / entry.proton_file
            xray = base / entry.xray_file if entry.xray_file else None
            record = load_event(entry, proton, xray)
        except (OSError, SepseqError) as exc:
            print(f"ingest failed for event {entry.id}: {exc}", file=sys.stderr)
            return 1
        proton_file = f"{record.id}_proton.csv"
        xray_file = f"{record.id}_xray.csv" if record.xray is not None else None
        with open(out / proton_file, "w", encoding="utf-8") as fh:
            write_flux_csv(record.proton, fh)
        if xray_file:
            with open(out / xray_file, "w", encoding="utf-8") as fh:
                write_flux_csv(record.xray, fh)
        entries.append(
            CatalogEntry(
                id=record.id,
                s_class=record.s_class,
                flare_peak=record.flare_peak,
                onset=record.onset,
                end=record.end,
                proton_file=proton_file,
                xray_file=xray_file,
            )
        )
        print(f"ingested {record.id}: {record.duration_steps + 1} in-event samples")
    write_catalog(EventCatalog(entries), out / "catalog.csv")
    print(f"wrote {len(entries)} events to {out}")
    return 0


def cmd_synth(args) -> int:
    mix = _parse_mix(args.mix)
    n = sum(mix.values())
    duration_range = (args.duration_hours[0] * 3600.0, args.duration_hours[1] * 3600.0)
    events = synth_event_set(n, mix, seed=args.seed, duration_range_s=duration_range)
    write_event_set(events, args.out)
    for event in events:
        print(
            f"{event.id} {event.s_class.value}: peak "
            f"{event.proton.values.max():.1f} pfu, {event.duration_steps + 1} samples"
        )
    print(f"wrote {len(events)} events to {args.out}")
    return 0


def _train_spec(args) -> TrainSpec:
    return TrainSpec(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        seed=args.seed,
        clip_norm=args.clip_norm,
        teacher_forcing=not args.no_teacher_forcing,
    )


def cmd_train(args) -> int:
    config = _model_config(args, args.input_len, args.output_len)
    spec = _train_spec(args)
    events = _load_events(Path(args.data))
    samples = windows_for_events(events, preprocess_spec_for(config))
    print(f"training {args.strategy} {args.structure} on {len(samples)} samples")
    params, history = train(samples, config, spec, log_path=args.log)
    meta = {"seed": spec.seed, "epoch": spec.epochs, "final_loss": history.final_loss}
    save_checkpoint(params, config, spec, meta, args.out)
    print(f"final epoch loss {history.final_loss:.6f}; checkpoint at {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    params, config, _, _ = load_checkpoint(args.checkpoint)
    events = _load_events(Path(args.data))
    rmse, pct = evaluate_fold(events, params, config)
    result = {"events": len(events), "rmse_log": rmse, "pct_error": pct}
    print(json.dumps(result, sort_keys=True))
    if args.out:
        _atomic_write_text(Path(args.out), json.dumps(result, sort_keys=True) + "\n")
    return 0


def cmd_forecast(args) -> int:
    params, config, _, _ = load_checkpoint(args.checkpoint)
    events = _load_events(Path(args.data))
    by_id = {e.id: e for e in events}
    if args.event not in by_id:
        raise UnknownEvent(f"event {args.event!r} not in the store")
    event = by_id[args.event]
    spec = preprocess_spec_for(config)
    matrix, target_series = event_channel_matrix(event, spec)
    start = parse_instant(args.start)
    idx = event.proton.index_at(start)
    if idx < spec.input_len - 1:
        raise InsufficientHistory(
            f"start {args.start} has {idx} history samples, need {spec.input_len - 1}"
        )
    window = matrix[idx - spec.input_len + 1 : idx + 1]
    pred = forward_batch(window[None, :, :], params, config).data[0]
    observed_n = min(spec.output_len, matrix.shape[0] - 1 - idx)

    lines = ["timestamp,kind,value_log10"]
    for j in range(spec.input_len):
        t = event.proton.time_at(idx - spec.input_len + 1 + j)
        lines.append(f"{format_instant(t)},input,{float(window[j, 0])!r}")
    for j in range(observed_n):
        t = event.proton.time_at(idx + 1 + j)
        lines.append(f"{format_instant(t)},observed,{float(target_series[idx + 1 + j])!r}")
    for j in range(spec.output_len):
        t = event.proton.time_at(idx + 1 + j)
        lines.append(f"{format_instant(t)},predicted,{float(pred[j])!r}")
    _atomic_write_text(Path(args.out), "\n".join(lines) + "\n")
    print(f"wrote {spec.input_len} input, {observed_n} observed, "
          f"{spec.output_len} predicted rows to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    modes = [Mode.AR, Mode.OS] if args.mode == "both" else [Mode(args.mode)]
    features = Features(args.features)
    rng = np.random.default_rng(args.seed)
    failed = False
    for mode in modes:
        config = ModelConfig(
            hidden=args.hidden,
            embed=args.embed,
            features=features,
            mode=mode,
            input_len=args.seq_len,
            output_len=args.seq_len,
        )
        params = init_params(config, seed=args.seed)
        inputs = rng.normal(1.5, 0.5, size=(2, config.input_len, config.feature_count))
        # probe near the model's own surface: a small residual keeps the
        # finite-difference rounding floor well below the tolerance
        pred0 = forward_batch(inputs, params, config).data
        targets = pred0 + 0.01 * rng.standard_normal(pred0.shape)

        def loss_fn(p, inputs=inputs, targets=targets, config=config):
            return ad.mse_loss(forward_batch(inputs, p, config), targets)

        report = grad_check(
            loss_fn, params, tolerance=args.tolerance,
            probe_count=args.probes, seed=args.seed,
        )
        print(f"{mode.value}: {report.summary()}")
        failed = failed or not report.passed
    return 1 if failed else 0


# --- grid ------------------------------------------------------------------------

def _cell_seed(base: int, strategy: str, structure: str) -> int:
    return int(
        np.random.SeedSequence(
            [base, zlib.crc32(f"{strategy}|{structure}".encode())]
        ).generate_state(1)[0]
    )


def _run_cell(task: dict) -> dict:
    """One (strategy, structure) cell: cross-validate and write its manifest."""
    events: list[EventRecord] = task["events"]
    fold_plan = task["fold_plan"]
    config: ModelConfig = task["config"]
    spec: TrainSpec = task["spec"]
    cell_dir = Path(task["cell_dir"])
    cell_dir.mkdir(parents=True, exist_ok=True)
    try:
        report = cross_validate(
            events, config, spec, fold_plan, checkpoint_dir=cell_dir
        )
        manifest = {
            "strategy": report.strategy,
            "structure": report.structure,
            "completed": True,
            "fold_rmse": list(report.fold_rmse),
            "fold_pct": list(report.fold_pct),
            "finished_at": time.time(),
        }
    except Exception as exc:  # recorded per cell; the run continues
        manifest = {
            "strategy": task["strategy"],
            "structure": task["structure"],
            "completed": False,
            "error": f"{type(exc).__name__}: {exc}",
            "finished_at": time.time(),
        }
    _atomic_write_text(cell_dir / "cell.json", json.dumps(manifest, sort_keys=True))
    return manifest


def cmd_grid(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        run = json.load(fh)

    out = Path(args.out or run.get("out", "grid_out"))
    out.mkdir(parents=True, exist_ok=True)

    data = run.get("data", {})
    if "catalog" in data:
        events = load_event_store(Path(data["catalog"]))
    elif "synth" in data:
        synth = data["synth"]
        mix = {SClass(k): int(v) for k, v in synth["mix"].items()}
        lo, hi = synth.get("duration_range_h", [3, 8])
        events = synth_event_set(
            sum(mix.values()), mix, seed=int(synth.get("seed", 0)),
            duration_range_s=(lo * 3600.0, hi * 3600.0),
        )
    else:
        raise ConfigError("run config needs data.catalog or data.synth")

    k = int(run.get("k", 4))
    fold_plan = stratified_folds(events, k=k, seed=int(run.get("fold_seed", 0)))

    window = run.get("window", {})
    input_len = int(window.get("input_len", 288))
    output_len = int(window.get("output_len", 288))
    train_cfg = run.get("train", {})
    base_spec = TrainSpec(
        epochs=int(train_cfg.get("epochs", 50)),
        batch_size=int(train_cfg.get("batch_size", 32)),
        lr=float(train_cfg.get("lr", 0.001)),
        seed=int(train_cfg.get("seed", 0)),
        clip_norm=train_cfg.get("clip_norm"),
        teacher_forcing=bool(train_cfg.get("teacher_forcing", True)),
    )

    strategies = run.get("strategies") or []
    structures = run.get("structures") or []
    if not strategies or not structures:
        raise ConfigError("run config needs non-empty strategies and structures")

    tasks = []
    for strategy in strategies:
        features, variant, mode = parse_strategy(strategy)  # rejects trend+AR here
        for structure in structures:
            hidden, embed = parse_structure(structure)
            config = ModelConfig(
                hidden=hidden, embed=embed, features=features,
                variant=variant, mode=mode,
                input_len=input_len, output_len=output_len,
            )
            cell_dir = out / "cells" / f"{strategy}__{structure}"
            manifest_path = cell_dir / "cell.json"
            if manifest_path.exists():
                existing = json.loads(manifest_path.read_text())
                if existing.get("completed"):
                    print(f"skip {strategy} {structure}: already completed")
                    continue
            tasks.append(
                {
                    "events": events,
                    "fold_plan": fold_plan,
                    "config": config,
                    "spec": replace(
                        base_spec, seed=_cell_seed(base_spec.seed, strategy, structure)
                    ),
                    "strategy": strategy,
                    "structure": structure,
                    "cell_dir": str(cell_dir),
                }
            )

    if args.workers > 1 and tasks:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]

    failures = [r for r in results if not r.get("completed")]
    for failure in failures:
        print(
            f"cell {failure['strategy']} {failure['structure']} failed: "
            f"{failure.get('error')}",
            file=sys.stderr,
        )

    # aggregate every completed cell on disk (including earlier runs)
    reports: dict[tuple[str, str], MetricsReport] = {}
    cells_dir = out / "cells"
    if cells_dir.exists():
        for manifest_path in sorted(cells_dir.glob("*/cell.json")):
            cell = json.loads(manifest_path.read_text())
            if not cell.get("completed"):
                continue
            reports[(cell["strategy"], cell["structure"])] = MetricsReport.from_folds(
                cell["strategy"], cell["structure"], cell["fold_rmse"], cell["fold_pct"]
            )
    if reports:
        grid = GridReport(reports, highlight_threshold=float(run.get("highlight_threshold", 0.310)))
        write_grid_reports(grid, out)
        print(f"wrote grid.csv, table2.txt, table3.txt to {out}")
    return 2 if failures else 0


# --- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepseq",
        description="LSTM seq2seq forecasting of 24-hour solar proton flux profiles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a catalog into an event store")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic event store")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mix", default="S1=5,S2=3,S3=1,S4=1", help="e.g. S1=5,S2=3")
    p.add_argument(
        "--duration-hours", type=float, nargs=2, default=[3.0, 8.0],
        metavar=("LO", "HI"), help="above-threshold duration range",
    )
    p.set_defaults(fn=cmd_synth)

    def add_train_args(p):
        p.add_argument("--data", required=True, help="event store dir or catalog.csv")
        p.add_argument("--strategy", required=True, help="e.g. P_orig_OS")
        p.add_argument("--structure", required=True, help="hidden-embed, e.g. 512-8")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=int, default=50)
        p.add_argument("--batch-size", type=int, default=32)
        p.add_argument("--lr", type=float, default=0.001)
        p.add_argument("--clip-norm", type=float, default=None)
        p.add_argument("--no-teacher-forcing", action="store_true")
        p.add_argument("--input-len", type=int, default=288)
        p.add_argument("--output-len", type=int, default=288)

    p = sub.add_parser("train", help="train one model on a whole event store")
    add_train_args(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="JSONL training log path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="pooled metrics of a checkpoint on a store")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="optional metrics JSON path")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("grid", help="strategy x structure cross-validation grid")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", default=None, help="overrides the config's out dir")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("forecast", help="emit input/observed/predicted CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--event", required=True)
    p.add_argument("--start", required=True, help="ISO-8601 UTC forecast start")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_forecast)

    p = sub.add_parser("gradcheck", help="finite-difference check of the gradients")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--embed", type=int, default=4)
    p.add_argument("--features", choices=[f.value for f in Features], default="P_XR")
    p.add_argument("--mode", choices=["AR", "OS", "both"], default="both")
    p.add_argument("--seq-len", type=int, default=12)
    p.add_argument("--probes", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SepseqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
