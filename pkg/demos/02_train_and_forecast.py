"""Train a small one-shot model and emit a 24-point forecast CSV.

The full-scale experiment uses 288-step (24 h) windows; this demo shrinks
the windows so a desk run finishes in about a minute. The checkpoint file
and forecast CSV are the same formats the CLI produces.

Equivalent CLI:
  sepseq train --data demo_out/store --strategy P_orig_OS --structure 24-4 \
      --epochs 30 --input-len 36 --output-len 36 --out demo_out/model.ckpt
  sepseq forecast --data demo_out/store --checkpoint demo_out/model.ckpt \
      --event synth-000 --start <onset> --out demo_out/forecast.csv
"""

import math
from pathlib import Path

from sepseq.catalog import CADENCE, format_instant, load_event_store
from sepseq.evaluation import preprocess_spec_for
from sepseq.model import Mode, ModelConfig, forward_batch
from sepseq.preprocess import Features, event_channel_matrix, windows_for_events
from sepseq.training import TrainSpec, load_checkpoint, save_checkpoint, train

store = Path("demo_out/store")
if not store.exists():
    raise SystemExit("run demos/01_synthetic_events.py first")

events = load_event_store(store / "catalog.csv")
config = ModelConfig(
    hidden=24, embed=4, features=Features.P, mode=Mode.OS,
    input_len=36, output_len=36,
)
samples = windows_for_events(events, preprocess_spec_for(config))
print(f"{len(samples)} windows from {len(events)} events")

spec = TrainSpec(epochs=30, batch_size=32, seed=0)
params, history = train(samples, config, spec)
print(f"training loss {history.losses[0]:.3f} -> {history.final_loss:.3f} "
      f"(RMSE {math.sqrt(history.final_loss):.3f} log units)")

ckpt = Path("demo_out/model.ckpt")
save_checkpoint(params, config, spec, {"final_loss": history.final_loss}, ckpt)
params, config, _, _ = load_checkpoint(ckpt)  # round-trips bit-exactly

# forecast from two hours after one event's onset
event = events[0]
start_idx = event.onset_index + 24
matrix, target = event_channel_matrix(event, preprocess_spec_for(config))
window = matrix[start_idx - config.input_len + 1 : start_idx + 1]
prediction = forward_batch(window[None], params, config).data[0]

out_csv = Path("demo_out/forecast.csv")
with open(out_csv, "w") as fh:
    fh.write("timestamp,kind,value_log10\n")
    for j in range(config.input_len):
        t = event.proton.time_at(start_idx - config.input_len + 1 + j)
        fh.write(f"{format_instant(t)},input,{window[j, 0]:.6f}\n")
    for j in range(config.output_len):
        t = event.proton.time_at(start_idx + 1 + j)
        fh.write(f"{format_instant(t)},observed,{target[start_idx + 1 + j]:.6f}\n")
        fh.write(f"{format_instant(t)},predicted,{prediction[j]:.6f}\n")
print(f"forecast for {event.id} starting {format_instant(event.proton.time_at(start_idx))} "
      f"written to {out_csv}")
