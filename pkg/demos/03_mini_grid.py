"""A miniature strategy-by-structure comparison with 4-fold cross-validation.

The real experiment spans 15 structures x 6 strategies on 40 events; this
runs 2 x 2 on a small synthetic set so the whole grid finishes in a few
minutes, and prints the same strategy table the grid command writes to
table2.txt.

Equivalent CLI: sepseq grid --config run.json --workers 2
"""

from sepseq.catalog import SClass
from sepseq.evaluation import GridReport, cross_validate
from sepseq.model import ModelConfig, parse_strategy, parse_structure
from sepseq.preprocess import stratified_folds
from sepseq.synthetic import synth_event_set
from sepseq.training import TrainSpec

events = synth_event_set(
    8,
    {SClass.S1: 5, SClass.S2: 2, SClass.S3: 1},
    seed=13,
    duration_range_s=(2 * 3600.0, 4 * 3600.0),
)
fold_plan = stratified_folds(events, k=4, seed=0)
print("fold sizes:", [len(fold_plan.members(f)) for f in range(4)])

results = {}
for strategy in ("P_orig_OS", "P_orig_AR"):
    features, variant, mode = parse_strategy(strategy)
    for structure in ("24-4", "16-2"):
        hidden, embed = parse_structure(structure)
        config = ModelConfig(
            hidden=hidden, embed=embed, features=features,
            variant=variant, mode=mode, input_len=36, output_len=36,
        )
        report = cross_validate(
            events, config, TrainSpec(epochs=8, batch_size=32, seed=0), fold_plan
        )
        results[(strategy, structure)] = report
        print(f"{strategy:<12}{structure:<8}"
              f"{report.rmse_mean:.3f} ± {report.rmse_std:.3f} // "
              f"{report.pct_mean:.2f}% ± {report.pct_std:.2f}")

grid = GridReport(results, highlight_threshold=0.310)
print()
print(grid.strategy_table())
best = grid.best_cell()
print(f"best cell by mean RMSE: {best[0]} {best[1]}")
