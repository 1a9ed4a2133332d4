"""Walk through one contaminated season: pretrain the historical model, run the
weekly protocol for CALI-Net and its two reference models, and compare RMSE in
the surge (T1) and decline (T2) periods.

    python demos/transfer_walkthrough.py [seed]
"""

import sys
import time

from episteer.data import synth_generate
from episteer.eval import ablation_run, best_performer_count
from episteer.source_model import SourceConfig, SourceModel, pretrain_source
from episteer.training import TrainConfig

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
season = synth_generate(seed)
print(f"synthetic season {seed}: {len(season.wili.weeks)} weeks of wILI, "
      f"{season.exo.n_signals} exogenous signals, contamination from {season.wili.contamination_start}")

source = SourceModel(SourceConfig(seed=seed))
losses = pretrain_source(source, season.wili)
print(f"source model pretrained: loss {losses[0]:.3f} -> {losses[-1]:.4f}")

cfg = TrainConfig(seed=seed)
reports = {}
for variant in ("source_only", "standalone_caem", "cali_net"):
    t0 = time.perf_counter()
    reports[variant], _ = ablation_run(variant, source, season.wili, season.exo, season.graph, cfg)
    print(f"  {variant:<16} done in {time.perf_counter() - t0:.1f}s")

print(f"\n{'model':<16}{'T1':>8}{'T2':>8}{'T':>8}")
for name, rep in reports.items():
    print(f"{name:<16}" + "".join(f"{rep.aggregate(p):8.3f}" for p in ("T1", "T2", "T")))

for period in ("T1", "T2"):
    counts = best_performer_count({n: r.rmse_table(period) for n, r in reports.items()})
    print(f"best (within 1%) per region over {period}: {counts}")
