"""Compare CALI-Net against its no-KD ablation week by week and write the ratio
heatmap CSV (cells in [-1, 1], positive where CALI-Net has the lower error).

    python demos/kd_heatmap.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from episteer.data import synth_generate
from episteer.eval import ablation_run, ratio_heatmap, write_heatmap
from episteer.source_model import SourceConfig, SourceModel, pretrain_source
from episteer.training import TrainConfig

out = Path(sys.argv[1] if len(sys.argv) > 1 else "kd_heatmap_out")
season = synth_generate(0)
source = SourceModel(SourceConfig(seed=0))
pretrain_source(source, season.wili)

cfg = TrainConfig(seed=0)
cali, result = ablation_run("cali_net", source, season.wili, season.exo, season.graph, cfg)
no_kd, _ = ablation_run("no_kd", source, season.wili, season.exo, season.graph, cfg)

regions, weeks, a = cali.weekly_rmse()
_, _, b = no_kd.weekly_rmse()
hm = ratio_heatmap(a, b)
write_heatmap(out / "heatmap_cali_net_vs_no_kd.csv", hm, regions, weeks)

print("region  " + " ".join(str(w)[-2:].rjust(5) for w in weeks))
for r, row in zip(regions, hm):
    print(f"{r:<8}" + " ".join(f"{v:5.2f}" for v in row))
print(f"\nmean cell {hm.mean():+.3f}; CALI-Net better in {(hm > 0).sum()} of {hm.size} cells")

# KD only ever sees windows whose target week is inside the overlap period
leak = result.trace.series("kd_nonoverlap")
print(f"KD contribution from non-overlap windows, max over {len(leak)} steps: {np.max(leak)}")
print(f"wrote {out / 'heatmap_cali_net_vs_no_kd.csv'}")
