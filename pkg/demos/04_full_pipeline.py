# The whole pipeline on the bundled synthetic corpus
#
# write_corpus lays out about sixty road segments, drives 140 trips over them
# and plants hard brakes whose severity leans on a few road and trip
# attributes. run_pipeline then writes the six report tables and a
# run_report.json with stage tallies and file digests.

# %%
import json
import tempfile
from pathlib import Path

from nearcrash.pipeline import load_config, run_pipeline
from nearcrash.synthetic import write_corpus

workdir = Path(tempfile.mkdtemp())
paths = write_corpus(workdir)
cfg = load_config(paths.config, env={})
report = run_pipeline(cfg)

# %%
# Every stage records what came in and what left, so the counts reconcile.

for stage, tally in report.stages.items():
    print(f"{stage:10s}", tally)

# %%
out = Path(cfg.out_dir)
print(sorted(p.name for p in out.iterdir()))
print((out / "rules_non_trivial.csv").read_text().splitlines()[:6])

# %%
# The same command line is available as `nearcrash run --config <file>`.

print(json.dumps(report.config, indent=1)[:300])
