"""End-to-end augmentation run from a config file, via the CLI entry point.

Writes a small dataset plus a YAML config under demo_pipeline/, then runs
every stage.  Rerunning the script skips everything that is already up to
date; delete the work directory to start over.
"""
import json
import os

from lmaug import benchdata
from lmaug.cli import main

ROOT = "demo_pipeline"
os.makedirs(os.path.join(ROOT, "data"), exist_ok=True)

benchdata.write_lines(benchdata.sample_general(3000, seed=2), os.path.join(ROOT, "data", "general.txt"))
# keep the in-domain training set small so the synthetic corpus has room to help
train, dev, test = benchdata.weather_splits(150, 100, 100, seed=2)
for name, lines in [("train", train), ("dev", dev), ("test", test)]:
    benchdata.write_lines(lines, os.path.join(ROOT, "data", "%s.txt" % name))

# paths are relative to the config file's own directory
CONFIG = """\
seed: 2
work_dir: work
data:
  general: data/general.txt
  in_domain_train: data/train.txt
  in_domain_dev: data/dev.txt
  in_domain_test: data/test.txt
bpe:
  num_merges: 200
model:
  n_blocks: 2
  n_heads: 2
  d_model: 48
  d_ff: 192
  max_seq_len: 40
pretrain:
  learning_rate: 2e-3
  total_steps: 500
  batch_size: 32
finetune:
  learning_rate: 1e-3
  total_steps: 250
  batch_size: 16
prefixes:
  k_values: [2, 3, 4]
  max_per_k: 60
generate:
  temperatures: [0.8, 1.0, 1.2]
  samples_per_prefix: 25
  keep_top: 15
  max_new_tokens: 24
ngram:
  order: 3
"""

config_path = os.path.join(ROOT, "augment.yaml")
with open(config_path, "w") as f:
    f.write(CONFIG)

main(["run", "--config", config_path])

with open(os.path.join(ROOT, "work", "report.json")) as f:
    report = json.load(f)
print()
print("final report:")
for key, value in report.items():
    print("  %-32s %s" % (key, value))

print()
print("running again; every stage should be up to date:")
main(["run", "--config", config_path])
