"""Drive the whole pipeline through the cmsenti command line: tokenizer,
embeddings, classifier, evaluation, prediction.

Run with: python demos/05_cli_pipeline.py  (about half a minute)
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from toycorpus import make_corpus

from cmsenti.corpus import write_tsv

workdir = Path(tempfile.mkdtemp(prefix="cmsenti-demo-"))
print(f"workspace: {workdir}")

data = make_corpus(n_per_class=20, seed=21, shared_fraction=0.55)
write_tsv(data, workdir / "train.tsv")

config = {
    "language": "tamil",
    "paths": {"train_tsv": str(workdir / "train.tsv"), "artifacts": str(workdir / "artifacts")},
    "split": {"dev_ratio": 0.2, "seed": 3},
    "tokenizer": {"kind": "unigram", "vocab_size": 90},
    "skipgram": {"dim": 16, "buckets": 1024, "epochs": 4, "window": 3, "negatives": 3, "seed": 1},
    "contextual": {"enabled": True, "embed_dim": 10, "hidden_dim": 10, "epochs": 2,
                   "lr": 0.01, "batch_size": 16, "seed": 1},
    "tfidf": {"enabled": True, "k": 26},
    "model": {"hid_dim": 16, "n_heads": 2, "n_layers": 1, "pf_dim": 32,
              "dropout": 0.1, "max_len": 24, "gru_hidden": 16},
    "train": {"lr": 0.005, "batch_size": 16, "max_epochs": 14, "patience": 7, "seed": 2},
}
config_path = workdir / "config.json"
config_path.write_text(json.dumps(config, indent=2))
print(f"config:    {config_path}\n")

COMMANDS = [
    ["train-tokenizer", "--config", str(config_path)],
    ["train-embed", "--config", str(config_path), "--kind", "skipgram"],
    ["train-embed", "--config", str(config_path), "--kind", "contextual"],
    ["train-embed", "--config", str(config_path), "--kind", "tfidf"],
    ["train", "--config", str(config_path)],
    ["eval", "--config", str(config_path)],
    ["predict", "--config", str(config_path), "--text", "semma mass padam da"],
]

for argv in COMMANDS:
    print(f"$ cmsenti {' '.join(argv)}")
    proc = subprocess.run(
        [sys.executable, "-m", "cmsenti.cli", *argv], capture_output=True, text=True
    )
    for line in proc.stdout.strip().splitlines():
        print(f"  {line}")
    if proc.returncode != 0:
        print(proc.stderr, file=sys.stderr)
        sys.exit(proc.returncode)
    print()

print("artifact directory:")
for p in sorted((workdir / "artifacts").iterdir()):
    print(f"  {p.name:14} {p.stat().st_size:>8} bytes")
