# %% [markdown]
# The command line and its manifests.
# Each subcommand writes its artifacts plus manifest.json; passing the
# manifest back through --config reproduces the artifacts byte for byte.

# %%
import filecmp
import json
import subprocess
import sys
import tempfile
from pathlib import Path

work = Path(tempfile.mkdtemp())


def rlev(*args):
    return subprocess.run([sys.executable, "-m", "rlev.cli", *args], capture_output=True, text=True)


rlev("gen-data", "--exams", "10", "--questions", "20", "--seed", "1", "--out", str(work / "data" / "d.jsonl"))
r = rlev("train", "--data", str(work / "data" / "d.jsonl"), "--epochs", "20", "--out", str(work / "run"))
print(r.stdout)

# %%
manifest = json.loads((work / "run" / "manifest.json").read_text())
print(manifest["command"], manifest["artifact_index"])

rlev("train", "--config", str(work / "run" / "manifest.json"), "--out", str(work / "rerun"))
for name in ("run_log.jsonl", "policy.jsonl", "metrics.json"):
    print(name, filecmp.cmp(work / "run" / name, work / "rerun" / name, shallow=False))

# %%
# exit codes: 2 config, 3 data, 4 enumeration budget, 5 failed check
print(rlev("train", "--alpha", "-1", "--out", str(work / "bad")).returncode)
print(rlev("grad-check", "--vocab", "3", "--max-len", "2", "--trials", "20", "--out", str(work / "gc")).returncode)
