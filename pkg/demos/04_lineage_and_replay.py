"""
Lineage and replay through the command line
===========================================

Run every stage on the bundled fixture into a scratch directory, follow the
reports back to their raw inputs, replay every run, then corrupt the stored
checkpoint and watch the replay fail.
"""

# %%
import json
import tempfile
from pathlib import Path

from matchforge.cli import main
from matchforge.trace import Store

out = Path(tempfile.mkdtemp(prefix="matchforge-demo-"))
for stage in ("ingest", "plan", "train", "rank", "evaluate", "explain"):
    assert main([stage, "--out", str(out)]) == 0

# %%
for line in (out / "metrics.jsonl").read_text().splitlines():
    rec = json.loads(line)
    print(f"{rec['name']:>18s} {rec['value']}")

# %%
main(["trace", "lineage", "reports", "--out", str(out)])

# %%
print("verify exit code:", main(["trace", "verify", "--out", str(out)]))

# %%
state = json.loads((out / "state.json").read_text())
store = Store(out / "store")
path = store.blob_path(state["artifacts"]["checkpoint"])
data = bytearray(path.read_bytes())
data[-1] ^= 0xFF
path.write_bytes(bytes(data))
print("verify exit code after tampering:", main(["trace", "verify", "--out", str(out)]))
