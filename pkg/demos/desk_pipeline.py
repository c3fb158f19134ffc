"""
Desk-scale end to end run through the command line
==================================================

ingest -> fit -> synth -> train -> eval -> report, all in a scratch folder.
The default desk profile takes a few minutes on one core; pass a smaller
epoch count to try it quickly, e.g. ``python3 demos/desk_pipeline.py 5``.
"""

import json
import sys
import tempfile
from pathlib import Path

from gaitforge import cli, fixtures

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else None
root = Path(tempfile.mkdtemp(prefix="gaitforge_desk_"))
(root / "gait.csv").write_bytes(fixtures.fixture_bytes())
trpo = {"profile": "desk"} if epochs is None else {"profile": "desk", "epochs": epochs}
(root / "desk.json").write_text(json.dumps({"seed": 1, "label": "desk", "trpo": trpo}))


def run(*argv):
    print("$ gaitforge", " ".join(argv))
    code = cli.main(list(argv))
    if code:
        sys.exit(code)


run("ingest", "--input", str(root / "gait.csv"), "--out", str(root / "profiles.json"))
run("fit", "--profiles", str(root / "profiles.json"), "--out", str(root / "model.json"))
run("synth", "--model", str(root / "model.json"), "--speed", "1.0", "--speed", "1.5", "--out", str(root / "cycles"))
run("train", "--config", str(root / "desk.json"), "--model", str(root / "model.json"), "--out", str(root / "train"))
run("eval", "--config", str(root / "desk.json"), "--model", str(root / "model.json"),
    "--checkpoint", str(root / "train"), "--out", str(root / "eval"), "--plots")
run("eval", "--config", str(root / "desk.json"), "--model", str(root / "model.json"),
    "--oracle", "--out", str(root / "oracle"))
run("report", "--runs", str(root / "eval"), str(root / "oracle"), "--out", str(root / "report.csv"))
print((root / "report.csv").read_text())
print("outputs in", root)
