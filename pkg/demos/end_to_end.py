"""
End-to-end annotation with a scripted model
===========================================

Builds the bundled two-trajectory dataset, runs every stage with fixture
detections and canned VLM answers, then renders overlays.
"""
import json
import sys
import tempfile
from pathlib import Path

from focusmap import PipelineConfig
from focusmap.overlay import overlay
from focusmap.pipeline import Sources, run
from focusmap.synthetic import make_golden_dataset

work = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="focusmap-demo-"))
data = make_golden_dataset(work / "data")
out = work / "out"

report = run(data, out, PipelineConfig(), Sources(mock_vlm=data / "mock_vlm.json"))
for r in report.trajectories:
    print(f"{r.name}: {r.status}, {r.vlm_calls} VLM calls, {r.detector_calls} detector frames")
    for w in r.warnings:
        print("  warning:", w)

# drive_a: the model first reports a traffic light as missing
filt = json.loads((out / "drive_a" / "filter.json").read_text())
print("drive_a vocabulary after retry:", filt["vocabulary"])
for sub in json.loads((out / "drive_a" / "subsequences.json").read_text()):
    print("  sub-sequence", sub)

written = overlay(out / "drive_a", boxes=True)
print(f"{len(written)} overlays in {written[0].parent}")
