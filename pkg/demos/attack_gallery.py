"""Run one scenario per adversary strategy and tabulate why each round failed.

    python3 demos/attack_gallery.py
"""
import copy
import json
from collections import Counter
from pathlib import Path

from posverify.scenario import from_dict
from posverify.simulator import simulate

base = json.loads((Path(__file__).resolve().parent.parent / "scenarios" / "honest_1d.json").read_text())

attacks = {
    "none": [],
    "delay 2 us on queries": [{"type": "delay", "seconds": 2e-6}],
    "jam every channel": [{"type": "jam"}],
    "relocate 150 m after round 1": [{"type": "relocate", "start_time": 1.5e-3, "velocity": [1.5e7], "duration": 1e-5}],
    # replies here are triggered by arriving queries, so the prover clock is irrelevant
    "prover clock 1 us slow": [{"type": "desync_bob", "offset": 1e-6}],
    "impersonate A1 in round 2": [{"type": "impersonate", "targets": [1], "round": 2}],
}

print(f"{'attack':30s} verified  failure reasons")
for name, adversary in attacks.items():
    doc = copy.deepcopy(base)
    doc["adversary"] = adversary
    reports = simulate(from_dict(doc)).reports
    ok = sum(r.verified for r in reports)
    reasons = Counter(r.reason for r in reports if not r.verified)
    print(f"{name:30s} {ok}/{len(reports)}       {dict(reasons) or '-'}")
