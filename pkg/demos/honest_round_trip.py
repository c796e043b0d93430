"""Walk one honest scenario through the simulator and print what each party saw.

    python3 demos/honest_round_trip.py
"""
from pathlib import Path

from posverify.scenario import load_scenario
from posverify.simulator import simulate

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

cfg = load_scenario(SCENARIOS / "honest_1d.json")
result = simulate(cfg)

print("message trace (seconds, channel, kind, verifier, round, payload)")
for line in result.log[:12]:
    print("  ", line)
print("   ...")

print()
for r in result.reports:
    print(f"round {r.round}: verified={r.verified} reason={r.reason} "
          f"diameter={r.region_diameter:.3f} m  true position inside={r.true_in_region}")

# The region width comes from the prover's processing window, not from the
# distance to the verifiers: the light-time of half a microsecond is about 150 m.
