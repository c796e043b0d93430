"""How many key bits a deployment burns, and what an impostor's odds are per round.

    python3 demos/key_budget.py
"""
from posverify.analytics import key_consumption, optimal_split, p_eve, p_s_error_tolerant_exact

# odds for a single guessed round, exact
print(" n   best m   success probability")
for n in (8, 16, 32, 62):
    m = optimal_split(n)
    print(f"{n:3d}   {m:5d}   {float(p_eve(n, m)):.3e}")

# allowing a few flipped bits on noisy links costs security
print()
for gamma in (0.0, 0.05, 0.1):
    print(f"n=82 gamma={gamma:<4}  {float(p_s_error_tolerant_exact(82, 41, gamma)):.3e}")

print()
for rate in (1e3, 1e6):
    print(f"four verifiers, 60-bit keys, {rate:.0e} rounds/s: {key_consumption(4, 60, rate):.3g} bits/s")
