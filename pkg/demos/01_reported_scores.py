"""From two CHSH scores to certified memory bounds.

The bundled fixture holds post-selected counts of a Bell test run once with
the memory bypassed (input phase) and once through the memory (output phase).
"""

from importlib import resources

from memcert import CertifyConfig, CountsTable, certify, lambda_i, singlet_fidelity_bound

path = resources.files("memcert") / "data" / "tiranov_energy_time.json"
counts_in = CountsTable.load(path, "input")
counts_out = CountsTable.load(path, "output")

# %% Self-testing: each CHSH score certifies a Bell-state fidelity
for label, s in (("input", 2.733), ("output", 2.64)):
    print(f"{label:6s} S = {s:.3f}  ->  f = {singlet_fidelity_bound(s):.6f}")

# %% A heralded memory judged from the output test alone
wfs = CertifyConfig("S2", assume_a="wfs", assume_b_in="wfs", assume_b_out="wfs")
rep = certify(counts_in, counts_out, wfs)
print(f"\nS2 fidelity bound: {rep.fidelity_bound:.6f}")
print(f"S2 success bound:  {rep.success_bound}")
for w in rep.warnings:
    print("  warning:", w)

# %% Pretending the memory and the maps around it are deterministic
rep1 = certify(counts_in, counts_out, CertifyConfig("S1"))
print(f"\nlargest Schmidt weight of the stored state: {lambda_i(rep1.f_i):.6f}")
print(f"S1 fidelity bound: {rep1.fidelity_bound:.6f}")
