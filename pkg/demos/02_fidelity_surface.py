"""The deterministic-memory bound as a function of both CHSH scores.

Prints a coarse text rendering; ``memcert grid`` exports the same surface as CSV.
"""

import numpy as np

from memcert import scenario1_bound, singlet_fidelity_bound

s = np.linspace(2.0, 2 * np.sqrt(2), 9)
f = [singlet_fidelity_bound(x) for x in s]
table = np.array([[scenario1_bound(fi, fo) for fo in f] for fi in f])

print("rows: S_i, columns: S_o")
print("       " + " ".join(f"{x:6.3f}" for x in s))
for x, row in zip(s, table):
    print(f"{x:6.3f} " + " ".join(f"{v:6.3f}" for v in row))

# %% The bound is not symmetric: a poor input test hurts less than a poor output test
print("\nbound(S_i=2.2, S_o=2.7) =", round(scenario1_bound(singlet_fidelity_bound(2.2), singlet_fidelity_bound(2.7)), 6))
print("bound(S_i=2.7, S_o=2.2) =", round(scenario1_bound(singlet_fidelity_bound(2.7), singlet_fidelity_bound(2.2)), 6))
