"""The deterministic-memory bound is reached by an amplitude-damping channel.

For output fidelity f_o on a stored state of Schmidt weight lam, the optimal
channel's Choi fidelity equals the bound G(f_o, lam), and no choice of
deterministic maps around it does better than the trace-norm upper bound.
"""

import numpy as np

from memcert import sdp
from memcert.channels import choi_fidelity
from memcert.oracle import result1_optimal_channel, result1_xi, theta_estimate, theta_upper_bound_damping

f_o = 0.9
print(" lambda      G     Choi fid.   theta est.   upper")
for lam in np.linspace(0.5, 1 / (2 * f_o), 5):
    k = result1_optimal_channel(f_o, lam)
    g = sdp.g_closed_form(f_o, lam)
    est = theta_estimate(k, restarts=100)
    print(f"{lam:7.4f}  {g:7.4f}  {choi_fidelity(k):9.4f}  {est:10.4f}  {theta_upper_bound_damping(result1_xi(f_o, lam)):7.4f}")
