"""
Gated linear attention: recurrence vs closed form
=================================================

Replacing the softmax with a positive feature map phi gives an attention
that can be computed as a recurrent state update

    S_t = f_t S_{t-1} + v_t phi(k_t)^T      z_t = f_t z_{t-1} + phi(k_t)

or, equivalently, all at once with pairwise gate products
F_ij = f_{j+1} ... f_i. The demo runs both and prints the gap, then shows
what the state recurrence is doing on a tiny example.
"""

import numpy as np

from foxattn.gla import gla_parallel, gla_recurrent, phi_feature

rng = np.random.default_rng(3)

# phi is elu+1: positive everywhere, smooth at zero
u = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
print("phi on", u, "->", phi_feature(u).round(4))

# the two routes agree to near machine precision
for L in (1, 7, 32, 128):
    d = 8
    k = rng.normal(size=(L, d))
    q = rng.normal(size=(L, d))
    v = rng.normal(size=(L, d))
    f = rng.uniform(0.3, 1.0, size=L)
    a = gla_recurrent(k, q, v, f)
    b = gla_parallel(k, q, v, f)
    rel = np.abs(a - b).max() / np.abs(a).max()
    print(f"L={L:>3}: recurrent vs parallel rel diff {rel:.2e}")

# what the state holds: with f = 1 the state is a running sum of outer
# products, so the output is a kernel-weighted average of all past values
L, d = 4, 2
k = rng.normal(size=(L, d))
q = rng.normal(size=(L, d))
v = rng.normal(size=(L, d))
ones = np.ones(L)
out = gla_recurrent(k, q, v, ones)

t = 2  # check position 2 by hand against the weighted-average formula
w = phi_feature(k[: t + 1]) @ phi_feature(q[t])          # kernel scores vs every past key
manual = (w[:, None] * v[: t + 1]).sum(axis=0) / w.sum()
print(f"\nposition {t}: recurrent {out[t].round(6)}, manual {manual.round(6)}")

# a tiny gate wipes the state: position after f ~ 0 sees only itself
f = np.array([1.0, 1.0, 1e-12, 1.0])
out = gla_recurrent(k, q, v, f)
print("after a near-zero gate the output is the current value alone:",
      np.allclose(out[2], v[2], atol=1e-9))
