"""
Softmax attention with a forget gate
====================================

A scalar gate f_t in (0, 1) per timestep turns into an additive bias on the
attention logits: score(i, j) picks up log f_{j+1} + ... + log f_i, so the
weight on an old key decays by the product of every gate between it and the
query. With all gates at 1 the bias vanishes and we recover plain causal
softmax attention.
"""

import numpy as np

from foxattn.attention import AttentionInputs, decay_bias, fgattn_fwd
from foxattn.kernels import row_softmax

rng = np.random.default_rng(0)

# a five step toy problem, three dimensional heads
L, d = 5, 3
q = rng.normal(size=(L, d))
k = rng.normal(size=(L, d))
v = rng.normal(size=(L, d))

# gates: remember almost everything early, then forget hard at step 3
f = np.array([1.0, 0.9, 0.9, 0.1, 0.9])
logf = np.log(f)

# the bias matrix: entry (i, j) sums log-gates strictly after j up to i
D = decay_bias(logf).d
print("multiplicative decay exp(D), lower triangle:")
with np.printoptions(precision=3, suppress=True):
    print(np.tril(np.exp(D)))
# note column 2 in row 3: the 0.1 gate at step 3 crushes everything
# before it, while keys at or after step 3 are untouched

out = fgattn_fwd(AttentionInputs(q=q, k=k, v=v, logf=logf))
print("\ngated attention output:")
print(out.round(4))

# with every gate pinned to 1 the same call is ordinary causal attention
out_plain = fgattn_fwd(AttentionInputs(q=q, k=k, v=v, logf=np.zeros(L)))
scores = (q @ k.T) / np.sqrt(d)
scores[np.triu_indices(L, k=1)] = np.finfo(np.float64).min
manual = row_softmax(scores) @ v
print("\nno-gate output matches hand-built causal softmax:",
      np.allclose(out_plain, manual, atol=1e-12))

# a constant gate f = exp(-m) is exactly a linear distance penalty -m(i-j)
m = 0.35
logf_const = np.full(L, -m)
out_const = fgattn_fwd(AttentionInputs(q=q, k=k, v=v, logf=logf_const))
scores = (q @ k.T) / np.sqrt(d)
idx = np.arange(L)
scores -= m * (idx[:, None] - idx[None, :])
scores[np.triu_indices(L, k=1)] = np.finfo(np.float64).min
manual = row_softmax(scores) @ v
print("constant-gate output matches linear-bias attention:",
      np.allclose(out_const, manual, atol=1e-12))
