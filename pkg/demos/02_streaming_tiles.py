"""
Streaming the gated attention in tiles
======================================

The naive forward builds the full L x L score matrix. The tiled forward
walks query and key blocks with a running max and running normalizer, so
its scratch memory depends only on the tile shape. Both routes compute the
same function; the meter shows the memory difference.
"""

import numpy as np

from foxattn.attention import AttentionInputs, fgattn_fwd
from foxattn.tiled import BufferMeter, TileConfig, tiled_fwd

rng = np.random.default_rng(7)


def case(length, d=16):
    return AttentionInputs(
        q=rng.normal(size=(length, d)).astype(np.float32),
        k=rng.normal(size=(length, d)).astype(np.float32),
        v=rng.normal(size=(length, d)).astype(np.float32),
        logf=(-0.05 - np.abs(rng.normal(scale=0.3, size=length))).astype(np.float32),
    )


# same function: compare a streaming pass against the materialized reference
inp = case(257)  # deliberately not a multiple of the tile size
cfg = TileConfig(64, 64)
ref = fgattn_fwd(inp)
out, aux = tiled_fwd(inp, cfg)
print(f"L=257, tiles 64x64: max |tiled - naive| = {np.abs(out - ref).max():.2e}")

# the forward also returns per-row logsumexp, the quantity a backward pass
# needs to rebuild probabilities tile by tile
print(f"logsumexp saved for backward: shape {aux.lse.shape}, "
      f"first rows {aux.lse[:3].round(3)}")

# scratch memory: naive scores grow as L^2, tiled scratch stays flat
print(f"\n{'L':>6} {'naive score bytes':>18} {'tiled peak bytes':>17}")
for length in (256, 512, 1024, 2048):
    inp = case(length)
    meter = BufferMeter()
    tiled_fwd(inp, cfg, meter=meter)
    naive_bytes = length * length * 4  # one f32 score matrix
    print(f"{length:>6} {naive_bytes:>18} {meter.peak_bytes:>17}")

print("\nthe tiled peak is identical at every length: the kernel never")
print("holds more than one tile of scores plus its running statistics")
