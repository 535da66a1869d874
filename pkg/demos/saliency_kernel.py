"""
Temporal saliency kernel
========================

A key object seen over the last few frames leaves a fading, widening trail.
Older sightings weigh alpha**k and spread by beta**-k.
"""
import numpy as np

from focusmap import PipelineConfig, normalize, render_raw

cfg = PipelineConfig()          # alpha 0.7, beta 0.8, gamma 15, t' = 4
W, H = 96, 32

# one object moving right by 12 px per frame
centers = {t: [(12.0 + 12 * t, 16.0)] for t in range(6)}

# current frame only vs. full history
now = render_raw(5, centers, cfg.replace(t_prime=0), W, H)
hist = render_raw(5, centers, cfg, W, H)
print("peak, frame-wise:", now.max().round(3), " with history:", hist.max().round(3))

# profile along the object's row, coarse text plot
g = normalize(hist).values[16]
for x in range(0, W, 6):
    print(f"x={x:3d} {'#' * int(40 * g[x])}")

# the k-th past sighting alone peaks at alpha**k
for k in range(5):
    v = render_raw(k, {0: [(40.0, 16.0)]}, cfg, W, H)[16, 40]
    print(f"k={k}: peak {v:.4f}  alpha**k {cfg.alpha ** k:.4f}")
