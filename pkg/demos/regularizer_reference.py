"""
Penalty reference values
========================

Feature activations outside the salient region are penalized:
lam * || (1 - g) * psi**2 ||_2, with the norm over every entry.
"""
import numpy as np

from focusmap import FeatureMap, saliency_penalty, select_supervised_frames, upsample_bilinear

# hand-checkable case: masked = [0, 2], norm 2
print(saliency_penalty(FeatureMap(np.array([[1.0, 2.0]])), np.array([[1.0, 0.5]]), lam=10))

# a 4x4 feature map lifted to the 16x16 saliency grid
rng = np.random.default_rng(0)
psi = upsample_bilinear(FeatureMap(rng.normal(size=(4, 4, 8))), 16, 16)
yy, xx = np.mgrid[0:16, 0:16]
g = np.exp(-((xx - 8) ** 2 + (yy - 8) ** 2) / (2 * 3.0 ** 2))

for lam in (5, 10):
    print(f"lam={lam}: {saliency_penalty(psi, g, lam):.4f}")
print("g = 1 everywhere:", saliency_penalty(psi, np.ones((16, 16)), 10))

# supervision-fraction sweep, fixed seed
for f in (0.1, 0.25, 0.5):
    print(f, select_supervised_frames(20, f, seed=3))
