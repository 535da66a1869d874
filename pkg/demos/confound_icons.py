"""
Confounded frames
=================

Each frame gets an icon for the previous action: a red disc when braking,
a green arrow for steering whose stroke grows with throttle.
"""
import numpy as np

from focusmap.confound import IconConfig, arrow_thickness, render_icons

cfg = IconConfig()
frame = np.full((72, 128, 3), 100, np.uint8)

for prev in [(0.0, 0.5, 0.0), (-0.4, 1.0, 0.0), (0.3, 0.25, 1.0), (0.0, 0.0, 1.0)]:
    out = render_icons(frame, prev, cfg)
    changed = (out != frame).any(axis=-1)
    rows = np.flatnonzero(changed.any(axis=1))
    print(f"prev={prev}: thickness {arrow_thickness(prev[1], cfg)}, "
          f"{changed.sum()} px changed in rows {rows.min()}-{rows.max()}")

# text view of the band for a hard left turn with the brake on
band = render_icons(frame, (-0.5, 0.75, 1.0), cfg)[: cfg.band_height]
for row in band[::2]:
    print("".join("R" if tuple(p) == (255, 0, 0) else "G" if tuple(p) == (0, 255, 0) else "." for p in row[::2]))
