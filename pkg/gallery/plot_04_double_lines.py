# %% [markdown]
# # When one row becomes two lines
#
# A row that drifts sideways across a tile smears its profile peak.  If the
# plants are narrower than the drift, the smear has two humps and a detector
# with no minimum peak distance reports both.

# %%
import numpy as np

import rowpip as rp

recipe = rp.FieldRecipe(width_px=6000, height_px=2000, row_curvature=8,
                        plant_diameter_m=(0.03, 0.05), rng_seed=3)
veg, truth = rp.generate(recipe)
whole = rp.TileSpec(6000, 2000)
print(len(truth.rows), "rows")

# %%
for d in (1, 5, 20, None):
    res = rp.detect_rows(veg, whole, rp.PeakParams(min_distance_px=d))
    m = rp.match_segments(res.segments, truth.rows, veg.shape, whole)
    label = "default" if d is None else str(d)
    print(f"min distance {label:>7s}: {len(res.segments):3d} lines  TP {m.tp}  FP {m.fp}  FN {m.fn}")

# %% [markdown]
# The profile around the first row shows the two humps.

# %%
prof = rp.projection_profile(veg, "horizontal").values
y = int(round(truth.rows[0][:, 1].mean()))
window = prof[y - 12:y + 13]
print(np.array2string(window, max_line_width=120))
print("local maxima:", rp.find_peaks(window, rp.PeakParams(1, min_height_frac=0.5)).tolist())
