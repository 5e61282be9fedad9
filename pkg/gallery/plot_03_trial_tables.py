# %% [markdown]
# # Trial summary tables
#
# The evaluation helpers take plain numbers as well as maps, which makes it
# easy to tabulate a season's worth of plot results.  The figures below are
# the six SSWC plots of a 2019 corn trial.

# %%
import rowpip as rp
from rowpip.evaluation import ApplicationReport

_, table = rp.detection_table({
    "SSWC-1": (392, 0, 3, 1), "SSWC-2": (382, 0, 1, 3), "SSWC-3": (386, 0, 4, 0),
    "SSWC-4": (385, 0, 2, 1), "SSWC-5": (384, 0, 4, 2), "SSWC-6": (384, 0, 1, 1),
})
print(table)

# %%
desktop = {"SSWC-1": 2598.6, "SSWC-2": 3316.9, "SSWC-3": 2302.3,
           "SSWC-4": 1739.2, "SSWC-5": 2241.8, "SSWC-6": 1757.8}
field_app = {"SSWC-1": 1600.1, "SSWC-2": 2209.1, "SSWC-3": 1146.1,
             "SSWC-4": 841.8, "SSWC-5": 1280.7, "SSWC-6": 841.8}
print(rp.area_loss(desktop, field_app).table())

# %%
prescribed = {"SSWC-1": 1822.3, "SSWC-2": 2648.9, "SSWC-3": 1591.2,
              "SSWC-4": 1182.3, "SSWC-5": 1688.9, "SSWC-6": 1164.5}
rep = ApplicationReport.from_rows({k: (prescribed[k], field_app[k]) for k in prescribed})
print(rep.table())

# %%
eff = rp.EffectivenessReport.from_areas(
    {"SSWC": 87.02, "broadcast": 25.5}, {"SSWC": "SSWC", "broadcast": "NO-SSWC"}
)
print(eff.table())
