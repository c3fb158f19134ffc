"""
Synthetic gait kinematics from a handful of walking speeds
==========================================================

Mean joint-angle profiles are computed per speed from the bundled gait CSV,
a per-phase linear model in speed is fitted, and full cycles are generated
for speeds between the recorded ones.
"""

import numpy as np

from gaitforge import fixtures
from gaitforge.gait_data import profiles_from_csv
from gaitforge.synth_model import fit_quality, fit_speed_model, generate_kinematics

# %%
# Mean profiles, one per recorded speed (degrees, 21 phase points)
profiles = profiles_from_csv(fixtures.fixture_bytes())
for p in profiles[:3]:
    print(f"{p.speed:.2f} m/s  hip range {p.angles[0].min():6.1f} .. {p.angles[0].max():6.1f} deg")

# %%
# Speed-linear fit and how well it explains the profiles it came from
model = fit_speed_model(profiles)
base = fixtures.load_base_trajectory()
quality = fit_quality(model, base, profiles)
print("fit RMSE per joint (deg):", np.round(quality["rmse_deg"], 3), " R^2:", round(quality["r2"], 4))

# %%
# Whole cycles: faster walking gives shorter strides and larger hip excursion
for v in (0.7, 1.25, 1.8):
    c = generate_kinematics(model, base, v)
    hip = np.degrees(c.angles[0])
    print(f"{v:.2f} m/s  stride {c.stride_duration_s:.3f} s  {c.n_samples} samples  "
          f"hip excursion {hip.max() - hip.min():5.1f} deg")
