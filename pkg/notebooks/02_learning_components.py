# %% [markdown]
# # Learning the two models the controller needs
#
# The controller relies on two learned pieces. A small recurrent network
# forecasts head counts from the time of day. A two-parameter thermal model
# per zone is fitted online by recursive least squares. Both are trained here
# on a few weeks of synthetic data.

# %%
from datetime import datetime

import numpy as np

from lbmpc import occupancy as occ
from lbmpc.harness import excitation_run
from lbmpc.plant import reference_building
from lbmpc.sysid import identify
from lbmpc.weather import synth_weather

plant = reference_building()
start = datetime(2020, 7, 1)
weather = synth_weather(28, -16.6, 31.6, seed=2, start=start)
schedule = occ.synth_occupancy(plant.zones, 28, seed=3, start=start)

# %% [markdown]
# ## Occupancy forecaster
#
# Training feeds the true past counts back in (teacher forcing), which turns
# the problem into ordinary regression solved by Levenberg-Marquardt.

# %%
ds = occ.narx_dataset(schedule, weather)
net, report = occ.fit_narx(ds, restarts=2, max_epochs=150, target_max=float(max(schedule.max_counts)))
print(f"{len(ds)} samples, stop: {report.stop_reason} after {report.epochs_run} epochs")
print(f"normalized mse train/val/test: {report.mse_train:.2e} / {report.mse_val:.2e} / {report.mse_test:.2e}")

# %% [markdown]
# For control the network runs closed loop: its own forecasts replace the
# unknown future counts. Here is a one-hour forecast made at 08:40 on a
# weekday, next to what actually happened.

# %%
feats = occ.feature_matrix(weather)
t = 7 * 144 + 52  # a Wednesday, 08:40
hist = (feats[t - 2:t], schedule.counts[t - 2:t].T)
forecast = occ.predict_horizon(net, hist, feats[t:t + 5], 6)
print("forecast:", np.round(forecast, 1))
print("actual:  ", schedule.counts[t:t + 6].T)

# %% [markdown]
# ## Zone models
#
# Identification needs informative data. A proportional law keeps the zones
# near 22.5 C while a random binary signal on top shakes the heater, and RLS
# runs over the result zone by zone.

# %%
log = excitation_run(plant, weather, schedule, len(weather), seed=11)
for z, zone in enumerate(plant.zones):
    model, rms = identify(log, z, zone.capacitance)
    print(f"{zone.name}: a = {model.a:.6f}, U = {model.U:.1f} W/K, one-step rms {rms:.4f} C")
