# %% [markdown]
# # The simulated building
#
# Four office zones share walls with each other and exchange heat with the
# outdoors through a lumped brick envelope. We build the reference plant,
# generate a year of synthetic outdoor temperature, and let the building float
# with the HVAC switched off.

# %%
import numpy as np

from lbmpc.occupancy import synth_occupancy
from lbmpc.plant import reference_building
from lbmpc.weather import synth_weather

plant = reference_building()
for z in plant.zones:
    print(f"{z.name}: C = {z.capacitance:.3e} J/K, U_out = {z.envelope_conductance:.1f} W/K, "
          f"P in [{z.p_min:.0f}, {z.p_max:.0f}] W")

# %% [markdown]
# Outdoor temperature follows an annual cosine (coldest mid-January) with a
# daily swing and some noise, all confined to the design-day extremes.

# %%
weather = synth_weather(365, -16.6, 31.6, seed=7)
daily = weather.temps.reshape(365, 144)
print(f"{len(weather)} ten-minute samples")
print(f"coldest day mean {daily.mean(axis=1).min():.1f} C, warmest {daily.mean(axis=1).max():.1f} C")

# %% [markdown]
# Free-floating week in January: no heating, only people. Each occupant adds
# 100 W, which slows the slide towards the outdoor temperature on weekdays
# but cannot stop it.

# %%
week = 7 * 144
schedule = synth_occupancy(plant.zones, 7, seed=8, start=weather.start)
state = plant.initial_state(22.5)
trace = np.empty((week, plant.n_zones))
for t in range(week):
    trace[t] = state.zone_temps
    state = plant.step(state, np.zeros(plant.n_zones), weather.temps[t], schedule.counts[t] * 100.0)
print("indoor temperature after each day (C):")
print(np.round(trace[143::144], 2))
