"""Ground-truth multi-zone RC building model.

Each zone is a single thermal capacitance connected to outdoor air through
its envelope conductance and to neighbouring zones through interzone
conductances. Integration is explicit Euler at a fixed step (600 s by
default, i.e. six steps per hour).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParameterError, SimulationDivergenceError

DT_SECONDS = 600.0
WATTS_PER_PERSON = 100.0
PEOPLE_PER_M2 = 0.1

# Heating and cooling design-day dry-bulb temperatures (Chicago O'Hare).
DESIGN_T_WINTER = -16.6
DESIGN_T_SUMMER = 31.6
DESIGN_T_INDOOR = 20.0


@dataclass(frozen=True)
class MaterialLayer:
    name: str
    thickness: float
    conductivity: float
    density: float
    specific_heat: float

    def __post_init__(self):
        for attr in ("thickness", "conductivity", "density", "specific_heat"):
            value = getattr(self, attr)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{self.name}: {attr} must be positive, got {value}")


# Opaque-material columns of the building material table. Roughness and
# absorptances are dropped: the plant has no radiation model.
MATERIALS = {
    m.name: m
    for m in (
        MaterialLayer("4 inch dense face brick", 0.1014684, 1.245296, 2082.400, 920.4800),
        MaterialLayer("2 inch insulation", 0.050901, 0.043239, 32.03693, 836.8000),
        MaterialLayer("4 inch concrete block", 0.1014984, 0.3805070, 608.7016, 836.8000),
        MaterialLayer("3/4 inch plaster board", 0.019050, 0.7264224, 1601.846, 836.8000),
        MaterialLayer("1/8 inch hardwood", 0.003169, 0.1591211, 720.8308, 1255.200),
        MaterialLayer("8 inch concrete block", 0.2033016, 0.5707605, 608.7016, 836.8000),
        MaterialLayer("acoustic tile", 0.019050, 0.060535, 480.5539, 836.8000),
        MaterialLayer("1/2 inch stone", 0.012710, 1.435549, 881.0155, 1673.600),
        MaterialLayer("3/8 inch membrane", 0.009540, 0.1902535, 1121.292, 1673.600),
    )
}


def lump_materials(layers, area):
    """Reduce a layered assembly to one conductance and one capacitance.

    Layers act as series resistances; heat capacities add.

    Parameters
    ----------
    layers : sequence of MaterialLayer
        Assembly from outside to inside (order does not matter for the result).
    area : float
        Assembly area in m².

    Returns
    -------
    conductance : float
        W/K.
    capacitance : float
        J/K.
    """
    layers = list(layers)
    if not layers:
        raise ParameterError("assembly needs at least one layer")
    if not (area > 0 and math.isfinite(area)):
        raise ParameterError(f"area must be positive, got {area}")
    for layer in layers:
        # re-validate: callers may pass objects built without __post_init__
        MaterialLayer(layer.name, layer.thickness, layer.conductivity, layer.density, layer.specific_heat)
    resistance = sum(l.thickness / l.conductivity for l in layers)
    heat_capacity = sum(l.thickness * l.density * l.specific_heat for l in layers)
    return area / resistance, area * heat_capacity


@dataclass(frozen=True)
class ZoneParams:
    name: str
    capacitance: float
    envelope_conductance: float
    interzone_conductance: dict = field(default_factory=dict)
    floor_area: float = 400.0
    p_min: float = -5000.0
    p_max: float = 10000.0

    def __post_init__(self):
        if not self.capacitance > 0:
            raise ParameterError(f"zone {self.name}: capacitance must be positive")
        if not self.envelope_conductance > 0:
            raise ParameterError(f"zone {self.name}: envelope conductance must be positive")
        if not self.floor_area > 0:
            raise ParameterError(f"zone {self.name}: floor area must be positive")
        if any(g < 0 for g in self.interzone_conductance.values()):
            raise ParameterError(f"zone {self.name}: negative interzone conductance")

    @property
    def max_occupants(self):
        return math.ceil(PEOPLE_PER_M2 * self.floor_area - 1e-9)


@dataclass(frozen=True)
class PlantState:
    zone_temps: np.ndarray
    sim_time: int = 0

    def __post_init__(self):
        temps = np.asarray(self.zone_temps, dtype=float)
        object.__setattr__(self, "zone_temps", temps)
        if not np.all(np.isfinite(temps)):
            raise SimulationDivergenceError(f"non-finite zone temperatures at step {self.sim_time}")
        if self.sim_time < 0:
            raise ParameterError("sim_time must be nonnegative")


def zone_power_limits(zone):
    """Return the configured ``(p_min, p_max)`` HVAC box for a zone, in W."""
    if zone.p_min > zone.p_max:
        raise ConfigError(f"zone {zone.name}: p_min {zone.p_min} exceeds p_max {zone.p_max}")
    return float(zone.p_min), float(zone.p_max)


def design_power_limits(envelope_conductance, step=5000.0):
    """Size heating/cooling capacity against the design days.

    Heating must hold 20 °C at the winter design temperature and cooling must
    hold it at the summer one; each magnitude is rounded up to ``step`` W.
    """
    heat = envelope_conductance * (DESIGN_T_INDOOR - DESIGN_T_WINTER)
    cool = envelope_conductance * (DESIGN_T_SUMMER - DESIGN_T_INDOOR)
    return -step * math.ceil(cool / step), step * math.ceil(heat / step)


class BuildingPlant:
    """Coupled RC network of ``len(zones)`` zones.

    Raises :class:`ConfigError` if the interzone map is asymmetric or refers
    to unknown zones, and if the explicit-Euler stability bound
    ``dt * (U_env + sum U_zn) / C < 1`` fails for any zone.
    """

    def __init__(self, zones, dt=DT_SECONDS):
        self.zones = list(zones)
        self.dt = float(dt)
        names = [z.name for z in self.zones]
        if len(set(names)) != len(names):
            raise ConfigError("zone names must be unique")
        index = {n: i for i, n in enumerate(names)}
        n = len(self.zones)
        coupling = np.zeros((n, n))
        for i, zone in enumerate(self.zones):
            for other, g in zone.interzone_conductance.items():
                if other not in index:
                    raise ConfigError(f"zone {zone.name}: unknown neighbour {other!r}")
                j = index[other]
                if j == i:
                    raise ConfigError(f"zone {zone.name}: self coupling")
                back = self.zones[j].interzone_conductance.get(zone.name)
                if back is None or not math.isclose(back, g, rel_tol=1e-12):
                    raise ConfigError(f"interzone conductance {zone.name}<->{other} is not symmetric")
                coupling[i, j] = g
        for z in self.zones:
            zone_power_limits(z)
        self.capacitance = np.array([z.capacitance for z in self.zones])
        self.envelope = np.array([z.envelope_conductance for z in self.zones])
        self.coupling = coupling
        self.p_min = np.array([z.p_min for z in self.zones])
        self.p_max = np.array([z.p_max for z in self.zones])
        courant = self.dt * (self.envelope + coupling.sum(axis=1)) / self.capacitance
        if np.any(courant >= 1.0):
            bad = names[int(np.argmax(courant))]
            raise ConfigError(f"zone {bad}: dt*(U_env+sum U)/C = {courant.max():.3g} >= 1, Euler unstable")
        # Laplacian form of the interzone flows: flow_i = -sum_j G_ij (T_i - T_j)
        self._laplacian = np.diag(coupling.sum(axis=1)) - coupling

    @property
    def n_zones(self):
        return len(self.zones)

    def initial_state(self, temp=DESIGN_T_INDOOR + 2.5):
        return PlantState(np.full(self.n_zones, float(temp)), 0)

    def derivative_terms(self, temps, power, t_out, occupant_heat):
        """Net heat flow into each zone in W."""
        return (
            power
            + occupant_heat
            - self.envelope * (temps - t_out)
            - self._laplacian @ temps
        )

    def step(self, state, cmd, t_out, occupant_heat):
        """Advance one step; see :func:`plant_step`."""
        power = np.asarray(cmd, dtype=float)
        if power.shape != (self.n_zones,):
            raise ParameterError(f"expected {self.n_zones} zone powers, got shape {power.shape}")
        tol = 1e-9 * np.maximum(1.0, np.abs(self.p_max))
        if np.any(power < self.p_min - tol) or np.any(power > self.p_max + tol):
            raise ParameterError(f"HVAC command {power} outside limits")
        occ = np.broadcast_to(np.asarray(occupant_heat, dtype=float), (self.n_zones,))
        temps = state.zone_temps
        new = temps + (self.dt / self.capacitance) * self.derivative_terms(temps, power, float(t_out), occ)
        if not np.all(np.isfinite(new)):
            raise SimulationDivergenceError(
                f"non-finite temperatures after step {state.sim_time}; dt/C too coarse?"
            )
        return PlantState(new, state.sim_time + 1)

    def swapped(self, i, j):
        """Copy of the plant with zones ``i`` and ``j`` exchanged (for symmetry checks)."""
        order = list(range(self.n_zones))
        order[i], order[j] = order[j], order[i]
        return BuildingPlant([self.zones[k] for k in order], self.dt)


def plant_step(plant, state, cmd, t_out, occupant_heat):
    """One explicit-Euler step of the coupled plant.

    ``T_z' = T_z + dt/C_z * (P_z + Q_occ,z - U_env,z (T_z - T_out) - sum_n U_zn (T_z - T_n))``
    """
    return plant.step(state, cmd, t_out, occupant_heat)


# --------------------------------------------------------------------------
# configuration documents


def _require(doc, key, where):
    if key not in doc:
        raise ConfigError(f"{where}: missing field {key!r}")
    return doc[key]


def zones_from_config(doc, dt=DT_SECONDS):
    """Build ZoneParams from a parsed building configuration document.

    Besides the required fields, each zone may carry ``envelope_area_m2``
    (area of the layered envelope assembly, defaults to ``area_m2``).
    """
    if not isinstance(doc, dict):
        raise ConfigError("building config must be a JSON object")
    hvac = _require(doc, "hvac", "building")
    try:
        p_min = float(_require(hvac, "p_min_w", "hvac"))
        p_max = float(_require(hvac, "p_max_w", "hvac"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"hvac limits: {exc}") from None
    if p_min > p_max:
        raise ConfigError(f"hvac: p_min_w {p_min} exceeds p_max_w {p_max}")
    zones = []
    for k, zdoc in enumerate(_require(doc, "zones", "building")):
        where = f"zones[{k}]"
        name = str(_require(zdoc, "name", where))
        area = float(_require(zdoc, "area_m2", where))
        try:
            layers = [MATERIALS[n] for n in _require(zdoc, "layers", where)]
        except KeyError as exc:
            raise ConfigError(f"{where}: unknown material {exc.args[0]!r}") from None
        interzone = {str(n): float(g) for n, g in _require(zdoc, "interzone", where).items()}
        env_area = float(zdoc.get("envelope_area_m2", area))
        try:
            g_env, cap = lump_materials(layers, env_area)
            zones.append(ZoneParams(name, cap, g_env, interzone, area, p_min, p_max))
        except ParameterError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    if not zones:
        raise ConfigError("building config has no zones")
    return zones


def load_building(path_or_doc, dt=DT_SECONDS):
    """Plant from a JSON file path or an already parsed document."""
    if isinstance(path_or_doc, (str, Path)):
        try:
            doc = json.loads(Path(path_or_doc).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path_or_doc}: {exc}") from None
    else:
        doc = path_or_doc
    return BuildingPlant(zones_from_config(doc, dt), dt)


def reference_building_doc():
    text = resources.files("lbmpc.data").joinpath("reference_building.json").read_text()
    return json.loads(text)


def reference_building(dt=DT_SECONDS):
    """The two-storey, four-zone, 1600 m² reference office."""
    return load_building(reference_building_doc(), dt)


def with_limits(zone, p_min, p_max):
    return replace(zone, p_min=float(p_min), p_max=float(p_max))
