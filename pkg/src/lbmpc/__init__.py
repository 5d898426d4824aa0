"""Learning-based model predictive control of a multi-zone building.

Modules
-------
plant      explicit-Euler RC model of the building (ground truth)
weather    outdoor temperature series, synthetic or from CSV
occupancy  office schedules and the NARX occupancy forecaster
sysid      recursive least-squares identification of the zone model
mpc        box-constrained quadratic program and receding-horizon loop
harness    end-to-end experiment, logs and comparison report
"""

from .errors import (AlignmentError, ConfigError, IdentificationError, LbmpcError, NumericalBreakdownError,
                     ParameterError, ParseError, SchemaError, SimulationDivergenceError, StageError,
                     StructuralError, TrainingError)
from .harness import ComparisonReport, compute_report, run_experiment
from .log import ScenarioLog, export_csv, import_csv
from .mpc import MpcConfig, MpcSolution, predict_trajectory, receding_horizon_step, solve_mpc
from .occupancy import NarxNetwork, OccupancySchedule, predict_horizon, synth_occupancy, train_narx
from .plant import BuildingPlant, PlantState, ZoneParams, plant_step
from .sysid import RlsEstimator, ThermalModel, identify, rls_update
from .weather import WeatherSeries, load_weather_csv, synth_weather

__version__ = "0.1.0"
