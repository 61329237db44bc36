"""UV-C surface disinfection: surface mapping, cell allocation, scan planning and dose simulation."""

from .dose import (DisinfectionReport, DoseMap, PathogenDoseTable, SurfaceGrid, TimedTrajectory,
                   conservation_check, report, simulate_dose)
from .geometry import Pose2D, Pose3D
from .irradiance import (LedPanelSource, SurfaceSample, TubeLampBankSource, electrical_power,
                         irradiance, irradiance_lamp_bank, irradiance_lambertian_point, irradiance_panel)
from .motsp import (MotspInstance, ObjectiveVector, ParetoFront, Tour, allocate_cells, brute_force_pareto,
                    decomposition_solve, dominates, hypervolume, scalarized_optimal, tour_objectives)
from .scenario import Scenario, ScenarioError, load_scenario
from .segmentation import PipelineConfig, PlaneSegment, PointCloud, extract_polygons, fit_rectangle, segment_planes
from .waypoints import Mission, ScanPattern, assemble_mission, boustrophedon, line_scan
from .world_model import (OccupancyGrid, PolygonDictionary, SurfacePolygon, dictionary_update, plan_base_path,
                          polygons_associated)

__version__ = "0.1.0"
