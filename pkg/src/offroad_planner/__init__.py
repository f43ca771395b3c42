"""Off-road global path planning on pixel-coordinate intermediate maps."""

from .errors import (InvalidRequest, NoGridPath, NoTrailNearStart, NoTrailPath,
                     PlanningError, SliceExhausted, UnsupportedGeometry)
from .geomap import (CellClass, GeoFeature, GeoTransform, IntermediateMap,
                     MapSlice, apply_area_overlay, apply_overlays, downsample,
                     geo_to_pixel, load_geojson_features, load_map_cache,
                     pixel_to_geo, rasterize_features, read_geotiff_meta,
                     read_world_file, save_map_cache, slice_map)
from .grid_search import GridPath, astar, inflate_obstacles, jps
from .kino import (HybridAStarConfig, InfeasibleVertex, KinematicModel,
                   find_infeasible_vertices, hybrid_astar, min_turning_radius,
                   repair_path)
from .paths import Pose, as_points, densify, path_length
from .pipeline import (PlanContext, PlannerParams, PlanRequest, PlanResult,
                       plan)
from .smooth import (SmoothingParams, VoronoiFieldGrid, build_voronoi_field,
                     cost_terms, curvature_profile, smooth_path)
from .trails import (DistanceField, GoalPoseQuery, TrailNetwork, dbscan,
                     dijkstra_trail_path, find_closest_poses,
                     select_optimal_pair, wavefront_distance)

__version__ = "0.1.0"
