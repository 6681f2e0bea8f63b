"""Event-based continuous trajectories: projections, NURBS curves, cost volumes and motion fields."""

from .correlation import (Axis, CostKind, CostPatch, CostPyramid, FeatureMap, bilinear_sample, fuse_temporal,
                          query_neighborhood, spatial_cost_pyramid, temporal_cost_pyramid)
from .errors import EmotiveError
from .events import (CameraIntrinsics, Event, EventStream, GroundTruth, RigidSceneConfig, parse_event_stream,
                     slice_window, synth_rigid_scene, write_event_stream)
from .fitting import (CorrespondenceSet, CostPyramids, LossConfig, PatchTargetUpdater, QueryFeatures, depth_loss,
                      fit_trajectory_lsq, flow_loss, refine_trajectory, temporal_regularizer, total_loss)
from .motion import (FlowField, MetricsReport, MiDField, NormalizedSceneFlow, metrics, mid_label_from_depth,
                     motion_in_depth_multiview, motion_in_depth_single, normalized_scene_flow, optical_flow,
                     transport_mid)
from .nurbs import (AdaptationResult, KnotVector, Trajectory, basis, basis_derivative, clamped_knots, density_adapt,
                    eval_trajectory, eval_velocity, rational_linear_trajectory, uniform_knots)
from .projection import DensityField, Kymograph, Voxel, density_field, event_kymograph, event_voxel

__version__ = "0.1.0"
