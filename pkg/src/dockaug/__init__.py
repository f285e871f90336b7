"""dockaug: lift one mobile-manipulation demo to many docking poses."""

from .augmentor import AugmentationJob, augment, augment_batch, generate_actions
from .demo_model import (
    Action,
    Dataset,
    DemoFrame,
    Demonstration,
    PointCloud,
    Provenance,
    RobotState,
    read_demo,
    validate_demo,
    write_demo,
)
from .dock_sampler import FeasibilityReport, SamplerConfig, sample_docks
from .geometry import (
    PlanarPose,
    Pose,
    RigidTransform,
    compose,
    inverse,
    planar_to_world,
    relative_transform,
    transform_points,
)
from .motion_replanner import MotionPath, PlannerConfig, replan, retime
from .pointcloud_ops import Aabb, centroid, concat, crop_aabb, extract_cluster, fps_downsample
from .scene import Scene, load_scene, save_scene
from .trajectory_parser import ParsedTrajectory, Segment, object_radius_check, parse

__version__ = "0.1.0"
