"""Goal inference for 3D reaching from observed wrist trajectories."""

from .core import (
    GoalPosterior,
    KeyMismatchError,
    MissingJointError,
    NumericError,
    ObstacleSpec,
    Prior,
    ReachInferenceError,
    SceneSpec,
    SchemaError,
    SkeletonFrame,
    TargetSpec,
    Trajectory,
    combine_posterior,
    make_trajectory,
    wrist_path,
)
from .kinematics import BodyProportions, KinematicState, neutral_state
from .models import infer
from .planner import PlannerParams, plan, synthesize_trajectory

__version__ = "0.1.0"
