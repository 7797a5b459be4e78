"""Highway motion prediction engine.

Map-based goal extraction, mixture-of-experts motion-profile prediction,
pure pursuit trajectory generation over a kinematic bicycle model, and
recursive Bayesian inference over hypothesised goals.
"""

from .bayes import (BayesParams, GoalPosterior, Predictor, PredictorState,
                    forget, lateral_acc_penalty, likelihood, posterior_update,
                    remap_goal_masses)
from .features import (AgentState, FeatureVector, Neighbourhood,
                       change_lane_features, follow_lane_features,
                       make_agent_state, select_neighbours)
from .lane_map import (Goal, GoalKind, LaneGraph, OffRoadError, Path,
                       extract_goals, load_lane_graph, locate_agent,
                       match_goals, target_path)
from .mdn import (ExpertCollection, MdnModel, MixtureOutput, MotionProfile,
                  cv_baseline, da_baseline, forward, gradients, nll_loss,
                  select_expert, to_motion_profile, train)
from .pursuit import (PursuitParams, Trajectory, VehicleGeometry,
                      bicycle_step, generate_trajectory, side_slip)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
