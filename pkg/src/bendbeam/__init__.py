"""Near-field bending-beam synthesis and evaluation for uniform linear arrays."""

__version__ = "0.1.0"

from .channel import (ABF, DBF, Beamformer, ChannelMatrix, ChannelVector,
                      DegenerateGeometryError, build_channel_matrix, channel_at,
                      min_trajectory_power, received_power, trajectory_powers)
from .fieldmap import (ComparisonMetrics, FieldGrid, GridSpec, TrajectoryProfile,
                       compare_schemes, default_grid_spec, evaluate_grid,
                       profile_along_trajectory)
from .geometry import (ArrayGeometry, InvalidTrajectoryError, Obstacle,
                       SamplePoints, SPEED_OF_LIGHT, Trajectory, sample_trajectory,
                       segment_blocked)
from .maxmin import (NoPrincipalComponentError, SolverConfig, SolverState,
                     extract_beamformer, linearized_penalty, rank_gap,
                     solve_maxmin)
from .sdp import (SubproblemSolution, SubproblemSolver, SubproblemSpec,
                  solve_subproblem)
from .tangent import (PhaseProfile, TangentUnreachableError,
                      parabola_phase_closed_form, paraxial_phase_profile,
                      tangent_beamformer, tangent_point, tm_beamformer)
