"""Leader/follower arm teleoperation with sensorless virtual force feedback.

The stack: serial-chain models (chain), FK/Jacobian/augmented-IK and
workspace retargeting (kinematics), gravity/friction/PD torque (dynamics),
the deviation-driven feedback factor with adaptive impedance (feedback), the
binary wire protocol with a lossy channel simulator (protocol), the
deterministic closed-loop simulator (simulator), trace serialization
(trace), stability metrics and the velocity-transform ablation (metrics),
plus a CLI (cli) and a WebSocket bridge for the browser console (bridge).
"""

from .chain import (
    ChainError,
    JointSpec,
    KinematicChain,
    follower7,
    leader3,
    load_chain,
    parse_chain,
    serialize_chain,
    workspace_radius,
)
from .config import ConfigError
from .dynamics import (
    Gains,
    JointState,
    friction_compensation,
    gravity_torque,
    inverse_dynamics,
    pd_torque,
)
from .feedback import (
    FeedbackParams,
    FeedbackState,
    VelocityTransform,
    ee_deviation,
    feedback_factor,
    modulate_gains,
    velocity_transform_value,
    virtual_target,
)
from .kinematics import (
    IkParams,
    IkReport,
    IkTaskWeights,
    Pose,
    RetargetMap,
    base_yaw_reference,
    elbow_z_residual,
    forward_kinematics,
    jacobian,
    retarget,
    solve_ik,
)
from .metrics import (
    StabilityReport,
    ablation_report,
    feedback_correlation,
    high_freq_energy_ratio,
    jerk_anomaly_pct,
    max_local_jerk,
    stability_report,
)
from .protocol import (
    Channel,
    ChannelModel,
    FollowerState,
    Handshake,
    LeaderCommand,
    OperatorPose,
    ProtocolError,
    StaleAction,
    decode,
    encode,
    stale_command_policy,
)
from .scenario import load_scenario, parse_scenario
from .simulator import (
    HalfSpace,
    OperatorModel,
    Scenario,
    TeleopLoop,
    WaypointPath,
    World,
    run_teleop_loop,
)
from .trace import Trace, TraceRecord, load_trace, save_trace

__version__ = "0.1.0"
