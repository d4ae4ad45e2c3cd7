"""Flow-guided image-based visual servoing simulator and benchmark harness."""

from .bench import (
    ROTATION_PRESETS,
    BenchmarkReport,
    BenchRow,
    SweepConfig,
    SweepResult,
    make_suite,
    run_bench,
    run_sweep,
)
from .control import (
    ControllerConfig,
    DegenerateObservationError,
    IllConditionedError,
    InteractionMatrix,
    clamp_twist,
    flow_to_error,
    lm_velocity,
    pbvs_oracle_velocity,
    photometric_controller,
    point_interaction,
    stack_interaction,
)
from .features import DEFAULT_GRID, DepthMap, FeatureGrid, FlowField, Image
from .flowio import (
    FileFormatError,
    UnsupportedFormatError,
    depth_to_grid,
    flow_to_grid,
    read_flo,
    read_pfm,
    write_flo,
    write_pfm,
)
from .loop import (
    METHODS,
    LogRecord,
    MethodSpec,
    RunLimits,
    ServoResult,
    Thresholds,
    check_convergence,
    run_servo,
    write_trajectory_csv,
)
from .observation import (
    UnsupportedSceneError,
    calibrate_alpha,
    flow_depth,
    oracle_flow,
    render_image,
    sample_intensities,
    true_depth,
)
from .scene import (
    DIFFICULTY_BANDS,
    PointCloud,
    ProceduralTexture,
    Scene,
    ServoTask,
    TaskGenerationError,
    TexturedPlane,
    generate_scene,
    load_task,
    observed_fraction,
    query_depth,
    sample_task,
    save_task,
)
from .se3 import (
    DEFAULT_INTRINSICS,
    BehindCameraError,
    Intrinsics,
    Pose,
    Twist,
    exp_twist,
    log_pose,
    pose_error,
    project,
    unproject,
)
from .svgplot import render_plots

__version__ = "0.1.0"
