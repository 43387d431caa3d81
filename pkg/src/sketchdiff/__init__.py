"""Non-autoregressive diffusion generative modelling of variable-length
stroke sequences."""

from .data import (
    DatasetSplit,
    PointSet,
    SketchBatch,
    ThreePointSketch,
    VelocitySequence,
    chamfer_distance,
    generate_toy_dataset,
    make_batch,
    parse_sketch_file,
    preprocess,
    quantize_pen,
    resample_sketch,
    save_sketch_file,
    to_point_set,
    to_positions,
    to_velocities,
)
from .diffusion import (
    NoiseSchedule,
    build_linear_schedule,
    ddim_step,
    ddpm_step,
    forward_diffuse,
    mean_from_eps,
    sample,
)
from .training import Checkpoint, TrainConfig, fit, load_checkpoint, save_checkpoint

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
