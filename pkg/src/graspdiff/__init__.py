"""Two-stage hand-object image synthesis at desk scale.

Stage one turns an end grasp pose into an interpolated approach trajectory
and renders its structure conditions (skeleton, segmentation, normals).
Stage two trains and samples a structure-conditioned denoising diffusion
model with classifier-free guidance, background-buffer regularization and an
anchor-frame video mode, evaluated by a pluggable metric harness.
"""

from .conditions import ConditionSet, blank_conditions
from .denoiser import ConditionalDenoiser, DenoiserConfig, build_model
from .sampler import GuidanceSpec, VideoSamplingSpec, guided_epsilon, sample, sample_batch, sample_video
from .schedule import (NoiseSchedule, forward_diffuse, make_linear_schedule,
                       noise_prediction_loss, reverse_step)
from .trainer import TrainConfig, Trainer, regularized_loss
from .trajectory import (HandPose, Trajectory, interpolate_trajectory, slerp,
                         start_pose_from_end, stub_end_pose_provider)

__version__ = "0.1.0"

__all__ = [
    "ConditionSet", "blank_conditions",
    "ConditionalDenoiser", "DenoiserConfig", "build_model",
    "GuidanceSpec", "VideoSamplingSpec", "guided_epsilon", "sample",
    "sample_batch", "sample_video",
    "NoiseSchedule", "forward_diffuse", "make_linear_schedule",
    "noise_prediction_loss", "reverse_step",
    "TrainConfig", "Trainer", "regularized_loss",
    "HandPose", "Trajectory", "interpolate_trajectory", "slerp",
    "start_pose_from_end", "stub_end_pose_provider",
    "__version__",
]
