"""UV-space synchronized diffusion texturing for animated mesh sequences.

Given K keyframes of an untextured mesh (shared topology, shared UV
atlas) and a pluggable denoising backend, the pipeline runs a DDIM
process whose per-view latents are kept consistent by aggregating clean
estimates in UV space at every step, stepping the latent textures there,
and re-rendering them to all views.
"""

__version__ = "0.1.0"

from .errors import (
    BackendUnavailable, BridgeTimeout, DegenerateTimestep, InvalidArgument,
    ProtocolError, ShapeMismatch, TopologyMismatch, UvMissing, UvSyncError,
)
from .geometry import (
    Camera, CameraRig, MeshSequence, default_rig, load_mesh_sequence,
    orbit_camera, save_mesh_sequence,
)
from .schedule import NoiseSchedule, Prediction, make_schedule
from .pipeline import (
    PipelineConfig, TextureSequence, finalize_textures, generate,
    interpolate_keyframes, render_sequence,
)
from .denoiser import (
    CallableDenoiser, DenoiseRequest, DenoiseResponse, Denoiser,
    NoisyOracleDenoiser, OracleDenoiser, RemoteDenoiser,
)

__all__ = [
    "BackendUnavailable", "BridgeTimeout", "Camera", "CameraRig",
    "CallableDenoiser", "DegenerateTimestep", "DenoiseRequest",
    "DenoiseResponse", "Denoiser", "InvalidArgument", "MeshSequence",
    "NoiseSchedule", "NoisyOracleDenoiser", "OracleDenoiser",
    "PipelineConfig", "Prediction", "ProtocolError", "RemoteDenoiser",
    "ShapeMismatch", "TextureSequence", "TopologyMismatch", "UvMissing",
    "UvSyncError", "default_rig", "finalize_textures", "generate",
    "interpolate_keyframes", "load_mesh_sequence", "make_schedule",
    "orbit_camera", "render_sequence", "save_mesh_sequence",
]
