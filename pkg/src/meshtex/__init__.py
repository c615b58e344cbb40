"""Surface learning toolkit: 4-RoSy orientation fields on triangle
meshes, consistently oriented geodesic patch parameterizations,
high-resolution signal resampling, and 4-fold-rotation-invariant
texture convolution with a minimal trainable runtime."""

from .errors import (DataError, MeshTexError, ParseError, SolveError,
                     ValidationError)
from .field import (RoSyField, detect_singularities, random_field,
                    smoothness_energy, solve_orientation_field)
from .frames import (TangentFrame, rosy_align, rosy_distance,
                     unfold_frame_across_edge)
from .geodesic import (FaceSampleIndex, GeodesicPatch,
                       extract_geodesic_patch, trace_texture_coordinate)
from .mesh import TriMesh, euler_characteristic
from .meshio import load_mesh
from .patches import SignalPatch, batch_patches, sample_signal_patch
from .sampling import SurfaceSample, sample_surface

__version__ = "0.1.0"

__all__ = [
    "DataError", "FaceSampleIndex", "GeodesicPatch", "MeshTexError",
    "ParseError", "RoSyField", "SignalPatch", "SolveError",
    "SurfaceSample", "TangentFrame", "TriMesh", "ValidationError",
    "batch_patches", "detect_singularities", "euler_characteristic",
    "extract_geodesic_patch", "load_mesh", "random_field", "rosy_align",
    "rosy_distance", "sample_signal_patch", "sample_surface",
    "smoothness_energy", "solve_orientation_field",
    "trace_texture_coordinate", "unfold_frame_across_edge",
]
