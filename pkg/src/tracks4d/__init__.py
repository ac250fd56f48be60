"""Dense 4D track storage, encoding, querying, and evaluation."""

from .archive import (ClipArchive, FrameData, read_archive, storage_estimate,
                      write_archive)
from .barymap import BaryMap
from .camera import (CameraParams, DepthMap, FrameId, PointMap,
                     change_reference, project, unproject, unproject_map)
from .fit import FaceAccel, brute_force_fit, encode_frame, fit_pixel
from .mesh import AnimatedMesh, BaryCoord, SceneUnion, eval_point, eval_track, union_faces
from .raster import rasterize
from .scene import SceneSpec, compose_scene, generate_clip
from .trajectory import CameraMotionSpec, make_rig, sample_trajectory

__version__ = "0.1.0"
