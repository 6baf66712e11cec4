"""Geometry-aware scaffolding for reference-based multiview inpainting.

Depth-map meshing, shadow volumes, a software rasterizer, cue assembly,
confidence-hierarchy fusion, view scheduling and training-data synthesis.
The diffusion denoiser and the scene-geometry estimator are pluggable.
"""

from mvinpaint.camera import (
    AutoregressiveSet,
    Camera,
    DepthMap,
    SceneGraph,
    View,
    build_scene_graph,
    euler_zyx,
    project,
    rotation_zyx,
    unproject,
    view_distance,
)
from mvinpaint.meshing import DepthMesh, ShadowMesh, build_mesh, build_shadow_mesh
from mvinpaint.raster import RenderOutput, normalize_inverse_depth, render_mesh, render_shadow
from mvinpaint.cues import ConfidenceTriple, CueSet, assemble_cues, gt_confidence, select_hint
from mvinpaint.fusion import FusionBundle, FusionResult, binarize_confidence, fuse
from mvinpaint.scheduler import (
    InpaintPlan,
    build_plan,
    distance_matrix,
    select_wide_baseline,
    update_after_inpaint,
)

__version__ = "0.1.0"
