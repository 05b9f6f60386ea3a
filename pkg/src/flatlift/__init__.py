"""flatlift: lift flat-colored 2D images into textured 3D meshes.

The pipeline extracts structure conditions (canny edge, depth), generates
3D-illusion candidates through a conditioned image-generation backend,
selects the best proxy via visual question answering, then produces shape
and baked texture. Deterministic builtin fallbacks stand in for every
external model so everything runs offline.
"""

from .core import (
    CandidateImage,
    Caption,
    Channels,
    ConditionKind,
    ConditionMap,
    ContentHash,
    ProxyImage,
    RasterImage,
    SelectionMethod,
    TriMesh,
    content_hash,
    decode_image,
    encode_image,
)
from .conditions import (
    CannyParams,
    FlatnessReport,
    ForegroundMask,
    canny_edges,
    estimate_depth_fallback,
    flatness_report,
    foreground_mask,
    normalize_depth,
)
from .mesh import (
    BakeParams,
    InflateParams,
    MeshFormat,
    ThinnessReport,
    bake_frontal,
    inflate_silhouette,
    load_mesh,
    normalize_mesh,
    save_mesh,
    thinness_report,
)
from .select import build_vqa_question, parse_vqa_answer, realism_score, select_proxy
from .backends import BackendEndpoint, BackendRole, BackendSet, FixtureReplayBackend
from .pipeline import PipelineConfig, RunManifest, resume, run_pipeline

__version__ = "0.1.0"
