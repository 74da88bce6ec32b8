"""Cut-and-replay continual learning on patch graphs.

Spectral cut-out of salient regions (maskcut), Fiedler-value assessment of
feature graphs, class-rebalanced replay memory, and an asymmetric-loss online
learner with optional feature-graph regularization — plus a synthetic
multi-label stream to run it all on.
"""

from .assess import (
    AssessmentReport,
    BoundTrialReport,
    average_fiedler,
    rank_sources,
    verify_lemma1,
    verify_theorem1,
)
from .cut import CutResult, brute_force_ncut, maskcut, ncut_bipartition, ncut_energy
from .driver import (
    RunArtifacts,
    RunConfig,
    VARIANTS,
    run_ablation,
    run_mocl,
    variant_flags,
)
from .estimators import CuterClassifier, FiedlerScorer, MaskCutLocalizer
from .exceptions import (
    ConfigurationError,
    CuterError,
    EndOfTask,
    FileFormatError,
)
from .fileio import (
    dump_stream,
    read_checkpoint,
    read_feature_map,
    write_checkpoint,
    write_feature_map,
)
from .graph import (
    FeatureMap,
    KernelSpec,
    PatchGraph,
    build_adjacency,
    cheeger_constant_bruteforce,
    fiedler_value,
    fiedler_vector,
    laplacian,
    normalized_laplacian,
)
from .metrics import ap50, average_precision, box_iou, map_cf1_of1
from .model import (
    AsymLossParams,
    ModelParams,
    RegularizerSpec,
    asl_loss,
    encode,
    gradient_check,
    init_params,
    loss_and_gradients,
    predict,
    sgd_step,
)
from .replay import (
    MemoryBuffer,
    MemoryItem,
    SelectionPolicy,
    WholeSampleItem,
    buffer_insert,
    sample_replay_batch,
    select_candidates,
    vanilla_reservoir_insert,
)
from .stream import (
    StreamConfig,
    StreamSample,
    generate_schedule,
    next_batch,
    open_stream,
    oracle_view,
    sample_pool,
)

__version__ = "0.1.0"

__all__ = [
    "AssessmentReport",
    "AsymLossParams",
    "BoundTrialReport",
    "ConfigurationError",
    "CuterClassifier",
    "CuterError",
    "CutResult",
    "EndOfTask",
    "FeatureMap",
    "FiedlerScorer",
    "FileFormatError",
    "KernelSpec",
    "MaskCutLocalizer",
    "MemoryBuffer",
    "MemoryItem",
    "ModelParams",
    "PatchGraph",
    "RegularizerSpec",
    "RunArtifacts",
    "RunConfig",
    "SelectionPolicy",
    "StreamConfig",
    "StreamSample",
    "VARIANTS",
    "WholeSampleItem",
    "ap50",
    "asl_loss",
    "average_fiedler",
    "average_precision",
    "box_iou",
    "brute_force_ncut",
    "buffer_insert",
    "build_adjacency",
    "cheeger_constant_bruteforce",
    "dump_stream",
    "encode",
    "fiedler_value",
    "fiedler_vector",
    "generate_schedule",
    "gradient_check",
    "init_params",
    "laplacian",
    "loss_and_gradients",
    "map_cf1_of1",
    "maskcut",
    "ncut_bipartition",
    "ncut_energy",
    "next_batch",
    "normalized_laplacian",
    "open_stream",
    "oracle_view",
    "predict",
    "rank_sources",
    "read_checkpoint",
    "read_feature_map",
    "run_ablation",
    "run_mocl",
    "sample_pool",
    "sample_replay_batch",
    "select_candidates",
    "sgd_step",
    "vanilla_reservoir_insert",
    "variant_flags",
    "verify_lemma1",
    "verify_theorem1",
    "write_checkpoint",
    "write_feature_map",
]
