"""Compositional visual grounding toolkit.

Builds nested referring-expression training data from scene graphs,
decomposes free-form expressions into granularity levels, renders and
parses the grounded token protocol, and drives coarse-to-fine inference
against a pluggable model backend.
"""

from __future__ import annotations

from .composer import (
    BuildReport,
    BuildResult,
    Expression,
    HTTPTextGenerator,
    NestedInstance,
    PredicateChain,
    TextGenerator,
    assign_level,
    build_instances,
    compose_expression,
    find_chains,
    identify_head,
    instance_from_record,
    instance_to_record,
    render_chain_text,
)
from .decomposer import (
    DecompEntry,
    DecompositionResult,
    Span,
    decompose,
    decomposition_from_record,
    decomposition_to_record,
    extract_noun_phrases,
    filter_referential,
    ingest_bundle_batch,
    make_bundle,
    parse_bundle_ingest,
    span_head,
)
from .errors import (
    BackendError,
    BoxOutOfBoundsError,
    EmptyCorpusError,
    GeneratorUnavailableError,
    HallucinationError,
    IncompleteInstanceError,
    InconsistentParseError,
    InvalidLocPairError,
    MalformedRecordError,
    ParseFormatError,
    ToolkitError,
    UnresolvableHeadError,
)
from .evaluator import (
    EvalRecord,
    Metrics,
    corpus_stats,
    iou,
    metrics_to_json,
    metrics_to_table,
    record_from_json,
    score_grounding,
    score_multichoice,
)
from .parses import (
    ConstituencyTree,
    DepGraph,
    DepToken,
    ParseBundle,
    TreeNode,
    read_bracketed,
    read_bracketed_lines,
    read_conllu,
    write_bracketed,
    write_conllu,
)
from .progressive import (
    BackendRequest,
    BatchReport,
    BatchResult,
    DecodingParams,
    GroundingOutcome,
    GroundTask,
    HTTPBackend,
    LevelTrace,
    MockBackend,
    ModelBackend,
    RetryPolicy,
    ground,
    ground_batch,
    outcome_to_record,
    trace_to_record,
)
from .protocol import (
    GroundedSequence,
    GroundedSpan,
    LocToken,
    ParsedResponse,
    TrainingSample,
    decode_loc,
    encode_bbox,
    parse_response,
    render_level_samples,
    render_prompt,
    render_sequence,
    render_span,
    render_training_sample,
    sample_to_record,
    tokenize_sequence,
)
from .scene_graph import (
    BBox,
    Entity,
    IngestResult,
    Predicate,
    RegionDescription,
    SceneGraph,
    ValidationReport,
    Violation,
    ingest_scene_graphs,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BackendError",
    "BackendRequest",
    "BatchReport",
    "BatchResult",
    "BoxOutOfBoundsError",
    "BuildReport",
    "BuildResult",
    "ConstituencyTree",
    "DecodingParams",
    "DecompEntry",
    "DecompositionResult",
    "DepGraph",
    "DepToken",
    "EmptyCorpusError",
    "Entity",
    "EvalRecord",
    "Expression",
    "GeneratorUnavailableError",
    "GroundTask",
    "GroundedSequence",
    "GroundedSpan",
    "GroundingOutcome",
    "HTTPBackend",
    "HTTPTextGenerator",
    "HallucinationError",
    "IncompleteInstanceError",
    "InconsistentParseError",
    "IngestResult",
    "InvalidLocPairError",
    "LevelTrace",
    "LocToken",
    "MalformedRecordError",
    "Metrics",
    "MockBackend",
    "ModelBackend",
    "NestedInstance",
    "ParseBundle",
    "ParseFormatError",
    "ParsedResponse",
    "Predicate",
    "PredicateChain",
    "RegionDescription",
    "RetryPolicy",
    "SceneGraph",
    "Span",
    "TextGenerator",
    "ToolkitError",
    "TrainingSample",
    "TreeNode",
    "UnresolvableHeadError",
    "ValidationReport",
    "Violation",
    "assign_level",
    "build_instances",
    "compose_expression",
    "corpus_stats",
    "decode_loc",
    "decompose",
    "decomposition_from_record",
    "decomposition_to_record",
    "encode_bbox",
    "extract_noun_phrases",
    "filter_referential",
    "find_chains",
    "ground",
    "ground_batch",
    "identify_head",
    "ingest_bundle_batch",
    "ingest_scene_graphs",
    "instance_from_record",
    "instance_to_record",
    "iou",
    "make_bundle",
    "metrics_to_json",
    "metrics_to_table",
    "outcome_to_record",
    "parse_bundle_ingest",
    "parse_response",
    "read_bracketed",
    "read_bracketed_lines",
    "read_conllu",
    "record_from_json",
    "render_chain_text",
    "render_level_samples",
    "render_prompt",
    "render_sequence",
    "render_span",
    "render_training_sample",
    "sample_to_record",
    "score_grounding",
    "score_multichoice",
    "span_head",
    "tokenize_sequence",
    "trace_to_record",
    "validate",
    "write_bracketed",
    "write_conllu",
]
