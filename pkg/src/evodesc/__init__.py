"""Evolutionary optimization of per-class text descriptors for zero-shot
image classification over precomputed embeddings."""

from .archive import EmbeddingArchive, read_archive, write_archive
from .clustering import ClusterAssignment, class_representatives, default_k, kmeans
from .evolution import (
    RunLogger,
    RunState,
    initialize,
    latest_checkpoint,
    run,
    step,
    update_memory,
)
from .llm import (
    ChatProvider,
    ChatRequest,
    HttpProvider,
    RecordingProvider,
    ReplayProvider,
    ScriptedProvider,
    parse_descriptor_response,
    request_digest,
)
from .mockembed import derive_seed, fnv1a64, mock_embed
from .scoring import (
    ScoreMatrix,
    accuracy,
    class_scores,
    classify,
    evaluate_feedback,
    feedback_to_text,
    fitness,
    improved_confusion,
    render_bare,
    render_prompt,
    rendered_prompts,
    score_matrix,
)
from .textembed import (
    ArchiveTextEmbedder,
    CommandTextEmbedder,
    MockTextEmbedder,
    TextEmbedder,
    make_text_embedder,
)
from .types import (
    BARE_DESCRIPTOR,
    ConfigError,
    DataError,
    DescriptorSet,
    EvodescError,
    LabeledEmbedding,
    MemoryRecord,
    NEGATIVE,
    POSITIVE,
    ProviderError,
    ResponseParseError,
    RunConfig,
    VisualFeedback,
    bare_descriptor_set,
    validate_descriptor_set,
)

__version__ = "0.1.0"
