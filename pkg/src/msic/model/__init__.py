"""Health-state inference, event decoders and report generators."""
from .batch import VisitBatch, WordCodec
from .core import MSIC, CorpusStats
from .events import (
    EventDecoders,
    SamplingStrategy,
    predict_medications,
    predict_next_diagnoses,
    predict_next_symptoms,
    sample_event_set,
)
from .reports import (
    DRAFT_PROMPTS,
    POLISH_PROMPTS,
    PromptSet,
    ReportGenerator,
    decode_paragraph,
    draft_encodings,
    draft_reports,
    encode_paragraph,
    polish_reports,
)
from .state import (
    StateInference,
    compose_health_state,
    encode_visit_history,
    posterior_params,
    prior_params,
)

__all__ = [
    "DRAFT_PROMPTS", "MSIC", "POLISH_PROMPTS", "CorpusStats", "EventDecoders", "PromptSet",
    "ReportGenerator", "SamplingStrategy", "StateInference", "VisitBatch", "WordCodec",
    "compose_health_state", "decode_paragraph", "draft_encodings", "draft_reports",
    "encode_paragraph", "encode_visit_history", "polish_reports", "posterior_params",
    "predict_medications", "predict_next_diagnoses", "predict_next_symptoms", "prior_params",
    "sample_event_set",
]
