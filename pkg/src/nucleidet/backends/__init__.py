"""Pluggable model boundary: contracts, builtin stand-ins, remote client."""

from .base import (
    CaptionBackend,
    GroundingBackend,
    GroundingQuery,
    StudentBackend,
    SynonymBackend,
)
from .builtin import (
    BlobStudent,
    OracleGrounder,
    OracleNoiseConfig,
    ScriptedCaptioner,
    StaticSynonyms,
    StudentParams,
    StudentSearchSpace,
    TemplateCaptioner,
    score_student,
    student_detect,
)
from .remote import (
    RemoteCaptioner,
    RemoteGrounder,
    RemoteStudent,
    RemoteSynonyms,
    WireClient,
)

__all__ = [
    "BlobStudent",
    "CaptionBackend",
    "GroundingBackend",
    "GroundingQuery",
    "OracleGrounder",
    "OracleNoiseConfig",
    "RemoteCaptioner",
    "RemoteGrounder",
    "RemoteStudent",
    "RemoteSynonyms",
    "ScriptedCaptioner",
    "StaticSynonyms",
    "StudentBackend",
    "StudentParams",
    "StudentSearchSpace",
    "SynonymBackend",
    "TemplateCaptioner",
    "WireClient",
    "score_student",
    "student_detect",
]
