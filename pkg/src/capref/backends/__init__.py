from .client import (  # noqa: F401
    BackendEndpoint,
    BackendError,
    BackendSession,
    CheckpointRef,
    ProtocolError,
    caption_batch,
    embed_batch,
    health_check,
    reformulate_batch,
    train,
    translate_batch,
)
