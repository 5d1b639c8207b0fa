from .store import AnnotateError, AnnotationStore, ConflictError, NotFoundError  # noqa: F401
