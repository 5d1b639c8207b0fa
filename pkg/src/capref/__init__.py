"""capref: caption-reformulation experiment toolkit.

Subpackages cover corpus ingestion, caption metrics, reformulation
analysis, human-evaluation statistics, model-backend clients (with a
deterministic mock suite), the cached experiment pipeline, and the
annotation service.
"""

__version__ = "0.1.0"
