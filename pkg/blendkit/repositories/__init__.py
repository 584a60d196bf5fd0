from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.repositories.cache_repo import TeacherCache, TeacherCacheRepository
from blendkit.repositories.checkpoint_repo import CheckpointRepository
from blendkit.repositories.metrics_repo import MetricsRepository

__all__ = [
    "ArtifactRepository",
    "CheckpointRepository",
    "MetricsRepository",
    "TeacherCache",
    "TeacherCacheRepository",
]
