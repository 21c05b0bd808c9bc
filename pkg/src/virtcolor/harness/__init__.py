"""Instance generators, configuration, the end-to-end driver and the CLI."""

from .config import RunConfig
from .generators import KINDS, generate_instance
from .pipeline import RunMetrics, color_embedding, run_pipeline, verify_run

__all__ = ["KINDS", "RunConfig", "RunMetrics", "color_embedding", "generate_instance",
           "run_pipeline", "verify_run"]
