"""Forward rendering: projection to screen space and tiled compositing."""

from .forward import RenderStats, render, render_reference
from .projection import (
    ProjectedSplat,
    ProjectionResult,
    depth_sort,
    project_cloud,
    project_splat,
)

__all__ = [
    "ProjectedSplat",
    "ProjectionResult",
    "RenderStats",
    "depth_sort",
    "project_cloud",
    "project_splat",
    "render",
    "render_reference",
]
