"""Figure generation for the PAM laboratory's CSV outputs."""

from pamfigures.render import (
    SCHEMAS, FigureError, FigureRequest, RenderResult, render,
)

__version__ = "0.1.0"

__all__ = [
    "SCHEMAS", "FigureError", "FigureRequest", "RenderResult", "render",
    "__version__",
]
