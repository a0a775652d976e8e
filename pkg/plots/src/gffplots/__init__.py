"""Figure suite for gffperc CSV outputs."""

from .figures import FigureSpec, ProvenanceError, SchemaError, render
from .cli import render_run

__version__ = "0.1.0"

__all__ = ["FigureSpec", "ProvenanceError", "SchemaError", "render", "render_run"]
