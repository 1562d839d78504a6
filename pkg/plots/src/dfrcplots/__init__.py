"""Batch figure rendering for radar-communication sweep CSVs."""

from .render import FIGURES, FigureSpec, RenderError, figure_spec, render

__all__ = ["FIGURES", "FigureSpec", "RenderError", "figure_spec", "render"]

__version__ = "0.1.0"
