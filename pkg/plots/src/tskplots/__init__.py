from .render import COLUMNS, KINDS, FigureSpec, RenderError, main, read_rows, render

__all__ = [
    "COLUMNS",
    "KINDS",
    "FigureSpec",
    "RenderError",
    "main",
    "read_rows",
    "render",
]
