from .figures import (
    CSV_HEADER,
    EmptyInputError,
    FigureSpec,
    RenderResult,
    SchemaError,
    fit_slope,
    read_rows,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "CSV_HEADER",
    "EmptyInputError",
    "FigureSpec",
    "RenderResult",
    "SchemaError",
    "fit_slope",
    "read_rows",
    "render",
]
