from .plotting import (
    DELTA_FLOOR,
    FigureSpec,
    MissingColumns,
    load_rows,
    plot_minimal,
    plot_tradeoff,
    render,
)

__all__ = [
    "DELTA_FLOOR",
    "FigureSpec",
    "MissingColumns",
    "load_rows",
    "plot_minimal",
    "plot_tradeoff",
    "render",
]
