"""Figure generation for scoreflow result files (CSV/JSON interfaces only)."""

from .figures import (
    RESULTS_COLUMNS,
    ConvergenceReport,
    PlotSpec,
    SeriesFit,
    plot_convergence,
    plot_density_panels,
    read_results_csv,
)

__version__ = "0.1.0"
