"""Post-hoc figure generation for jiqlab sweep outputs.

Reads only the documented CSV files (summary.csv, curves.csv,
convergence.csv, independence.csv) and renders convergence-vs-n, tail
overlay, bound envelope, and independence figures plus an index page.
"""

__version__ = "0.1.0"

from .render import FIGURES, InputError, render

__all__ = ["FIGURES", "InputError", "render"]
