"""Figure regeneration from the experiment CSV datasets.

One renderer per figure family (fig2 convergence, fig3 gradient-step
curves, fig45 payload bar charts, fig67 adaptation curves), plus header
validation against the documented CSV schemas. Rendering is
deterministic: same CSV in, same image bytes out.
"""

from .schema import ERROR, OK, SCHEMAS, WARNING, validate_schema

__version__ = "0.1.0"

__all__ = ["SCHEMAS", "validate_schema", "OK", "WARNING", "ERROR", "__version__"]
