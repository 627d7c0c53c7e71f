"""Static figures from projlab CSV outputs.

Reads only the documented CSV schemas and never recomputes statistics; the
numerical truth lives in the CSVs.  Four figure kinds: exceedance curves,
functional sweep lines, (d, x) heatmaps, and alignment bars.
"""

from .render import FigureSpec, SchemaError, render

__version__ = "0.1.0"
