"""SVG figures rendered from swing-trial run logs.

Reads the CSV/JSON files a trial or sweep writes and produces static,
deterministic vector figures: estimate convergence, planned mass paths in
the x-z plane, endpoint tracking, and the sweep success table.
"""

__version__ = "0.1.0"
