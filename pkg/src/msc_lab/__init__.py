"""Matrix-scaled consensus toolkit.

Modules: :mod:`graph` (topologies), :mod:`scaling` (scaling matrices),
:mod:`spectral` (scaled Laplacian analysis and gain synthesis),
:mod:`protocols` (agent dynamics), :mod:`sim` (integration and I/O),
:mod:`metrics` (trajectory verdicts), :mod:`scenarios` and :mod:`checks`
(declarative experiments) and :mod:`cli`.
"""

__version__ = "0.1.0"
