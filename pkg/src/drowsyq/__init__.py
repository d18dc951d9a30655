"""Drowsiness estimation from session EEG with deep Q-learning.

Modules: ``sessions`` (data model and synthetic generator), ``preproc``,
``env`` (tracer environment), ``replay``, ``model``, ``trainer``,
``evaluate`` and ``cli``. The tensor library lives in ``numerics``.
"""

__version__ = "0.1.0"
