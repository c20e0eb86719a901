"""Null controllability of the heat equation with dynamic boundary conditions.

Submodules: ``geometry``, ``fields``, ``operators``, ``evolution``,
``carleman``, ``observability``, ``control``, ``semilinear``, ``checks``
and the ``cli`` batch driver. Importing the package itself stays light so
the driver can configure BLAS threads before numpy loads.
"""

__version__ = "0.1.0"
