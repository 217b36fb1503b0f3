"""A posteriori existence verification for the periodic 3D Navier-Stokes equations.

The package runs a Taylor-Hood / implicit Euler discretisation on the unit
torus, bounds the distance to an (uncomputed) Stokes reconstruction with
residual estimators, and evaluates a generalised Gronwall smallness
condition whose satisfaction certifies a strong solution on ``[0, T']``.
"""

__version__ = "0.1.0"
