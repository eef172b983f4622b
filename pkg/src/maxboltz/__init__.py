"""Monte Carlo and spectral solvers for the spatially homogeneous Boltzmann
equation with Maxwellian molecules, plus numerical certificates for the
moment, truncation and uniform-integrability estimates."""

__version__ = "0.1.0"
