"""Bloch-periodic FEM eigensolvers for 2D photonic-crystal unit cells.

Modules
-------
mesh        periodic quad meshes, refinement, prolongation
assembly    Bloch-shifted stiffness and weighted mass matrices (TM / TE)
linalg      Hermitian sparse wrappers, factorization, Rayleigh quotients,
            dual-norm residuals
dispersion  permittivity models and their rational-function realizations
eigeniter   inverse power iteration (with/without Rayleigh scaling), Arnoldi
companion   linearized extended eigenproblem for rational permittivities
newton      bordered Newton iteration for the nonlinear eigenproblem
driver      run configs, refinement schedules, trace CSV output, k-sweeps
"""

__version__ = "0.1.0"
