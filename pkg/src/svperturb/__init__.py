"""Singular-value perturbation toolkit.

Core objects are plain numpy arrays; the submodules group the functionality:

* ``linalg``      - SVD, symmetric eigendecomposition, norms, condition number
* ``perturb``     - the identity-shift family M(rho) = M0 + rho*Id
* ``activations`` - diagonal activation masks and the deterministic hard bounds
* ``ensembles``   - scaled random-matrix experiments and high-probability bounds
* ``cpanet``      - piecewise-affine networks, local linearization, Q spectra
* ``cli``         - command-line experiment runner
"""

__version__ = "0.1.0"


class HypothesisError(ValueError):
    """A theorem hypothesis required by the requested computation is violated."""


class NumericalError(RuntimeError):
    """An internal numerical self-check failed or an algorithm did not converge."""
