"""Non-negativity preserving iterative regularization for ill-posed linear
operator equations.

Subpackages and modules:

- operators: dense operator core, preconditioner catalog, resolvent solves
- solvers: the four iteration schemes and the solver driver
- stopping: discrepancy principles and a-priori stopping indices
- biosensor: kinetic kernel, operator assembly, phantoms, noise injection
- analysis: spectral filters, source conditions, rate fits, NNLS oracle
- cli: config-driven experiment runner (synth / solve / compare / rates)
"""

from nnireg._kernels import KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND"]
__version__ = "0.1.0"
