"""Koopman autoencoders with an exactly orthogonal latent map.

The package turns trajectories of conservative systems into a learned linear
latent evolution: an encoder lifts states onto a sphere in latent space, an
orthogonal matrix (the exponential of a skew-symmetric generator) advances
them, and a decoder maps back.  Because the latent map is orthogonal by
construction, long-horizon predictions cannot gain or lose latent energy, and
eigenvectors of the latent map with eigenvalue one read out conserved
quantities of the original system.

Subpackages/modules:

- ``numerics``     dense float64 kernels (pinv, expm, kron, orthogonal eig)
- ``autodiff``     reverse-mode tape over 2-D arrays and scalars
- ``orthogonal``   skew parameterization and the (Kronecker-factored) latent map
- ``systems``      benchmark Hamiltonian/soliton simulators and invariants
- ``model``        encoder/decoder/latent-map container and its loss terms
- ``baselines``    dynamic mode decomposition, with and without dictionary lifting
- ``training``     full-batch Adam loop over the loss tape
- ``evaluation``   prediction metrics, Wasserstein distance, invariant discovery
- ``cli``          batch command-line pipeline with reproducible file formats
"""

from __future__ import annotations

__version__ = "0.1.0"
