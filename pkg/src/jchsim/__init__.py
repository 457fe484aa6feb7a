"""Jaynes-Cummings-Hubbard simulator for V-type three-level ions.

Builds the JCHv Hamiltonian on a linear ion crystal with two radial
local-phonon species, derives effective spin-1/2 XXZ and spin-1
Heisenberg-like models by second-order superexchange perturbation
theory, and verifies the mapping by exact time evolution.
"""

__version__ = "0.1.0"
