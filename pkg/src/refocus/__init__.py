"""Refocused laser addressing for trapped-ion chains.

Submodules:

``envelope``  beam envelopes that cancel crosstalk on a lattice
``ionchain``  equilibrium positions and normal modes of a linear crystal
``gate``      phonon-mediated two-qubit gate under crosstalk
``spectral``  refocusing from tilted plane waves
``noise``     robustness to beam errors and thermal motion
``figures``   tabular datasets behind each figure panel
``cli``       command-line front end
"""

__version__ = "0.1.0"
