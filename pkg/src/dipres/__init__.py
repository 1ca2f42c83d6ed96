"""Population transfer in driven N-level systems with permanent dipoles.

Submodules
----------
system      level structure, transfer paths, regime classification
fields      field models, closed-form spectra and spectral landmarks
propagator  numerical Schroedinger propagation
dyson       interaction-picture Dyson terms and iterated field integrals
slow        quasi-static (slowly varying field) limit
fast        rapidly varying field limit and sign-independence sweeps
resonance   resonance finder, term decompositions, amplitude/sign scans
cli         scenario runner (``dipres`` command)
"""

__version__ = "0.1.0"

from .errors import DipresError
from .fields import Constant, Lobe, Sine, VectorPotentialPulse, field_from_dict
from .propagator import PropagationOptions, Trajectory, WaveState, propagate
from .system import NLevelSystem, TransferPath, make_path, new_system, shortest_path

__all__ = [
    "Constant",
    "DipresError",
    "Lobe",
    "NLevelSystem",
    "PropagationOptions",
    "Sine",
    "Trajectory",
    "TransferPath",
    "VectorPotentialPulse",
    "WaveState",
    "field_from_dict",
    "make_path",
    "new_system",
    "propagate",
    "shortest_path",
    "__version__",
]
