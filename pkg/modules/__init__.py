"""
Curvature-decay toolkit

Core modules: control-function calculus, simplicial and cover geometry,
filtered matrix K-theory, Lipschitz homotopies, Lipschitz representatives
on simplicial complexes, and warped-product profiles.
"""

__version__ = "0.3.0"

from .control_calculus import (
    ControlFunction, PairingConstants, control_function_from_dict, decay_F, decay_G,
    evaluate, evaluate_grid, fk_sequence, five_lemma_pair,
)
from .simplicial import SimplicialComplex, SimplicialPoint, barycentric_subdivision, distance
from .covers import Cover, SampledSpace, lebesgue_number, lipschitz_report, nerve
from .matrix_ktheory import LatticeDirac, bott_projection, chi, index_pairing, theta
from .lipschitz_homotopy import (
    FilteredPath, boundary_map, close_projection_homotopy, conjugating_unitary,
    stabilized_projection_homotopy, stabilized_unitary_homotopy,
)
from .lipschitz_rep import SimplicialFunction, extend_barycentric, extend_over_X2, improve_representative
from .warped_geometry import (
    WarpedProfile, build_cover, construct_phi_nonnet, construct_phi_slow,
    contractibility_radius, net_check, scalar_curvature,
)

__all__ = [
    'ControlFunction',
    'PairingConstants',
    'control_function_from_dict',
    'decay_F',
    'decay_G',
    'evaluate',
    'evaluate_grid',
    'fk_sequence',
    'five_lemma_pair',
    'SimplicialComplex',
    'SimplicialPoint',
    'barycentric_subdivision',
    'distance',
    'Cover',
    'SampledSpace',
    'lebesgue_number',
    'lipschitz_report',
    'nerve',
    'LatticeDirac',
    'bott_projection',
    'chi',
    'index_pairing',
    'theta',
    'FilteredPath',
    'boundary_map',
    'close_projection_homotopy',
    'conjugating_unitary',
    'stabilized_projection_homotopy',
    'stabilized_unitary_homotopy',
    'SimplicialFunction',
    'extend_barycentric',
    'extend_over_X2',
    'improve_representative',
    'WarpedProfile',
    'build_cover',
    'construct_phi_nonnet',
    'construct_phi_slow',
    'contractibility_radius',
    'net_check',
    'scalar_curvature',
]
