"""Simulation and optimization toolkit for transient-state gradient-spoiled MR sequences.

Subpackages cover the full workflow: Cartesian Bloch stepping and an
isochromat-ensemble reference simulator (`bloch`), configuration-state
simulators both conventional and with sub-stepped RF excitation (`epg`,
`epgbloch`), forward-mode derivative propagation (`autodiff`), parameter
dictionaries with matched-filter search (`dictionary`), GRU surrogate
inference against a binary weight format (`surrogate`), and CRLB-based
flip-angle train design by differential evolution (`seqopt`).  The `epgforge`
command-line tool exposes every workflow; the demos/ directory of the source
tree walks through each capability.
"""

from . import autodiff, bloch, dictionary, dual, epg, epgbloch, seqopt, sequence, surrogate
from .autodiff import SignalWithGrad, finite_diff_grad, simulate_with_grad
from .bloch import bloch_step, build_rotation, simulate_isochromats
from .dictionary import (Dictionary, MatchResult, ParamGrid, build_grid,
                         generate_dictionary, load_dictionary, match_signal,
                         save_dictionary)
from .dual import Dual2
from .epg import (EpgState, SliceProfile, grad_shift, relax_recover, rf_rotate,
                  simulate_epg_conventional, sta_slice_profile)
from .epgbloch import EpgBlochConfig, fit_dictionary_voxel, lift_operator, simulate_epg_bloch
from .seqopt import (CrlbObjective, DeConfig, FisherInfo, crlb_trace,
                     differential_evolution, fisher_matrix, optimize_de)
from .sequence import (FlipTrainSpec, RfPulse, SequenceParams, SliceGrid,
                       TissueParams, estimate_cost, generate_flip_train,
                       load_sequence_config, make_gaussian_pulse, make_hard_pulse,
                       sample_training_sequence)
from .surrogate import (GruLayerWeights, GruNetwork, SurrogateInput, count_parameters,
                        evaluate_nrmse, export_training_set, gru_cell, gru_forward,
                        load_weights, read_dataset, save_weights)

__version__ = "0.1.0"
