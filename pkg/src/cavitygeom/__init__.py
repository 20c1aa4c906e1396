"""Programmable spin-exchange arrays: drive synthesis, Wigner simulation and geometry recovery."""

from .config import ExperimentConfig, preset
from .correlations import CorrelationMatrix, bipartite_scan, corr, cxx, distance_profile, structure_factor
from .geometry import embed, fit_distances, infer_couplings, mds_embed, monna_block_score, reconstruct_bulk
from .lattice import CouplingProfile, LatticeConfig, TreeCouplingSpec, monna_map, tree_profile, two_adic_norm
from .pipeline import compare_to_model, run_pipeline
from .spinwave import (
    bloch_propagator,
    exchange_coupling_from_cavity,
    predict_correlations,
    structure_factor_growth,
    structure_factor_one_period,
)
from .twa import NoiseSpec, evolve, measure, run_ensemble, sample_initial
from .waveform import dispersion, extract_couplings, synthesize_continuous, synthesize_pulsed

__version__ = "0.1.0"
