"""Gaussian mixtures fitted by closed-form maximum mean discrepancy in a projected coefficient space."""

from .basis import BasisSpec, CoefficientMatrix, WeightedGraph, gram, laplacian_eigenbasis, project, reconstruct, unvech, vech
from .datagen import SyntheticSpec, generate
from .em import EmConfig, em_fit, projected_loglik
from .kernels import GaussianComponent, KernelSpec, cross_matrix, gram_matrix
from .metrics import adjusted_rand_index, elbow_scan, match_components, median_bandwidth
from .mixture import MixtureState, hard_labels, responsibilities, sample
from .objective import mmd2, mmd2_grad
from .optimizer import FitConfig, FitError, FitReport, fit, kmeanspp_init
from .qp import kkt_residual, solve_simplex_qp
from .temporal import TemporalMixture, TemporalSeries, fit_temporal, group_posteriors, group_tv, integrated_loss

__version__ = "0.1.0"
