"""Randomized sketching, orthogonalization and Krylov methods."""
from ._backend import BACKEND
from .dense_core import hessenberg_eig, lstsq_small, matfun_small, qr_small, real_schur, schur_reorder, sylvester_small
from .eigensolver import EigReport, SpectrumTarget, rayleigh_ritz, rira_cycle, rks_cycle, solve_eigs
from .errors import RandKrylovError
from .krylov import (
    KrylovDecomposition,
    LinearOperator,
    RandArnoldiDecomp,
    aslinearoperator,
    arnoldi,
    krylov_to_rand_arnoldi,
    rand_arnoldi,
    truncated_arnoldi,
    whitened_arnoldi,
)
from .linear_solvers import SolveReport, fom_baseline, gmres_baseline, rfom, rgmres
from .matrix_equations import SylvesterInstance, sketched_sylvester, sylvester_residual
from .matrix_functions import FunctionSpec, MatFunTask, fab
from .rand_qr import block_rgs, cgs, rand_cholesky_qr, rgs, rhqr, rhqr_apply_q, whiten, whitened_apply
from .sketching import SketchOperator, fwht, make_sketch, recommend_dim, wrap_psi

__version__ = "0.1.0"
