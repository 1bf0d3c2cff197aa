"""Explicit constants and inequalities, each returned with its assumption checklist."""

from .hessian import gaussian_compact_band, hessian_band, score_sup_bound
from .logsobolev import (convolution_constant, ls2_bound, lsi_flow, lsi_kl_bias, lsi_proposition_bounds,
                         ou_entropy_bound, scale_constant, translate_constant)
from .lyapunov import (conditional_rescale, lyapunov_poincare, perturbed_lyapunov,
                       quantitative_convex_linear_growth, strict_convex_bound)
from .poincare import METHODS, best_conditional_poincare, conditional_poincare, direct_lambda_min
from .report import Assumption, BoundReport, HessianBand, reports_to_csv
from .wellposed import gaussian_compact_structure, law_hessian_band, safe_profile, wellposedness_report

__all__ = [
    "Assumption", "BoundReport", "HessianBand", "METHODS", "best_conditional_poincare",
    "conditional_poincare", "conditional_rescale", "convolution_constant", "direct_lambda_min",
    "gaussian_compact_band", "gaussian_compact_structure", "hessian_band", "law_hessian_band",
    "ls2_bound", "lsi_flow", "lsi_kl_bias", "lsi_proposition_bounds", "lyapunov_poincare",
    "ou_entropy_bound", "perturbed_lyapunov", "quantitative_convex_linear_growth", "reports_to_csv",
    "safe_profile", "scale_constant", "score_sup_bound", "strict_convex_bound", "translate_constant",
    "wellposedness_report",
]
