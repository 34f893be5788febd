"""Lattice simulation of divergence-form SPDEs and numerical checks of the Ito
formula for ``||u_t||_{L_p}^p``, its sup-norm and energy estimates, and the
supporting mollification and convergence lemmas.
"""

from .bounds import (
    drift_only_bound_check,
    energy_identity_check,
    inequality_suite,
    product_limit_check,
    property_suite,
    scheffe_check,
    simple_g_bound_check,
    sup_estimate_campaign,
    sup_estimate_check,
    truncation_study,
)
from .ito import (
    HORIZON,
    ItoReport,
    StoppingRule,
    convergence_study,
    ito_lhs,
    ito_residual,
    ito_rhs,
    mollified_pipeline_check,
    resolve_stopping,
)
from .lattice import (
    GridSpec,
    ScalarField,
    SeqField,
    VectorField,
    bump_test_function,
    div,
    grad,
    inner,
    lp_norm_pow,
    seq_ell2_pointwise,
)
from .mollify import MollifierKernel, make_kernel, mollify, mollify_seq
from .noise import NoisePath, TimeGrid, brownian_value, sample_noise
from .process import (
    CoefficientSpec,
    HittingTime,
    ProcessPath,
    StepProcessSpec,
    integrate,
    integrate_step_process,
    weak_form_residual,
)
from .scenario import CATALOG, ScenarioSpec, build, catalog_scenario, randomized_catalog

__version__ = "0.1.0"
