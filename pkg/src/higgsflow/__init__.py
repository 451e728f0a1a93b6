"""Donaldson heat flow and stability checks for Higgs bundles on a lattice torus."""

from .bundle import (BackgroundBundle, ExampleSpec, HiggsField, MetricField, build_background,
                     catalog, constant_higgs, get_example, identity_metric, random_metric,
                     realize, verify_higgs)
from .errors import (ConditioningError, ContractViolation, DimensionError, UnsupportedExample,
                     ValidationError)
from .flow import (FlowConfig, FlowTrace, MetricSampler, classify, donaldson_functional,
                   flow_step, gradient_check, run_flow)
from .gauge import (chern_connection, degree, deviation_norm_l2, deviation_norm_sup,
                    higgs_adjoint, hs_curvature, hym_constant, mean_curvature, slope)
from .lie import (ad_perp_projection, cartan_involution, induced_endo_metric, make_group,
                  principal_ahym_certificate, reduction_residual, section_norm)
from .stability import invariant_subbundles, reconcile, verdict
from .surface import LatticeSurface, integrate, lambda_contract

__version__ = "0.1.0"
