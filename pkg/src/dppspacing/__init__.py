"""Extreme spacings of translation-invariant determinantal point processes."""

from .algebra import (cluster_cyclic, cluster_from_correlations, correlation,
                      correlations_from_clusters, cumulants_from_cluster_integrals,
                      fischer_check, truncated_pair_correlation)
from .fredholm import (conditional_kernel, discretize, fredholm_det,
                       modified_intensity_fredholm, modified_intensity_series)
from .kernels import (SpectralDensity, TranslationKernel, alpha, kernel_from_density,
                      kernel_from_spec, validate_density)
from .sampler import Configuration, sample, sampler_operator
from .spacings import (count_below, en2_bound, min_spacing_rescaled, poisson_gof, s_modify,
                       survival_vs_weibull)

__version__ = "0.1.0"
