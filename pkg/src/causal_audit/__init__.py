"""Auditing admissions-style data for a direct effect of a protected attribute.

The pipeline tests the instrumental-variable inequalities on P(D, A | S),
bounds controlled and natural direct effects, and ships an exact finite-SCM
oracle used to check every claim on random models.
"""

from .tables import (CategorySpace, ConditionalKernel, ContingencyTable3, JointDistribution,
                     PositivityError, TableError, kernel_from_table, parse_long_csv)
from .ivcore import decompose, enumerate_extreme_points, iv_slacks, realize
from .bayes import DirichletSpec, clopper_pearson, posterior_model_probability, prior_sweep
from .freq import cond_indep_test, demographic_parity_test, ml_iv_check, wrr_test
from .bounds import cde_bounds, nde_bounds_binary, nde_point

__version__ = "0.1.0"
