//! Asymptotic formulas for the kernel in the interior, exterior and across the cone.

mod coefficients;
mod cone;
mod formulas;
mod laplace;

pub use coefficients::{a_beta, coefficient_a, coefficient_a_large_theta, tilted_moment, CoefficientEstimate, CoefficientOptions};
pub use cone::{classify, ConeCoordinates, Region};
pub use formulas::{
    a1_coefficient, a2_coefficient, a2_freeze_point, coefficient_set, erf_eval, exterior_formula, gamma1, gamma2,
    global_formula, interior_formula, ln_one_plus_erf, one_plus_erf, A2Value, BFactor, CoefficientSet, FormulaOptions,
    GlobalValue,
};
pub use laplace::{
    g_function, h_at_zero, h_function, h_prime, laplace_h_asymptotic, laplace_h_numeric, q_ratio, sigma_of_tau,
    sigma_prime, tau_of_sigma, LaplaceProblem, LaplaceValue, REMOVABLE_THRESHOLD,
};
