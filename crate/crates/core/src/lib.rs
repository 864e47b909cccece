//! Bergman kernels, Toeplitz operators, and Whitney decompositions on
//! bounded simply connected polygonal domains.
//!
//! The crate maps a validated polygon conformally onto the unit disk
//! (Schwarz-Christoffel parameter problem plus a numerically controlled
//! inverse), evaluates the Bergman kernel and its derivatives through that
//! map, decomposes the domain into Whitney squares, and builds Toeplitz-type
//! operators whose symbols are only locally integrable — including the
//! generalized integration-by-parts form that remains meaningful when the
//! classical integral diverges. A small exact-arithmetic classifier decides
//! the boundedness regime from the integrability exponent p and the largest
//! interior angle factor alone.

pub mod bergman;
pub mod classifier;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod hexfloat;
pub mod polygons;
pub mod quadrature;
pub mod scmap;
pub mod sum;
pub mod toeplitz;

pub use bergman::{
    HJet, KernelContext, NormSandwich, disk_norm, disk_project, disk_project_truncated,
    h_jet, kernel_from_jets, project_monomial_exact, project_polynomial_exact,
    project_weighted_monomial_exact, szego_project, taylor_norm_sandwich, theta_integral,
    theta_integral_closed_form, whitney_norm,
};
pub use classifier::{
    BoundednessRegime, BoundednessVerdict, classify, classify_exact, main1_hypothesis_exact,
    projection_bounded_exact, weighted_exponent_threshold_exact,
};
pub use error::{Error, Result};
pub use experiments::{
    CornerBoundednessReport, CornerDivergenceReport, DivergenceProbe, FamilyMember,
    MapDerivativeReport, NormBudget, NormGrowthRow, NormGrowthTable, ProbeVerdict,
    ProjectionConstancy, ProjectionIdentityWitness, TestFamily, ThetaIntegralWitness,
    NORM_GROWTH_TOL, PROBE_BASE_POINT, PROBE_DEPTH, PROBE_MARGIN, corner_family,
    divergence_probe, edge_exponents, estimate_operator_norm, example_53_identity,
    example_54_theta_integral, example_e0a_divergence, example_e0b_boundedness,
    example_e1a_report, example_e1b_report, inner_integral_probe, map_derivative_probe,
    probe_radii, probe_spec, truncated_inner_constancy, weighted_inner_constancy,
    witness_exponent,
};
pub use geometry::{
    Polygon, Square, WhitneyDecomposition, WhitneySquare, whitney_decompose,
    whitney_decompose_capped,
};
pub use quadrature::QuadratureSpec;
pub use scmap::{ConformalMap, MapJet, PrevertexConfig, solve_parameter_problem};
pub use toeplitz::{
    ClassicalApplication, ClassicalOutcome, ComplexPolynomial, ConditionSampling,
    ConditionVerdict, ConditionWeight, FDecomposition, Symbol, SymbolConditionReport,
    ToeplitzApplication, apply_classical, apply_generalized, apply_partial,
    check_symbol_condition, check_symbol_condition_weighted, f_decomposition_check, hat_average,
};
