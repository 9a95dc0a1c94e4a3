//! Coefficient Diagram Method (CDM) control design and its squared-polynomial
//! extension for analytical LQ weight selection.
//!
//! Polynomials are stored in ascending powers of `s`. Exact coefficient
//! algebra (convolution, stability indices, target synthesis, gain systems)
//! is generic over [`scalar::Scalar`], so it also runs over
//! [`num_rational::BigRational`]; root finding, Riccati solves and
//! simulation need [`scalar::Real`] (`f32` or `f64`).

// `!(x <= limit)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdm;
pub mod linalg;
pub mod lqr;
pub mod plant;
pub mod poly;
pub mod scalar;
pub mod scdm;
pub mod sim;
pub mod statespace;
pub mod synthesis;
pub mod text;

pub use cdm::{
    check_stability, coefficient_diagram, stability_indices, standard_gammas, synth_target, StabilityProfile,
};
pub use lqr::{char_poly, hamiltonian, solve_care, solve_hamiltonian, verify_det_identity, LqDesign};
pub use plant::{corpus_load, perturb, realize, PlantTF};
pub use poly::Polynomial;
pub use scdm::{assemble_q, recover_weights, square_poly, square_root_poly, HoverFormulation, SquaredPolynomial};
pub use sim::{robustness_sweep, simulate, SignalSpec, SimTrace};
pub use statespace::StateSpace;
pub use synthesis::{build_gain_system, close_loop, solve_gains, ControllerABF, GainStructure};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;

pub type Poly = Polynomial<f64>;
pub type Poly32 = Polynomial<f32>;
pub type ExactPoly = Polynomial<Rational>;
pub type SquaredPoly = SquaredPolynomial<f64>;
pub type ExactSquaredPoly = SquaredPolynomial<Rational>;
pub type Plant = PlantTF<f64>;
pub type ExactPlant = PlantTF<Rational>;
pub type Controller = ControllerABF<f64>;
pub type System = StateSpace<f64>;
pub type Design = LqDesign<f64>;
pub type Trace = SimTrace<f64>;
