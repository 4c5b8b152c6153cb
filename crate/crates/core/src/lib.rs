//! Regularized finite parts of divergent integrals `∫‖s‖^{2λ} ω∧ξ` over
//! normal-crossings charts.
//!
//! The crate is layered bottom-up:
//!
//! - [`expr`]: hash-consed expressions in `z_t`, `z̄_t` with Wirtinger calculus;
//! - [`forms`]: bigraded forms, singular forms `ω̃/‖s‖^{2N}` and chart data;
//! - [`quadrature`]: polar tensor rules for power/log radial singularities,
//!   locus slices and cut-off regions;
//! - [`continuation`]: `Γ(λ, τ)` via integration by parts, poles, Laurent
//!   and residue data;
//! - [`currents`]: the actions `⟨μ_j(ω), ξ⟩`, finite parts and verifiers;
//! - [`cutoff`]: the ε-side: cut-off integrals, predicted expansions, fits and
//!   the Mellin cross-check.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod continuation;
pub mod currents;
pub mod cutoff;
pub mod expr;
pub mod forms;
pub mod quadrature;

pub use expr::{Expr, C64};
