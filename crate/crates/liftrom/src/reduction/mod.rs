//! Model reduction: snapshots, per-variable POD bases, structure-preserving
//! Galerkin projection of polynomial and QB-DAE systems, the substituted
//! reduced-DAE form, and a POD-DEIM baseline.
//!
//! The offline/online split is enforced by construction: every reduced
//! system stores only operators whose dimensions are polynomial in the
//! reduced basis sizes, so simulating a ROM never touches an object of full
//! dimension. The single deliberate exception is [`PodReferenceRom`], which
//! evaluates the original nonlinearity in full dimension and exists as an
//! accuracy baseline, not as a deployable reduced model.
//!
//! Reduced polynomial operators are dense and stored flattened
//! ([`DenseOp`]); assembly walks the nonzeros of the sparse full-order
//! operators and never materializes a full-dimension Kronecker factor.

mod deim;
mod pod;
mod project;
mod snapshots;

pub use deim::{
    build_pod_deim_rom, build_pod_reference_rom, deim_build, nonlinear_snapshots, DeimOperator,
    PodDeimRom, PodReferenceRom,
};
pub use pod::{compute_pod_basis, compute_pod_basis_with_modes, PodBasis};
pub use project::{
    precompute_substituted_ode, project_qb_ode, project_qbdae, project_quartic, two_step_rhs,
    DenseOp,
    ReducedQbdae, ReducedQuartic, SubstitutedOde, DEFAULT_SUBSTITUTION_BUDGET,
    MAX_QUARTIC_REDUCED_DIM,
};
pub use snapshots::{collect_snapshots, SnapshotSet};
