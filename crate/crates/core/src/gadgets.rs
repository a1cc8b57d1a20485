//! Constructions and machine verification for the hardness reductions
//! and tractability witnesses behind the dichotomy:
//!
//! * finite duals for directed-path queries, with bounded exhaustive
//!   validation ([`dual`]);
//! * the max-cut reduction against a finite acyclic dual ([`maxcut`]);
//! * the ψ-gadget family, the witness structure, and their optimum /
//!   alternation checks ([`psi`]);
//! * the 1-in-3-SAT pipeline gluing ψ-gadgets into instances ([`oit`]);
//! * penalty flattening of crisp sub-gadgets into bag databases
//!   ([`flatten`]);
//! * the self-join variation lift between resilience instances ([`lift`]);
//! * the majority/minority tournament case analysis witnessing
//!   tractability of the 2-cycle query ([`tournament`]).

use alloc::format;
use alloc::string::String;
use core::fmt;

pub mod dual;
pub mod flatten;
pub mod lift;
pub mod maxcut;
pub mod oit;
pub mod psi;
pub mod tournament;

pub use dual::{
    builtin_dual_for_path, path_query, user_dual, validate_dual, DualCandidate, DualProvenance,
    DualReport,
};
pub use flatten::{flatten, CrispInstance, ReductionArtifact, SubGadgetOccurrence};
pub use lift::self_join_lift;
pub use oit::{oit_reduction, OitClause, OitReduction, OitSoundness};
pub use psi::{
    build_psi_gadgets, build_witness_structure, verify_gadget_optima, GadgetCheck,
    GadgetReport, PsiExpr, PsiGadgets, WitnessStructureA,
};
pub use maxcut::{maxcut_maps, maxcut_min_uncut, maxcut_reduction, MaxcutMaps, MaxcutReduction};
pub use tournament::{
    edge_case_table, tournament_polymorphism_check, EdgeType, EdgeTypeCase, PolymorphismReport,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GadgetError {
    Input(String),
    Internal(String),
}

impl fmt::Display for GadgetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GadgetError::Input(m) => write!(f, "input error: {m}"),
            GadgetError::Internal(m) => write!(f, "internal consistency failure: {m}"),
        }
    }
}

impl From<crate::structure::StructureError> for GadgetError {
    fn from(e: crate::structure::StructureError) -> GadgetError {
        GadgetError::Input(format!("{e}"))
    }
}

impl From<crate::query::QueryError> for GadgetError {
    fn from(e: crate::query::QueryError) -> GadgetError {
        GadgetError::Input(format!("{e}"))
    }
}

impl From<crate::vcsp::VcspError> for GadgetError {
    fn from(e: crate::vcsp::VcspError) -> GadgetError {
        GadgetError::Input(format!("{e}"))
    }
}

impl From<crate::resilience::ResilienceError> for GadgetError {
    fn from(e: crate::resilience::ResilienceError) -> GadgetError {
        GadgetError::Input(format!("{e}"))
    }
}
