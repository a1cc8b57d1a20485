//! Penalty flattening: turn an instance with crisp atoms and
//! Opt-of-expression sub-gadgets into a plain bag database plus a
//! threshold, so that resilience solvers can decide the original
//! optimization question.
//!
//! Two penalty tiers keep the arithmetic auditable:
//!
//! * atoms inside an `Opt` sub-gadget are scaled by
//!   `M1 = u + 1 + total_soft_weight`: finishing a gadget one unit above
//!   its certified minimum already overshoots the threshold;
//! * crisp atoms (top level or inside gadgets) get
//!   `M2 = (B + 1) * M1 + u + 1` where `B` is the sum of gadget
//!   baselines: violating one costs more than any configuration that
//!   respects the crisp part can.
//!
//! The adjusted threshold is `u + B * M1`, and both tier inequalities
//! are recorded on the artifact.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::GadgetError;
use crate::structure::{BagDatabase, Signature};
use crate::vcsp::{vcsp_to_resilience, ExprAtom, Expression};

/// One `Opt(sub-expression)` occurrence: free positions bound to outer
/// variables, internals fresh per occurrence, and a certified minimum
/// cost over the intended target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubGadgetOccurrence {
    pub name: String,
    /// Outer variables bound to the sub-gadget's free positions.
    pub args: Vec<usize>,
    /// Names for the internal variables (instantiated fresh).
    pub internals: Vec<String>,
    /// Soft atoms over sub-gadget variable indices: `0..args.len()` are
    /// the free positions, then internals.
    pub soft: Vec<(String, Vec<usize>, u64)>,
    /// Crisp atoms in the same indexing.
    pub crisp: Vec<(String, Vec<usize>)>,
    /// Certified minimum cost of the sub-gadget (its baseline).
    pub baseline: u64,
}

/// An instance over outer variables: weighted soft atoms, hard crisp
/// atoms, and Opt sub-gadgets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CrispInstance {
    pub vars: Vec<String>,
    pub soft: Vec<(String, Vec<usize>, u64)>,
    pub crisp: Vec<(String, Vec<usize>)>,
    pub gadgets: Vec<SubGadgetOccurrence>,
}

impl CrispInstance {
    pub fn new() -> CrispInstance {
        CrispInstance::default()
    }

    pub fn var(&mut self, name: &str) -> usize {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            i
        } else {
            self.vars.push(name.to_string());
            self.vars.len() - 1
        }
    }

    pub fn total_soft_weight(&self) -> u64 {
        self.soft.iter().map(|(_, _, w)| *w).sum()
    }

    pub fn total_baseline(&self) -> u64 {
        self.gadgets.iter().map(|g| g.baseline).sum()
    }
}

/// Weights, threshold, and the recorded soundness inequalities of a
/// flattened instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PenaltyScheme {
    pub source_threshold: u64,
    pub total_soft_weight: u64,
    pub baseline_total: u64,
    pub m1: u64,
    pub m2: u64,
    pub threshold: u64,
    /// `M2 > threshold`: a crisp violation can never pay off.
    pub crisp_tier_exceeds_threshold: bool,
    /// `(B+1) * M1 > threshold`: a gadget overshoot can never pay off.
    pub gadget_tier_exceeds_threshold: bool,
}

/// A reduction artifact: the flattened bag database, its decision
/// threshold, and the bookkeeping to translate optima back.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionArtifact {
    pub db: BagDatabase,
    pub scheme: PenaltyScheme,
    /// Source optimum = artifact optimum - `subtract`, valid while the
    /// artifact optimum stays below `valid_below`.
    pub back_translation_subtract: u64,
    pub back_translation_valid_below: u64,
}

impl ReductionArtifact {
    pub fn threshold(&self) -> u64 {
        self.scheme.threshold
    }

    /// Translate an artifact optimum back to the source optimum, when
    /// the penalty arithmetic allows it.
    pub fn back_translate(&self, artifact_optimum: u64) -> Option<u64> {
        if artifact_optimum < self.back_translation_valid_below {
            Some(artifact_optimum - self.back_translation_subtract)
        } else {
            None
        }
    }
}

/// Flatten an instance at source threshold `u`.  The output database's
/// resilience is at most `scheme.threshold` iff the source instance has
/// an assignment of cost at most `u` with every crisp atom satisfied
/// and every gadget at its certified minimum.
pub fn flatten(
    instance: &CrispInstance,
    u: u64,
    signature: &Signature,
) -> Result<ReductionArtifact, GadgetError> {
    for g in &instance.gadgets {
        // The baselines are certificates produced by the gadget
        // verifier; insist they are present even when zero-cost gadgets
        // would not need them.
        if g.soft.is_empty() && g.baseline > 0 {
            return Err(GadgetError::Input(format!(
                "gadget {} has a positive baseline but no soft atoms",
                g.name
            )));
        }
    }
    let soft_total = instance.total_soft_weight();
    let baseline_total = instance.total_baseline();
    let m1 = u + 1 + soft_total;
    let m2 = (baseline_total + 1) * m1 + u + 1;
    let threshold = u + baseline_total * m1;
    let scheme = PenaltyScheme {
        source_threshold: u,
        total_soft_weight: soft_total,
        baseline_total,
        m1,
        m2,
        threshold,
        crisp_tier_exceeds_threshold: m2 > threshold,
        gadget_tier_exceeds_threshold: (baseline_total + 1) * m1 > threshold,
    };

    // Assemble the flattened expression.
    let mut expr = Expression::new(instance.vars.clone());
    for (sym, args, w) in &instance.soft {
        expr.push(ExprAtom::Rel(sym.clone()), args.clone(), *w);
    }
    for (sym, args) in &instance.crisp {
        expr.push(ExprAtom::Rel(sym.clone()), args.clone(), m2);
    }
    for (gi, g) in instance.gadgets.iter().enumerate() {
        let base = expr.vars.len();
        for (k, name) in g.internals.iter().enumerate() {
            expr.vars.push(format!("g{gi}_{k}_{name}"));
        }
        let map_var = |idx: usize| -> usize {
            if idx < g.args.len() {
                g.args[idx]
            } else {
                base + (idx - g.args.len())
            }
        };
        for (sym, args, w) in &g.soft {
            let mapped: Vec<usize> = args.iter().map(|&a| map_var(a)).collect();
            expr.push(ExprAtom::Rel(sym.clone()), mapped, w * m1);
        }
        for (sym, args) in &g.crisp {
            let mapped: Vec<usize> = args.iter().map(|&a| map_var(a)).collect();
            expr.push(ExprAtom::Rel(sym.clone()), mapped, m2);
        }
    }
    let db = vcsp_to_resilience(&expr, signature).map_err(GadgetError::from)?;
    Ok(ReductionArtifact {
        db,
        scheme,
        back_translation_subtract: baseline_total * m1,
        back_translation_valid_below: m2.min((baseline_total + 1) * m1),
    })
}
