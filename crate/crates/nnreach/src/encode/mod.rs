//! Standalone exporters for networks outside the flowpipe engine: a big-M
//! mixed-integer encoding over piecewise-linear activation sandwiches, and
//! real-arithmetic formula text — a direct form with an explicit `exp`
//! symbol, plus an exponential-free polynomial rewrite for single-hidden-
//! layer networks.
//!
//! Everything here is pure text generation over the in-memory network; no
//! solver is invoked or bundled. LP output follows the CPLEX textual dialect
//! (the most widely parsed one) and is re-read through the bundled reader as
//! a self-check before it leaves this crate.

mod formula;
mod lp;
mod milp;
mod pwl;

pub use formula::{
    assertion_residuals, exp_free_valuation, export_formula, formula_rewrite, phi0_valuation,
    FormulaEvalError, FormulaForm, FormulaRewrite, OutputPredicate,
};
pub use lp::{parse_lp, LpBound, LpFile, LpParseError, LpRow, LpSense};
pub use milp::{export_milp, milp_output_hull};
pub use pwl::{pwl_sandwich, Line, PwlSandwich};

use thiserror::Error;

/// Failure to encode a network as LP or formula text.
#[derive(Debug, Error)]
pub enum EncodeError {
    /// The activation has no encoding in the requested target (for example a
    /// `linear` hidden layer in the MILP, or `tanh` in the sigmoid-specific
    /// formula forms).
    #[error("layer {layer}: activation `{activation}` is not encodable here")]
    UnsupportedActivation {
        /// 1-based layer index.
        layer: usize,
        /// Offending activation name.
        activation: String,
    },
    /// The exponential-free rewrite is defined for exactly one hidden layer.
    #[error("the exp-free form needs exactly one hidden layer, this network has {hidden}")]
    ExpFreeNeedsSingleHiddenLayer {
        /// Hidden-layer count of the offending network.
        hidden: usize,
    },
    /// A weight set whose decimal forms do not admit a workable common
    /// denominator: an entry with too many decimal places, or a denominator
    /// product that overflows the integer carrier.
    #[error("weight {weight} blocks the decimal-fraction rewrite: {detail}")]
    NonRationalWeightGuard {
        /// The weight that failed to convert.
        weight: f64,
        /// What went wrong.
        detail: String,
    },
    /// Input box arity differs from the network's input arity.
    #[error("input box has {found} intervals, the network reads {expected}")]
    BoxArityMismatch {
        /// Network input arity.
        expected: usize,
        /// Supplied interval count.
        found: usize,
    },
    /// A predicate targets an output index the network does not have.
    #[error("predicate targets output {output}, the network has {outputs}")]
    PredicateOutput {
        /// 0-based requested output.
        output: usize,
        /// Network output arity.
        outputs: usize,
    },
    /// The all-assignments audit would enumerate more cases than is sane.
    #[error("brute-force audit over {assignments} binary assignments is too large")]
    EnumerationTooLarge {
        /// Piece-choice combinations the request implies.
        assignments: u128,
    },
    /// Emitted LP text failed its own parse-back check. Indicates a bug in
    /// the emitter, never a property of the input network.
    #[error("emitted LP failed self-parse: {0}")]
    LpSelfCheck(String),
}
