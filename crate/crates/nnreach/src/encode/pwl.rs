//! Piecewise-linear sandwiches around s-shaped activations.
//!
//! Over each piece the lower and upper lines share the chord's slope. Where
//! the curve is convex the chord itself is the upper line and the parallel
//! tangent the lower one; in a concave region the roles swap; a piece that
//! straddles the inflection point takes both offsets from interior
//! tangencies. Tangency points come in closed form from `f′(x) = m`, and the
//! final intercepts are padded outward so the bracket survives rounding.

use crate::interval::Interval;
use crate::neural::Activation;

/// Outward padding added to both intercepts, absorbing the few-ulp rounding
/// of line evaluation against the library activation.
const INTERCEPT_PAD: f64 = 1e-12;

/// A line `x ↦ slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    /// Gradient.
    pub slope: f64,
    /// Value at `x = 0`.
    pub intercept: f64,
}

impl Line {
    /// Value at `x`.
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// A bracket `lower(x) ≤ activation(x) ≤ upper(x)` over `domain`, built from
/// contiguous pieces with uniform breakpoints.
#[derive(Clone, Debug)]
pub struct PwlSandwich {
    /// Piece edges, ascending, `pieces + 1` entries spanning the domain.
    pub breakpoints: Vec<f64>,
    /// Lower line per piece.
    pub lower: Vec<Line>,
    /// Upper line per piece.
    pub upper: Vec<Line>,
    /// The bracketed activation.
    pub activation: Activation,
    /// Domain the bracket is valid on.
    pub domain: Interval,
    /// Largest vertical gap `upper − lower` over the domain. The two lines
    /// of a piece are parallel, so the supremum over any dense grid is
    /// realised exactly by the widest per-piece intercept difference.
    pub max_gap: f64,
}

impl PwlSandwich {
    /// Piece count.
    pub fn n_pieces(&self) -> usize {
        self.lower.len()
    }

    /// Index of the piece covering `x`, clamping outside the domain.
    pub fn piece_of(&self, x: f64) -> usize {
        let last = self.n_pieces() - 1;
        match self
            .breakpoints
            .binary_search_by(|edge| edge.partial_cmp(&x).expect("finite breakpoints"))
        {
            Ok(i) => i.min(last),
            Err(0) => 0,
            Err(i) => (i - 1).min(last),
        }
    }

    /// Lower bracket value at `x`.
    pub fn lower_at(&self, x: f64) -> f64 {
        self.lower[self.piece_of(x)].at(x)
    }

    /// Upper bracket value at `x`.
    pub fn upper_at(&self, x: f64) -> f64 {
        self.upper[self.piece_of(x)].at(x)
    }
}

/// Interior solutions of `f′(x) = m`, the candidate tangency points for a
/// chord of slope `m`.
fn slope_preimages(activation: Activation, m: f64) -> Vec<f64> {
    match activation {
        Activation::Sigmoid => {
            // σ′ = s(1−s) = m  ⇒  s = (1 ± √(1−4m))/2,  x = ln(s/(1−s)).
            if m <= 0.0 {
                return Vec::new();
            }
            let root = (1.0 - 4.0 * m).max(0.0).sqrt();
            [(1.0 + root) / 2.0, (1.0 - root) / 2.0]
                .iter()
                .filter(|s| **s > 0.0 && **s < 1.0)
                .map(|s| (s / (1.0 - s)).ln())
                .collect()
        }
        Activation::Tanh => {
            // tanh′ = 1 − t² = m  ⇒  t = ±√(1−m),  x = atanh(t).
            if m <= 0.0 {
                return Vec::new();
            }
            let t = (1.0 - m).max(0.0).sqrt();
            [t, -t]
                .iter()
                .filter(|t| t.abs() < 1.0)
                .map(|t| t.atanh())
                .collect()
        }
        Activation::Linear => Vec::new(),
    }
}

/// Brackets `activation` between piecewise-linear bounds over `domain`,
/// splitting it into `n_pieces` equal pieces.
///
/// Each piece's lines share the chord slope; the offsets are the extreme
/// values of `f(x) − m·x` over the piece (endpoints and interior
/// tangencies), so the bracket is tight up to the outward rounding pad. A
/// degenerate zero-width domain collapses to constant lines through the
/// point value.
pub fn pwl_sandwich(activation: Activation, domain: Interval, n_pieces: usize) -> PwlSandwich {
    assert!(n_pieces >= 1, "sandwich needs at least one piece");
    let (lo, hi) = (domain.lo(), domain.hi());
    let mut breakpoints: Vec<f64> = (0..=n_pieces)
        .map(|i| lo + (hi - lo) * (i as f64 / n_pieces as f64))
        .collect();
    breakpoints[0] = lo;
    breakpoints[n_pieces] = hi;

    let mut lower = Vec::with_capacity(n_pieces);
    let mut upper = Vec::with_capacity(n_pieces);
    let mut max_gap: f64 = 0.0;
    for edge in breakpoints.windows(2) {
        let (a, b) = (edge[0], edge[1]);
        let (fa, fb) = (activation.apply(a), activation.apply(b));
        let m = if b > a { (fb - fa) / (b - a) } else { 0.0 };
        let mut off_lo = (fa - m * a).min(fb - m * b);
        let mut off_hi = (fa - m * a).max(fb - m * b);
        for x in slope_preimages(activation, m) {
            if x > a && x < b {
                let off = activation.apply(x) - m * x;
                off_lo = off_lo.min(off);
                off_hi = off_hi.max(off);
            }
        }
        lower.push(Line { slope: m, intercept: off_lo - INTERCEPT_PAD });
        upper.push(Line { slope: m, intercept: off_hi + INTERCEPT_PAD });
        max_gap = max_gap.max(off_hi - off_lo + 2.0 * INTERCEPT_PAD);
    }

    PwlSandwich { breakpoints, lower, upper, activation, domain, max_gap }
}
