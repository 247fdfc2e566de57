//! Validated interval arithmetic with outward rounding.
//!
//! Every operation returns an interval guaranteed to contain the exact real
//! result for all points of the inputs. Soundness is obtained by computing
//! endpoints in ordinary f64 arithmetic and then nudging them outward by a
//! fixed number of ULP steps ([`SLACK_ULPS`]); elementary functions add a
//! further [`ELEM_ULPS`] to cover libm's evaluation error. This is cruder
//! than switching rounding modes but portable and easy to audit.

use thiserror::Error;

/// ULP steps every arithmetic endpoint is nudged outward. One directed
/// rounding step costs at most half an ULP, so four is a comfortable margin.
pub const SLACK_ULPS: u32 = 4;

/// Extra ULP steps for elementary functions, covering the (unspecified but in
/// practice well under 2 ULP) error of the platform's libm.
pub const ELEM_ULPS: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("interval endpoints must be finite and ordered: [{0}, {1}]")]
    BadEndpoints(f64, f64),
    #[error("division by an interval containing zero: [{0}, {1}]")]
    DivisionByZero(f64, f64),
    #[error("tan over an interval containing a pole: [{0}, {1}]")]
    TanPole(f64, f64),
    #[error("operation overflowed the f64 range")]
    Overflow,
}

/// A closed interval `[lo, hi]` with finite endpoints, `lo <= hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

fn nudge_up(x: f64, steps: u32) -> f64 {
    let mut y = x;
    for _ in 0..steps {
        y = y.next_up();
    }
    y
}

fn nudge_down(x: f64, steps: u32) -> f64 {
    let mut y = x;
    for _ in 0..steps {
        y = y.next_down();
    }
    y
}

/// Canonical scalar versions of the supported elementary functions. All
/// modules evaluate through these so that point simulations, oracles, and
/// interval/Taylor enclosures agree on what e.g. `sigmoid` means.
pub mod scalar {
    /// Logistic function `1 / (1 + e^{-x})`, evaluated in the numerically
    /// stable branch for either sign.
    pub fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn tanh(x: f64) -> f64 {
        x.tanh()
    }
}

impl Interval {
    /// Builds an interval, rejecting NaN/infinite or misordered endpoints.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(IntervalError::BadEndpoints(lo, hi));
        }
        Ok(Interval { lo, hi })
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        assert!(x.is_finite(), "point interval from non-finite {x}");
        Interval { lo: x, hi: x }
    }

    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn radius(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Largest absolute value attained over the interval.
    pub fn abs_max(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Strict containment in the interior, used by the Picard contraction
    /// test. Degenerate candidates never count as interior.
    pub fn contains_in_interior(&self, other: &Interval) -> bool {
        self.lo < other.lo && other.hi < self.hi
    }

    /// Smallest interval containing both inputs.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Intersection; `None` is the explicit empty-set sentinel.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn split_at_midpoint(&self) -> (Interval, Interval) {
        let m = self.midpoint();
        (Interval { lo: self.lo, hi: m }, Interval { lo: m, hi: self.hi })
    }

    pub(crate) fn outward(lo: f64, hi: f64, steps: u32) -> Interval {
        let lo = nudge_down(lo, steps);
        let hi = nudge_up(hi, steps);
        assert!(
            lo.is_finite() && hi.is_finite(),
            "interval operation overflowed: [{lo}, {hi}]"
        );
        Interval { lo, hi }
    }

    pub fn add(&self, rhs: &Interval) -> Interval {
        Interval::outward(self.lo + rhs.lo, self.hi + rhs.hi, SLACK_ULPS)
    }

    pub fn sub(&self, rhs: &Interval) -> Interval {
        Interval::outward(self.lo - rhs.hi, self.hi - rhs.lo, SLACK_ULPS)
    }

    pub fn neg(&self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }

    pub fn mul(&self, rhs: &Interval) -> Interval {
        let p1 = self.lo * rhs.lo;
        let p2 = self.lo * rhs.hi;
        let p3 = self.hi * rhs.lo;
        let p4 = self.hi * rhs.hi;
        Interval::outward(p1.min(p2).min(p3).min(p4), p1.max(p2).max(p3).max(p4), SLACK_ULPS)
    }

    pub fn scale(&self, c: f64) -> Interval {
        let a = self.lo * c;
        let b = self.hi * c;
        Interval::outward(a.min(b), a.max(b), SLACK_ULPS)
    }

    pub fn div(&self, rhs: &Interval) -> Result<Interval, IntervalError> {
        if rhs.contains(0.0) {
            return Err(IntervalError::DivisionByZero(rhs.lo, rhs.hi));
        }
        let p1 = self.lo / rhs.lo;
        let p2 = self.lo / rhs.hi;
        let p3 = self.hi / rhs.lo;
        let p4 = self.hi / rhs.hi;
        Ok(Interval::outward(
            p1.min(p2).min(p3).min(p4),
            p1.max(p2).max(p3).max(p4),
            SLACK_ULPS,
        ))
    }

    /// Integer power with the sharp case split for even exponents, so that
    /// e.g. `[-1, 2]^2 = [0, 4]` rather than the naive `[-2, 4]`.
    pub fn powi(&self, n: u32) -> Interval {
        match n {
            0 => Interval { lo: 1.0, hi: 1.0 },
            1 => *self,
            _ => {
                let a = self.lo.powi(n as i32);
                let b = self.hi.powi(n as i32);
                if n % 2 == 0 && self.contains(0.0) {
                    Interval::outward(0.0, a.max(b), SLACK_ULPS)
                } else {
                    Interval::outward(a.min(b), a.max(b), SLACK_ULPS)
                }
            }
        }
    }

    fn monotone_elem(&self, f: impl Fn(f64) -> f64) -> Interval {
        Interval::outward(f(self.lo), f(self.hi), SLACK_ULPS + ELEM_ULPS)
    }

    fn clamp_to(self, range: Interval) -> Interval {
        // The true image is inside `range`, so intersecting the widened
        // enclosure with it preserves soundness.
        self.intersect(&range).expect("enclosure disjoint from codomain")
    }

    pub fn sigmoid(&self) -> Interval {
        self.monotone_elem(scalar::sigmoid)
            .clamp_to(Interval { lo: 0.0, hi: 1.0 })
    }

    pub fn tanh(&self) -> Interval {
        self.monotone_elem(f64::tanh)
            .clamp_to(Interval { lo: -1.0, hi: 1.0 })
    }

    pub fn exp(&self) -> Result<Interval, IntervalError> {
        let hi = self.hi.exp();
        if !hi.is_finite() {
            return Err(IntervalError::Overflow);
        }
        Ok(Interval::outward(self.lo.exp(), hi, SLACK_ULPS + ELEM_ULPS)
            .clamp_to(Interval { lo: 0.0, hi: f64::MAX }))
    }

    /// Cosine, widened at endpoints and snapped to ±1 wherever a critical
    /// point `k·π` falls inside the interval.
    pub fn cos(&self) -> Interval {
        let mut out = Interval::outward(
            self.lo.cos().min(self.hi.cos()),
            self.lo.cos().max(self.hi.cos()),
            SLACK_ULPS + ELEM_ULPS,
        );
        let k_min = (self.lo / std::f64::consts::PI).ceil() as i64;
        let k_max = (self.hi / std::f64::consts::PI).floor() as i64;
        for k in k_min..=k_max.min(k_min + 3) {
            if k.rem_euclid(2) == 0 {
                out.hi = 1.0;
            } else {
                out.lo = -1.0;
            }
        }
        if k_max - k_min >= 2 {
            // Two or more critical points: both extrema are attained.
            out = Interval { lo: -1.0, hi: 1.0 };
        }
        out.clamp_to(Interval { lo: -1.0, hi: 1.0 })
    }

    /// Sine via the identity `sin x = cos(x - π/2)`, with the shift widened.
    pub fn sin(&self) -> Interval {
        let half_pi = Interval::outward(
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2,
            1,
        );
        self.sub(&half_pi).cos()
    }

    /// Tangent; errors out when a pole `π/2 + k·π` may lie inside.
    pub fn tan(&self) -> Result<Interval, IntervalError> {
        let shifted_lo = self.lo / std::f64::consts::PI - 0.5;
        let shifted_hi = self.hi / std::f64::consts::PI - 0.5;
        // Conservative pole test: any integer in the (slightly widened)
        // shifted range means a pole may be present.
        let eps = 1e-12 * (1.0 + self.abs_max());
        if (shifted_lo - eps).ceil() <= (shifted_hi + eps).floor() {
            return Err(IntervalError::TanPole(self.lo, self.hi));
        }
        Ok(Interval::outward(self.lo.tan(), self.hi.tan(), SLACK_ULPS + ELEM_ULPS))
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn rand_interval(rng: &mut impl Rng, span: f64) -> Interval {
        let a: f64 = rng.random_range(-span..span);
        let b: f64 = rng.random_range(-span..span);
        iv(a.min(b), a.max(b))
    }

    #[test]
    fn construction_rejects_bad_endpoints() {
        assert!(Interval::new(f64::NAN, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
        assert!(Interval::new(2.0, 1.0).is_err());
        assert!(Interval::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn add_is_exact_up_to_slack() {
        let s = iv(1.0, 2.0).add(&iv(3.0, 4.0));
        assert!(s.contains_interval(&iv(4.0, 6.0)));
        assert!((s.lo() - 4.0).abs() < 1e-14 && (s.hi() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn even_power_of_mixed_interval() {
        let sq = iv(-1.0, 2.0).powi(2);
        assert!(sq.contains_interval(&iv(0.0, 4.0)));
        assert!(sq.lo() >= -1e-14 && sq.hi() <= 4.0 + 1e-12);
        // The naive product enclosure is also sound, just wider.
        let naive = iv(-1.0, 2.0).mul(&iv(-1.0, 2.0));
        assert!(naive.contains_interval(&sq));
    }

    #[test]
    fn sigmoid_bracket_matches_scalar_oracle() {
        let lo = scalar::sigmoid(0.9);
        let hi = scalar::sigmoid(1.5);
        let enc = iv(0.9, 1.5).sigmoid();
        assert!(enc.contains(lo) && enc.contains(hi));
        assert!((enc.lo() - 0.710949).abs() < 1e-6);
        assert!((enc.hi() - 0.817574).abs() < 1e-6);
        assert!(enc.width() < (hi - lo) + 1e-12);
    }

    #[test]
    fn cos_snaps_to_extrema_at_critical_points() {
        let c = iv(3.0, 3.3).cos(); // contains π
        assert!((c.lo() - -1.0).abs() < 1e-15);
        let c2 = iv(-0.1, 0.1).cos(); // contains 0
        assert!((c2.hi() - 1.0).abs() < 1e-15);
        let wide = iv(0.0, 10.0).cos();
        assert_eq!(wide, iv(-1.0, 1.0));
    }

    #[test]
    fn tan_rejects_pole() {
        assert!(matches!(iv(1.0, 2.0).tan(), Err(IntervalError::TanPole(_, _))));
        let t = iv(-0.2, 0.3).tan().unwrap();
        assert!(t.contains((-0.2f64).tan()) && t.contains(0.3f64.tan()));
    }

    #[test]
    fn division_by_zero_containing_interval_errors() {
        assert!(iv(1.0, 2.0).div(&iv(-1.0, 1.0)).is_err());
        let q = iv(1.0, 2.0).div(&iv(2.0, 4.0)).unwrap();
        assert!(q.contains(0.25) && q.contains(1.0));
    }

    #[test]
    fn set_ops_behave() {
        let a = iv(0.0, 2.0);
        let b = iv(1.0, 3.0);
        assert_eq!(a.hull(&b), iv(0.0, 3.0));
        assert_eq!(a.intersect(&b), Some(iv(1.0, 2.0)));
        assert_eq!(a.intersect(&iv(5.0, 6.0)), None);
        let (l, r) = a.split_at_midpoint();
        assert_eq!(l.hi(), r.lo());
        assert_eq!(l.lo(), 0.0);
        assert_eq!(r.hi(), 2.0);
        assert!(a.hull(&b).width() >= a.width().max(b.width()));
    }

    /// Enclosure: for random operand pairs and random sample points inside
    /// them, the exact pointwise result lies inside the interval result.
    #[test]
    fn arithmetic_encloses_sampled_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1057);
        for _ in 0..100_000 {
            let a = rand_interval(&mut rng, 10.0);
            let b = rand_interval(&mut rng, 10.0);
            let x = rng.random_range(a.lo()..=a.hi());
            let y = rng.random_range(b.lo()..=b.hi());
            assert!(a.add(&b).contains(x + y));
            assert!(a.sub(&b).contains(x - y));
            assert!(a.mul(&b).contains(x * y));
            assert!(a.neg().contains(-x));
            if !b.contains(0.0) {
                assert!(a.div(&b).unwrap().contains(x / y));
            }
            let n = rng.random_range(0..5u32);
            assert!(a.powi(n).contains(x.powi(n as i32)));
        }
    }

    #[test]
    fn elementary_encloses_sampled_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x2057);
        for _ in 0..100_000 {
            let a = rand_interval(&mut rng, 8.0);
            let x = rng.random_range(a.lo()..=a.hi());
            assert!(a.sigmoid().contains(scalar::sigmoid(x)));
            assert!(a.tanh().contains(x.tanh()));
            assert!(a.cos().contains(x.cos()));
            assert!(a.sin().contains(x.sin()));
            assert!(a.exp().unwrap().contains(x.exp()));
            if let Ok(t) = a.tan() {
                assert!(t.contains(x.tan()));
            }
        }
    }

    /// Inclusion isotonicity: `a ⊆ a'` and `b ⊆ b'` implies `a∘b ⊆ a'∘b'`.
    #[test]
    fn inclusion_isotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x3057);
        for _ in 0..20_000 {
            let a_big = rand_interval(&mut rng, 10.0);
            let b_big = rand_interval(&mut rng, 10.0);
            let shrink = |v: &Interval, rng: &mut ChaCha8Rng| {
                let l = rng.random_range(v.lo()..=v.hi());
                let h = rng.random_range(l..=v.hi());
                iv(l, h)
            };
            let a = shrink(&a_big, &mut rng);
            let b = shrink(&b_big, &mut rng);
            assert!(a_big.add(&b_big).contains_interval(&a.add(&b)));
            assert!(a_big.sub(&b_big).contains_interval(&a.sub(&b)));
            assert!(a_big.mul(&b_big).contains_interval(&a.mul(&b)));
            assert!(a_big.sigmoid().contains_interval(&a.sigmoid()));
            assert!(a_big.cos().contains_interval(&a.cos()));
        }
    }

    #[test]
    fn no_nan_endpoints_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4057);
        for _ in 0..50_000 {
            let a = rand_interval(&mut rng, 50.0);
            let b = rand_interval(&mut rng, 50.0);
            for v in [a.add(&b), a.sub(&b), a.mul(&b), a.cos(), a.sin(), a.sigmoid(), a.tanh()] {
                assert!(v.lo().is_finite() && v.hi().is_finite());
                assert!(v.lo() <= v.hi());
            }
        }
    }
}
