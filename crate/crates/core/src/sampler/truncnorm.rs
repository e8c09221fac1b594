use rand_core::RngCore;

use crate::seeding;
use crate::stats::{normal_cdf, normal_quantile};

/// Normal(mean, std^2) restricted to `[lower, upper]`, sampled by inverse
/// CDF on a uniform rescaled to `[Phi(a), Phi(b)]`.
///
/// Windows lying entirely above the mean are reflected so the CDF is
/// always evaluated in the lower tail, where it keeps relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    mean: f64,
    std: f64,
    lower: f64,
    upper: f64,
    kind: Kind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// std == 0: always the clamped mean.
    Point(f64),
    InverseCdf {
        /// -1 when the window was reflected.
        sign: f64,
        hi: f64,
        p_lo: f64,
        p_span: f64,
    },
    /// Window deep in the tail (Phi underflows): exponential approximation
    /// anchored at the bound nearest the mean.
    Tail { sign: f64, lo: f64, hi: f64 },
}

impl TruncatedNormal {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Self {
        assert!(lower <= upper, "lower bound above upper bound");
        let kind = if std <= 0.0 || !std.is_finite() || lower == upper {
            Kind::Point(mean.clamp(lower, upper))
        } else {
            let a = (lower - mean) / std;
            let b = (upper - mean) / std;
            let (sign, lo, hi) = if a > 0.0 { (-1.0, -b, -a) } else { (1.0, a, b) };
            let p_lo = normal_cdf(lo);
            let p_hi = normal_cdf(hi);
            let p_span = p_hi - p_lo;
            if p_span > 0.0 && p_span > p_hi * 1e-12 {
                Kind::InverseCdf {
                    sign,
                    hi,
                    p_lo,
                    p_span,
                }
            } else {
                Kind::Tail { sign, lo, hi }
            }
        };
        Self {
            mean,
            std,
            lower,
            upper,
            kind,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = seeding::uniform01(rng);
        let z = match self.kind {
            Kind::Point(v) => return v,
            Kind::InverseCdf {
                sign,
                hi,
                p_lo,
                p_span,
            } => {
                let z = normal_quantile(p_lo + u * p_span);
                sign * if z.is_finite() { z.min(hi) } else { hi }
            }
            Kind::Tail { sign, lo, hi } => {
                // density proportional to exp(rate * (z - hi)) on [lo, hi]
                let rate = -hi;
                let width = hi - lo;
                let z = hi + (1.0 - u * (1.0 - (-rate * width).exp())).ln() / rate;
                sign * z
            }
        };
        (self.mean + self.std * z).clamp(self.lower, self.upper)
    }
}
