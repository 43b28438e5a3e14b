//! Membership scores computed from a prediction posterior.

use crate::error::{Error, Result};
use crate::mia::MetricKind;
use crate::scalar::Scalar;
use crate::tensor::argmax;

const CLAMP_LO: f64 = 1e-12;

fn clamp_prob<T: Scalar>(p: T) -> T {
    let lo = T::from_f64_lossy(CLAMP_LO);
    let hi = T::one() - lo;
    if p < lo {
        lo
    } else if p > hi {
        hi
    } else {
        p
    }
}

/// Score a posterior under one of the four membership metrics.
///
/// corr: 1 iff the argmax matches the true label; conf: probability of the
/// true label; ent: Shannon entropy (natural log); ment: modified
/// prediction entropy, `-(1-p_y) ln p_y - sum_{i!=y} p_i ln(1-p_i)`.
/// Probabilities are clamped to `[1e-12, 1-1e-12]` before any logarithm.
pub fn metric_score<T: Scalar>(
    metric: MetricKind,
    posterior: &[T],
    true_label: usize,
) -> Result<T> {
    if true_label >= posterior.len() {
        return Err(Error::Input(format!(
            "true label {true_label} outside posterior of length {}",
            posterior.len()
        )));
    }
    let score = match metric {
        MetricKind::Corr => {
            if argmax(posterior) == true_label {
                T::one()
            } else {
                T::zero()
            }
        }
        MetricKind::Conf => posterior[true_label],
        MetricKind::Ent => {
            let mut acc = T::zero();
            for &p in posterior {
                let p = clamp_prob(p);
                acc = acc - p * p.ln();
            }
            acc
        }
        MetricKind::Ment => {
            let one = T::one();
            let py = clamp_prob(posterior[true_label]);
            let mut acc = -(one - py) * py.ln();
            for (i, &p) in posterior.iter().enumerate() {
                if i != true_label {
                    let p = clamp_prob(p);
                    acc = acc - p * (one - p).ln();
                }
            }
            acc
        }
    };
    Ok(score)
}
