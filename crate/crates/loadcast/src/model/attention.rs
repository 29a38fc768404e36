//! Hierarchical temporal attention: day-level similarity weights and
//! hour-level attention over the encoder history.

use crate::error::NumError;
use crate::scalar::Scalar;
use crate::tape::{stable_softmax, NodeId, Tape};

/// Guard added to day distances before taking reciprocals, so identical
/// days do not divide by zero.
pub const DISTANCE_EPSILON: f64 = 1e-8;

/// Day-level soft selection weights.
#[derive(Debug, Clone)]
pub struct SimilarDayWeights<S> {
    /// Feature-summed distance of each historical day to the target day.
    pub distances: Vec<S>,
    /// Softmax of the reciprocal distances; positive, summing to one.
    pub weights: Vec<S>,
}

/// Computes day weights from a full window of standardized features.
///
/// `x` is row-major `(days * day_len + day_len) x width`: the historical
/// days followed by the target day. The distance between a historical day
/// and the target day is the sum over features of the Euclidean distance
/// between their day-length columns; weights are the softmax of the
/// guarded reciprocals. No parameters are involved and no gradient flows
/// through this computation.
pub fn similar_day_weights<S: Scalar>(
    x: &[S],
    width: usize,
    days: usize,
    day_len: usize,
) -> Result<SimilarDayWeights<S>, NumError> {
    let hist_len = days * day_len;
    let expected = (hist_len + day_len) * width;
    if x.len() != expected {
        return Err(NumError::ShapeMismatch {
            op: "similar_day_weights",
            expected: format!("{expected} values"),
            got: format!("{}", x.len()),
        });
    }

    let future = &x[hist_len * width..];
    let mut distances = Vec::with_capacity(days);
    for day in 0..days {
        let block = &x[day * day_len * width..(day + 1) * day_len * width];
        let mut total = S::zero();
        for k in 0..width {
            let mut sq = S::zero();
            for j in 0..day_len {
                let d = block[j * width + k] - future[j * width + k];
                sq += d * d;
            }
            total += sq.sqrt();
        }
        distances.push(total);
    }

    let eps = S::from_f64(DISTANCE_EPSILON);
    let recip: Vec<S> = distances.iter().map(|&d| S::one() / (d + eps)).collect();
    let weights = stable_softmax(&recip)?;
    Ok(SimilarDayWeights { distances, weights })
}

/// Tape handles of the temporal-attention parameters.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub w: NodeId,
    pub bw: NodeId,
    pub v: NodeId,
    pub bv: NodeId,
}

/// Records the per-step attention scores and weights on the tape.
///
/// `query` is the concatenation of the previous decoder hidden state and the
/// raw (unweighted) future feature row. The score vector has one entry per
/// historical position; position `(i, j)` for day `i`, hour `j` (1-based)
/// lives at flat index `(i-1) * day_len + (j-1)`.
pub fn attention_step<S: Scalar>(
    tape: &mut Tape<S>,
    nodes: &AttentionNodes,
    query: NodeId,
) -> (NodeId, NodeId) {
    let wq = tape.matvec(nodes.w, query);
    let wq = tape.add(wq, nodes.bw);
    let t = tape.tanh(wq);
    let vt = tape.matvec(nodes.v, t);
    let scores = tape.add(vt, nodes.bv);
    let weights = tape.softmax(scores);
    (scores, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_days_get_uniform_weights() {
        // Three days, all equal to the target day: equal distances.
        let (days, day_len, width) = (3, 2, 2);
        let day = [0.3, -1.0, 0.8, 0.2];
        let mut x = Vec::new();
        for _ in 0..days + 1 {
            x.extend_from_slice(&day);
        }
        let w = similar_day_weights::<f64>(&x, width, days, day_len).unwrap();
        for &g in &w.weights {
            assert!((g - 1.0 / 3.0).abs() < 1e-12);
        }
        for &d in &w.distances {
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn single_day_is_certain() {
        let x = vec![0.5; 2 * 3]; // one day + target, width 3, day_len 1
        let w = similar_day_weights::<f64>(&x, 3, 1, 1).unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn two_day_closed_form() {
        // Engineer distances D = (1, 2): day_len 1, width 1, target at 0,
        // day values 1 and 2. Weights approach softmax(1, 0.5).
        let x = vec![1.0, 2.0, 0.0];
        let w = similar_day_weights::<f64>(&x, 1, 2, 1).unwrap();
        assert!((w.distances[0] - 1.0).abs() < 1e-12);
        assert!((w.distances[1] - 2.0).abs() < 1e-12);
        let e1 = 1.0f64.exp();
        let e2 = 0.5f64.exp();
        assert!((w.weights[0] - e1 / (e1 + e2)).abs() < 1e-6);
        assert!((w.weights[1] - e2 / (e1 + e2)).abs() < 1e-6);
        assert!((w.weights[0] - 0.6225).abs() < 1e-4);
        assert!((w.weights[1] - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn closer_days_weigh_more() {
        // Shrinking a day's distance strictly increases its weight.
        let far = vec![3.0, 2.0, 0.0];
        let near = vec![1.5, 2.0, 0.0];
        let wf = similar_day_weights::<f64>(&far, 1, 2, 1).unwrap();
        let wn = similar_day_weights::<f64>(&near, 1, 2, 1).unwrap();
        assert!(wn.weights[0] > wf.weights[0]);
    }
}
