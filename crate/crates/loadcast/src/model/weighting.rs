//! Time-varying feature-weighting attention.
//!
//! Per time step the raw feature row is scored through a two-layer map,
//! softmax-normalized into weights, and multiplied back into the row.
//! Hard feature selection is the one-hot special case of these weights.

use crate::error::NumError;
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};

/// Tape handles of the weighter parameters.
#[derive(Debug, Clone, Copy)]
pub struct WeighterNodes {
    pub w: NodeId,
    pub bw: NodeId,
    pub v: NodeId,
    pub bv: NodeId,
}

/// Tape handles produced by one weighting step.
#[derive(Debug, Clone, Copy)]
pub struct WeightedStep {
    /// Pre-softmax feature scores.
    pub scores: NodeId,
    /// Softmax feature weights; positive, summing to one.
    pub weights: NodeId,
    /// Element-wise product of weights and the raw row.
    pub weighted: NodeId,
}

/// Records `scores = V tanh(W x + b_w) + b_v`, `weights = softmax(scores)`,
/// `weighted = weights .* x` on the tape.
pub fn weight_step<S: Scalar>(tape: &mut Tape<S>, nodes: &WeighterNodes, x: NodeId) -> WeightedStep {
    let wx = tape.matvec(nodes.w, x);
    let wx = tape.add(wx, nodes.bw);
    let t = tape.tanh(wx);
    let vt = tape.matvec(nodes.v, t);
    let scores = tape.add(vt, nodes.bv);
    let weights = tape.softmax(scores);
    let weighted = tape.mul(weights, x);
    WeightedStep {
        scores,
        weights,
        weighted,
    }
}

/// Element-wise reweighting of a feature row; lengths must agree.
pub fn apply_weights<S: Scalar>(x: &[S], weights: &[S]) -> Result<Vec<S>, NumError> {
    if x.len() != weights.len() {
        return Err(NumError::ShapeMismatch {
            op: "apply_weights",
            expected: format!("{} weights", x.len()),
            got: format!("{}", weights.len()),
        });
    }
    Ok(x.iter().zip(weights).map(|(&a, &b)| a * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_weights_examples() {
        // Uniform weights scale the row by 1/n.
        let x = vec![2.0, 4.0];
        let uniform = apply_weights(&x, &[0.5, 0.5]).unwrap();
        assert_eq!(uniform, vec![1.0, 2.0]);
        // One-hot weights mask all but one feature.
        let masked = apply_weights(&x, &[0.0, 1.0]).unwrap();
        assert_eq!(masked, vec![0.0, 4.0]);
        // Hand multiplication.
        let w = apply_weights(&x, &[0.25, 0.75]).unwrap();
        assert_eq!(w, vec![0.5, 3.0]);
        assert!(apply_weights(&x, &[1.0]).is_err());
    }
}
