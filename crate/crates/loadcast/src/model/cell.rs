//! Recurrent cells recorded on the tape.
//!
//! Gate layouts follow the usual conventions:
//!   RNN:  h' = tanh(Wx x + Wh h + b)
//!   LSTM: gates i,f,g,o from one fused pre-activation;
//!         c' = f*c + i*g, h' = o * tanh(c')
//!   GRU:  gates r,z,n with the reset gate applied to the hidden branch
//!         of n; h' = n + z * (h - n)

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    /// Number of fused gates in the pre-activation.
    pub fn gates(&self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn has_cell_state(&self) -> bool {
        matches!(self, CellKind::Lstm)
    }

    /// Separate hidden-side bias (needed by the GRU candidate gate).
    pub fn has_hidden_bias(&self) -> bool {
        matches!(self, CellKind::Gru)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(CellKind::Rnn),
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(format!("unknown cell kind `{other}` (expected rnn|lstm|gru)")),
        }
    }
}

/// Tape handles of one cell's parameters.
#[derive(Debug, Clone, Copy)]
pub struct CellNodes {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
    /// Hidden-side bias; present for GRU only.
    pub bh: Option<NodeId>,
}

/// Recurrent state at one time step.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: NodeId,
    pub c: Option<NodeId>,
}

pub fn zero_state<S: Scalar>(tape: &mut Tape<S>, kind: CellKind, hidden: usize) -> CellState {
    let h = tape.leaf(vec![S::zero(); hidden]);
    let c = kind.has_cell_state().then(|| tape.leaf(vec![S::zero(); hidden]));
    CellState { h, c }
}

/// Advances the cell by one step on `input`.
pub fn step<S: Scalar>(
    tape: &mut Tape<S>,
    kind: CellKind,
    nodes: &CellNodes,
    input: NodeId,
    state: &CellState,
    hidden: usize,
) -> CellState {
    match kind {
        CellKind::Rnn => {
            let xi = tape.matvec(nodes.wx, input);
            let hh = tape.matvec(nodes.wh, state.h);
            let s = tape.add(xi, hh);
            let s = tape.add(s, nodes.b);
            CellState {
                h: tape.tanh(s),
                c: None,
            }
        }
        CellKind::Lstm => {
            let xi = tape.matvec(nodes.wx, input);
            let hh = tape.matvec(nodes.wh, state.h);
            let pre = tape.add(xi, hh);
            let pre = tape.add(pre, nodes.b);
            let i = tape.slice(pre, 0, hidden);
            let i = tape.sigmoid(i);
            let f = tape.slice(pre, hidden, hidden);
            let f = tape.sigmoid(f);
            let g = tape.slice(pre, 2 * hidden, hidden);
            let g = tape.tanh(g);
            let o = tape.slice(pre, 3 * hidden, hidden);
            let o = tape.sigmoid(o);
            let c_prev = state.c.expect("LSTM state must carry a cell buffer");
            let fc = tape.mul(f, c_prev);
            let ig = tape.mul(i, g);
            let c = tape.add(fc, ig);
            let tc = tape.tanh(c);
            CellState {
                h: tape.mul(o, tc),
                c: Some(c),
            }
        }
        CellKind::Gru => {
            let px = tape.matvec(nodes.wx, input);
            let px = tape.add(px, nodes.b);
            let ph = tape.matvec(nodes.wh, state.h);
            let ph = tape.add(ph, nodes.bh.expect("GRU needs a hidden-side bias"));
            let rx = tape.slice(px, 0, hidden);
            let rh = tape.slice(ph, 0, hidden);
            let r = tape.add(rx, rh);
            let r = tape.sigmoid(r);
            let zx = tape.slice(px, hidden, hidden);
            let zh = tape.slice(ph, hidden, hidden);
            let z = tape.add(zx, zh);
            let z = tape.sigmoid(z);
            let nx = tape.slice(px, 2 * hidden, hidden);
            let nh = tape.slice(ph, 2 * hidden, hidden);
            let rnh = tape.mul(r, nh);
            let n = tape.add(nx, rnh);
            let n = tape.tanh(n);
            // h' = (1 - z) * n + z * h, written as n + z * (h - n).
            let hmn = tape.sub(state.h, n);
            let zh2 = tape.mul(z, hmn);
            CellState {
                h: tape.add(n, zh2),
                c: None,
            }
        }
    }
}

/// Parameter tensor shapes for one cell: `(name suffix, shape)`.
pub fn param_shapes(kind: CellKind, input_width: usize, hidden: usize) -> Vec<(&'static str, Vec<usize>)> {
    let g = kind.gates() * hidden;
    let mut shapes = vec![
        ("wx", vec![g, input_width]),
        ("wh", vec![g, hidden]),
        ("b", vec![g]),
    ];
    if kind.has_hidden_bias() {
        shapes.push(("bh", vec![g]));
    }
    shapes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell_nodes(
        tape: &mut Tape<f64>,
        _kind: CellKind,
        wx: &Tensor<f64>,
        wh: &Tensor<f64>,
        b: &Tensor<f64>,
        bh: Option<&Tensor<f64>>,
    ) -> CellNodes {
        CellNodes {
            wx: tape.leaf_tensor(wx, false),
            wh: tape.leaf_tensor(wh, false),
            b: tape.leaf_tensor(b, false),
            bh: bh.map(|t| tape.leaf_tensor(t, false)),
        }
    }

    #[test]
    fn zero_everything_stays_at_the_origin() {
        for kind in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
            let hs = 3;
            let g = kind.gates() * hs;
            let mut tape = Tape::new();
            let wx = Tensor::zeros(&[g, 2]);
            let wh = Tensor::zeros(&[g, hs]);
            let b = Tensor::zeros(&[g]);
            let bh = kind.has_hidden_bias().then(|| Tensor::zeros(&[g]));
            let nodes = cell_nodes(&mut tape, kind, &wx, &wh, &b, bh.as_ref());
            let mut state = zero_state(&mut tape, kind, hs);
            for _ in 0..4 {
                let input = tape.leaf(vec![0.0, 0.0]);
                state = step(&mut tape, kind, &nodes, input, &state, hs);
            }
            assert!(
                tape.value(state.h).iter().all(|&v| v == 0.0),
                "{}: nonzero hidden state",
                kind.label()
            );
        }
    }

    // Plain-f64 GRU oracle with the same gate layout.
    fn gru_oracle(
        wx: &[f64],
        wh: &[f64],
        bx: &[f64],
        bh: &[f64],
        hs: usize,
        inw: usize,
        inputs: &[Vec<f64>],
    ) -> Vec<f64> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut h = vec![0.0; hs];
        for x in inputs {
            let mut px = vec![0.0; 3 * hs];
            let mut ph = vec![0.0; 3 * hs];
            for i in 0..3 * hs {
                for (j, &xj) in x.iter().enumerate().take(inw) {
                    px[i] += wx[i * inw + j] * xj;
                }
                px[i] += bx[i];
                for (j, &hj) in h.iter().enumerate() {
                    ph[i] += wh[i * hs + j] * hj;
                }
                ph[i] += bh[i];
            }
            let mut hn = vec![0.0; hs];
            for k in 0..hs {
                let r = sig(px[k] + ph[k]);
                let z = sig(px[hs + k] + ph[hs + k]);
                let n = (px[2 * hs + k] + r * ph[2 * hs + k]).tanh();
                hn[k] = n + z * (h[k] - n);
            }
            h = hn;
        }
        h
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let (hs, inw) = (2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let wx = draw(3 * hs * inw);
        let wh = draw(3 * hs * hs);
        let bx = draw(3 * hs);
        let bh = draw(3 * hs);
        let inputs: Vec<Vec<f64>> = (0..3).map(|_| draw(inw)).collect();

        let mut tape = Tape::new();
        let nodes = cell_nodes(
            &mut tape,
            CellKind::Gru,
            &Tensor::from_vec(&[3 * hs, inw], wx.clone()),
            &Tensor::from_vec(&[3 * hs, hs], wh.clone()),
            &Tensor::from_vec(&[3 * hs], bx.clone()),
            Some(&Tensor::from_vec(&[3 * hs], bh.clone())),
        );
        let mut state = zero_state(&mut tape, CellKind::Gru, hs);
        for x in &inputs {
            let input = tape.leaf(x.clone());
            state = step(&mut tape, CellKind::Gru, &nodes, input, &state, hs);
        }
        let got = tape.value(state.h);
        let want = gru_oracle(&wx, &wh, &bx, &bh, hs, inw, &inputs);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    // Plain-f64 LSTM oracle, fused i,f,g,o layout.
    fn lstm_oracle(
        wx: &[f64],
        wh: &[f64],
        b: &[f64],
        hs: usize,
        inw: usize,
        inputs: &[Vec<f64>],
    ) -> Vec<f64> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut h = vec![0.0; hs];
        let mut c = vec![0.0; hs];
        for x in inputs {
            let mut pre = vec![0.0; 4 * hs];
            for i in 0..4 * hs {
                for (j, &xj) in x.iter().enumerate().take(inw) {
                    pre[i] += wx[i * inw + j] * xj;
                }
                for (j, &hj) in h.iter().enumerate() {
                    pre[i] += wh[i * hs + j] * hj;
                }
                pre[i] += b[i];
            }
            for k in 0..hs {
                let i_g = sig(pre[k]);
                let f_g = sig(pre[hs + k]);
                let g_g = pre[2 * hs + k].tanh();
                let o_g = sig(pre[3 * hs + k]);
                c[k] = f_g * c[k] + i_g * g_g;
                h[k] = o_g * c[k].tanh();
            }
        }
        h
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let (hs, inw) = (2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let wx = draw(4 * hs * inw);
        let wh = draw(4 * hs * hs);
        let b = draw(4 * hs);
        let inputs: Vec<Vec<f64>> = (0..4).map(|_| draw(inw)).collect();

        let mut tape = Tape::new();
        let nodes = cell_nodes(
            &mut tape,
            CellKind::Lstm,
            &Tensor::from_vec(&[4 * hs, inw], wx.clone()),
            &Tensor::from_vec(&[4 * hs, hs], wh.clone()),
            &Tensor::from_vec(&[4 * hs], b.clone()),
            None,
        );
        let mut state = zero_state(&mut tape, CellKind::Lstm, hs);
        for x in &inputs {
            let input = tape.leaf(x.clone());
            state = step(&mut tape, CellKind::Lstm, &nodes, input, &state, hs);
        }
        let got = tape.value(state.h);
        let want = lstm_oracle(&wx, &wh, &b, hs, inw, &inputs);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }
}
