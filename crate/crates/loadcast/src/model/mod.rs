//! The load predictor: feature weighting, a bidirectional recurrent encoder,
//! hierarchical similar-day temporal attention, a bidirectional decoder, and
//! a fully connected output head.
//!
//! The decoder is evaluated in two passes. Pass one walks the future steps
//! forward: the attention query is the forward decoder hidden state padded
//! with the encoder backward hidden at the final historical step (so the
//! first query is exactly the encoder's final concatenated state), the
//! context vector is formed, and the forward cell advances. Pass two runs
//! the backward cell over the now-fixed step inputs in reverse.

pub mod attention;
pub mod cell;
pub mod weighting;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NumError;
use crate::params::{ParamGroup, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub use attention::{similar_day_weights, SimilarDayWeights};
pub use cell::CellKind;
pub use weighting::apply_weights;

/// How the sparsity penalty on the feature weighter enters the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// L1 norm of the softmax weights, exactly as formulated. Softmax rows
    /// are positive and sum to one, so this term is the constant 1 per step
    /// and contributes zero gradient; it is kept for fidelity.
    AlphaL1,
    /// Alternative that penalizes the mean absolute pre-softmax score.
    ScoreAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cell: CellKind,
    /// Embedded feature width n.
    pub input_width: usize,
    /// Recurrent hidden size per direction.
    pub hidden: usize,
    /// Hidden width of the feature weighter.
    pub fw_hidden: usize,
    /// Hidden width of the temporal attention.
    pub att_hidden: usize,
    /// Hidden width of the output head.
    pub out_hidden: usize,
    /// Number of historical days M.
    pub days: usize,
    /// Points per day.
    pub day_len: usize,
    /// Whether the weighter's bias vectors are trainable.
    pub weighter_bias: bool,
    pub penalty: PenaltyMode,
}

impl ModelConfig {
    /// Historical window length (days * day_len).
    pub fn hist_len(&self) -> usize {
        self.days * self.day_len
    }

    /// Forecast horizon (one day).
    pub fn future_len(&self) -> usize {
        self.day_len
    }

    pub fn window_len(&self) -> usize {
        self.hist_len() + self.future_len()
    }

    pub fn validate(&self) -> Result<(), NumError> {
        let dims = [
            self.input_width,
            self.hidden,
            self.fw_hidden,
            self.att_hidden,
            self.out_hidden,
            self.days,
            self.day_len,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(NumError::Usage(
                "all model dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

struct CellIdx {
    wx: usize,
    wh: usize,
    b: usize,
    bh: Option<usize>,
}

struct Indices {
    fw_w: usize,
    fw_bw: usize,
    fw_v: usize,
    fw_bv: usize,
    enc_f: CellIdx,
    enc_b: CellIdx,
    dec_f: CellIdx,
    dec_b: CellIdx,
    att_w: usize,
    att_bw: usize,
    att_v: usize,
    att_bv: usize,
    head_w: usize,
    head_bw: usize,
    head_v: usize,
    head_bv: usize,
}

/// All trainable parameter groups of the forecaster.
pub struct ForecastModel<S> {
    pub cfg: ModelConfig,
    pub params: ParamStore<S>,
    /// Set by the trainer (or a loaded checkpoint) once stage-one training
    /// has completed.
    pub trained: bool,
    idx: Indices,
}

impl<S: Scalar> Clone for ForecastModel<S> {
    fn clone(&self) -> Self {
        // Rebuilding from the config reproduces the index table; the
        // parameter values (and trainability flags) are then copied over.
        let mut m = ForecastModel::build(self.cfg.clone(), |shape, _| Tensor::zeros(shape));
        m.params = self.params.clone();
        m.trained = self.trained;
        m
    }
}

impl<S: Scalar> ForecastModel<S> {
    /// Initializes every tensor uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// using a ChaCha8 stream seeded with `seed`. Registration order is fixed,
    /// so a seed fully determines the parameters.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self, NumError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::build(cfg, |shape, fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::uniform(shape, &mut rng, -bound, bound)
        });
        if !model.cfg.weighter_bias {
            for name in ["fw.bw", "fw.bv"] {
                let i = model.params.index(name).unwrap();
                let p = model.params.get_mut(i);
                p.tensor.data_mut().fill(S::zero());
                p.trainable = false;
            }
        }
        Ok(model)
    }

    /// All-zero parameters; used by tests exercising degenerate cases.
    pub fn zeroed(cfg: ModelConfig) -> Result<Self, NumError> {
        cfg.validate()?;
        let mut model = Self::build(cfg, |shape, _| Tensor::zeros(shape));
        if !model.cfg.weighter_bias {
            model.params.set_group_trainable(ParamGroup::Weighter, false);
        }
        Ok(model)
    }

    fn build(cfg: ModelConfig, mut init: impl FnMut(&[usize], usize) -> Tensor<S>) -> Self {
        let n = cfg.input_width;
        let hs = cfg.hidden;
        let t_h = cfg.hist_len();
        let mut ps = ParamStore::new();

        let fw_w = ps.add("fw.w", ParamGroup::Weighter, init(&[cfg.fw_hidden, n], n));
        let fw_bw = ps.add("fw.bw", ParamGroup::Weighter, init(&[cfg.fw_hidden], n));
        let fw_v = ps.add("fw.v", ParamGroup::Weighter, init(&[n, cfg.fw_hidden], cfg.fw_hidden));
        let fw_bv = ps.add("fw.bv", ParamGroup::Weighter, init(&[n], cfg.fw_hidden));

        let add_cell = |ps: &mut ParamStore<S>,
                            prefix: &str,
                            group: ParamGroup,
                            input_width: usize,
                            init: &mut dyn FnMut(&[usize], usize) -> Tensor<S>| {
            let mut idx = CellIdx { wx: 0, wh: 0, b: 0, bh: None };
            for (suffix, shape) in cell::param_shapes(cfg.cell, input_width, hs) {
                let fan_in = match suffix {
                    "wx" => input_width,
                    _ => hs,
                };
                let i = ps.add(&format!("{prefix}.{suffix}"), group, init(&shape, fan_in));
                match suffix {
                    "wx" => idx.wx = i,
                    "wh" => idx.wh = i,
                    "b" => idx.b = i,
                    "bh" => idx.bh = Some(i),
                    _ => unreachable!(),
                }
            }
            idx
        };

        // Encoder consumes [weighted features; history channel].
        let enc_in = n + 1;
        // Decoder consumes [weighted features; context vector].
        let dec_in = n + 2 * hs;
        let enc_f = add_cell(&mut ps, "enc_f", ParamGroup::EncoderFwd, enc_in, &mut init);
        let enc_b = add_cell(&mut ps, "enc_b", ParamGroup::EncoderBwd, enc_in, &mut init);
        let dec_f = add_cell(&mut ps, "dec_f", ParamGroup::DecoderFwd, dec_in, &mut init);
        let dec_b = add_cell(&mut ps, "dec_b", ParamGroup::DecoderBwd, dec_in, &mut init);

        let query_w = 2 * hs + n;
        let att_w = ps.add("att.w", ParamGroup::Attention, init(&[cfg.att_hidden, query_w], query_w));
        let att_bw = ps.add("att.bw", ParamGroup::Attention, init(&[cfg.att_hidden], query_w));
        let att_v = ps.add("att.v", ParamGroup::Attention, init(&[t_h, cfg.att_hidden], cfg.att_hidden));
        let att_bv = ps.add("att.bv", ParamGroup::Attention, init(&[t_h], cfg.att_hidden));

        let head_w = ps.add("head.w", ParamGroup::Head, init(&[cfg.out_hidden, 2 * hs], 2 * hs));
        let head_bw = ps.add("head.bw", ParamGroup::Head, init(&[cfg.out_hidden], 2 * hs));
        let head_v = ps.add("head.v", ParamGroup::Head, init(&[1, cfg.out_hidden], cfg.out_hidden));
        let head_bv = ps.add("head.bv", ParamGroup::Head, init(&[1], cfg.out_hidden));

        ForecastModel {
            cfg,
            params: ps,
            trained: false,
            idx: Indices {
                fw_w,
                fw_bw,
                fw_v,
                fw_bv,
                enc_f,
                enc_b,
                dec_f,
                dec_b,
                att_w,
                att_bw,
                att_v,
                att_bv,
                head_w,
                head_bw,
                head_v,
                head_bv,
            },
        }
    }

    /// Overwrites one named tensor; panics on unknown names or wrong sizes.
    pub fn set_param(&mut self, name: &str, data: Vec<S>) {
        let i = self
            .params
            .index(name)
            .unwrap_or_else(|| panic!("no parameter named `{name}`"));
        let t = &mut self.params.get_mut(i).tensor;
        assert_eq!(t.len(), data.len(), "size mismatch for `{name}`");
        t.data_mut().copy_from_slice(&data);
    }

    /// Runs the full pipeline on one window and records it on a tape.
    ///
    /// `x` is the raw standardized feature window, row-major
    /// `(hist_len + future_len) x input_width`; `history` is the target-unit
    /// channel over the historical steps (load history for the forecaster,
    /// residual history for the correction model).
    pub fn forward(
        &self,
        x: &[S],
        history: &[S],
        with_grads: bool,
    ) -> Result<ForwardArtifacts<S>, NumError> {
        let cfg = &self.cfg;
        let n = cfg.input_width;
        let hs = cfg.hidden;
        let t_h = cfg.hist_len();
        let t_f = cfg.future_len();

        if x.len() != cfg.window_len() * n {
            return Err(NumError::ShapeMismatch {
                op: "forward",
                expected: format!("{} feature values", cfg.window_len() * n),
                got: format!("{}", x.len()),
            });
        }
        if history.len() != t_h {
            return Err(NumError::ShapeMismatch {
                op: "forward",
                expected: format!("history of length {t_h}"),
                got: format!("{}", history.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || history.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: "forward" });
        }

        let day_weights = similar_day_weights(x, n, cfg.days, cfg.day_len)?;

        let mut tape = Tape::new();
        let mut param_nodes = Vec::new();
        let leaf = |tape: &mut Tape<S>, idx: usize, nodes: &mut Vec<(usize, NodeId)>| {
            let p = self.params.get(idx);
            let grad = with_grads && p.trainable;
            let id = tape.leaf_tensor(&p.tensor, grad);
            if grad {
                nodes.push((idx, id));
            }
            id
        };

        let fw = weighting::WeighterNodes {
            w: leaf(&mut tape, self.idx.fw_w, &mut param_nodes),
            bw: leaf(&mut tape, self.idx.fw_bw, &mut param_nodes),
            v: leaf(&mut tape, self.idx.fw_v, &mut param_nodes),
            bv: leaf(&mut tape, self.idx.fw_bv, &mut param_nodes),
        };
        let cell_nodes = |tape: &mut Tape<S>, idx: &CellIdx, nodes: &mut Vec<(usize, NodeId)>| cell::CellNodes {
            wx: leaf(tape, idx.wx, nodes),
            wh: leaf(tape, idx.wh, nodes),
            b: leaf(tape, idx.b, nodes),
            bh: idx.bh.map(|i| leaf(tape, i, nodes)),
        };
        let enc_f = cell_nodes(&mut tape, &self.idx.enc_f, &mut param_nodes);
        let enc_b = cell_nodes(&mut tape, &self.idx.enc_b, &mut param_nodes);
        let dec_f = cell_nodes(&mut tape, &self.idx.dec_f, &mut param_nodes);
        let dec_b = cell_nodes(&mut tape, &self.idx.dec_b, &mut param_nodes);
        let att = attention::AttentionNodes {
            w: leaf(&mut tape, self.idx.att_w, &mut param_nodes),
            bw: leaf(&mut tape, self.idx.att_bw, &mut param_nodes),
            v: leaf(&mut tape, self.idx.att_v, &mut param_nodes),
            bv: leaf(&mut tape, self.idx.att_bv, &mut param_nodes),
        };
        let head_w = leaf(&mut tape, self.idx.head_w, &mut param_nodes);
        let head_bw = leaf(&mut tape, self.idx.head_bw, &mut param_nodes);
        let head_v = leaf(&mut tape, self.idx.head_v, &mut param_nodes);
        let head_bv = leaf(&mut tape, self.idx.head_bv, &mut param_nodes);

        // The same weighter instance covers every row, historical and future.
        let mut raw_rows = Vec::with_capacity(cfg.window_len());
        let mut weighted_rows = Vec::with_capacity(cfg.window_len());
        let mut feature_scores = Vec::with_capacity(cfg.window_len());
        let mut feature_weights = Vec::with_capacity(cfg.window_len());
        for t in 0..cfg.window_len() {
            let row = tape.leaf(x[t * n..(t + 1) * n].to_vec());
            let step = weighting::weight_step(&mut tape, &fw, row);
            raw_rows.push(row);
            weighted_rows.push(step.weighted);
            feature_scores.push(step.scores);
            feature_weights.push(step.weights);
        }

        // Bidirectional encoder over [weighted row; history value].
        let mut enc_inputs = Vec::with_capacity(t_h);
        for t in 0..t_h {
            let y = tape.leaf(vec![history[t]]);
            enc_inputs.push(tape.concat2(weighted_rows[t], y));
        }
        let mut fwd_states = Vec::with_capacity(t_h);
        let mut state = cell::zero_state(&mut tape, cfg.cell, hs);
        for (t, &input) in enc_inputs.iter().enumerate() {
            state = cell::step(&mut tape, cfg.cell, &enc_f, input, &state, hs);
            if !tape.is_finite(state.h) {
                return Err(NumError::Diverged {
                    what: "encoder hidden state",
                    step: t,
                });
            }
            fwd_states.push(state);
        }
        let enc_f_final = *fwd_states.last().unwrap();

        let mut bwd_states = vec![None; t_h];
        let mut state = cell::zero_state(&mut tape, cfg.cell, hs);
        for t in (0..t_h).rev() {
            state = cell::step(&mut tape, cfg.cell, &enc_b, enc_inputs[t], &state, hs);
            if !tape.is_finite(state.h) {
                return Err(NumError::Diverged {
                    what: "encoder hidden state",
                    step: t,
                });
            }
            bwd_states[t] = Some(state);
        }
        let bwd_states: Vec<cell::CellState> = bwd_states.into_iter().map(Option::unwrap).collect();
        // Last state the backward scan computed, i.e. at historical step 0.
        let enc_b_final = bwd_states[0];

        let encoder_states: Vec<NodeId> = (0..t_h)
            .map(|t| tape.concat2(fwd_states[t].h, bwd_states[t].h))
            .collect();

        // Day weights expanded to one entry per historical position.
        let mut gamma_flat = Vec::with_capacity(t_h);
        for day in 0..cfg.days {
            for _ in 0..cfg.day_len {
                gamma_flat.push(day_weights.weights[day]);
            }
        }
        let gamma_node = tape.leaf(gamma_flat);

        // Decoder pass one: attention + forward cell.
        let query_pad = bwd_states[t_h - 1].h;
        let mut dec_state = cell::CellState {
            h: enc_f_final.h,
            c: enc_f_final.c,
        };
        let mut attn_weights = Vec::with_capacity(t_f);
        let mut dec_inputs = Vec::with_capacity(t_f);
        let mut dec_fwd_h = Vec::with_capacity(t_f);
        for t in 0..t_f {
            let query = tape.concat(&[dec_state.h, query_pad, raw_rows[t_h + t]]);
            let (_, weights) = attention::attention_step(&mut tape, &att, query);
            let combined = tape.mul(weights, gamma_node);
            let context = tape.weighted_sum(combined, &encoder_states);
            let input = tape.concat2(weighted_rows[t_h + t], context);
            dec_state = cell::step(&mut tape, cfg.cell, &dec_f, input, &dec_state, hs);
            if !tape.is_finite(dec_state.h) {
                return Err(NumError::Diverged {
                    what: "decoder hidden state",
                    step: t,
                });
            }
            attn_weights.push(weights);
            dec_inputs.push(input);
            dec_fwd_h.push(dec_state.h);
        }

        // Decoder pass two: backward cell over the fixed step inputs.
        let mut dec_bwd_h = vec![None; t_f];
        let mut state = cell::CellState {
            h: enc_b_final.h,
            c: enc_b_final.c,
        };
        for t in (0..t_f).rev() {
            state = cell::step(&mut tape, cfg.cell, &dec_b, dec_inputs[t], &state, hs);
            if !tape.is_finite(state.h) {
                return Err(NumError::Diverged {
                    what: "decoder hidden state",
                    step: t,
                });
            }
            dec_bwd_h[t] = Some(state.h);
        }

        // Output head per future step.
        let mut predictions = Vec::with_capacity(t_f);
        for t in 0..t_f {
            let hd = tape.concat2(dec_fwd_h[t], dec_bwd_h[t].unwrap());
            let pre = tape.matvec(head_w, hd);
            let pre = tape.add(pre, head_bw);
            let act = tape.relu(pre);
            let out = tape.matvec(head_v, act);
            let out = tape.add(out, head_bv);
            predictions.push(out);
        }

        Ok(ForwardArtifacts {
            tape,
            predictions,
            feature_scores,
            feature_weights,
            attn_weights,
            day_weights,
            encoder_states,
            param_nodes,
        })
    }

    /// Standardized-unit forecast for one window.
    pub fn forecast_std(&self, x: &[S], history: &[S]) -> Result<Vec<S>, NumError> {
        Ok(self.forward(x, history, false)?.prediction_values())
    }

    /// De-standardized forecast: `prediction * scale + offset` per step.
    pub fn forecast(
        &self,
        x: &[S],
        history: &[S],
        offset: f64,
        scale: f64,
    ) -> Result<Vec<f64>, NumError> {
        Ok(self
            .forecast_std(x, history)?
            .into_iter()
            .map(|v| v.as_f64() * scale + offset)
            .collect())
    }

    /// Feature scores and weights for a single row.
    pub fn score_features(&self, row: &[S]) -> Result<FeatureScores<S>, NumError> {
        if row.len() != self.cfg.input_width {
            return Err(NumError::ShapeMismatch {
                op: "score_features",
                expected: format!("row of width {}", self.cfg.input_width),
                got: format!("{}", row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite {
                op: "score_features",
            });
        }
        let mut tape = Tape::new();
        let fw = weighting::WeighterNodes {
            w: tape.leaf_tensor(&self.params.get(self.idx.fw_w).tensor, false),
            bw: tape.leaf_tensor(&self.params.get(self.idx.fw_bw).tensor, false),
            v: tape.leaf_tensor(&self.params.get(self.idx.fw_v).tensor, false),
            bv: tape.leaf_tensor(&self.params.get(self.idx.fw_bv).tensor, false),
        };
        let x = tape.leaf(row.to_vec());
        let step = weighting::weight_step(&mut tape, &fw, x);
        Ok(FeatureScores {
            scores: tape.value(step.scores).to_vec(),
            weights: tape.value(step.weights).to_vec(),
        })
    }

    /// Per-step weight rows for a feature window of arbitrary length.
    pub fn weight_trace(&self, x: &[S]) -> Result<Vec<Vec<S>>, NumError> {
        let n = self.cfg.input_width;
        if n == 0 || x.len() % n != 0 {
            return Err(NumError::ShapeMismatch {
                op: "weight_trace",
                expected: format!("multiple of width {n}"),
                got: format!("{}", x.len()),
            });
        }
        (0..x.len() / n)
            .map(|t| Ok(self.score_features(&x[t * n..(t + 1) * n])?.weights))
            .collect()
    }
}

/// Pre-softmax scores and softmax weights for one feature row.
#[derive(Debug, Clone)]
pub struct FeatureScores<S> {
    pub scores: Vec<S>,
    pub weights: Vec<S>,
}

/// Tape plus the node handles the trainer and the dump tools need.
pub struct ForwardArtifacts<S> {
    pub tape: Tape<S>,
    /// One scalar node per future step.
    pub predictions: Vec<NodeId>,
    /// Pre-softmax feature scores per window row.
    pub feature_scores: Vec<NodeId>,
    /// Softmax feature weights per window row.
    pub feature_weights: Vec<NodeId>,
    /// Hour-level attention weights per future step (length hist_len each).
    pub attn_weights: Vec<NodeId>,
    pub day_weights: SimilarDayWeights<S>,
    /// Concatenated encoder hidden states per historical step.
    pub encoder_states: Vec<NodeId>,
    /// `(parameter index, leaf node)` for every gradient-bearing parameter.
    pub param_nodes: Vec<(usize, NodeId)>,
}

impl<S: Scalar> ForwardArtifacts<S> {
    pub fn prediction_values(&self) -> Vec<S> {
        self.predictions
            .iter()
            .map(|&id| self.tape.value(id)[0])
            .collect()
    }

    pub fn weight_rows(&self) -> Vec<Vec<S>> {
        self.feature_weights
            .iter()
            .map(|&id| self.tape.value(id).to_vec())
            .collect()
    }

    pub fn attention_rows(&self) -> Vec<Vec<S>> {
        self.attn_weights
            .iter()
            .map(|&id| self.tape.value(id).to_vec())
            .collect()
    }

    pub fn encoder_rows(&self) -> Vec<Vec<S>> {
        self.encoder_states
            .iter()
            .map(|&id| self.tape.value(id).to_vec())
            .collect()
    }
}

/// A compact configuration used by tests: every dimension small.
pub fn tiny_config(cell: CellKind) -> ModelConfig {
    ModelConfig {
        cell,
        input_width: 5,
        hidden: 4,
        fw_hidden: 3,
        att_hidden: 3,
        out_hidden: 3,
        days: 3,
        day_len: 4,
        weighter_bias: true,
        penalty: PenaltyMode::AlphaL1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_window(cfg: &ModelConfig, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..cfg.window_len() * cfg.input_width)
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        let y: Vec<f64> = (0..cfg.hist_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn zero_model_outputs_zero() {
        let cfg = tiny_config(CellKind::Lstm);
        let model = ForecastModel::<f64>::zeroed(cfg.clone()).unwrap();
        let (x, y) = random_window(&cfg, 1);
        let out = model.forecast_std(&x, &y).unwrap();
        assert_eq!(out.len(), cfg.future_len());
        for v in out {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn zero_inputs_give_zero_encoder_states() {
        for cell in [CellKind::Rnn, CellKind::Gru, CellKind::Lstm] {
            let cfg = tiny_config(cell);
            let model = ForecastModel::<f64>::zeroed(cfg.clone()).unwrap();
            let x = vec![0.0; cfg.window_len() * cfg.input_width];
            let y = vec![0.0; cfg.hist_len()];
            let art = model.forward(&x, &y, false).unwrap();
            for row in art.encoder_rows() {
                assert!(row.iter().all(|&v| v == 0.0), "{}", cell.label());
            }
        }
    }

    #[test]
    fn forecast_is_deterministic() {
        let cfg = tiny_config(CellKind::Gru);
        let model = ForecastModel::<f64>::new(cfg.clone(), 42).unwrap();
        let (x, y) = random_window(&cfg, 2);
        let a = model.forecast_std(&x, &y).unwrap();
        let b = model.forecast_std(&x, &y).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = tiny_config(CellKind::Lstm);
        let a = ForecastModel::<f64>::new(cfg.clone(), 9).unwrap();
        let b = ForecastModel::<f64>::new(cfg.clone(), 9).unwrap();
        assert_eq!(a.params.checksum(), b.params.checksum());
        let c = ForecastModel::<f64>::new(cfg, 10).unwrap();
        assert_ne!(a.params.checksum(), c.params.checksum());
    }

    #[test]
    fn zero_weighter_gives_uniform_weights() {
        let cfg = tiny_config(CellKind::Rnn);
        let model = ForecastModel::<f64>::zeroed(cfg.clone()).unwrap();
        let row = vec![0.4, -0.2, 1.0, 0.0, 2.0];
        let fs = model.score_features(&row).unwrap();
        for w in fs.weights {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_feature_weight_is_one() {
        let mut cfg = tiny_config(CellKind::Rnn);
        cfg.input_width = 1;
        let model = ForecastModel::<f64>::new(cfg, 3).unwrap();
        let fs = model.score_features(&[0.7]).unwrap();
        assert_eq!(fs.weights, vec![1.0]);
    }

    #[test]
    fn engineered_scores_give_closed_form_weights() {
        // Zero maps plus bias (0, ln 2) force scores (0, ln 2).
        let mut cfg = tiny_config(CellKind::Rnn);
        cfg.input_width = 2;
        let mut model = ForecastModel::<f64>::zeroed(cfg).unwrap();
        model.set_param("fw.bv", vec![0.0, 2.0f64.ln()]);
        let fs = model.score_features(&[1.0, 1.0]).unwrap();
        assert!((fs.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((fs.weights[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn score_shift_leaves_weights_unchanged() {
        let mut cfg = tiny_config(CellKind::Rnn);
        cfg.input_width = 3;
        let mut model = ForecastModel::<f64>::new(cfg, 5).unwrap();
        let row = vec![0.3, -0.8, 0.5];
        let before = model.score_features(&row).unwrap();
        // Shift every score by a constant through the output bias.
        let bv = model.params.by_name("fw.bv").unwrap().tensor.data().to_vec();
        model.set_param("fw.bv", bv.iter().map(|v| v + 7.5).collect());
        let after = model.score_features(&row).unwrap();
        for (a, b) in before.weights.iter().zip(&after.weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_vary_with_input() {
        let cfg = tiny_config(CellKind::Rnn);
        let model = ForecastModel::<f64>::new(cfg, 8).unwrap();
        let a = model.score_features(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let b = model.score_features(&[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let diff: f64 = a
            .weights
            .iter()
            .zip(&b.weights)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-9, "weights identical across distinct inputs");
    }

    #[test]
    fn weight_trace_rows_sum_to_one_and_repeat() {
        let cfg = tiny_config(CellKind::Rnn);
        let model = ForecastModel::<f64>::new(cfg.clone(), 4).unwrap();
        let row = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut x = Vec::new();
        for _ in 0..6 {
            x.extend_from_slice(&row);
        }
        let trace = model.weight_trace(&x).unwrap();
        assert_eq!(trace.len(), 6);
        for r in &trace {
            let s: f64 = r.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            for (a, b) in r.iter().zip(&trace[0]) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn uniform_attention_under_zero_scores() {
        // Zero attention map: scores all zero, so weights are 1 / hist_len.
        let cfg = tiny_config(CellKind::Gru);
        let mut model = ForecastModel::<f64>::new(cfg.clone(), 21).unwrap();
        let t_h = cfg.hist_len();
        model.set_param("att.v", vec![0.0; t_h * cfg.att_hidden]);
        model.set_param("att.bv", vec![0.0; t_h]);
        let (x, y) = random_window(&cfg, 3);
        let art = model.forward(&x, &y, false).unwrap();
        for row in art.attention_rows() {
            for w in row {
                assert!((w - 1.0 / t_h as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn concentrated_scores_give_one_hot_attention() {
        let cfg = tiny_config(CellKind::Gru);
        let mut model = ForecastModel::<f64>::new(cfg.clone(), 22).unwrap();
        let t_h = cfg.hist_len();
        model.set_param("att.v", vec![0.0; t_h * cfg.att_hidden]);
        let mut bias = vec![0.0; t_h];
        bias[5] = 50.0;
        model.set_param("att.bv", bias);
        let (x, y) = random_window(&cfg, 4);
        let art = model.forward(&x, &y, false).unwrap();
        for row in art.attention_rows() {
            assert!(row[5] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        for cell in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru] {
            let cfg = tiny_config(cell);
            let model = ForecastModel::<f64>::new(cfg.clone(), 23).unwrap();
            let (x, y) = random_window(&cfg, 5);
            let art = model.forward(&x, &y, false).unwrap();
            assert_eq!(art.attention_rows().len(), cfg.future_len());
            for row in art.attention_rows() {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
            let gsum: f64 = art.day_weights.weights.iter().sum();
            assert!((gsum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_single_step_window() {
        // One day of one point: the encoder sees a single input and the
        // decoder runs exactly one attention evaluation and one step each way.
        let cfg = ModelConfig {
            cell: CellKind::Lstm,
            input_width: 3,
            hidden: 2,
            fw_hidden: 2,
            att_hidden: 2,
            out_hidden: 2,
            days: 1,
            day_len: 1,
            weighter_bias: true,
            penalty: PenaltyMode::AlphaL1,
        };
        let model = ForecastModel::<f64>::new(cfg.clone(), 6).unwrap();
        let (x, y) = random_window(&cfg, 7);
        let art = model.forward(&x, &y, false).unwrap();
        assert_eq!(art.predictions.len(), 1);
        assert_eq!(art.attn_weights.len(), 1);
        assert_eq!(art.tape.value(art.attn_weights[0]), &[1.0]);
        // With one historical position the context equals that encoder state.
        let ctx_expected = art.encoder_rows()[0].clone();
        assert_eq!(ctx_expected.len(), 2 * cfg.hidden);
    }

    #[test]
    fn output_head_zero_map_and_relu_kill() {
        let cfg = tiny_config(CellKind::Rnn);
        let mut model = ForecastModel::<f64>::new(cfg.clone(), 30).unwrap();
        // Zero head: output equals the output bias (zero here).
        model.set_param("head.w", vec![0.0; cfg.out_hidden * 2 * cfg.hidden]);
        model.set_param("head.bw", vec![0.0; cfg.out_hidden]);
        model.set_param("head.v", vec![0.0; cfg.out_hidden]);
        model.set_param("head.bv", vec![0.0]);
        let (x, y) = random_window(&cfg, 8);
        for v in model.forecast_std(&x, &y).unwrap() {
            assert_eq!(v, 0.0);
        }
        // Strongly negative pre-activation: ReLU kills everything and the
        // output equals the output bias.
        model.set_param("head.bw", vec![-100.0; cfg.out_hidden]);
        model.set_param("head.v", vec![3.0; cfg.out_hidden]);
        model.set_param("head.bv", vec![1.25]);
        for v in model.forecast_std(&x, &y).unwrap() {
            assert!((v - 1.25).abs() < 1e-15);
        }
    }

    #[test]
    fn f32_instantiation_works() {
        let cfg = tiny_config(CellKind::Gru);
        let model = ForecastModel::<f32>::new(cfg.clone(), 12).unwrap();
        let x = vec![0.1f32; cfg.window_len() * cfg.input_width];
        let y = vec![0.0f32; cfg.hist_len()];
        let out = model.forecast_std(&x, &y).unwrap();
        assert_eq!(out.len(), cfg.future_len());
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let cfg = tiny_config(CellKind::Rnn);
        let model = ForecastModel::<f64>::new(cfg.clone(), 13).unwrap();
        let (mut x, y) = random_window(&cfg, 9);
        x[3] = f64::NAN;
        assert!(matches!(
            model.forward(&x, &y, false),
            Err(NumError::NonFinite { .. })
        ));
    }
}
