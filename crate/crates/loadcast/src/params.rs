//! Named parameter registry with per-group trainability flags.

use crate::scalar::Scalar;
use crate::tensor::{fnv_bytes, fnv_init, fnv_u64, Tensor};

/// Logical parameter group; freezing and checksums operate per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Weighter,
    EncoderFwd,
    EncoderBwd,
    DecoderFwd,
    DecoderBwd,
    Attention,
    Head,
}

impl ParamGroup {
    pub fn all() -> [ParamGroup; 7] {
        [
            ParamGroup::Weighter,
            ParamGroup::EncoderFwd,
            ParamGroup::EncoderBwd,
            ParamGroup::DecoderFwd,
            ParamGroup::DecoderBwd,
            ParamGroup::Attention,
            ParamGroup::Head,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            ParamGroup::Weighter => "weighter",
            ParamGroup::EncoderFwd => "encoder_fwd",
            ParamGroup::EncoderBwd => "encoder_bwd",
            ParamGroup::DecoderFwd => "decoder_fwd",
            ParamGroup::DecoderBwd => "decoder_bwd",
            ParamGroup::Attention => "attention",
            ParamGroup::Head => "head",
        }
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct Param<S> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: Tensor<S>,
    pub trainable: bool,
}

/// Ordered collection of named parameters. Insertion order is stable and
/// drives optimizer slots, checkpoint layout and RNG initialization order.
#[derive(Debug, Clone)]
pub struct ParamStore<S> {
    entries: Vec<Param<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new() }
    }

    pub fn add(&mut self, name: &str, group: ParamGroup, tensor: Tensor<S>) -> usize {
        assert!(
            self.index(name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.entries.push(Param {
            name: name.to_string(),
            group,
            tensor,
            trainable: true,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, idx: usize) -> &Param<S> {
        &self.entries[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param<S> {
        &mut self.entries[idx]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<S>> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.entries.iter_mut()
    }

    /// Indices of trainable entries, in insertion order.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, p)| p.trainable)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn set_group_trainable(&mut self, group: ParamGroup, trainable: bool) {
        for p in self.entries.iter_mut().filter(|p| p.group == group) {
            p.trainable = trainable;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.tensor.zero_grad();
        }
    }

    pub fn scale_grads(&mut self, scale: S) {
        for p in &mut self.entries {
            if p.tensor.grad().is_some() {
                for g in p.tensor.grad_mut() {
                    *g *= scale;
                }
            }
        }
    }

    /// Global L2 norm of all trainable gradients.
    pub fn grad_norm(&self) -> f64 {
        let mut sq = 0.0;
        for p in self.entries.iter().filter(|p| p.trainable) {
            if let Some(g) = p.tensor.grad() {
                for v in g {
                    let x = v.as_f64();
                    sq += x * x;
                }
            }
        }
        sq.sqrt()
    }

    /// Bit-exact checksum over names, shapes and values of every entry.
    pub fn checksum(&self) -> u64 {
        let mut h = fnv_init();
        for p in &self.entries {
            h = fnv_bytes(h, p.name.as_bytes());
            h = fnv_u64(h, p.tensor.checksum());
        }
        h
    }

    /// Checksum restricted to one group.
    pub fn group_checksum(&self, group: ParamGroup) -> u64 {
        let mut h = fnv_init();
        for p in self.entries.iter().filter(|p| p.group == group) {
            h = fnv_bytes(h, p.name.as_bytes());
            h = fnv_u64(h, p.tensor.checksum());
        }
        h
    }
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        ParamStore::new()
    }
}
