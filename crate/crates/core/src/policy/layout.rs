use serde::{Deserialize, Serialize};

use super::ModelConfig;

/// One named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Matrices get weight decay; vectors (biases, norm gains) do not.
    pub fn decays(&self) -> bool {
        self.shape.len() == 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wqkv: usize,
    pub bqkv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Where every tensor lives in the flat buffer, in manifest order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) blocks: Vec<BlockOffsets>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub(crate) head_w: usize,
    pub(crate) head_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut off = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let o = off;
            off += shape.iter().product::<usize>();
            specs.push(TensorSpec { name, shape, offset: o });
            o
        };
        let (d, f, v) = (c.embed_dim, c.ff_dim, c.vocab_size);
        let wte = add("wte".into(), vec![v, d]);
        let wpe = add("wpe".into(), vec![c.context_length, d]);
        let mut blocks = Vec::new();
        for l in 0..c.layers {
            let p = |s: &str| format!("h{l}.{s}");
            blocks.push(BlockOffsets {
                ln1_g: add(p("ln1.g"), vec![d]),
                ln1_b: add(p("ln1.b"), vec![d]),
                wqkv: add(p("attn.wqkv"), vec![d, 3 * d]),
                bqkv: add(p("attn.bqkv"), vec![3 * d]),
                wo: add(p("attn.wo"), vec![d, d]),
                bo: add(p("attn.bo"), vec![d]),
                ln2_g: add(p("ln2.g"), vec![d]),
                ln2_b: add(p("ln2.b"), vec![d]),
                w1: add(p("mlp.w1"), vec![d, f]),
                b1: add(p("mlp.b1"), vec![f]),
                w2: add(p("mlp.w2"), vec![f, d]),
                b2: add(p("mlp.b2"), vec![d]),
            });
        }
        let lnf_g = add("lnf.g".into(), vec![d]);
        let lnf_b = add("lnf.b".into(), vec![d]);
        let head_w = add("head.w".into(), vec![d, v]);
        let head_b = add("head.b".into(), vec![v]);
        Layout {
            specs,
            wte,
            wpe,
            blocks,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            len: off,
        }
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Per-element weight-decay flags.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len];
        for s in &self.specs {
            if s.decays() {
                m[s.offset..s.offset + s.numel()].fill(true);
            }
        }
        m
    }
}
