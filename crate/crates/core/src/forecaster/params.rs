//! Weight containers, generic over the storage type so the same structure
//! holds plain [`Tensor`]s (the model) and tape [`Var`]s (one forward pass).
//! `visit`/`visit_mut`/`map` traverse in one canonical order, which is what
//! keeps checkpoints, gradients, and optimizer state aligned.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub w: T,
    pub b: T,
}

#[derive(Debug, Clone)]
pub struct Attention<T> {
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
}

#[derive(Debug, Clone)]
pub struct LayerNorm<T> {
    pub gain: T,
    pub bias: T,
}

#[derive(Debug, Clone)]
pub struct EncoderLayer<T> {
    pub attn: Attention<T>,
    pub ln1: LayerNorm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub ln2: LayerNorm<T>,
}

#[derive(Debug, Clone)]
pub struct DecoderLayer<T> {
    pub self_attn: Attention<T>,
    pub ln1: LayerNorm<T>,
    pub cross_attn: Attention<T>,
    pub ln2: LayerNorm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
    pub ln3: LayerNorm<T>,
}

/// Student-t distribution head: location, scale, and degrees-of-freedom
/// projections.
#[derive(Debug, Clone)]
pub struct Head<T> {
    pub loc: Linear<T>,
    pub scale: Linear<T>,
    pub dof: Linear<T>,
}

#[derive(Debug, Clone)]
pub struct TransformerWeights<T> {
    pub static_embedding: T,
    pub encoder_input: Linear<T>,
    pub decoder_input: Linear<T>,
    pub encoder: Vec<EncoderLayer<T>>,
    pub decoder: Vec<DecoderLayer<T>>,
    pub head: Head<T>,
}

/// One gate of a GRU cell.
#[derive(Debug, Clone)]
pub struct Gate<T> {
    pub wx: T,
    pub wh: T,
    pub b: T,
}

#[derive(Debug, Clone)]
pub struct GruWeights<T> {
    pub static_embedding: T,
    pub update: Gate<T>,
    pub reset: Gate<T>,
    pub candidate: Gate<T>,
    pub head: Head<T>,
}

impl<T> Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Linear<U> {
        Linear {
            w: f(&self.w),
            b: f(&self.b),
        }
    }
}

impl<T> Attention<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.wq"), &self.wq);
        f(format!("{prefix}.wk"), &self.wk);
        f(format!("{prefix}.wv"), &self.wv);
        f(format!("{prefix}.wo"), &self.wo);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        f(format!("{prefix}.wq"), &mut self.wq);
        f(format!("{prefix}.wk"), &mut self.wk);
        f(format!("{prefix}.wv"), &mut self.wv);
        f(format!("{prefix}.wo"), &mut self.wo);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Attention<U> {
        Attention {
            wq: f(&self.wq),
            wk: f(&self.wk),
            wv: f(&self.wv),
            wo: f(&self.wo),
        }
    }
}

impl<T> LayerNorm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.gain"), &self.gain);
        f(format!("{prefix}.bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        f(format!("{prefix}.gain"), &mut self.gain);
        f(format!("{prefix}.bias"), &mut self.bias);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> LayerNorm<U> {
        LayerNorm {
            gain: f(&self.gain),
            bias: f(&self.bias),
        }
    }
}

impl<T> EncoderLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.attn.visit(&format!("{prefix}.attn"), f);
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.ff1.visit(&format!("{prefix}.ff1"), f);
        self.ff2.visit(&format!("{prefix}.ff2"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        self.attn.visit_mut(&format!("{prefix}.attn"), f);
        self.ln1.visit_mut(&format!("{prefix}.ln1"), f);
        self.ff1.visit_mut(&format!("{prefix}.ff1"), f);
        self.ff2.visit_mut(&format!("{prefix}.ff2"), f);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), f);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EncoderLayer<U> {
        EncoderLayer {
            attn: self.attn.map(f),
            ln1: self.ln1.map(f),
            ff1: self.ff1.map(f),
            ff2: self.ff2.map(f),
            ln2: self.ln2.map(f),
        }
    }
}

impl<T> DecoderLayer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.self_attn.visit(&format!("{prefix}.self_attn"), f);
        self.ln1.visit(&format!("{prefix}.ln1"), f);
        self.cross_attn.visit(&format!("{prefix}.cross_attn"), f);
        self.ln2.visit(&format!("{prefix}.ln2"), f);
        self.ff1.visit(&format!("{prefix}.ff1"), f);
        self.ff2.visit(&format!("{prefix}.ff2"), f);
        self.ln3.visit(&format!("{prefix}.ln3"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        self.self_attn.visit_mut(&format!("{prefix}.self_attn"), f);
        self.ln1.visit_mut(&format!("{prefix}.ln1"), f);
        self.cross_attn.visit_mut(&format!("{prefix}.cross_attn"), f);
        self.ln2.visit_mut(&format!("{prefix}.ln2"), f);
        self.ff1.visit_mut(&format!("{prefix}.ff1"), f);
        self.ff2.visit_mut(&format!("{prefix}.ff2"), f);
        self.ln3.visit_mut(&format!("{prefix}.ln3"), f);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> DecoderLayer<U> {
        DecoderLayer {
            self_attn: self.self_attn.map(f),
            ln1: self.ln1.map(f),
            cross_attn: self.cross_attn.map(f),
            ln2: self.ln2.map(f),
            ff1: self.ff1.map(f),
            ff2: self.ff2.map(f),
            ln3: self.ln3.map(f),
        }
    }
}

impl<T> Head<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.loc.visit(&format!("{prefix}.loc"), f);
        self.scale.visit(&format!("{prefix}.scale"), f);
        self.dof.visit(&format!("{prefix}.dof"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        self.loc.visit_mut(&format!("{prefix}.loc"), f);
        self.scale.visit_mut(&format!("{prefix}.scale"), f);
        self.dof.visit_mut(&format!("{prefix}.dof"), f);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Head<U> {
        Head {
            loc: self.loc.map(f),
            scale: self.scale.map(f),
            dof: self.dof.map(f),
        }
    }
}

impl<T> TransformerWeights<T> {
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        f("static_embedding".to_string(), &self.static_embedding);
        self.encoder_input.visit("encoder_input", f);
        self.decoder_input.visit("decoder_input", f);
        for (i, layer) in self.encoder.iter().enumerate() {
            layer.visit(&format!("encoder.{i}"), f);
        }
        for (i, layer) in self.decoder.iter().enumerate() {
            layer.visit(&format!("decoder.{i}"), f);
        }
        self.head.visit("head", f);
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut T)) {
        f("static_embedding".to_string(), &mut self.static_embedding);
        self.encoder_input.visit_mut("encoder_input", f);
        self.decoder_input.visit_mut("decoder_input", f);
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("encoder.{i}"), f);
        }
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            layer.visit_mut(&format!("decoder.{i}"), f);
        }
        self.head.visit_mut("head", f);
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> TransformerWeights<U> {
        TransformerWeights {
            static_embedding: f(&self.static_embedding),
            encoder_input: self.encoder_input.map(f),
            decoder_input: self.decoder_input.map(f),
            encoder: self.encoder.iter().map(|l| l.map(f)).collect(),
            decoder: self.decoder.iter().map(|l| l.map(f)).collect(),
            head: self.head.map(f),
        }
    }
}

impl<T> Gate<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.wx"), &self.wx);
        f(format!("{prefix}.wh"), &self.wh);
        f(format!("{prefix}.b"), &self.b);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(String, &'a mut T)) {
        f(format!("{prefix}.wx"), &mut self.wx);
        f(format!("{prefix}.wh"), &mut self.wh);
        f(format!("{prefix}.b"), &mut self.b);
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Gate<U> {
        Gate {
            wx: f(&self.wx),
            wh: f(&self.wh),
            b: f(&self.b),
        }
    }
}

impl<T> GruWeights<T> {
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        f("static_embedding".to_string(), &self.static_embedding);
        self.update.visit("update", f);
        self.reset.visit("reset", f);
        self.candidate.visit("candidate", f);
        self.head.visit("head", f);
    }

    pub fn visit_mut<'a>(&'a mut self, f: &mut impl FnMut(String, &'a mut T)) {
        f("static_embedding".to_string(), &mut self.static_embedding);
        self.update.visit_mut("update", f);
        self.reset.visit_mut("reset", f);
        self.candidate.visit_mut("candidate", f);
        self.head.visit_mut("head", f);
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> GruWeights<U> {
        GruWeights {
            static_embedding: f(&self.static_embedding),
            update: self.update.map(f),
            reset: self.reset.map(f),
            candidate: self.candidate.map(f),
            head: self.head.map(f),
        }
    }
}

// ---- initialization ---------------------------------------------------------

pub(crate) fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("xavier shape")
}

pub(crate) fn init_linear(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Linear<Tensor> {
    Linear {
        w: xavier(rng, din, dout),
        b: Tensor::zeros(&[dout]),
    }
}

pub(crate) fn init_attention(rng: &mut ChaCha8Rng, d: usize) -> Attention<Tensor> {
    Attention {
        wq: xavier(rng, d, d),
        wk: xavier(rng, d, d),
        wv: xavier(rng, d, d),
        wo: xavier(rng, d, d),
    }
}

pub(crate) fn init_layer_norm(d: usize) -> LayerNorm<Tensor> {
    LayerNorm {
        gain: Tensor::full(&[d], 1.0),
        bias: Tensor::zeros(&[d]),
    }
}

pub(crate) fn init_head(rng: &mut ChaCha8Rng, d: usize) -> Head<Tensor> {
    Head {
        loc: init_linear(rng, d, 1),
        scale: init_linear(rng, d, 1),
        dof: init_linear(rng, d, 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn visit_and_map_share_one_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = TransformerWeights {
            static_embedding: xavier(&mut rng, 3, 2),
            encoder_input: init_linear(&mut rng, 5, 4),
            decoder_input: init_linear(&mut rng, 4, 4),
            encoder: vec![EncoderLayer {
                attn: init_attention(&mut rng, 4),
                ln1: init_layer_norm(4),
                ff1: init_linear(&mut rng, 4, 8),
                ff2: init_linear(&mut rng, 8, 4),
                ln2: init_layer_norm(4),
            }],
            decoder: vec![DecoderLayer {
                self_attn: init_attention(&mut rng, 4),
                ln1: init_layer_norm(4),
                cross_attn: init_attention(&mut rng, 4),
                ln2: init_layer_norm(4),
                ff1: init_linear(&mut rng, 4, 8),
                ff2: init_linear(&mut rng, 8, 4),
                ln3: init_layer_norm(4),
            }],
            head: init_head(&mut rng, 4),
        };

        let mut visit_shapes = Vec::new();
        w.visit(&mut |name, t| visit_shapes.push((name, t.shape().to_vec())));

        let mut map_shapes = Vec::new();
        let mapped: TransformerWeights<Vec<usize>> = w.map(&mut |t| t.shape().to_vec());
        mapped.visit(&mut |name, shape| map_shapes.push((name, shape.clone())));

        assert_eq!(visit_shapes, map_shapes);
        assert!(visit_shapes.iter().any(|(n, _)| n == "encoder.0.attn.wq"));
        assert!(visit_shapes.iter().any(|(n, _)| n == "head.dof.b"));
    }
}
