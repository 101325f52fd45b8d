use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::layers::{
    AdaptationParams, AttentionParams, BalancingParams, EncoderParams, FeedForwardParams,
    LayerNormParams,
};
use super::tensor::Mat;

/// Input projection of one modality plus learned positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InputParams {
    pub proj: Mat,
    pub bias: Mat,
    pub pos: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub sem: EncoderParams,
    pub seq: EncoderParams,
}

/// Every learnable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub token_embedding: Mat,
    pub sem_input: InputParams,
    pub seq_input: InputParams,
    pub layers: Vec<LayerParams>,
    pub sem_balance: BalancingParams,
    pub seq_balance: BalancingParams,
    pub final_norm: LayerNormParams,
    pub classifier: Mat,
    pub classifier_bias: Mat,
}

const EMBED_STD: f64 = 0.02;

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Mat {
        let d = Normal::new(0.0, std).expect("valid std");
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| d.sample(&mut self.rng)).collect())
    }

    /// Glorot-normal weight matrix.
    fn weight(&mut self, rows: usize, cols: usize) -> Mat {
        self.normal(rows, cols, (2.0 / (rows + cols) as f64).sqrt())
    }

    fn encoder(&mut self, c: &ModelConfig, nodes: usize) -> EncoderParams {
        let k = c.hidden;
        EncoderParams {
            attn: AttentionParams {
                wq: self.weight(k, k),
                wk: self.weight(k, k),
                wc: self.weight(k, k),
                wo: self.weight(k, k),
            },
            norm1: LayerNormParams::new(k),
            ffn: FeedForwardParams {
                w1: self.weight(k, c.ffn_inner),
                b1: Mat::zeros(1, c.ffn_inner),
                w2: self.weight(c.ffn_inner, k),
                b2: Mat::zeros(1, k),
            },
            norm2: LayerNormParams::new(k),
            adapt: AdaptationParams {
                high: self.weight(k, 2 * k),
                low: self.weight(nodes, 2 * k),
                norm: LayerNormParams::new(k),
            },
        }
    }

    fn balance(&mut self, c: &ModelConfig) -> BalancingParams {
        let k = c.hidden;
        BalancingParams {
            high: self.weight(k, 2 * k),
            node: self.weight(1, 2 * k),
            proj: self.weight(k, c.latent),
            proj_bias: Mat::zeros(1, c.latent),
        }
    }
}

impl Parameters {
    /// Seeded initialisation. The PAD row of the token table is zero.
    pub fn init(c: &ModelConfig) -> Self {
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(c.seed),
        };
        let k = c.hidden;
        let mut token_embedding = init.normal(c.vocab_size, c.d_word, EMBED_STD);
        token_embedding.row_mut(0).fill(0.0);
        let sem_input = InputParams {
            proj: init.weight(c.d_word, k),
            bias: Mat::zeros(1, k),
            pos: init.normal(c.l_sem, k, EMBED_STD),
        };
        let seq_input = InputParams {
            proj: init.weight(c.d_event, k),
            bias: Mat::zeros(1, k),
            pos: init.normal(c.l_seq, k, EMBED_STD),
        };
        let layers = (0..c.layers)
            .map(|_| LayerParams {
                sem: init.encoder(c, c.l_sem),
                seq: init.encoder(c, c.l_seq),
            })
            .collect();
        Parameters {
            token_embedding,
            sem_input,
            seq_input,
            layers,
            sem_balance: init.balance(c),
            seq_balance: init.balance(c),
            final_norm: LayerNormParams::new(c.latent),
            classifier: init.weight(c.latent, c.n_classes),
            classifier_bias: Mat::zeros(1, c.n_classes),
        }
    }

    /// Zero tensors with the shapes implied by `c`.
    pub fn init_shapes(c: &ModelConfig) -> Self {
        Parameters::init(c).zeros_like()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Mat)> {
        let mut out: Vec<(String, &Mat)> = Vec::new();
        out.push(("token_embedding".into(), &self.token_embedding));
        for (name, p) in [("sem_input", &self.sem_input), ("seq_input", &self.seq_input)] {
            out.push((format!("{name}.proj"), &p.proj));
            out.push((format!("{name}.bias"), &p.bias));
            out.push((format!("{name}.pos"), &p.pos));
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (m, e) in [("sem", &l.sem), ("seq", &l.seq)] {
                let p = format!("layers.{i}.{m}");
                out.push((format!("{p}.attn.wq"), &e.attn.wq));
                out.push((format!("{p}.attn.wk"), &e.attn.wk));
                out.push((format!("{p}.attn.wc"), &e.attn.wc));
                out.push((format!("{p}.attn.wo"), &e.attn.wo));
                out.push((format!("{p}.norm1.gain"), &e.norm1.gain));
                out.push((format!("{p}.norm1.bias"), &e.norm1.bias));
                out.push((format!("{p}.ffn.w1"), &e.ffn.w1));
                out.push((format!("{p}.ffn.b1"), &e.ffn.b1));
                out.push((format!("{p}.ffn.w2"), &e.ffn.w2));
                out.push((format!("{p}.ffn.b2"), &e.ffn.b2));
                out.push((format!("{p}.norm2.gain"), &e.norm2.gain));
                out.push((format!("{p}.norm2.bias"), &e.norm2.bias));
                out.push((format!("{p}.adapt.high"), &e.adapt.high));
                out.push((format!("{p}.adapt.low"), &e.adapt.low));
                out.push((format!("{p}.adapt.norm.gain"), &e.adapt.norm.gain));
                out.push((format!("{p}.adapt.norm.bias"), &e.adapt.norm.bias));
            }
        }
        for (name, b) in [("sem_balance", &self.sem_balance), ("seq_balance", &self.seq_balance)] {
            out.push((format!("{name}.high"), &b.high));
            out.push((format!("{name}.node"), &b.node));
            out.push((format!("{name}.proj"), &b.proj));
            out.push((format!("{name}.proj_bias"), &b.proj_bias));
        }
        out.push(("final_norm.gain".into(), &self.final_norm.gain));
        out.push(("final_norm.bias".into(), &self.final_norm.bias));
        out.push(("classifier".into(), &self.classifier));
        out.push(("classifier_bias".into(), &self.classifier_bias));
        out
    }

    /// Mutable tensors in the same order as [`named`](Self::named).
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out: Vec<&mut Mat> = vec![&mut self.token_embedding];
        for p in [&mut self.sem_input, &mut self.seq_input] {
            out.extend([&mut p.proj, &mut p.bias, &mut p.pos]);
        }
        for l in &mut self.layers {
            for e in [&mut l.sem, &mut l.seq] {
                out.extend([
                    &mut e.attn.wq,
                    &mut e.attn.wk,
                    &mut e.attn.wc,
                    &mut e.attn.wo,
                    &mut e.norm1.gain,
                    &mut e.norm1.bias,
                    &mut e.ffn.w1,
                    &mut e.ffn.b1,
                    &mut e.ffn.w2,
                    &mut e.ffn.b2,
                    &mut e.norm2.gain,
                    &mut e.norm2.bias,
                    &mut e.adapt.high,
                    &mut e.adapt.low,
                    &mut e.adapt.norm.gain,
                    &mut e.adapt.norm.bias,
                ]);
            }
        }
        for b in [&mut self.sem_balance, &mut self.seq_balance] {
            out.extend([&mut b.high, &mut b.node, &mut b.proj, &mut b.proj_bias]);
        }
        out.extend([
            &mut self.final_norm.gain,
            &mut self.final_norm.bias,
            &mut self.classifier,
            &mut self.classifier_bias,
        ]);
        out
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.named()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<String> {
        self.named()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }

    /// Overwrite token rows from pretrained vectors (`None` rows keep their
    /// random init). Row 0 stays zero.
    pub fn load_token_vectors(&mut self, rows: &[Option<Vec<f64>>]) {
        for (i, row) in rows.iter().enumerate().skip(1) {
            if let Some(v) = row {
                if i < self.token_embedding.rows && v.len() == self.token_embedding.cols {
                    self.token_embedding.row_mut(i).copy_from_slice(v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            d_word: 6,
            d_event: 5,
            hidden: 8,
            heads: 2,
            layers: 2,
            ffn_inner: 16,
            latent: 12,
            l_sem: 4,
            l_seq: 3,
            vocab_size: 20,
            ..Default::default()
        }
    }

    #[test]
    fn names_and_mut_order_agree() {
        let mut p = Parameters::init(&cfg());
        let shapes: Vec<(usize, usize)> = p.named().iter().map(|(_, t)| t.shape()).collect();
        let names: Vec<String> = p.named().into_iter().map(|(n, _)| n).collect();
        let mut_shapes: Vec<(usize, usize)> = p.tensors_mut().iter().map(|t| t.shape()).collect();
        assert_eq!(shapes, mut_shapes);
        let unique: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        assert_eq!(names.len(), 1 + 6 + 2 * 2 * 16 + 8 + 4);
    }

    #[test]
    fn shapes_follow_config() {
        let c = cfg();
        let p = Parameters::init(&c);
        assert_eq!(p.token_embedding.shape(), (20, 6));
        assert!(p.token_embedding.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(p.layers[0].sem.adapt.low.shape(), (4, 16));
        assert_eq!(p.layers[0].seq.adapt.low.shape(), (3, 16));
        assert_eq!(p.layers[1].sem.adapt.high.shape(), (8, 16));
        assert_eq!(p.sem_balance.node.shape(), (1, 16));
        assert_eq!(p.classifier.shape(), (12, 2));
        assert!(p.first_non_finite().is_none());
    }

    #[test]
    fn init_is_seeded() {
        let a = Parameters::init(&cfg());
        assert_eq!(a, Parameters::init(&cfg()));
        let mut c = cfg();
        c.seed = 1;
        assert_ne!(a, Parameters::init(&c));
    }
}
