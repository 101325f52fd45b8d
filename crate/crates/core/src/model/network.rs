use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{
    AdaptationParams, AttentionParams, BalancingCache, DropoutMasks, EncoderCache, EncoderOptions,
    EncoderParams,
};
use super::ops::{cross_entropy, dropout_mask, softmax, LnCache};
use super::params::{InputParams, Parameters};
use super::tensor::{acc_matmul_tn, matmul, matmul_nt, Mat};
use crate::error::{Error, Result};
use crate::modality::{Batch, SampleView, PAD};
use crate::par::Exec;

/// Samples per gradient partial sum. Fixed so reductions do not depend on
/// the thread count.
pub const GRAD_CHUNK: usize = 4;

/// Multi-head attention with queries from `q_in` and keys/contexts from `kv_in`.
pub fn multi_head_attention(
    p: &AttentionParams,
    q_in: &Mat,
    kv_in: &Mat,
    key_mask: Option<&[bool]>,
    heads: usize,
) -> Mat {
    p.forward(q_in, kv_in, key_mask, heads).0
}

/// Impressed attention: queries from the own modality, keys and contexts from
/// the other one.
pub fn mhia(
    p: &AttentionParams,
    own: &Mat,
    other: &Mat,
    other_mask: Option<&[bool]>,
    heads: usize,
) -> Mat {
    multi_head_attention(p, own, other, other_mask, heads)
}

/// Modality adaptation layer.
pub fn mal(p: &AdaptationParams, v: &Mat, mask: Option<&[bool]>) -> Mat {
    p.forward(v, mask).0
}

/// One encoder without dropout.
pub fn encoder_layer(
    p: &EncoderParams,
    own: &Mat,
    other: &Mat,
    own_mask: Option<&[bool]>,
    other_mask: Option<&[bool]>,
    opts: EncoderOptions,
) -> Mat {
    p.forward(own, other, own_mask, other_mask, opts, DropoutMasks::default())
        .0
}

/// Pooled and projected modality outputs for every sample, `B × latent` each.
pub fn collaborative_forward(model: &Model, batch: &Batch) -> (Mat, Mat) {
    let b = batch.size();
    let latent = model.config.latent;
    let mut sem = Mat::zeros(b, latent);
    let mut seq = Mat::zeros(b, latent);
    for i in 0..b {
        let enc = model.encode(batch.view(i), None);
        sem.row_mut(i).copy_from_slice(enc.o_sem.row(0));
        seq.row_mut(i).copy_from_slice(enc.o_seq.row(0));
    }
    (sem, seq)
}

/// `LN(O_sem + O_seq) W + b`, row by row.
pub fn classify(params: &Parameters, o_sem: &Mat, o_seq: &Mat) -> Mat {
    let z = o_sem.add(o_seq);
    let (zn, _) = params.final_norm.forward(&z);
    let mut logits = matmul(&zn, &params.classifier);
    logits.add_row_vector(params.classifier_bias.row(0));
    logits
}

struct InputCache {
    x: Mat,
}

/// Intermediate state of one sample's forward pass.
pub struct Encoded {
    pub o_sem: Mat,
    pub o_seq: Mat,
    sem_in: InputCache,
    seq_in: InputCache,
    layers: Vec<(EncoderCache, EncoderCache)>,
    pub sem_pool: BalancingCache,
    pub seq_pool: BalancingCache,
}

/// Attention weights of one encoder.
#[derive(Debug, Clone)]
pub struct LayerMaps {
    /// Per-head impressed-attention weights.
    pub attention: Vec<Mat>,
    /// Adaptation-layer node weights, when the layer is enabled.
    pub adaptation: Option<Mat>,
}

/// Full forward output of one sample.
pub struct Forward {
    /// `1 × n_classes`
    pub logits: Mat,
    /// Post-norm fused representation, `1 × latent`.
    pub latent: Mat,
    pub encoded: Encoded,
    norm: LnCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

fn input_forward(p: &InputParams, x: Mat) -> (Mat, InputCache) {
    let mut h = matmul(&x, &p.proj);
    h.add_row_vector(p.bias.row(0));
    h.add_assign(&p.pos);
    (h, InputCache { x })
}

fn input_backward(p: &InputParams, dh: &Mat, cache: &InputCache, g: &mut InputParams) -> Mat {
    acc_matmul_tn(&mut g.proj, &cache.x, dh);
    dh.acc_column_sums(g.bias.row_mut(0));
    g.pos.add_assign(dh);
    matmul_nt(dh, &p.proj)
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        Ok(Model { config, params })
    }

    fn options(&self) -> EncoderOptions {
        EncoderOptions {
            heads: self.config.heads,
            impressed: self.config.impressed_attention,
            adapt: self.config.adaptation_layer,
        }
    }

    fn drop_masks(&self, rng: Option<&mut ChaCha8Rng>, rows: usize) -> DropoutMasks {
        match rng {
            Some(r) if self.config.dropout > 0.0 => {
                let len = rows * self.config.hidden;
                DropoutMasks {
                    attn: dropout_mask(r, len, self.config.dropout),
                    ffn: dropout_mask(r, len, self.config.dropout),
                }
            }
            _ => DropoutMasks::default(),
        }
    }

    fn check_view(&self, v: &SampleView<'_>) {
        let c = &self.config;
        assert_eq!(v.token_ids.len(), c.l_sem, "semantic length");
        assert_eq!(v.seq.len(), c.l_seq * c.d_event, "sequence size");
    }

    /// Both encoders and balancing layers. Dropout is active iff `rng` is given.
    pub fn encode(&self, v: SampleView<'_>, mut rng: Option<&mut ChaCha8Rng>) -> Encoded {
        self.check_view(&v);
        let c = &self.config;
        let p = &self.params;
        let mut emb = Mat::zeros(c.l_sem, c.d_word);
        for (r, &t) in v.token_ids.iter().enumerate() {
            let t = (t as usize).min(c.vocab_size - 1);
            emb.row_mut(r).copy_from_slice(p.token_embedding.row(t));
        }
        let (mut sem, sem_in) = input_forward(&p.sem_input, emb);
        let (mut seq, seq_in) =
            input_forward(&p.seq_input, Mat::from_vec(c.l_seq, c.d_event, v.seq.to_vec()));
        let opts = self.options();
        let (sm, qm) = (Some(v.sem_mask), Some(v.seq_mask));
        let mut layers = Vec::with_capacity(p.layers.len());
        for l in &p.layers {
            let d_sem = self.drop_masks(rng.as_deref_mut(), c.l_sem);
            let d_seq = self.drop_masks(rng.as_deref_mut(), c.l_seq);
            let (ns, cs) = l.sem.forward(&sem, &seq, sm, qm, opts, d_sem);
            let (nq, cq) = l.seq.forward(&seq, &sem, qm, sm, opts, d_seq);
            sem = ns;
            seq = nq;
            layers.push((cs, cq));
        }
        let attend = c.balancing_layer;
        let (o_sem, sem_pool) = p.sem_balance.forward(&sem, sm, attend);
        let (o_seq, seq_pool) = p.seq_balance.forward(&seq, qm, attend);
        Encoded {
            o_sem,
            o_seq,
            sem_in,
            seq_in,
            layers,
            sem_pool,
            seq_pool,
        }
    }

    /// Attention and adaptation weights of every layer, semantic encoder
    /// first.
    pub fn attention_maps(&self, v: SampleView<'_>) -> Vec<(LayerMaps, LayerMaps)> {
        let maps = |c: &EncoderCache| LayerMaps {
            attention: c.attn.probs.clone(),
            adaptation: c.adapt.as_ref().map(|a| a.weights.clone()),
        };
        self.encode(v, None)
            .layers
            .iter()
            .map(|(s, q)| (maps(s), maps(q)))
            .collect()
    }

    pub fn forward(&self, v: SampleView<'_>, rng: Option<&mut ChaCha8Rng>) -> Forward {
        let encoded = self.encode(v, rng);
        let z = encoded.o_sem.add(&encoded.o_seq);
        let (latent, norm) = self.params.final_norm.forward(&z);
        let mut logits = matmul(&latent, &self.params.classifier);
        logits.add_row_vector(self.params.classifier_bias.row(0));
        Forward {
            logits,
            latent,
            encoded,
            norm,
        }
    }

    /// Accumulate into `g` the gradient of the loss whose derivative with
    /// respect to the logits is `dlogits`.
    pub fn backward(&self, v: SampleView<'_>, f: &Forward, dlogits: &Mat, g: &mut Parameters) {
        let p = &self.params;
        acc_matmul_tn(&mut g.classifier, &f.latent, dlogits);
        dlogits.acc_column_sums(g.classifier_bias.row_mut(0));
        let dlatent = matmul_nt(dlogits, &p.classifier);
        let dz = p.final_norm.backward(&dlatent, &f.norm, &mut g.final_norm);
        let e = &f.encoded;
        let mut dsem = p.sem_balance.backward(&dz, &e.sem_pool, &mut g.sem_balance);
        let mut dseq = p.seq_balance.backward(&dz, &e.seq_pool, &mut g.seq_balance);
        for (i, (cs, cq)) in e.layers.iter().enumerate().rev() {
            let (l, gl) = (&p.layers[i], &mut g.layers[i]);
            let (mut ds_own, ds_other) = l.sem.backward(&dsem, cs, &mut gl.sem);
            let (mut dq_own, dq_other) = l.seq.backward(&dseq, cq, &mut gl.seq);
            if !dq_other.is_empty() {
                ds_own.add_assign(&dq_other);
            }
            if !ds_other.is_empty() {
                dq_own.add_assign(&ds_other);
            }
            dsem = ds_own;
            dseq = dq_own;
        }
        let demb = input_backward(&p.sem_input, &dsem, &e.sem_in, &mut g.sem_input);
        input_backward(&p.seq_input, &dseq, &e.seq_in, &mut g.seq_input);
        let vocab = self.config.vocab_size;
        for (r, &t) in v.token_ids.iter().enumerate() {
            if t == PAD {
                continue;
            }
            let t = (t as usize).min(vocab - 1);
            for (a, b) in g.token_embedding.row_mut(t).iter_mut().zip(demb.row(r)) {
                *a += b;
            }
        }
    }

    /// Dropout stream for one sample: depends only on the seed and the
    /// sample's position in the dataset.
    pub fn dropout_rng(seed: u64, sample: usize) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(sample as u64);
        r
    }

    /// Mean cross-entropy over the batch and its gradient. Dropout is active
    /// iff `dropout_seed` is given.
    pub fn loss_and_grad(
        &self,
        batch: &Batch,
        dropout_seed: Option<u64>,
        exec: Exec,
    ) -> Result<(f64, Parameters)> {
        let n = batch.size();
        if n == 0 {
            return Err(Error::data("empty batch"));
        }
        let ids: Vec<usize> = (0..n).collect();
        let partials = exec.map_chunks(&ids, GRAD_CHUNK, |chunk| {
            let mut g = self.params.zeros_like();
            let mut loss = 0.0;
            for &b in chunk {
                let v = batch.view(b);
                let mut rng = dropout_seed.map(|s| Self::dropout_rng(s, batch.samples[b]));
                let f = self.forward(v, rng.as_mut());
                let (l, dl) = cross_entropy(f.logits.row(0), batch.labels[b]);
                loss += l;
                self.backward(v, &f, &Mat::from_vec(1, dl.len(), dl), &mut g);
            }
            (loss, g)
        });
        let mut iter = partials.into_iter();
        let (mut loss, mut grad) = iter.next().expect("at least one chunk");
        for (l, g) in iter {
            loss += l;
            grad.add_assign(&g);
        }
        let inv = 1.0 / n as f64;
        grad.scale(inv);
        loss *= inv;
        if !loss.is_finite() {
            return Err(Error::numerical("non-finite loss"));
        }
        if let Some(name) = grad.first_non_finite() {
            return Err(Error::numerical(format!("non-finite gradient in {name}")));
        }
        Ok((loss, grad))
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, batch: &Batch, exec: Exec) -> f64 {
        let losses = exec.map_range(batch.size(), |b| {
            let f = self.forward(batch.view(b), None);
            cross_entropy(f.logits.row(0), batch.labels[b]).0
        });
        losses.iter().sum::<f64>() / batch.size() as f64
    }

    /// Logits for every sample, `B × n_classes`.
    pub fn logits(&self, batch: &Batch, exec: Exec) -> Mat {
        let rows = exec.map_range(batch.size(), |b| self.forward(batch.view(b), None).logits.data);
        Mat::from_vec(batch.size(), self.config.n_classes, rows.concat())
    }

    pub fn probabilities(&self, batch: &Batch, exec: Exec) -> Mat {
        let mut l = self.logits(batch, exec);
        for r in 0..l.rows {
            let p = softmax(l.row(r));
            l.row_mut(r).copy_from_slice(&p);
        }
        l
    }

    /// Fused post-norm representations, `B × latent`.
    pub fn latent(&self, batch: &Batch, exec: Exec) -> Mat {
        let rows = exec.map_range(batch.size(), |b| self.forward(batch.view(b), None).latent.data);
        Mat::from_vec(batch.size(), self.config.latent, rows.concat())
    }
}

/// Index of the largest value; ties pick the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
