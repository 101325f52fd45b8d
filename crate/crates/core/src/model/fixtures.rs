//! Seeded random inputs for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::modality::{Batch, PAD};

/// A batch of `n` samples shaped for `c`. Each sample gets a random amount
/// of semantic padding and some masked sequence slots; labels cycle through
/// the classes.
pub fn random_batch(c: &ModelConfig, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Batch {
        l_sem: c.l_sem,
        l_seq: c.l_seq,
        d_event: c.d_event,
        token_ids: Vec::with_capacity(n * c.l_sem),
        sem_mask: Vec::with_capacity(n * c.l_sem),
        seq: Vec::with_capacity(n * c.l_seq * c.d_event),
        seq_mask: Vec::with_capacity(n * c.l_seq),
        labels: Vec::with_capacity(n),
        samples: (0..n).collect(),
    };
    for s in 0..n {
        let used = rng.random_range(1..=c.l_sem);
        for p in 0..c.l_sem {
            let t = if p < used {
                rng.random_range(1..c.vocab_size as u32)
            } else {
                PAD
            };
            b.token_ids.push(t);
            b.sem_mask.push(t != PAD);
        }
        let centre = rng.random_range(0..c.l_seq);
        for p in 0..c.l_seq {
            let keep = p == centre || rng.random_bool(0.75);
            b.seq_mask.push(keep);
            for _ in 0..c.d_event {
                b.seq.push(if keep { rng.random_range(-1.0..1.0) } else { 0.0 });
            }
        }
        b.labels.push(s % c.n_classes);
    }
    b
}
