use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LdaModel, ModelScope, SamplerConfig};
use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Collapsed Gibbs sampler state for one corpus.
pub struct GibbsSampler<'a> {
    docs: &'a [&'a [u32]],
    k: usize,
    vocab_size: usize,
    alpha: f64,
    beta: f64,
    /// Topic assignment per token, flattened in document order.
    z: Vec<u32>,
    offsets: Vec<usize>,
    n_dk: Vec<u32>,
    /// Word-major: `n_wk[w * k + topic]`.
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(docs: &'a [&'a [u32]], vocab_size: usize, k: usize, alpha: f64, beta: f64, seed: u64) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::InvalidInput("cannot train on an empty corpus".into()));
        }
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 topics, got {k}")));
        }
        let mut offsets = Vec::with_capacity(docs.len() + 1);
        offsets.push(0);
        for (j, d) in docs.iter().enumerate() {
            if d.is_empty() {
                return Err(Error::InvalidInput(format!("document {j} has no tokens")));
            }
            if let Some(&w) = d.iter().find(|&&w| w as usize >= vocab_size) {
                return Err(Error::InvalidInput(format!(
                    "token id {w} out of range for vocabulary of size {vocab_size}"
                )));
            }
            offsets.push(offsets[j] + d.len());
        }
        let total = offsets[docs.len()];
        if k > total {
            return Err(Error::InvalidInput(format!(
                "K = {k} exceeds the {total} available tokens"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = GibbsSampler {
            docs,
            k,
            vocab_size,
            alpha,
            beta,
            z: Vec::with_capacity(total),
            offsets,
            n_dk: vec![0; docs.len() * k],
            n_wk: vec![0; vocab_size * k],
            n_k: vec![0; k],
            rng: ChaCha8Rng::seed_from_u64(0),
            probs: vec![0.0; k],
        };
        for (j, d) in docs.iter().enumerate() {
            for &w in d.iter() {
                let t = rng.random_range(0..k as u32);
                s.z.push(t);
                s.n_dk[j * k + t as usize] += 1;
                s.n_wk[w as usize * k + t as usize] += 1;
                s.n_k[t as usize] += 1;
            }
        }
        s.rng = rng;
        Ok(s)
    }

    /// One full pass over every token.
    pub fn sweep(&mut self) {
        let k = self.k;
        let vbeta = self.vocab_size as f64 * self.beta;
        for (j, doc) in self.docs.iter().enumerate() {
            let base = self.offsets[j];
            let dk = &mut self.n_dk[j * k..(j + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = self.z[base + i] as usize;
                dk[old] -= 1;
                self.n_wk[w * k + old] -= 1;
                self.n_k[old] -= 1;

                let wk = &self.n_wk[w * k..(w + 1) * k];
                let mut acc = 0.0;
                for t in 0..k {
                    acc += (f64::from(dk[t]) + self.alpha) * (f64::from(wk[t]) + self.beta)
                        / (f64::from(self.n_k[t]) + vbeta);
                    self.probs[t] = acc;
                }
                let u = self.rng.random::<f64>() * acc;
                let new = self.probs.partition_point(|&c| c <= u).min(k - 1);

                self.z[base + i] = new as u32;
                dk[new] += 1;
                self.n_wk[w * k + new] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Verifies that the count matrices agree with the assignments.
    pub fn counts_consistent(&self) -> bool {
        let k = self.k;
        for (j, d) in self.docs.iter().enumerate() {
            let row = &self.n_dk[j * k..(j + 1) * k];
            if row.iter().map(|&c| c as usize).sum::<usize>() != d.len() {
                return false;
            }
        }
        let mut n_wk = vec![0u32; self.vocab_size * k];
        let mut n_k = vec![0u32; k];
        for (j, d) in self.docs.iter().enumerate() {
            for (i, &w) in d.iter().enumerate() {
                let t = self.z[self.offsets[j] + i] as usize;
                n_wk[w as usize * k + t] += 1;
                n_k[t] += 1;
            }
        }
        n_wk == self.n_wk && n_k == self.n_k && n_k.iter().map(|&c| c as usize).sum::<usize>() == self.z.len()
    }

    fn accumulate(&self, sum_dk: &mut [f64], sum_wk: &mut [f64]) {
        for (s, &c) in sum_dk.iter_mut().zip(&self.n_dk) {
            *s += f64::from(c);
        }
        for (s, &c) in sum_wk.iter_mut().zip(&self.n_wk) {
            *s += f64::from(c);
        }
    }
}

/// Trains one LDA model. Identical inputs and seed give bit-identical output.
pub fn train_lda(
    docs: &[&[u32]],
    vocab_size: usize,
    k: usize,
    cfg: &SamplerConfig,
    seed: u64,
    scope: ModelScope,
) -> Result<LdaModel> {
    cfg.validate()?;
    let mut sampler = GibbsSampler::new(docs, vocab_size, k, cfg.alpha, cfg.beta, seed)?;
    let mut sum_dk = vec![0.0; docs.len() * k];
    let mut sum_wk = vec![0.0; vocab_size * k];
    let mut samples = 0usize;
    for s in 1..=cfg.iters {
        sampler.sweep();
        if s > cfg.burn_in && (cfg.iters - s).is_multiple_of(cfg.sample_lag) {
            sampler.accumulate(&mut sum_dk, &mut sum_wk);
            samples += 1;
        }
    }
    let n = samples as f64;

    let mut phi = Matrix::zeros(k, vocab_size);
    for t in 0..k {
        let row = phi.row_mut(t);
        for (w, x) in row.iter_mut().enumerate() {
            *x = sum_wk[w * k + t] / n + cfg.beta;
        }
        normalize(row);
    }
    let mut theta = Matrix::zeros(docs.len(), k);
    for j in 0..docs.len() {
        let row = theta.row_mut(j);
        for (t, x) in row.iter_mut().enumerate() {
            *x = sum_dk[j * k + t] / n + cfg.alpha;
        }
        normalize(row);
    }
    Ok(LdaModel {
        k,
        vocab_size,
        alpha: cfg.alpha,
        beta: cfg.beta,
        seed,
        scope,
        phi,
        theta,
    })
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
}

/// Fold-in Gibbs inference of a held-out document's topic mixture with the
/// topic-word distributions held fixed.
pub fn infer_theta(model: &LdaModel, tokens: &[u32], cfg: &SamplerConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if tokens.is_empty() {
        return Err(Error::InvalidInput("document has no tokens".into()));
    }
    if let Some(&w) = tokens.iter().find(|&&w| w as usize >= model.vocab_size) {
        return Err(Error::InvalidInput(format!("token id {w} out of range")));
    }
    let k = model.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<usize> = tokens.iter().map(|_| rng.random_range(0..k)).collect();
    let mut n_k = vec![0u32; k];
    for &t in &z {
        n_k[t] += 1;
    }
    let mut probs = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let mut samples = 0usize;
    for s in 1..=cfg.iters {
        for (i, &w) in tokens.iter().enumerate() {
            n_k[z[i]] -= 1;
            let mut acc = 0.0;
            for t in 0..k {
                acc += (f64::from(n_k[t]) + model.alpha) * model.phi[(t, w as usize)];
                probs[t] = acc;
            }
            let u = rng.random::<f64>() * acc;
            let new = probs.partition_point(|&c| c <= u).min(k - 1);
            z[i] = new;
            n_k[new] += 1;
        }
        if s > cfg.burn_in && (cfg.iters - s).is_multiple_of(cfg.sample_lag) {
            for t in 0..k {
                sum[t] += f64::from(n_k[t]);
            }
            samples += 1;
        }
    }
    let mut theta: Vec<f64> = sum.iter().map(|s| s / samples as f64 + model.alpha).collect();
    normalize(&mut theta);
    Ok(theta)
}
