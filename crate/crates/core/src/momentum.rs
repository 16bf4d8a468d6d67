//! Momentum queue of detached embeddings and the linear domain classifier
//! trained on it.
//!
//! The queue owns plain copies of embedding values. Nothing in it refers
//! back to the encoder, so no update of either side can leak into the
//! other.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::hex_digest;
use crate::error::{Error, Result};
use crate::numerics::{all_finite, softmax2, Mat, Rng};
use crate::objectives::discrimination_loss;
use crate::synthdata::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    PositiveDoc,
    NegativeDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetachedEmbedding {
    vector: Vec<f64>,
    pub domain: Domain,
    pub role: Role,
    pub born_step: u64,
}

impl DetachedEmbedding {
    /// Copies `values`; the result shares nothing with its origin.
    pub fn detach(values: &[f64], domain: Domain, role: Role, born_step: u64) -> Self {
        Self {
            vector: values.to_vec(),
            domain,
            role,
            born_step,
        }
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

/// FIFO of the embeddings pushed by the `n` most recent batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumQueue {
    n: usize,
    batches: VecDeque<Vec<DetachedEmbedding>>,
}

impl MomentumQueue {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("momentum step n must be >= 1".into()));
        }
        Ok(Self {
            n,
            batches: VecDeque::with_capacity(n + 1),
        })
    }

    pub fn momentum_step(&self) -> usize {
        self.n
    }

    /// Appends one batch. Source and target must contribute equally, and the
    /// source side must hold as many negative documents as positive ones.
    pub fn push_batch(
        &mut self,
        source: Vec<DetachedEmbedding>,
        target: Vec<DetachedEmbedding>,
    ) -> Result<()> {
        if source.len() != target.len() {
            return Err(Error::Usage(format!(
                "unbalanced batch: {} source vs {} target embeddings",
                source.len(),
                target.len()
            )));
        }
        if source.iter().any(|e| e.domain != Domain::Source) || target.iter().any(|e| e.domain != Domain::Target) {
            return Err(Error::Usage("embedding pushed under the wrong domain".into()));
        }
        let pos = source.iter().filter(|e| e.role == Role::PositiveDoc).count();
        let neg = source.iter().filter(|e| e.role == Role::NegativeDoc).count();
        if pos != neg {
            return Err(Error::Usage(format!(
                "source positives ({pos}) and negatives ({neg}) must match"
            )));
        }
        if let Some(dim) = self.dim() {
            if source.iter().chain(&target).any(|e| e.vector.len() != dim) {
                return Err(Error::Shape("embedding dimension differs from queue contents".into()));
            }
        }
        let mut batch = source;
        batch.extend(target);
        self.batches.push_back(batch);
        while self.batches.len() > self.n {
            self.batches.pop_front();
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batches_held(&self) -> usize {
        self.batches.len()
    }

    pub fn dim(&self) -> Option<usize> {
        self.iter().next().map(|e| e.vector.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetachedEmbedding> {
        self.batches.iter().flatten()
    }

    pub fn get(&self, mut idx: usize) -> Option<&DetachedEmbedding> {
        for b in &self.batches {
            if idx < b.len() {
                return Some(&b[idx]);
            }
            idx -= b.len();
        }
        None
    }

    pub fn count(&self, domain: Domain, role: Option<Role>) -> usize {
        self.iter()
            .filter(|e| e.domain == domain && role.is_none_or(|r| e.role == r))
            .count()
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for e in self.iter() {
            for v in &e.vector {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex_digest(h)
    }
}

/// `f(e) = softmax(W_f e (+ b))`; output 0 is "source".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainClassifier {
    weights: Mat,
    bias: Option<[f64; 2]>,
}

impl DomainClassifier {
    pub fn zeros(dim: usize, with_bias: bool) -> Self {
        Self {
            weights: Mat::zeros(2, dim),
            bias: with_bias.then_some([0.0, 0.0]),
        }
    }

    pub fn from_weights(weights: Mat, bias: Option<[f64; 2]>) -> Result<Self> {
        if weights.rows() != 2 {
            return Err(Error::Shape("domain classifier weight must have 2 rows".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn bias(&self) -> Option<[f64; 2]> {
        self.bias
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, e: &[f64]) -> [f64; 2] {
        assert_eq!(e.len(), self.dim(), "classify: embedding dimension mismatch");
        let z = self.weights.matvec(e);
        let b = self.bias.unwrap_or([0.0, 0.0]);
        [z[0] + b[0], z[1] + b[1]]
    }

    /// Probability that `e` came from the source domain.
    pub fn classify(&self, e: &[f64]) -> f64 {
        softmax2(self.logits(e))[0]
    }

    /// As [`classify`](Self::classify), but reports non-finite logits as an
    /// error instead of panicking.
    pub fn try_classify(&self, e: &[f64]) -> Result<f64> {
        let l = self.logits(e);
        if !all_finite(&l) {
            return Err(Error::NonFinite("domain classifier logits".into()));
        }
        Ok(softmax2(l)[0])
    }

    pub fn predict(&self, e: &[f64]) -> Domain {
        let l = self.logits(e);
        if l[0] >= l[1] {
            Domain::Source
        } else {
            Domain::Target
        }
    }

    /// Gradient of an embedding-level loss with respect to `e`, given its
    /// gradient with respect to the two logits. The classifier is not
    /// modified.
    pub fn input_grad(&self, dlogits: [f64; 2]) -> Vec<f64> {
        self.weights.matvec_t(&dlogits)
    }

    /// One SGD step on the discrimination loss of a single embedding.
    /// Returns the loss before the update.
    pub fn sgd_step(&mut self, e: &[f64], domain: Domain, lr: f64) -> f64 {
        let p = self.classify(e);
        let (loss, g) = discrimination_loss(p, domain);
        self.weights.add_outer(-lr, &g, e);
        if let Some(b) = self.bias.as_mut() {
            b[0] -= lr * g[0];
            b[1] -= lr * g[1];
        }
        loss
    }

    pub fn mean_loss<'a>(&self, data: impl IntoIterator<Item = (&'a [f64], Domain)>) -> f64 {
        let (mut total, mut n) = (0.0, 0usize);
        for (e, d) in data {
            total += discrimination_loss(self.classify(e), d).0;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }

    pub fn accuracy<'a>(&self, data: impl IntoIterator<Item = (&'a [f64], Domain)>) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for (e, d) in data {
            hit += usize::from(self.predict(e) == d);
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            100.0 * hit as f64 / n as f64
        }
    }

    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.weights.values() {
            h.update(v.to_bits().to_le_bytes());
        }
        if let Some(b) = self.bias {
            h.update(b[0].to_bits().to_le_bytes());
            h.update(b[1].to_bits().to_le_bytes());
        }
        hex_digest(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierSweep {
    /// Mean discrimination loss over the final sweep (or of the current
    /// classifier when no sweep ran).
    pub mean_loss: f64,
    /// Number of per-entry updates applied.
    pub updates: usize,
}

/// `passes` shuffled SGD sweeps over the queue. Only the classifier changes.
pub fn train_classifier_step(
    clf: &mut DomainClassifier,
    queue: &MomentumQueue,
    lr: f64,
    passes: usize,
    rng: &mut Rng,
) -> Result<ClassifierSweep> {
    if queue.is_empty() {
        return Err(Error::Usage("cannot train the domain classifier on an empty queue".into()));
    }
    if passes == 0 {
        let mean_loss = clf.mean_loss(queue.iter().map(|e| (e.vector(), e.domain)));
        return Ok(ClassifierSweep { mean_loss, updates: 0 });
    }
    let entries: Vec<&DetachedEmbedding> = queue.iter().collect();
    let mut updates = 0;
    let mut last = 0.0;
    for _ in 0..passes {
        let order = rng.permutation(entries.len());
        let mut total = 0.0;
        for &i in &order {
            let e = entries[i];
            clf.try_classify(e.vector())?;
            total += clf.sgd_step(e.vector(), e.domain, lr);
            updates += 1;
        }
        last = total / entries.len() as f64;
    }
    Ok(ClassifierSweep {
        mean_loss: last,
        updates,
    })
}
