//! Retrieval quality and domain-invariance diagnostics.
//!
//! [`Evaluator`] is the only holder of target relevance judgments; the
//! trainer sees it through the [`Evaluate`] trait and gets reports back.

use std::collections::BTreeSet;

use rayon::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::momentum::DomainClassifier;
use crate::numerics::{dot, Mat, Rng, Stream};
use crate::retrieval::{build_index, embed_all, top_k_positions, EmbeddingIndex};
use crate::synthdata::{Collection, Corpus, Domain};

/// Binary-gain nDCG@k. `None` when `relevant` is empty.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], relevant: &BTreeSet<String>, k: usize) -> Option<f64> {
    assert!(k >= 1, "ndcg_at_k: k must be >= 1");
    if relevant.is_empty() {
        return None;
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, d)| relevant.contains(d.as_ref()))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Some(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdcgSummary {
    pub mean: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Mean nDCG@k of a labeled corpus against an index of its own documents.
pub fn corpus_ndcg(enc: &Encoder, corpus: &Corpus, index: &EmbeddingIndex, k: usize) -> NdcgSummary {
    let embs = embed_all(enc, corpus.queries());
    let scores: Vec<Option<f64>> = corpus
        .queries()
        .par_iter()
        .zip(&embs)
        .map(|(q, e)| {
            let rel = corpus.qrels().get(&q.id)?;
            let ranking: Vec<&str> = top_k_positions(index, e, k)
                .into_iter()
                .map(|(i, _)| index.entries()[i].doc_id.as_str())
                .collect();
            ndcg_at_k(&ranking, rel, k)
        })
        .collect();
    let evaluated: Vec<f64> = scores.iter().flatten().copied().collect();
    NdcgSummary {
        mean: if evaluated.is_empty() {
            0.0
        } else {
            evaluated.iter().sum::<f64>() / evaluated.len() as f64
        },
        evaluated: evaluated.len(),
        skipped: scores.len() - evaluated.len(),
    }
}

/// Mean percentage of `domain` documents among each query's top-`k`.
/// Unchecked: works on any index.
pub fn knn_domain_pct(index: &EmbeddingIndex, query_embs: &[Vec<f64>], k: usize, domain: Domain) -> f64 {
    if query_embs.is_empty() {
        return 0.0;
    }
    let per_query: Vec<f64> = query_embs
        .par_iter()
        .map(|q| {
            let hits = top_k_positions(index, q, k);
            let n = hits.iter().filter(|(i, _)| index.entries()[*i].domain == domain).count();
            100.0 * n as f64 / k as f64
        })
        .collect();
    per_query.iter().sum::<f64>() / per_query.len() as f64
}

/// KNN-Source%: share of source documents among target queries' top-`k` in
/// a joint index. The index must contain both domains.
pub fn knn_source_pct(index: &EmbeddingIndex, target_query_embs: &[Vec<f64>], k: usize) -> Result<f64> {
    if !index.has_domain(Domain::Source) || !index.has_domain(Domain::Target) {
        return Err(Error::Usage("KNN-Source% needs an index holding both domains".into()));
    }
    Ok(knn_domain_pct(index, target_query_embs, k, Domain::Source))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub train_fraction: f64,
    /// Ridge penalty `l2/2 · ‖v‖²` on the probe's direction.
    pub l2: f64,
    /// Stop when an iteration improves the training objective by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub with_bias: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            l2: 1e-4,
            tolerance: 1e-5,
            max_iterations: 500,
            with_bias: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    /// Held-out accuracy in percent.
    pub accuracy: f64,
    pub iterations: usize,
    pub probe: DomainClassifier,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Ridge-penalized logistic regression for "source" on rows `xs`, fitted by
/// damped Newton steps. Returns the direction and the iteration count.
fn fit_logistic(xs: &[Vec<f64>], ys: &[f64], l2: f64, tol: f64, max_iter: usize) -> (Vec<f64>, usize) {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let objective = |v: &[f64]| {
        let nll: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| {
                let z = dot(x, v);
                y * softplus(-z) + (1.0 - y) * softplus(z)
            })
            .sum::<f64>()
            / n;
        nll + 0.5 * l2 * dot(v, v)
    };
    let mut v = vec![0.0; d];
    let mut f = objective(&v);
    let mut iterations = 0;
    while iterations < max_iter {
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for (x, &y) in xs.iter().zip(ys) {
            let p = sigmoid(dot(x, &v));
            let w = p * (1.0 - p);
            for i in 0..d {
                grad[i] += (p - y) * x[i];
                for j in i..d {
                    hess[(i, j)] += w * x[i] * x[j];
                }
            }
        }
        for i in 0..d {
            grad[i] = grad[i] / n + l2 * v[i];
            for j in i..d {
                let h = hess[(i, j)] / n + if i == j { l2 } else { 0.0 };
                hess[(i, j)] = h;
                hess[(j, i)] = h;
            }
        }
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&(-&grad));
        let slope = grad.dot(&step);
        iterations += 1;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let fc = objective(&cand);
            if fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        let improvement = f - fc;
        v = cand;
        f = fc;
        if improvement < tol {
            break;
        }
    }
    (v, iterations)
}

/// Fits a fresh linear probe to convergence on a balanced train split of
/// source and target embeddings and reports its held-out accuracy.
pub fn global_domain_acc(
    source: &[Vec<f64>],
    target: &[Vec<f64>],
    cfg: &ProbeConfig,
    rng: &mut Rng,
) -> Result<ProbeOutcome> {
    let n = source.len().min(target.len());
    if n < 2 {
        return Err(Error::Usage("probe needs at least two embeddings per domain".into()));
    }
    if !(cfg.l2 > 0.0 && cfg.l2.is_finite()) {
        return Err(Error::Config("probe l2 must be positive".into()));
    }
    let dim = source[0].len();
    let n_train = ((n as f64 * cfg.train_fraction).round() as usize).clamp(1, n - 1);
    let mut train: Vec<(&[f64], Domain)> = Vec::with_capacity(2 * n_train);
    let mut held: Vec<(&[f64], Domain)> = Vec::with_capacity(2 * (n - n_train));
    for (set, dom) in [(source, Domain::Source), (target, Domain::Target)] {
        let order = rng.permutation(set.len());
        for (rank, &i) in order.iter().take(n).enumerate() {
            let item = (set[i].as_slice(), dom);
            if rank < n_train {
                train.push(item);
            } else {
                held.push(item);
            }
        }
    }

    let xs: Vec<Vec<f64>> = train
        .iter()
        .map(|(e, _)| {
            let mut x = e.to_vec();
            if cfg.with_bias {
                x.push(1.0);
            }
            x
        })
        .collect();
    let ys: Vec<f64> = train.iter().map(|(_, d)| f64::from(*d == Domain::Source)).collect();
    let (v, iterations) = fit_logistic(&xs, &ys, cfg.l2, cfg.tolerance, cfg.max_iterations);

    // Logits (v·e/2, -v·e/2) give p(source) = sigmoid(v·e).
    let mut w = Mat::zeros(2, dim);
    for j in 0..dim {
        w.set(0, j, 0.5 * v[j]);
        w.set(1, j, -0.5 * v[j]);
    }
    let bias = cfg.with_bias.then(|| [0.5 * v[dim], -0.5 * v[dim]]);
    let probe = DomainClassifier::from_weights(w, bias)?;
    Ok(ProbeOutcome {
        accuracy: probe.accuracy(held.iter().copied()),
        iterations,
        probe,
    })
}

/// Accuracy (percent) of the in-training classifier on a batch it has not
/// been trained on.
pub fn local_domain_acc(clf: &DomainClassifier, batch: &[(Vec<f64>, Domain)]) -> f64 {
    clf.accuracy(batch.iter().map(|(e, d)| (e.as_slice(), *d)))
}

/// One evaluation point. Domain fields are `None` for ranking-only runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub step: u64,
    pub mode: String,
    pub adv_loss: Option<String>,
    pub lambda: Option<f64>,
    pub ndcg_k: usize,
    pub source_ndcg: f64,
    pub target_ndcg: f64,
    pub skipped_queries: usize,
    pub knn_k: usize,
    pub knn_source_pct: f64,
    pub global_domain_acc: Option<f64>,
    pub global_probe_iterations: Option<usize>,
    /// In-training classifier on a fresh reserved batch.
    pub local_domain_acc: Option<f64>,
    /// In-training classifier on the step's own batch, before it was queued.
    pub local_domain_acc_train_batch: Option<f64>,
    pub ranking_loss: Option<f64>,
    pub adversarial_loss: Option<f64>,
    pub discrimination_loss: Option<f64>,
}

impl EvalReport {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ndcg_k: usize,
    pub knn_k: usize,
    pub probe: ProbeConfig,
    /// Reserved embeddings per domain for Local Domain-Acc.
    pub local_batch_per_domain: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ndcg_k: 10,
            knn_k: 100,
            probe: ProbeConfig::default(),
            local_batch_per_domain: 256,
        }
    }
}

/// What the trainer may ask of an evaluator.
pub trait Evaluate {
    /// Retrieval metrics, plus domain metrics when `classifier` is given.
    fn evaluate(&self, enc: &Encoder, classifier: Option<&DomainClassifier>, step: u64) -> Result<EvalReport>;
}

/// Owns both labeled corpora.
pub struct Evaluator {
    source: Corpus,
    target: Corpus,
    cfg: EvalConfig,
    seed: u64,
}

impl Evaluator {
    pub fn new(source: Corpus, target: Corpus, cfg: EvalConfig, seed: u64) -> Result<Self> {
        if source.domain() != Domain::Source || target.domain() != Domain::Target {
            return Err(Error::Usage("evaluator needs a source and a target corpus".into()));
        }
        if cfg.ndcg_k == 0 || cfg.knn_k == 0 {
            return Err(Error::Config("ndcg_k and knn_k must be >= 1".into()));
        }
        Ok(Self {
            source,
            target,
            cfg,
            seed,
        })
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    fn all_embeddings(&self, enc: &Encoder, c: &Corpus) -> Vec<Vec<f64>> {
        let mut out = embed_all(enc, c.queries());
        out.extend(embed_all(enc, c.documents()));
        out
    }

    fn reserved_batch(&self, source: &[Vec<f64>], target: &[Vec<f64>], step: u64) -> Vec<(Vec<f64>, Domain)> {
        let mut rng = Rng::with_substream(self.seed, Stream::Eval, (step as u32).wrapping_mul(2) | 1);
        let mut batch = Vec::with_capacity(2 * self.cfg.local_batch_per_domain);
        for (set, dom) in [(source, Domain::Source), (target, Domain::Target)] {
            for _ in 0..self.cfg.local_batch_per_domain {
                batch.push((set[rng.below(set.len())].clone(), dom));
            }
        }
        batch
    }
}

impl Evaluate for Evaluator {
    fn evaluate(&self, enc: &Encoder, classifier: Option<&DomainClassifier>, step: u64) -> Result<EvalReport> {
        let source_index = build_index(enc, &[&self.source], step)?;
        let target_index = build_index(enc, &[&self.target], step)?;
        let s = corpus_ndcg(enc, &self.source, &source_index, self.cfg.ndcg_k);
        let t = corpus_ndcg(enc, &self.target, &target_index, self.cfg.ndcg_k);

        let joint = build_index(enc, &[&self.source, &self.target], step)?;
        let target_queries = embed_all(enc, self.target.queries());
        let knn = knn_source_pct(&joint, &target_queries, self.cfg.knn_k)?;

        let mut report = EvalReport {
            step,
            mode: String::new(),
            adv_loss: None,
            lambda: None,
            ndcg_k: self.cfg.ndcg_k,
            source_ndcg: s.mean,
            target_ndcg: t.mean,
            skipped_queries: s.skipped + t.skipped,
            knn_k: self.cfg.knn_k,
            knn_source_pct: knn,
            global_domain_acc: None,
            global_probe_iterations: None,
            local_domain_acc: None,
            local_domain_acc_train_batch: None,
            ranking_loss: None,
            adversarial_loss: None,
            discrimination_loss: None,
        };

        if let Some(clf) = classifier {
            let se = self.all_embeddings(enc, &self.source);
            let te = self.all_embeddings(enc, &self.target);
            let mut rng = Rng::with_substream(self.seed, Stream::Eval, (step as u32).wrapping_mul(2));
            let probe = global_domain_acc(&se, &te, &self.cfg.probe, &mut rng)?;
            report.global_domain_acc = Some(probe.accuracy);
            report.global_probe_iterations = Some(probe.iterations);
            report.local_domain_acc = Some(local_domain_acc(clf, &self.reserved_batch(&se, &te, step)));
        }
        Ok(report)
    }
}
