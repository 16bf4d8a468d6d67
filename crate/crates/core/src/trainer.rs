//! Joint training loop: per step the domain classifier is fitted on the
//! momentum queue, then the encoder takes one step on the ranking loss plus
//! the weighted adversarial loss with the classifier frozen.
//!
//! The trainer is handed the target domain as an [`UnlabeledCorpus`]; target
//! relevance judgments live only inside the evaluator.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{hex_digest, Activation, Encoder, EncoderFile, Tape};
use crate::error::{Error, Result};
use crate::metrics::{EvalConfig, EvalReport, Evaluate};
use crate::momentum::{train_classifier_step, DetachedEmbedding, DomainClassifier, MomentumQueue, Role};
use crate::numerics::{all_finite, axpy, dot, Rng, RngState, Stream};
use crate::objectives::{adversarial_loss, prob_grad_to_logits, ranking_loss, AdvLossKind, LambdaSchedule};
use crate::optim::{OptimizerKind, OptimizerState};
use crate::retrieval::{build_index, mine_hard_negatives};
use crate::synthdata::{Collection, Corpus, Domain, UnlabeledCorpus};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Ranking loss only.
    BaselineRankingOnly,
    Modir,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::BaselineRankingOnly => "baseline_ranking_only",
            Mode::Modir => "modir",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Negatives drawn from the current model's top-ranked non-relevant docs.
    MinedHard,
    /// Other queries' positives from the same batch, topped up at random.
    InBatchRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub adv_loss: AdvLossKind,
    pub momentum_n: usize,
    /// Source query–positive pairs per step.
    pub batch_size: usize,
    pub negatives_per_query: usize,
    pub negative_mode: NegativeMode,
    pub mining_refresh_steps: u64,
    /// Size of each query's mined negative pool.
    pub mining_depth: usize,
    pub lambda0: f64,
    pub half_life_steps: u64,
    /// Ranking-only steps before the adversarial term is switched on.
    pub warmup_steps: u64,
    pub encoder_dims: Vec<usize>,
    pub activation: Activation,
    pub encoder_lr: f64,
    pub optimizer: OptimizerKind,
    pub classifier_lr: f64,
    pub classifier_passes: usize,
    pub classifier_bias: bool,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Modir,
            adv_loss: AdvLossKind::Confusion,
            momentum_n: 8,
            batch_size: 32,
            negatives_per_query: 4,
            negative_mode: NegativeMode::MinedHard,
            mining_refresh_steps: 100,
            mining_depth: 32,
            lambda0: 0.1,
            half_life_steps: 500,
            warmup_steps: 500,
            encoder_dims: vec![32, 64, 32],
            activation: Activation::Tanh,
            encoder_lr: 0.03,
            optimizer: OptimizerKind::Sgd,
            classifier_lr: 0.05,
            classifier_passes: 1,
            classifier_bias: false,
            total_steps: 2000,
            eval_every: 50,
            eval: EvalConfig::default(),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.momentum_n == 0 {
            return fail("momentum_n must be >= 1");
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return fail("batch_size must be even and >= 2");
        }
        if self.negatives_per_query == 0 {
            return fail("negatives_per_query must be >= 1");
        }
        if self.negative_mode == NegativeMode::MinedHard {
            if self.mining_refresh_steps == 0 {
                return fail("mining_refresh_steps must be >= 1");
            }
            if self.mining_depth < self.negatives_per_query {
                return fail("mining_depth must be >= negatives_per_query");
            }
        }
        if self.eval_every == 0 || self.total_steps < self.eval_every {
            return fail("need eval_every >= 1 and total_steps >= eval_every");
        }
        if !(self.encoder_lr > 0.0 && self.classifier_lr > 0.0) {
            return fail("learning rates must be positive");
        }
        if self.encoder_dims.len() < 2 || self.encoder_dims.contains(&0) {
            return fail("encoder_dims needs at least two positive entries");
        }
        LambdaSchedule::new(self.lambda0, self.half_life_steps)?;
        Ok(())
    }

    pub fn schedule(&self) -> LambdaSchedule {
        LambdaSchedule {
            lambda0: self.lambda0,
            half_life_steps: self.half_life_steps,
        }
    }

    /// Adversarial weight in effect at `step` (0 outside the adversarial phase).
    pub fn lambda_for_step(&self, step: u64) -> f64 {
        if self.mode != Mode::Modir || step < self.warmup_steps {
            0.0
        } else {
            self.schedule().at(step - self.warmup_steps)
        }
    }

    /// SHA-256 of the configuration with `total_steps` blanked, so a run may
    /// be extended but not altered.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.total_steps = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        let mut h = Sha256::new();
        h.update(json.as_bytes());
        hex_digest(h)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWindow {
    pub steps: u64,
    pub ranking: f64,
    pub adversarial_steps: u64,
    pub adversarial: f64,
    pub discrimination_steps: u64,
    pub discrimination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngStates {
    pub train: RngState,
    pub target: RngState,
    pub classifier: RngState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub step: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub encoder: EncoderFile,
    pub classifier: DomainClassifier,
    pub encoder_optimizer: OptimizerState,
    pub queue: MomentumQueue,
    pub negatives: BTreeMap<String, Vec<String>>,
    pub rng: RngStates,
    pub window: LossWindow,
}

impl Checkpoint {
    pub fn encoder(&self) -> Result<Encoder> {
        self.encoder.clone().into_encoder()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Usage(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }
}

/// What one training step did; mostly for tests and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub step: u64,
    pub ranking_loss: f64,
    pub adversarial_loss: Option<f64>,
    pub discrimination_loss: Option<f64>,
    pub lambda: f64,
    pub encoder_checksum_around_classifier: Option<(String, String)>,
    pub classifier_checksum_around_encoder: Option<(String, String)>,
}

struct SourceIndex {
    trainable: Vec<usize>,
    relevant: Vec<Vec<usize>>,
    relevant_sets: Vec<BTreeSet<usize>>,
    doc_pos: HashMap<String, usize>,
}

impl SourceIndex {
    fn build(source: &Corpus) -> Result<Self> {
        let doc_pos: HashMap<String, usize> = source
            .documents()
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i))
            .collect();
        let n_docs = source.documents().len();
        let mut relevant = Vec::with_capacity(source.queries().len());
        let mut trainable = Vec::new();
        for (qi, q) in source.queries().iter().enumerate() {
            let rel: Vec<usize> = source
                .qrels()
                .get(&q.id)
                .map(|s| s.iter().filter_map(|d| doc_pos.get(d).copied()).collect())
                .unwrap_or_default();
            if !rel.is_empty() && rel.len() < n_docs {
                trainable.push(qi);
            }
            relevant.push(rel);
        }
        if trainable.is_empty() {
            return Err(Error::Config("source corpus has no query with both relevant and non-relevant docs".into()));
        }
        let relevant_sets = relevant.iter().map(|r| r.iter().copied().collect()).collect();
        Ok(Self {
            trainable,
            relevant,
            relevant_sets,
            doc_pos,
        })
    }
}

/// Which corpus record an encoded item comes from.
#[derive(Clone, Copy)]
enum Item {
    SourceQuery(usize),
    SourceDoc(usize),
    TargetQuery(usize),
    TargetDoc(usize),
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    source: &'a Corpus,
    target: &'a UnlabeledCorpus,
    index: SourceIndex,
    step: u64,
    encoder: Encoder,
    classifier: DomainClassifier,
    encoder_opt: OptimizerState,
    queue: MomentumQueue,
    negatives: BTreeMap<String, Vec<String>>,
    train_rng: Rng,
    target_rng: Rng,
    classifier_rng: Rng,
    window: LossWindow,
    pending_batch_acc: Option<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, source: &'a Corpus, target: &'a UnlabeledCorpus) -> Result<Self> {
        cfg.validate()?;
        check_corpora(&cfg, source, target)?;
        let encoder = Encoder::init(&cfg.encoder_dims, cfg.activation, &mut Rng::new(cfg.seed, Stream::Init))?;
        let classifier = DomainClassifier::zeros(encoder.output_dim(), cfg.classifier_bias);
        let shapes: Vec<usize> = encoder.slice_lens();
        Ok(Self {
            encoder_opt: OptimizerState::new(cfg.optimizer, &shapes),
            queue: MomentumQueue::new(cfg.momentum_n)?,
            index: SourceIndex::build(source)?,
            train_rng: Rng::new(cfg.seed, Stream::Train),
            target_rng: Rng::new(cfg.seed, Stream::Target),
            classifier_rng: Rng::new(cfg.seed, Stream::Classifier),
            negatives: BTreeMap::new(),
            window: LossWindow::default(),
            pending_batch_acc: None,
            step: 0,
            encoder,
            classifier,
            cfg,
            source,
            target,
        })
    }

    /// Restores a checkpoint. `cfg` may differ from the checkpointed one only
    /// in `total_steps`.
    pub fn from_checkpoint(
        ckpt: &Checkpoint,
        cfg: TrainConfig,
        source: &'a Corpus,
        target: &'a UnlabeledCorpus,
    ) -> Result<Self> {
        let found = cfg.hash();
        if found != ckpt.config_hash {
            return Err(Error::ConfigHashMismatch {
                expected: ckpt.config_hash.clone(),
                found,
            });
        }
        cfg.validate()?;
        check_corpora(&cfg, source, target)?;
        Ok(Self {
            index: SourceIndex::build(source)?,
            step: ckpt.step,
            encoder: ckpt.encoder()?,
            classifier: ckpt.classifier.clone(),
            encoder_opt: ckpt.encoder_optimizer.clone(),
            queue: ckpt.queue.clone(),
            negatives: ckpt.negatives.clone(),
            train_rng: Rng::from_state(ckpt.rng.train),
            target_rng: Rng::from_state(ckpt.rng.target),
            classifier_rng: Rng::from_state(ckpt.rng.classifier),
            window: ckpt.window.clone(),
            pending_batch_acc: None,
            cfg,
            source,
            target,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn classifier(&self) -> &DomainClassifier {
        &self.classifier
    }

    pub fn queue(&self) -> &MomentumQueue {
        &self.queue
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            step: self.step,
            config_hash: self.cfg.hash(),
            config: self.cfg.clone(),
            encoder: EncoderFile::from(&self.encoder),
            classifier: self.classifier.clone(),
            encoder_optimizer: self.encoder_opt.clone(),
            queue: self.queue.clone(),
            negatives: self.negatives.clone(),
            rng: RngStates {
                train: self.train_rng.state(),
                target: self.target_rng.state(),
                classifier: self.classifier_rng.state(),
            },
            window: self.window.clone(),
        }
    }

    fn is_eval_step(&self, step_after: u64) -> bool {
        step_after % self.cfg.eval_every == 0 || step_after == self.cfg.total_steps
    }

    fn refresh_negatives(&mut self) -> Result<()> {
        let index = build_index(&self.encoder, &[self.source], self.step)?;
        self.negatives = mine_hard_negatives(
            &index,
            &self.encoder,
            self.source.queries(),
            self.source.qrels(),
            self.cfg.mining_depth,
            &mut self.train_rng,
        )?;
        Ok(())
    }

    fn random_non_relevant(&mut self, qi: usize) -> usize {
        let n = self.source.documents().len();
        loop {
            let d = self.train_rng.below(n);
            if !self.index.relevant_sets[qi].contains(&d) {
                return d;
            }
        }
    }

    /// Source batch: (query, positive, negatives) per query.
    fn sample_source(&mut self) -> Vec<(usize, usize, Vec<usize>)> {
        let b = self.cfg.batch_size;
        let pool = self.index.trainable.len();
        let mut picks: Vec<usize> = Vec::with_capacity(b);
        if pool >= b {
            let mut order: Vec<usize> = (0..pool).collect();
            for i in 0..b {
                let j = i + self.train_rng.below(pool - i);
                order.swap(i, j);
                picks.push(self.index.trainable[order[i]]);
            }
        } else {
            for _ in 0..b {
                picks.push(self.index.trainable[self.train_rng.below(pool)]);
            }
        }
        let mut batch: Vec<(usize, usize, Vec<usize>)> = picks
            .into_iter()
            .map(|qi| {
                let rel = &self.index.relevant[qi];
                let pos = rel[self.train_rng.below(rel.len())];
                (qi, pos, Vec::new())
            })
            .collect();

        let n = self.cfg.negatives_per_query;
        match self.cfg.negative_mode {
            NegativeMode::MinedHard => {
                for entry in &mut batch {
                    let qid = &self.source.queries()[entry.0].id;
                    let pool = &self.negatives[qid];
                    let mut slots: Vec<usize> = (0..pool.len()).collect();
                    for i in 0..n {
                        let j = i + self.train_rng.below(slots.len() - i);
                        slots.swap(i, j);
                        entry.2.push(self.index.doc_pos[&pool[slots[i]]]);
                    }
                }
            }
            NegativeMode::InBatchRandom => {
                let positives: Vec<usize> = batch.iter().map(|e| e.1).collect();
                for k in 0..batch.len() {
                    let qi = batch[k].0;
                    let mut negs: Vec<usize> = positives
                        .iter()
                        .copied()
                        .filter(|d| !self.index.relevant_sets[qi].contains(d))
                        .take(n)
                        .collect();
                    while negs.len() < n {
                        negs.push(self.random_non_relevant(qi));
                    }
                    batch[k].2 = negs;
                }
            }
        }
        batch
    }

    /// Target batch: each query paired with `1 + negatives_per_query` random docs.
    fn sample_target(&mut self) -> Vec<(usize, Vec<usize>)> {
        let nq = self.target.queries().len();
        let nd = self.target.documents().len();
        let per = 1 + self.cfg.negatives_per_query;
        (0..self.cfg.batch_size)
            .map(|_| {
                let q = self.target_rng.below(nq);
                let docs = (0..per).map(|_| self.target_rng.below(nd)).collect();
                (q, docs)
            })
            .collect()
    }

    fn features(&self, item: Item) -> &[f64] {
        match item {
            Item::SourceQuery(i) => &self.source.queries()[i].vector,
            Item::SourceDoc(i) => &self.source.documents()[i].vector,
            Item::TargetQuery(i) => &self.target.queries()[i].vector,
            Item::TargetDoc(i) => &self.target.documents()[i].vector,
        }
    }

    /// Runs one training step.
    pub fn step(&mut self) -> Result<StepSummary> {
        let step = self.step;
        let step_after = step + 1;
        let modir = self.cfg.mode == Mode::Modir;
        let b = self.cfg.batch_size;

        if self.cfg.negative_mode == NegativeMode::MinedHard && step % self.cfg.mining_refresh_steps == 0 {
            self.refresh_negatives()?;
        }

        // (1)-(2) sample
        let src = self.sample_source();
        let tgt = if modir { self.sample_target() } else { Vec::new() };

        // (3) encode
        let mut items: Vec<Item> = Vec::new();
        let mut src_slots = Vec::with_capacity(b);
        for (q, p, negs) in &src {
            let qs = items.len();
            items.push(Item::SourceQuery(*q));
            items.push(Item::SourceDoc(*p));
            items.extend(negs.iter().map(|&d| Item::SourceDoc(d)));
            src_slots.push((qs, qs + 1, (qs + 2..qs + 2 + negs.len()).collect::<Vec<_>>()));
        }
        let mut tgt_slots = Vec::with_capacity(tgt.len());
        for (q, docs) in &tgt {
            let qs = items.len();
            items.push(Item::TargetQuery(*q));
            items.extend(docs.iter().map(|&d| Item::TargetDoc(d)));
            tgt_slots.push((qs, (qs + 1..qs + 1 + docs.len()).collect::<Vec<_>>()));
        }
        let encoded: Vec<(Vec<f64>, Tape)> = items.iter().map(|&it| self.encoder.encode(self.features(it))).collect();
        if !encoded.iter().all(|(e, _)| all_finite(e)) {
            return Err(Error::Diverged { step });
        }
        let emb = |i: usize| encoded[i].0.as_slice();

        // (3)-(4) queue and classifier
        let mut discrimination = None;
        let mut enc_around_clf = None;
        if modir {
            let mut source_part = Vec::with_capacity(3 * b);
            for (q, p, negs) in &src_slots {
                source_part.push(DetachedEmbedding::detach(emb(*q), Domain::Source, Role::Query, step));
                source_part.push(DetachedEmbedding::detach(emb(*p), Domain::Source, Role::PositiveDoc, step));
                source_part.push(DetachedEmbedding::detach(emb(negs[0]), Domain::Source, Role::NegativeDoc, step));
            }
            let mut target_part = Vec::with_capacity(3 * b);
            for (q, docs) in &tgt_slots {
                target_part.push(DetachedEmbedding::detach(emb(*q), Domain::Target, Role::Query, step));
                target_part.push(DetachedEmbedding::detach(emb(docs[0]), Domain::Target, Role::PositiveDoc, step));
                target_part.push(DetachedEmbedding::detach(emb(docs[1]), Domain::Target, Role::NegativeDoc, step));
            }
            if self.is_eval_step(step_after) {
                self.pending_batch_acc = Some(
                    self.classifier
                        .accuracy(source_part.iter().chain(&target_part).map(|e| (e.vector(), e.domain))),
                );
            }
            self.queue.push_batch(source_part, target_part)?;
            let before = self.encoder.checksum();
            let sweep = train_classifier_step(
                &mut self.classifier,
                &self.queue,
                self.cfg.classifier_lr,
                self.cfg.classifier_passes,
                &mut self.classifier_rng,
            )
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { step },
                other => other,
            })?;
            enc_around_clf = Some((before, self.encoder.checksum()));
            discrimination = Some(sweep.mean_loss);
        }

        // (5) encoder objective, classifier frozen
        let dim = self.encoder.output_dim();
        let mut upstream = vec![vec![0.0; dim]; items.len()];
        let inv_b = 1.0 / b as f64;
        let mut ranking_total = 0.0;
        for (q, p, negs) in &src_slots {
            let eq = emb(*q);
            let pos = dot(eq, emb(*p));
            let neg_scores: Vec<f64> = negs.iter().map(|&n| dot(eq, emb(n))).collect();
            let r = ranking_loss(pos, &neg_scores)?;
            ranking_total += r.loss;
            axpy(inv_b * r.d_pos, emb(*p), &mut upstream[*q]);
            axpy(inv_b * r.d_pos, eq, &mut upstream[*p]);
            for (&n, &g) in negs.iter().zip(&r.d_negs) {
                axpy(inv_b * g, emb(n), &mut upstream[*q]);
                axpy(inv_b * g, eq, &mut upstream[n]);
            }
        }
        let ranking_mean = ranking_total * inv_b;

        let lambda = self.cfg.lambda_for_step(step);
        let mut adversarial = None;
        if modir && lambda > 0.0 {
            let kind = self.cfg.adv_loss;
            let probs: Vec<f64> = encoded
                .iter()
                .map(|(e, _)| self.classifier.try_classify(e))
                .collect::<Result<_>>()
                .map_err(|_| Error::Diverged { step })?;
            let mut pairs: Vec<(usize, usize, Domain)> = Vec::new();
            for (q, p, negs) in &src_slots {
                pairs.push((*q, *p, Domain::Source));
                pairs.extend(negs.iter().map(|&n| (*q, n, Domain::Source)));
            }
            for (q, docs) in &tgt_slots {
                pairs.extend(docs.iter().map(|&d| (*q, d, Domain::Target)));
            }
            let mut total = 0.0;
            let scale = lambda * inv_b;
            for &(q, d, dom) in &pairs {
                let a = adversarial_loss(kind, probs[q], probs[d], dom);
                total += a.loss;
                for (slot, dp) in [(q, a.dp_q), (d, a.dp_d)] {
                    if dp != 0.0 {
                        let g = self.classifier.input_grad(prob_grad_to_logits(probs[slot], dp));
                        axpy(scale, &g, &mut upstream[slot]);
                    }
                }
            }
            adversarial = Some(total / pairs.len() as f64);
        }

        let clf_before = modir.then(|| self.classifier.checksum());
        let mut grad = self.encoder.zero_grad();
        for ((_, tape), up) in encoded.iter().zip(&upstream) {
            if up.iter().any(|&v| v != 0.0) {
                self.encoder.backprop(tape, up, &mut grad);
            }
        }
        let objective = ranking_mean + lambda * adversarial.unwrap_or(0.0);
        if !objective.is_finite() {
            return Err(Error::Diverged { step });
        }
        let grads = grad.slices();
        self.encoder_opt
            .step(self.encoder.param_slices_mut(), &grads, self.cfg.encoder_lr);
        if !self.encoder.flat_params().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { step });
        }
        let clf_around_enc = clf_before.map(|b| (b, self.classifier.checksum()));

        self.window.steps += 1;
        self.window.ranking += ranking_mean;
        if let Some(a) = adversarial {
            self.window.adversarial_steps += 1;
            self.window.adversarial += a;
        }
        if let Some(d) = discrimination {
            self.window.discrimination_steps += 1;
            self.window.discrimination += d;
        }
        self.step = step_after;
        Ok(StepSummary {
            step,
            ranking_loss: ranking_mean,
            adversarial_loss: adversarial,
            discrimination_loss: discrimination,
            lambda,
            encoder_checksum_around_classifier: enc_around_clf,
            classifier_checksum_around_encoder: clf_around_enc,
        })
    }

    fn report(&mut self, evaluator: &dyn Evaluate) -> Result<EvalReport> {
        let modir = self.cfg.mode == Mode::Modir;
        let mut r = evaluator.evaluate(&self.encoder, modir.then_some(&self.classifier), self.step)?;
        let w = std::mem::take(&mut self.window);
        let mean = |total: f64, n: u64| (n > 0).then(|| total / n as f64);
        r.mode = self.cfg.mode.as_str().to_string();
        r.ranking_loss = mean(w.ranking, w.steps);
        if modir {
            r.adv_loss = Some(self.cfg.adv_loss.as_str().to_string());
            r.lambda = Some(self.cfg.lambda_for_step(self.step.saturating_sub(1)));
            r.adversarial_loss = mean(w.adversarial, w.adversarial_steps);
            r.discrimination_loss = mean(w.discrimination, w.discrimination_steps);
            r.local_domain_acc_train_batch = self.pending_batch_acc.take();
        }
        Ok(r)
    }

    /// Trains until `total_steps`, evaluating every `eval_every` steps and at
    /// the end. `on_eval` receives each report with the checkpoint taken at
    /// the same step.
    pub fn run(
        &mut self,
        evaluator: &dyn Evaluate,
        on_eval: &mut dyn FnMut(&EvalReport, &Checkpoint) -> Result<()>,
    ) -> Result<Vec<EvalReport>> {
        let mut reports = Vec::new();
        while self.step < self.cfg.total_steps {
            self.step()?;
            if self.is_eval_step(self.step) {
                let r = self.report(evaluator)?;
                on_eval(&r, &self.checkpoint())?;
                reports.push(r);
            }
        }
        Ok(reports)
    }
}

fn check_corpora(cfg: &TrainConfig, source: &Corpus, target: &UnlabeledCorpus) -> Result<()> {
    if source.domain() != Domain::Source || target.domain() != Domain::Target {
        return Err(Error::Usage("trainer needs a source corpus and a target corpus".into()));
    }
    let want = cfg.encoder_dims[0];
    for (name, dim) in [("source", source.feature_dim()), ("target", target.feature_dim())] {
        match dim {
            Some(d) if d == want => {}
            Some(d) => {
                return Err(Error::Shape(format!("{name} features have dimension {d}, encoder expects {want}")));
            }
            None => return Err(Error::Usage(format!("{name} corpus is empty"))),
        }
    }
    if cfg.mode == Mode::Modir && (target.queries().is_empty() || target.documents().is_empty()) {
        return Err(Error::Usage("target corpus needs queries and documents".into()));
    }
    Ok(())
}

/// Trains from scratch.
pub fn train(
    cfg: TrainConfig,
    source: &Corpus,
    target: &UnlabeledCorpus,
    evaluator: &dyn Evaluate,
) -> Result<(Checkpoint, Vec<EvalReport>)> {
    let mut t = Trainer::new(cfg, source, target)?;
    let reports = t.run(evaluator, &mut |_, _| Ok(()))?;
    Ok((t.checkpoint(), reports))
}

/// Continues a checkpointed run to `cfg.total_steps`.
pub fn resume(
    ckpt: &Checkpoint,
    cfg: TrainConfig,
    source: &Corpus,
    target: &UnlabeledCorpus,
    evaluator: &dyn Evaluate,
) -> Result<(Checkpoint, Vec<EvalReport>)> {
    let mut t = Trainer::from_checkpoint(ckpt, cfg, source, target)?;
    let reports = t.run(evaluator, &mut |_, _| Ok(()))?;
    Ok((t.checkpoint(), reports))
}
