//! Paired source/target corpora that share one latent relevance structure.
//!
//! Every query and document belongs to a latent topic. A document is
//! relevant to a query iff they share a topic, in both domains. Observed
//! features are `x = A_d·z + b_d + noise`; the target map `(A_t, b_t)` is
//! the source map with a configurable shift applied.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Rng, Stream};

pub const CORPUS_FORMAT: &str = "modir-corpus";
pub const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::Source => "s",
            Domain::Target => "t",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    Rotation,
    Affine,
    RotationTranslation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub n_topics: usize,
    pub queries_per_domain: usize,
    pub docs_per_domain: usize,
    /// Minimum number of relevant documents every query must have.
    pub docs_per_query_relevant: usize,
    pub shift_kind: ShiftKind,
    /// 0 leaves the target identical in distribution to the source.
    pub shift_magnitude: f64,
    /// Length of the target offset at `shift_magnitude = 1`.
    pub translation_norm: f64,
    pub noise_sigma: f64,
    /// Topic centers are resampled until pairwise cosine is at most this.
    pub max_center_cosine: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            feature_dim: 32,
            n_topics: 16,
            queries_per_domain: 256,
            docs_per_domain: 2048,
            docs_per_query_relevant: 1,
            shift_kind: ShiftKind::RotationTranslation,
            shift_magnitude: 1.0,
            translation_norm: 1.0,
            noise_sigma: 0.05,
            max_center_cosine: 0.6,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 {
            return fail("latent_dim must be positive".into());
        }
        if self.feature_dim < self.latent_dim {
            return fail(format!(
                "feature_dim ({}) must be >= latent_dim ({})",
                self.feature_dim, self.latent_dim
            ));
        }
        if self.n_topics == 0 || self.queries_per_domain == 0 || self.docs_per_domain == 0 {
            return fail("n_topics, queries_per_domain and docs_per_domain must be positive".into());
        }
        if self.docs_per_query_relevant == 0 {
            return fail("docs_per_query_relevant must be at least 1".into());
        }
        let per_topic = self.docs_per_domain / self.n_topics;
        if per_topic < self.docs_per_query_relevant {
            return fail(format!(
                "{} docs over {} topics gives {} per topic, fewer than the {} relevant docs requested",
                self.docs_per_domain, self.n_topics, per_topic, self.docs_per_query_relevant
            ));
        }
        if self.docs_per_domain <= per_topic {
            return fail("every query needs at least one non-relevant document".into());
        }
        if !(0.0..=1.0).contains(&self.shift_magnitude) {
            return fail(format!("shift_magnitude {} outside [0, 1]", self.shift_magnitude));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise_sigma must be finite and non-negative".into());
        }
        if !(self.translation_norm >= 0.0 && self.translation_norm.is_finite()) {
            return fail("translation_norm must be finite and non-negative".into());
        }
        if !(self.max_center_cosine > -1.0 && self.max_center_cosine <= 1.0) {
            return fail("max_center_cosine must lie in (-1, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Read access shared by labeled and unlabeled corpora.
pub trait Collection {
    fn domain(&self) -> Domain;
    fn queries(&self) -> &[Record];
    fn documents(&self) -> &[Record];

    fn feature_dim(&self) -> Option<usize> {
        self.queries()
            .first()
            .or_else(|| self.documents().first())
            .map(|r| r.vector.len())
    }
}

pub type Qrels = BTreeMap<String, BTreeSet<String>>;

/// Queries, documents and relevance judgments of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    domain: Domain,
    queries: Vec<Record>,
    documents: Vec<Record>,
    qrels: Qrels,
}

impl Corpus {
    pub fn new(domain: Domain, queries: Vec<Record>, documents: Vec<Record>, qrels: Qrels) -> Result<Self> {
        let qids = unique_ids(&queries, "query")?;
        let dids = unique_ids(&documents, "document")?;
        for (q, docs) in &qrels {
            if !qids.contains(q.as_str()) {
                return Err(Error::Usage(format!("qrels reference unknown query {q}")));
            }
            if let Some(d) = docs.iter().find(|d| !dids.contains(d.as_str())) {
                return Err(Error::Usage(format!("qrels of {q} reference unknown document {d}")));
            }
        }
        Ok(Self {
            domain,
            queries,
            documents,
            qrels,
        })
    }

    pub fn qrels(&self) -> &Qrels {
        &self.qrels
    }

    /// The same corpus with its relevance judgments dropped.
    pub fn unlabeled(&self) -> UnlabeledCorpus {
        UnlabeledCorpus {
            domain: self.domain,
            queries: self.queries.clone(),
            documents: self.documents.clone(),
        }
    }
}

impl Collection for Corpus {
    fn domain(&self) -> Domain {
        self.domain
    }
    fn queries(&self) -> &[Record] {
        &self.queries
    }
    fn documents(&self) -> &[Record] {
        &self.documents
    }
}

/// Queries and documents with no relevance information at all.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnlabeledCorpus {
    domain: Domain,
    queries: Vec<Record>,
    documents: Vec<Record>,
}

impl Collection for UnlabeledCorpus {
    fn domain(&self) -> Domain {
        self.domain
    }
    fn queries(&self) -> &[Record] {
        &self.queries
    }
    fn documents(&self) -> &[Record] {
        &self.documents
    }
}

fn unique_ids<'a>(records: &'a [Record], what: &str) -> Result<BTreeSet<&'a str>> {
    let mut seen = BTreeSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Usage(format!("duplicate {what} id {}", r.id)));
        }
    }
    Ok(seen)
}

/// Latent side of a generated corpus, for oracle checks.
#[derive(Debug, Clone)]
pub struct Latents {
    pub query_topics: Vec<usize>,
    pub doc_topics: Vec<usize>,
    pub query_latents: Vec<Vec<f64>>,
    pub doc_latents: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub source: Corpus,
    pub target: Corpus,
    pub source_latents: Latents,
    pub target_latents: Latents,
    pub centers: Vec<Vec<f64>>,
}

pub fn generate(cfg: &GenConfig) -> Result<(Corpus, Corpus)> {
    let g = generate_with_latents(cfg)?;
    Ok((g.source, g.target))
}

/// Observation map `x = A·z + b`, `A` stored as its columns.
struct FeatureMap {
    columns: Vec<Vec<f64>>,
    offset: Vec<f64>,
}

impl FeatureMap {
    fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.offset.clone();
        for (col, &zj) in self.columns.iter().zip(z) {
            axpy(zj, col, &mut x);
        }
        x
    }
}

pub fn generate_with_latents(cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let centers = topic_centers(cfg, &mut Rng::with_substream(cfg.seed, Stream::Data, 0));
    let basis = orthonormal_basis(cfg.feature_dim, &mut Rng::with_substream(cfg.seed, Stream::Data, 1));
    let source_map = FeatureMap {
        columns: basis[..cfg.latent_dim].to_vec(),
        offset: vec![0.0; cfg.feature_dim],
    };
    let target_map = shifted_map(cfg, &basis, &mut Rng::with_substream(cfg.seed, Stream::Data, 2));

    let (source, source_latents) = sample_domain(
        cfg,
        Domain::Source,
        &centers,
        &source_map,
        &mut Rng::with_substream(cfg.seed, Stream::Data, 3),
    )?;
    let (target, target_latents) = sample_domain(
        cfg,
        Domain::Target,
        &centers,
        &target_map,
        &mut Rng::with_substream(cfg.seed, Stream::Data, 4),
    )?;
    Ok(Generated {
        source,
        target,
        source_latents,
        target_latents,
        centers,
    })
}

fn unit_gaussian(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn topic_centers(cfg: &GenConfig, rng: &mut Rng) -> Vec<Vec<f64>> {
    const MAX_TRIES: usize = 10_000;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_topics);
    while centers.len() < cfg.n_topics {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..MAX_TRIES {
            let c = unit_gaussian(cfg.latent_dim, rng);
            let worst = centers.iter().map(|o| dot(o, &c)).fold(f64::NEG_INFINITY, f64::max);
            if worst <= cfg.max_center_cosine {
                best = Some((worst, c));
                break;
            }
            if best.as_ref().is_none_or(|(w, _)| worst < *w) {
                best = Some((worst, c));
            }
        }
        // Too many topics for the angle budget: keep the best candidate found.
        centers.push(best.expect("at least one candidate").1);
    }
    centers
}

/// Columns of a random orthonormal `dim × dim` matrix (Gram–Schmidt).
fn orthonormal_basis(dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

fn shifted_map(cfg: &GenConfig, basis: &[Vec<f64>], rng: &mut Rng) -> FeatureMap {
    let k = cfg.latent_dim;
    let d = cfg.feature_dim;
    let m = cfg.shift_magnitude;
    let source_cols = &basis[..k];
    let direction = unit_gaussian(d, rng);
    let offset: Vec<f64> = direction.iter().map(|x| x * m * cfg.translation_norm).collect();

    let rotate = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let theta = m * std::f64::consts::FRAC_PI_2;
        let (s, c) = theta.sin_cos();
        if d > k {
            let complement = &basis[k..];
            cols.iter()
                .enumerate()
                .map(|(j, a)| {
                    let mut col: Vec<f64> = a.iter().map(|x| c * x).collect();
                    axpy(s, &complement[j % complement.len()], &mut col);
                    col
                })
                .collect()
        } else {
            // No complement: Givens rotations inside the latent span.
            let mut out = cols.to_vec();
            for pair in 0..k / 2 {
                let (i, j) = (2 * pair, 2 * pair + 1);
                for r in 0..d {
                    out[i][r] = c * cols[i][r] + s * cols[j][r];
                    out[j][r] = -s * cols[i][r] + c * cols[j][r];
                }
            }
            out
        }
    };

    match cfg.shift_kind {
        ShiftKind::Rotation => FeatureMap {
            columns: rotate(source_cols),
            offset: vec![0.0; d],
        },
        ShiftKind::RotationTranslation => FeatureMap {
            columns: rotate(source_cols),
            offset,
        },
        ShiftKind::Affine => {
            // A_t = A_s (I + m S), S ~ N(0, 1/k)
            let scale = 1.0 / (k as f64).sqrt();
            let mix: Vec<Vec<f64>> = (0..k)
                .map(|_| (0..k).map(|_| rng.normal() * scale).collect())
                .collect();
            let columns = (0..k)
                .map(|j| {
                    let mut col = source_cols[j].clone();
                    for (i, src) in source_cols.iter().enumerate() {
                        axpy(m * mix[i][j], src, &mut col);
                    }
                    col
                })
                .collect();
            FeatureMap { columns, offset }
        }
    }
}

fn sample_domain(
    cfg: &GenConfig,
    domain: Domain,
    centers: &[Vec<f64>],
    map: &FeatureMap,
    rng: &mut Rng,
) -> Result<(Corpus, Latents)> {
    let draw = |topic: usize, rng: &mut Rng| -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = centers[topic]
            .iter()
            .map(|c| c + cfg.noise_sigma * rng.normal())
            .collect();
        let mut x = map.apply(&z);
        for xi in &mut x {
            *xi += cfg.noise_sigma * rng.normal();
        }
        (z, x)
    };

    let tag = domain.tag();
    let mut queries = Vec::with_capacity(cfg.queries_per_domain);
    let mut query_topics = Vec::with_capacity(cfg.queries_per_domain);
    let mut query_latents = Vec::with_capacity(cfg.queries_per_domain);
    for i in 0..cfg.queries_per_domain {
        let topic = i % cfg.n_topics;
        let (z, x) = draw(topic, rng);
        queries.push(Record {
            id: format!("{tag}-q{i:05}"),
            vector: x,
        });
        query_topics.push(topic);
        query_latents.push(z);
    }

    let mut documents = Vec::with_capacity(cfg.docs_per_domain);
    let mut doc_topics = Vec::with_capacity(cfg.docs_per_domain);
    let mut doc_latents = Vec::with_capacity(cfg.docs_per_domain);
    let mut by_topic: Vec<BTreeSet<String>> = vec![BTreeSet::new(); cfg.n_topics];
    for i in 0..cfg.docs_per_domain {
        let topic = i % cfg.n_topics;
        let (z, x) = draw(topic, rng);
        let id = format!("{tag}-d{i:05}");
        by_topic[topic].insert(id.clone());
        documents.push(Record { id, vector: x });
        doc_topics.push(topic);
        doc_latents.push(z);
    }

    let qrels = queries
        .iter()
        .zip(&query_topics)
        .map(|(q, &t)| (q.id.clone(), by_topic[t].clone()))
        .collect();
    let corpus = Corpus::new(domain, queries, documents, qrels)?;
    Ok((
        corpus,
        Latents {
            query_topics,
            doc_topics,
            query_latents,
            doc_latents,
        },
    ))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header {
        format: String,
        version: u32,
        domain: Domain,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<GenConfig>,
    },
    Query {
        id: String,
        vector: Vec<f64>,
    },
    Doc {
        id: String,
        vector: Vec<f64>,
    },
    Qrel {
        query_id: String,
        doc_ids: Vec<String>,
    },
}

/// Writes one corpus as line-delimited JSON: a header line followed by
/// query, doc and qrel records.
pub fn write_corpus(path: &Path, corpus: &Corpus, config: Option<&GenConfig>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: &Line| -> Result<()> {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    emit(&Line::Header {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        domain: corpus.domain,
        config: config.cloned(),
    })?;
    for q in &corpus.queries {
        emit(&Line::Query {
            id: q.id.clone(),
            vector: q.vector.clone(),
        })?;
    }
    for d in &corpus.documents {
        emit(&Line::Doc {
            id: d.id.clone(),
            vector: d.vector.clone(),
        })?;
    }
    for (q, docs) in &corpus.qrels {
        emit(&Line::Qrel {
            query_id: q.clone(),
            doc_ids: docs.iter().cloned().collect(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<(Corpus, Option<GenConfig>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut header: Option<(Domain, Option<GenConfig>)> = None;
    let mut queries = Vec::new();
    let mut documents = Vec::new();
    let mut qrels = Qrels::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        match (parsed, &header) {
            (
                Line::Header {
                    format,
                    version,
                    domain,
                    config,
                },
                None,
            ) => {
                if format != CORPUS_FORMAT || version != CORPUS_VERSION {
                    return Err(bad(format!("unsupported format {format} v{version}")));
                }
                header = Some((domain, config));
            }
            (_, None) => return Err(bad("first line must be the header".into())),
            (Line::Header { .. }, Some(_)) => return Err(bad(format!("line {}: second header", n + 1))),
            (Line::Query { id, vector }, _) => queries.push(Record { id, vector }),
            (Line::Doc { id, vector }, _) => documents.push(Record { id, vector }),
            (Line::Qrel { query_id, doc_ids }, _) => {
                qrels.entry(query_id).or_default().extend(doc_ids);
            }
        }
    }
    let (domain, config) = header.ok_or_else(|| bad("empty file".into()))?;
    let dim = queries.first().or(documents.first()).map(|r| r.vector.len());
    if let Some(dim) = dim {
        if let Some(r) = queries.iter().chain(&documents).find(|r| r.vector.len() != dim) {
            return Err(bad(format!("record {} has dimension {}, expected {dim}", r.id, r.vector.len())));
        }
    }
    let corpus = Corpus::new(domain, queries, documents, qrels).map_err(|e| bad(e.to_string()))?;
    Ok((corpus, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            queries_per_domain: 64,
            docs_per_domain: 256,
            ..GenConfig::default()
        }
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let (s1, t1) = generate(&small()).unwrap();
        let (s2, t2) = generate(&small()).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn every_query_has_relevant_docs_and_ids_resolve() {
        let (s, t) = generate(&small()).unwrap();
        for c in [&s, &t] {
            assert_eq!(c.qrels().len(), c.queries().len());
            for docs in c.qrels().values() {
                assert!(!docs.is_empty());
            }
        }
        assert!(s.queries()[0].id.starts_with("s-"));
        assert!(t.documents()[0].id.starts_with("t-"));
    }

    #[test]
    fn relevance_follows_shared_topic() {
        let g = generate_with_latents(&small()).unwrap();
        for (c, lat) in [(&g.source, &g.source_latents), (&g.target, &g.target_latents)] {
            for (qi, q) in c.queries().iter().enumerate() {
                let rel = &c.qrels()[&q.id];
                for (di, d) in c.documents().iter().enumerate() {
                    let same = lat.query_topics[qi] == lat.doc_topics[di];
                    assert_eq!(rel.contains(&d.id), same);
                }
            }
        }
    }

    #[test]
    fn zero_shift_target_matches_source_map() {
        let cfg = GenConfig {
            shift_magnitude: 0.0,
            noise_sigma: 0.0,
            ..small()
        };
        let g = generate_with_latents(&cfg).unwrap();
        // Without noise, a source and a target item of the same latent map
        // identically; compare topic-center images.
        let s0 = &g.source.documents()[0].vector;
        let t0 = &g.target.documents()[0].vector;
        assert_eq!(g.source_latents.doc_topics[0], g.target_latents.doc_topics[0]);
        for (a, b) in s0.iter().zip(t0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn infeasible_counts_rejected() {
        let cfg = GenConfig {
            docs_per_domain: 32,
            docs_per_query_relevant: 3,
            ..GenConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = GenConfig {
            feature_dim: 4,
            ..GenConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn unlabeled_view_drops_qrels() {
        let (s, _) = generate(&small()).unwrap();
        let u = s.unlabeled();
        assert_eq!(u.queries(), s.queries());
        let json = serde_json::to_string(&u).unwrap();
        assert!(!json.contains("qrel"));
    }

    #[test]
    fn corpus_file_round_trips() {
        let cfg = small();
        let (s, _) = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("source.jsonl");
        write_corpus(&path, &s, Some(&cfg)).unwrap();
        let (back, back_cfg) = read_corpus(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(back_cfg, Some(cfg));
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 1 + s.queries().len() + s.documents().len() + s.qrels().len());
    }

    #[test]
    fn reader_rejects_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"kind\":\"query\",\"id\":\"q\",\"vector\":[1.0]}\n").unwrap();
        assert!(matches!(read_corpus(&path), Err(Error::Format { .. })));
    }
}
