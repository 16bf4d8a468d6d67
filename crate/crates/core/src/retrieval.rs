//! Exact brute-force dense retrieval.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::numerics::{dot, Rng};
use crate::synthdata::{Collection, Domain, Qrels, Record};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub domain: Domain,
    pub embedding: Vec<f64>,
}

/// Document embeddings, kept sorted by `doc_id` so that position order is
/// the tie-break order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    entries: Vec<IndexEntry>,
    built_at_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
    pub domain: Domain,
}

/// Embeds many feature vectors; order of the output matches the input.
pub fn embed_all(enc: &Encoder, records: &[Record]) -> Vec<Vec<f64>> {
    records.par_iter().map(|r| enc.embed(&r.vector)).collect()
}

impl EmbeddingIndex {
    pub fn from_entries(mut entries: Vec<IndexEntry>, built_at_step: u64) -> Result<Self> {
        entries.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::Usage(format!("duplicate doc id {} in index", w[0].doc_id)));
        }
        if let Some(first) = entries.first() {
            let dim = first.embedding.len();
            if entries.iter().any(|e| e.embedding.len() != dim) {
                return Err(Error::Shape("index embeddings differ in dimension".into()));
            }
        }
        Ok(Self { entries, built_at_step })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn built_at_step(&self) -> u64 {
        self.built_at_step
    }

    pub fn has_domain(&self, domain: Domain) -> bool {
        self.entries.iter().any(|e| e.domain == domain)
    }

    /// Writes one JSON object per line: `{doc_id, domain, embedding}`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n").map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn build_index(enc: &Encoder, corpora: &[&dyn Collection], step: u64) -> Result<EmbeddingIndex> {
    let mut entries = Vec::new();
    for c in corpora {
        if let Some(dim) = c.feature_dim() {
            if dim != enc.input_dim() {
                return Err(Error::Shape(format!(
                    "corpus features have dimension {dim}, encoder expects {}",
                    enc.input_dim()
                )));
            }
        }
        let embs = embed_all(enc, c.documents());
        entries.extend(c.documents().iter().zip(embs).map(|(d, e)| IndexEntry {
            doc_id: d.id.clone(),
            domain: c.domain(),
            embedding: e,
        }));
    }
    EmbeddingIndex::from_entries(entries, step)
}

/// Descending score, then ascending position (= ascending doc id).
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Positions and scores of the `k` best entries, best first.
pub fn top_k_positions(index: &EmbeddingIndex, query: &[f64], k: usize) -> Vec<(usize, f64)> {
    assert!(k >= 1, "top_k: k must be >= 1");
    let mut scored: Vec<(usize, f64)> = index
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (i, dot(&e.embedding, query)))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    scored
}

pub fn top_k(index: &EmbeddingIndex, query: &[f64], k: usize) -> Vec<Hit> {
    top_k_positions(index, query, k)
        .into_iter()
        .map(|(i, score)| {
            let e = &index.entries[i];
            Hit {
                doc_id: e.doc_id.clone(),
                score,
                domain: e.domain,
            }
        })
        .collect()
}

/// `top_k` for many queries, results in query order.
pub fn top_k_batch(index: &EmbeddingIndex, queries: &[Vec<f64>], k: usize) -> Vec<Vec<Hit>> {
    queries.par_iter().map(|q| top_k(index, q, k)).collect()
}

/// Hard negatives for every query: the `per_query` highest-ranked
/// non-relevant documents, padded with random non-relevant documents when
/// the ranked list runs short.
pub fn mine_hard_negatives(
    index: &EmbeddingIndex,
    enc: &Encoder,
    queries: &[Record],
    qrels: &Qrels,
    per_query: usize,
    rng: &mut Rng,
) -> Result<BTreeMap<String, Vec<String>>> {
    let empty = BTreeSet::new();
    let embs = embed_all(enc, queries);
    let ranked: Vec<Vec<Hit>> = queries
        .par_iter()
        .zip(&embs)
        .map(|(q, e)| {
            let rel = qrels.get(&q.id).unwrap_or(&empty);
            top_k(index, e, (per_query + rel.len()).max(1))
        })
        .collect();

    let mut out = BTreeMap::new();
    for (q, hits) in queries.iter().zip(ranked) {
        let rel = qrels.get(&q.id).unwrap_or(&empty);
        let non_relevant = index.len() - index.entries.iter().filter(|e| rel.contains(&e.doc_id)).count();
        if non_relevant == 0 {
            return Err(Error::Config(format!("query {} has no non-relevant documents", q.id)));
        }
        let mut chosen: Vec<String> = hits
            .into_iter()
            .filter(|h| !rel.contains(&h.doc_id))
            .take(per_query)
            .map(|h| h.doc_id)
            .collect();
        while chosen.len() < per_query {
            let e = &index.entries[rng.below(index.len())];
            if !rel.contains(&e.doc_id) {
                chosen.push(e.doc_id.clone());
            }
        }
        out.insert(q.id.clone(), chosen);
    }
    Ok(out)
}
