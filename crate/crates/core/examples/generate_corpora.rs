//! Generates the default source/target corpus pair, writes both as JSONL,
//! and shows how far apart the two domains sit in feature space.
//!
//!     cargo run --release --example generate_corpora -- [out_dir]

use std::path::PathBuf;

use modir::numerics::{dot, norm};
use modir::synthdata::{generate_with_latents, write_corpus, Collection, GenConfig, ShiftKind};

fn mean_vector<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0.0;
    for r in rows {
        if sum.is_empty() {
            sum = vec![0.0; r.len()];
        }
        sum.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        n += 1.0;
    }
    sum.iter().map(|s| s / n).collect()
}

fn main() -> modir::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpora".into()));
    std::fs::create_dir_all(&out).map_err(|e| modir::Error::io(&out, e))?;

    for (name, kind, magnitude) in [
        ("no shift", ShiftKind::RotationTranslation, 0.0),
        ("rotation", ShiftKind::Rotation, 1.0),
        ("affine", ShiftKind::Affine, 1.0),
        ("rotation + translation (default)", ShiftKind::RotationTranslation, 1.0),
    ] {
        let cfg = GenConfig {
            shift_kind: kind,
            shift_magnitude: magnitude,
            ..GenConfig::default()
        };
        let g = generate_with_latents(&cfg)?;
        let ms = mean_vector(g.source.documents().iter().map(|r| r.vector.as_slice()));
        let mt = mean_vector(g.target.documents().iter().map(|r| r.vector.as_slice()));
        let gap: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
        let cos = dot(&ms, &mt) / (norm(&ms) * norm(&mt));
        println!(
            "{name:<34} centroid distance {:.3}  centroid cosine {cos:+.3}",
            norm(&gap)
        );
    }

    let cfg = GenConfig::default();
    let g = generate_with_latents(&cfg)?;
    for (corpus, file) in [(&g.source, "source.jsonl"), (&g.target, "target.jsonl")] {
        let path = out.join(file);
        write_corpus(&path, corpus, Some(&cfg))?;
        println!(
            "wrote {} ({} queries, {} documents, {} judged queries)",
            path.display(),
            corpus.queries().len(),
            corpus.documents().len(),
            corpus.qrels().len()
        );
    }
    Ok(())
}
