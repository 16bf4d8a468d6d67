//! Projects source and target embeddings to 2-D before and after MoDIR
//! training and reports how far apart the two domain clouds sit.
//!
//!     cargo run --release --example pca_projection -- [out.csv]

use std::fmt::Write as _;

use modir::cli::project::pca_2d;
use modir::encoder::Encoder;
use modir::metrics::Evaluator;
use modir::retrieval::embed_all;
use modir::synthdata::{generate, Collection, GenConfig};
use modir::trainer::{train, TrainConfig, Trainer};

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let s = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

fn main() -> modir::Result<()> {
    let out = std::env::args().nth(1);
    let (source, target) = generate(&GenConfig::default())?;
    let unlabeled = target.unlabeled();
    let cfg = TrainConfig::default();

    let untrained = Trainer::new(cfg.clone(), &source, &unlabeled)?.encoder().clone();
    let ev = Evaluator::new(source.clone(), target.clone(), cfg.eval.clone(), cfg.seed)?;
    let trained: Encoder = train(cfg, &source, &unlabeled, &ev)?.0.encoder()?;

    let mut csv = String::from("stage,domain,pc1,pc2\n");
    for (stage, enc) in [("untrained", &untrained), ("trained", &trained)] {
        let mut points = embed_all(enc, source.documents());
        let n_source = points.len();
        points.extend(embed_all(enc, target.documents()));
        let coords = pca_2d(&points)?;
        let (s, t) = coords.split_at(n_source);
        let (cs, ct) = (centroid(s), centroid(t));
        let spread = coords.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / coords.len() as f64;
        println!(
            "{stage:<9}: source/target centroid distance in PC space {:.3} (rms radius {:.3})",
            ((cs[0] - ct[0]).powi(2) + (cs[1] - ct[1]).powi(2)).sqrt(),
            spread.sqrt()
        );
        for (i, p) in coords.iter().enumerate() {
            let domain = if i < n_source { "source" } else { "target" };
            let _ = writeln!(csv, "{stage},{domain},{},{}", p[0], p[1]);
        }
    }
    if let Some(path) = out {
        std::fs::write(&path, csv).map_err(|e| modir::Error::io(&path, e))?;
        println!("wrote {path}");
    }
    Ok(())
}
