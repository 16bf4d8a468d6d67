//! Trains the default MoDIR configuration next to a ranking-only baseline
//! and prints both trajectories.
//!
//!     cargo run --release --example train_modir -- [seed]

use modir::metrics::{EvalReport, Evaluator};
use modir::synthdata::{generate, GenConfig};
use modir::trainer::{train, Mode, TrainConfig};

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:6.1}")).unwrap_or_else(|| "     -".into())
}

fn main() -> modir::Result<()> {
    let seed = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed must be an integer"));
    let (source, target) = generate(&GenConfig::default())?;
    let unlabeled = target.unlabeled();

    let run = |mode| -> modir::Result<Vec<EvalReport>> {
        let cfg = TrainConfig {
            mode,
            seed,
            ..TrainConfig::default()
        };
        let ev = Evaluator::new(source.clone(), target.clone(), cfg.eval.clone(), seed)?;
        Ok(train(cfg, &source, &unlabeled, &ev)?.1)
    };
    let modir = run(Mode::Modir)?;
    let baseline = run(Mode::BaselineRankingOnly)?;

    println!(" step | base tgt | modir src  tgt   KNN-S%  global  local");
    for (m, b) in modir.iter().zip(&baseline).filter(|(m, _)| m.step % 250 == 0) {
        println!(
            "{:5} |   {:.3}  |     {:.3}  {:.3}  {:6.1}  {}  {}",
            m.step,
            b.target_ndcg,
            m.source_ndcg,
            m.target_ndcg,
            m.knn_source_pct,
            fmt(m.global_domain_acc),
            fmt(m.local_domain_acc)
        );
    }
    let (m, b) = (modir.last().unwrap(), baseline.last().unwrap());
    println!(
        "\nfinal target nDCG@10: modir {:.3}, baseline {:.3} ({:+.3})",
        m.target_ndcg,
        b.target_ndcg,
        m.target_ndcg - b.target_ndcg
    );
    Ok(())
}
