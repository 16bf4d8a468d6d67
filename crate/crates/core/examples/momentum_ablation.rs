//! Runs the default configuration with momentum step n=1 and n=8 and
//! compares how far the in-training classifier's accuracy lags behind a
//! freshly fitted probe.

use modir::metrics::{EvalReport, Evaluator};
use modir::synthdata::{generate, GenConfig};
use modir::trainer::{train, TrainConfig};

fn main() -> modir::Result<()> {
    let (source, target) = generate(&GenConfig::default())?;
    let unlabeled = target.unlabeled();
    let warmup = TrainConfig::default().warmup_steps;

    for n in [1, 8] {
        let cfg = TrainConfig {
            momentum_n: n,
            ..TrainConfig::default()
        };
        let ev = Evaluator::new(source.clone(), target.clone(), cfg.eval.clone(), cfg.seed)?;
        let reports: Vec<EvalReport> = train(cfg, &source, &unlabeled, &ev)?.1;
        let adversarial: Vec<&EvalReport> = reports.iter().filter(|r| r.step > warmup).collect();
        let gap = adversarial
            .iter()
            .map(|r| (r.local_domain_acc.unwrap() - r.global_domain_acc.unwrap()).abs())
            .sum::<f64>()
            / adversarial.len() as f64;
        let start = reports.iter().find(|r| r.step == warmup).unwrap().global_domain_acc.unwrap();
        let mean_global = adversarial.iter().map(|r| r.global_domain_acc.unwrap()).sum::<f64>() / adversarial.len() as f64;
        println!(
            "n={n}: Global Domain-Acc {start:.1}% at warmup end, {mean_global:.1}% mean afterwards; mean |Local - Global| {gap:.1} points"
        );
    }
    Ok(())
}
