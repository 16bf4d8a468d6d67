use modir::metrics::{EvalConfig, Evaluator};
use modir::synthdata::{generate, GenConfig};
use modir::trainer::{train, TrainConfig};

fn main() {
    let (source, target) = generate(&GenConfig::default()).unwrap();
    let ev = Evaluator::new(source.clone(), target.clone(), EvalConfig::default(), 1).unwrap();
    let _ = train(TrainConfig::default(), &source, &target, &ev);
}
