use modir::synthdata::{generate, GenConfig};

fn main() {
    let (_, target) = generate(&GenConfig::default()).unwrap();
    let view = target.unlabeled();
    let _ = view.qrels();
}
