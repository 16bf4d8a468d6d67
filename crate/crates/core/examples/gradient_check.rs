//! Compares the hand-written backward pass against central finite
//! differences: first the encoder alone, then the confusion loss chained
//! through a frozen domain classifier into the encoder.

use modir::encoder::{Activation, Encoder};
use modir::momentum::DomainClassifier;
use modir::numerics::{check_gradient, dot, Mat, Rng, Stream};
use modir::objectives::{adversarial_loss, prob_grad_to_logits, AdvLossKind};
use modir::synthdata::Domain;

fn main() -> modir::Result<()> {
    let mut rng = Rng::new(11, Stream::Init);
    let enc = Encoder::init(&[32, 64, 32], Activation::Tanh, &mut rng)?;
    let x: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
    let params = enc.flat_params();
    println!("encoder 32-64-32 tanh, {} parameters", enc.param_count());

    // f(θ) = u · g_θ(x) for a fixed random direction u
    let u: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
    let (_, tape) = enc.encode(&x);
    let mut grad = enc.zero_grad();
    enc.backprop(&tape, &u, &mut grad);
    let f = |p: &[f64]| {
        let mut e = enc.clone();
        e.set_flat_params(p);
        dot(&u, &e.embed(&x))
    };
    let err = check_gradient(f, &grad.flat(), &params, 1e-6)?;
    println!("projection u.g(x):          max relative error {err:.2e}");

    let w: Vec<f64> = (0..64).map(|_| 0.5 * rng.normal()).collect();
    let clf = DomainClassifier::from_weights(Mat::from_vec(2, 32, w)?, None)?;
    let d: Vec<f64> = (0..32).map(|_| rng.normal()).collect();
    for kind in [AdvLossKind::Confusion, AdvLossKind::Minimax, AdvLossKind::Gan] {
        let loss = |p: &[f64]| {
            let mut e = enc.clone();
            e.set_flat_params(p);
            adversarial_loss(kind, clf.classify(&e.embed(&x)), clf.classify(&e.embed(&d)), Domain::Target).loss
        };
        let (eq, tq) = enc.encode(&x);
        let (ed, td) = enc.encode(&d);
        let (pq, pd) = (clf.classify(&eq), clf.classify(&ed));
        let a = adversarial_loss(kind, pq, pd, Domain::Target);
        let mut g = enc.zero_grad();
        enc.backprop(&tq, &clf.input_grad(prob_grad_to_logits(pq, a.dp_q)), &mut g);
        enc.backprop(&td, &clf.input_grad(prob_grad_to_logits(pd, a.dp_d)), &mut g);
        let err = check_gradient(loss, &g.flat(), &params, 1e-6)?;
        println!("{:<9} loss through classifier: max relative error {err:.2e}", kind.as_str());
    }
    Ok(())
}
