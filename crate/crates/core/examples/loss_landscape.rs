//! Tabulates the three adversarial losses as a function of the domain
//! classifier's output, plus the ranking loss and the λ schedule.

use modir::objectives::{adversarial_loss, ranking_loss, AdvLossKind, LambdaSchedule};
use modir::synthdata::Domain;

fn main() -> modir::Result<()> {
    println!("p(source)  confusion  minimax(src)  minimax(tgt)  gan(src)  gan(tgt)");
    for i in [1, 10, 25, 40, 50, 60, 75, 90, 99] {
        let p = i as f64 / 100.0;
        let l = |k, d| adversarial_loss(k, p, p, d).loss;
        println!(
            "{p:>9.2}  {:>9.4}  {:>12.4}  {:>12.4}  {:>8.4}  {:>8.4}",
            l(AdvLossKind::Confusion, Domain::Source),
            l(AdvLossKind::Minimax, Domain::Source),
            l(AdvLossKind::Minimax, Domain::Target),
            l(AdvLossKind::Gan, Domain::Source),
            l(AdvLossKind::Gan, Domain::Target),
        );
    }
    println!("confusion minimum 2 ln 2 = {:.6}", 2.0 * std::f64::consts::LN_2);

    println!("\nranking loss, positive score 1 against two negatives:");
    for neg in [-1.0, 0.0, 1.0, 2.0] {
        let r = ranking_loss(1.0, &[neg, neg])?;
        println!("  negatives at {neg:+.1}: loss {:.4}, d/d(pos) {:+.4}", r.loss, r.d_pos);
    }

    let sched = LambdaSchedule::new(0.1, 500)?;
    println!("\nlambda schedule (lambda0 0.1, half-life 500):");
    for t in [0, 250, 500, 1000, 1500] {
        println!("  t={t:<5} lambda={:.5}", sched.at(t));
    }
    Ok(())
}
