//! Acceptance suite. Runs as a plain program and prints one PASS/FAIL line
//! per criterion; exits non-zero if any criterion fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use modir::cli::{cmd_train, RunConfig, TrainArgs};
use modir::encoder::{Activation, Encoder, Tape};
use modir::metrics::{EvalReport, Evaluator};
use modir::momentum::DomainClassifier;
use modir::numerics::{check_gradient, Mat, Rng, Stream};
use modir::objectives::{
    adversarial_loss, discrimination_loss, lambda_at, prob_grad_to_logits, ranking_loss, AdvLoss, AdvLossKind,
    LambdaSchedule,
};
use modir::retrieval::{top_k, EmbeddingIndex, IndexEntry};
use modir::synthdata::{generate, Collection, Corpus, Domain, GenConfig, Qrels};
use modir::trainer::{train, Mode, TrainConfig};
use tempfile::TempDir;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> (bool, String) {
    (
        elapsed <= Duration::from_secs(limit_secs),
        format!("{:.1}s of {limit_secs}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- criterion 1

fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn with_params(enc: &Encoder, params: &[f64]) -> Encoder {
    let mut e = enc.clone();
    e.set_flat_params(params);
    e
}

fn classifier_from(values: &[f64], dim: usize) -> DomainClassifier {
    DomainClassifier::from_weights(Mat::from_vec(2, dim, values.to_vec()).unwrap(), None).unwrap()
}

/// Encoder-parameter gradient of a loss, given its gradient with respect to
/// each encoded embedding.
fn encoder_grad(enc: &Encoder, parts: &[(&Tape, Vec<f64>)]) -> Vec<f64> {
    let mut g = enc.zero_grad();
    for (tape, up) in parts {
        enc.backprop(tape, up, &mut g);
    }
    g.flat()
}

fn gradient_errors(point: u64) -> Vec<(&'static str, f64)> {
    let mut rng = Rng::with_substream(2024, Stream::Eval, point as u32);
    let (d_in, d_emb) = (12, 6);
    let base = Encoder::init(&[d_in, 10, d_emb], Activation::Tanh, &mut rng).unwrap();
    let theta: Vec<f64> = base
        .flat_params()
        .iter()
        .map(|w| w + 0.1 * rng.normal())
        .collect();
    let enc = with_params(&base, &theta);
    let w = random_vec(&mut rng, 2 * d_emb, 0.8);
    let clf = classifier_from(&w, d_emb);
    let q = random_vec(&mut rng, d_in, 1.0);
    let d = random_vec(&mut rng, d_in, 1.0);
    let negs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, d_in, 1.0)).collect();
    let domain = if rng.below(2) == 0 { Domain::Source } else { Domain::Target };
    let eps = 1e-6;
    let mut out = Vec::new();

    // ranking loss through the shared encoder
    let rank_value = |p: &[f64]| {
        let e = with_params(&base, p);
        let eq = e.embed(&q);
        let pos = modir::numerics::dot(&eq, &e.embed(&d));
        let ns: Vec<f64> = negs.iter().map(|n| modir::numerics::dot(&eq, &e.embed(n))).collect();
        ranking_loss(pos, &ns).unwrap().loss
    };
    let (eq, tq) = enc.encode(&q);
    let (ed, td) = enc.encode(&d);
    let encoded_negs: Vec<(Vec<f64>, Tape)> = negs.iter().map(|n| enc.encode(n)).collect();
    let scores: Vec<f64> = encoded_negs.iter().map(|(e, _)| modir::numerics::dot(&eq, e)).collect();
    let r = ranking_loss(modir::numerics::dot(&eq, &ed), &scores).unwrap();
    let mut up_q: Vec<f64> = ed.iter().map(|v| r.d_pos * v).collect();
    let mut parts = vec![(&td, eq.iter().map(|v| r.d_pos * v).collect::<Vec<_>>())];
    for ((en, tn), g) in encoded_negs.iter().zip(&r.d_negs) {
        for (u, v) in up_q.iter_mut().zip(en) {
            *u += g * v;
        }
        parts.push((tn, eq.iter().map(|v| g * v).collect()));
    }
    parts.push((&tq, up_q));
    let analytic = encoder_grad(&enc, &parts);
    out.push(("ranking", check_gradient(rank_value, &analytic, &theta, eps).unwrap()));

    // discrimination loss through classifier weights and encoder
    let n_theta = theta.len();
    let joint: Vec<f64> = theta.iter().chain(&w).copied().collect();
    let disc_value = |p: &[f64]| {
        let e = with_params(&base, &p[..n_theta]);
        let c = classifier_from(&p[n_theta..], d_emb);
        discrimination_loss(c.classify(&e.embed(&q)), domain).0
    };
    let (loss_g, dlogits) = discrimination_loss(clf.classify(&eq), domain);
    assert!(loss_g.is_finite());
    let mut analytic = encoder_grad(&enc, &[(&tq, clf.input_grad(dlogits))]);
    for row in dlogits {
        analytic.extend(eq.iter().map(|e| row * e));
    }
    out.push(("discrimination", check_gradient(disc_value, &analytic, &joint, eps).unwrap()));

    // adversarial losses with the classifier frozen
    for (name, kind) in [
        ("confusion", AdvLossKind::Confusion),
        ("minimax", AdvLossKind::Minimax),
        ("gan", AdvLossKind::Gan),
    ] {
        let value = |p: &[f64]| {
            let e = with_params(&base, p);
            adversarial_loss(kind, clf.classify(&e.embed(&q)), clf.classify(&e.embed(&d)), domain).loss
        };
        let (pq, pd) = (clf.classify(&eq), clf.classify(&ed));
        let AdvLoss { dp_q, dp_d, .. } = adversarial_loss(kind, pq, pd, domain);
        let analytic = encoder_grad(
            &enc,
            &[
                (&tq, clf.input_grad(prob_grad_to_logits(pq, dp_q))),
                (&td, clf.input_grad(prob_grad_to_logits(pd, dp_d))),
            ],
        );
        out.push((name, check_gradient(value, &analytic, &theta, eps).unwrap()));
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    for point in 0..20 {
        for (name, err) in gradient_errors(point) {
            match worst.iter_mut().find(|(n, _)| *n == name) {
                Some(w) => w.1 = w.1.max(err),
                None => worst.push((name, err)),
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 60);
    let ok = worst.len() == 5 && worst.iter().all(|(_, e)| *e < 1e-4);
    let errs: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(ok && fast, format!("max rel err over 20 points: {}; {time}", errs.join(", ")))
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2() -> Outcome {
    let ln2x2 = 2.0 * std::f64::consts::LN_2;
    let at_half = adversarial_loss(AdvLossKind::Confusion, 0.5, 0.5, Domain::Source).loss;
    let grid_min = (1..=99)
        .map(|i| {
            let p = i as f64 / 100.0;
            (adversarial_loss(AdvLossKind::Confusion, p, p, Domain::Source).loss, p)
        })
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    let rank = ranking_loss(1.0, &[0.0, 0.0]).unwrap().loss;
    let rank_expected = (std::f64::consts::E + 2.0).ln() - 1.0;
    let sched = LambdaSchedule::new(0.3, 700).unwrap();
    let half = lambda_at(&sched, 700);

    let ok = (at_half - ln2x2).abs() <= 1e-9
        && grid_min.1 == 0.5
        && (rank - rank_expected).abs() <= 1e-9
        && (half - 0.15).abs() <= 1e-12;
    outcome(
        ok,
        format!(
            "confusion(1/2)={at_half:.12}, grid argmin p={}, ranking={rank:.12}, lambda(half_life)={half}",
            grid_min.1
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(33, Stream::Eval);
    let dim = 8;
    let int_vec = |rng: &mut Rng| -> Vec<i64> { (0..dim).map(|_| rng.below(5) as i64 - 2).collect() };
    let docs: Vec<(String, Vec<i64>)> = (0..2048).map(|i| (format!("d{i:05}"), int_vec(&mut rng))).collect();
    let mut entries: Vec<IndexEntry> = docs
        .iter()
        .map(|(id, v)| IndexEntry {
            doc_id: id.clone(),
            domain: Domain::Source,
            embedding: v.iter().map(|&x| x as f64).collect(),
        })
        .collect();
    rng.shuffle(&mut entries);
    let index = EmbeddingIndex::from_entries(entries, 0).unwrap();

    let mut mismatches = 0;
    let mut ties = 0usize;
    for _ in 0..50 {
        let q = int_vec(&mut rng);
        let mut oracle: Vec<(i64, &str)> = docs
            .iter()
            .map(|(id, v)| (v.iter().zip(&q).map(|(a, b)| a * b).sum::<i64>(), id.as_str()))
            .collect();
        oracle.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        ties += oracle.windows(2).filter(|w| w[0].0 == w[1].0).count();
        let qf: Vec<f64> = q.iter().map(|&x| x as f64).collect();
        for k in [1, 10, 100, 2048] {
            let hits = top_k(&index, &qf, k);
            let same = hits.len() == k
                && hits
                    .iter()
                    .zip(&oracle)
                    .all(|(h, (s, id))| h.doc_id == *id && h.score == *s as f64);
            if !same {
                mismatches += 1;
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 10);
    outcome(
        mismatches == 0 && ties > 0 && fast,
        format!("{mismatches} mismatches over 50 queries x k in {{1,10,100,2048}}; {ties} tied neighbours; {time}"),
    )
}

// ------------------------------------------------------------ criteria 4 to 7

struct Runs {
    modir: Vec<Vec<EvalReport>>,
    baseline: Vec<Vec<EvalReport>>,
    no_momentum: Vec<Vec<EvalReport>>,
    modir_time: Duration,
    baseline_time: Duration,
}

fn run_all() -> Runs {
    let (source, target) = generate(&GenConfig::default()).unwrap();
    let unlabeled = target.unlabeled();
    let one = |cfg: TrainConfig| {
        let ev = Evaluator::new(source.clone(), target.clone(), cfg.eval.clone(), cfg.seed).unwrap();
        train(cfg, &source, &unlabeled, &ev).unwrap().1
    };
    let seeded = |seed| TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let modir: Vec<_> = SEEDS.iter().map(|&s| one(seeded(s))).collect();
    let modir_time = t.elapsed();
    let t = Instant::now();
    let baseline: Vec<_> = SEEDS
        .iter()
        .map(|&s| {
            one(TrainConfig {
                mode: Mode::BaselineRankingOnly,
                ..seeded(s)
            })
        })
        .collect();
    let baseline_time = t.elapsed();
    let no_momentum: Vec<_> = SEEDS
        .iter()
        .map(|&s| {
            one(TrainConfig {
                momentum_n: 1,
                ..seeded(s)
            })
        })
        .collect();
    Runs {
        modir,
        baseline,
        no_momentum,
        modir_time,
        baseline_time,
    }
}

fn warmup() -> u64 {
    TrainConfig::default().warmup_steps
}

fn at_step(reports: &[EvalReport], step: u64) -> &EvalReport {
    reports.iter().find(|r| r.step == step).expect("evaluation at step")
}

fn global(r: &EvalReport) -> f64 {
    r.global_domain_acc.expect("modir report has Global Domain-Acc")
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_4(runs: &Runs) -> Outcome {
    let total = TrainConfig::default().total_steps;
    let start = mean(runs.modir.iter().map(|r| global(at_step(r, warmup()))));
    let final_quarter = mean(runs.modir.iter().map(|r| {
        mean(
            r.iter()
                .filter(|p| p.step > total - total / 4)
                .map(global),
        )
    }));
    let (fast, time) = within(runs.modir_time, 600);
    outcome(
        start >= 90.0 && final_quarter <= start - 10.0 && fast,
        format!("start {start:.1}%, final-quarter mean {final_quarter:.1}% (5-seed means); {time}"),
    )
}

fn criterion_5(runs: &Runs) -> Outcome {
    let last = |r: &Vec<EvalReport>| r.last().unwrap().clone();
    let m_t = mean(runs.modir.iter().map(|r| last(r).target_ndcg));
    let b_t = mean(runs.baseline.iter().map(|r| last(r).target_ndcg));
    let m_s = mean(runs.modir.iter().map(|r| last(r).source_ndcg));
    let b_s = mean(runs.baseline.iter().map(|r| last(r).source_ndcg));
    let (fast, time) = within(runs.modir_time + runs.baseline_time, 900);
    outcome(
        m_t - b_t >= 0.03 && b_s - m_s <= 0.02 && fast,
        format!(
            "target nDCG@10 {m_t:.3} vs baseline {b_t:.3} (gain {:.3}); source {m_s:.3} vs {b_s:.3}; {time}",
            m_t - b_t
        ),
    )
}

/// Spearman correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(rx.iter().copied()), mean(ry.iter().copied()));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn criterion_6(runs: &Runs) -> Outcome {
    let mut positive = 0;
    let mut rising = 0;
    let mut parts = Vec::new();
    for r in &runs.modir {
        let steps: Vec<f64> = r.iter().map(|p| p.step as f64).collect();
        let knn: Vec<f64> = r.iter().map(|p| p.knn_source_pct).collect();
        let rho = spearman(&steps, &knn);
        let post_warmup = at_step(r, warmup()).knn_source_pct;
        let fin = r.last().unwrap().knn_source_pct;
        positive += usize::from(rho > 0.5);
        rising += usize::from(fin > post_warmup);
        parts.push(format!("rho {rho:.2} ({post_warmup:.1}->{fin:.1})"));
    }
    outcome(
        positive >= 4 && rising == SEEDS.len(),
        format!("{positive}/5 seeds rho>0.5, {rising}/5 final>post-warmup: {}", parts.join("; ")),
    )
}

fn criterion_7(runs: &Runs) -> Outcome {
    let gap = |r: &[EvalReport]| {
        mean(
            r.iter()
                .filter(|p| p.step > warmup())
                .map(|p| (p.local_domain_acc.unwrap() - global(p)).abs()),
        )
    };
    let drop = |r: &[EvalReport]| global(at_step(r, warmup())) - global(r.last().unwrap());
    let mut wins = 0;
    let mut parts = Vec::new();
    for (n1, n8) in runs.no_momentum.iter().zip(&runs.modir) {
        let ok = gap(n1) > gap(n8) && drop(n1) < drop(n8);
        wins += usize::from(ok);
        parts.push(format!(
            "gap {:.1}/{:.1} drop {:.1}/{:.1}",
            gap(n1),
            gap(n8),
            drop(n1),
            drop(n8)
        ));
    }
    outcome(wins >= 4, format!("{wins}/5 seeds (n=1 vs n=8): {}", parts.join("; ")))
}

// ---------------------------------------------------------------- criterion 8

fn scrambled_qrels(c: &Corpus, seed: u64) -> Qrels {
    let mut rng = Rng::new(seed, Stream::Eval);
    c.queries()
        .iter()
        .map(|q| {
            let d = &c.documents()[rng.below(c.documents().len())];
            (q.id.clone(), [d.id.clone()].into_iter().collect())
        })
        .collect()
}

fn criterion_8() -> Outcome {
    // Two target corpora that differ only in their relevance judgments must
    // drive the trainer identically.
    let (source, target) = generate(&GenConfig {
        queries_per_domain: 64,
        docs_per_domain: 320,
        ..GenConfig::default()
    })
    .unwrap();
    let relabeled = Corpus::new(
        Domain::Target,
        target.queries().to_vec(),
        target.documents().to_vec(),
        scrambled_qrels(&target, 5),
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 8,
        warmup_steps: 20,
        total_steps: 60,
        eval_every: 20,
        ..TrainConfig::default()
    };
    let run = |t: &Corpus| {
        let ev = Evaluator::new(source.clone(), t.clone(), cfg.eval.clone(), cfg.seed).unwrap();
        train(cfg.clone(), &source, &t.unlabeled(), &ev).unwrap()
    };
    let (ck_a, rep_a) = run(&target);
    let (ck_b, rep_b) = run(&relabeled);
    let same_training = ck_a.to_json().unwrap() == ck_b.to_json().unwrap();
    let evaluator_saw_labels = rep_a.last().unwrap().target_ndcg != rep_b.last().unwrap().target_ndcg;
    let unlabeled_json = serde_json::to_string(&target.unlabeled()).unwrap();
    let no_labels_in_view = !unlabeled_json.contains("qrel");

    // Passing labeled target data to the trainer does not compile.
    let compile = catch_unwind(AssertUnwindSafe(|| {
        let t = trybuild::TestCases::new();
        t.compile_fail("tests/ui/*.rs");
    }));
    let compile_ok = compile.is_ok();
    outcome(
        same_training && evaluator_saw_labels && no_labels_in_view && compile_ok,
        format!(
            "identical checkpoints under scrambled target qrels: {same_training}; \
             evaluator sensitive to them: {evaluator_saw_labels}; trainer view label-free: {no_labels_in_view}; \
             labeled target rejected at compile time: {compile_ok}"
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.checkpoint_every = cfg.train.total_steps / 2;
    let config = dir.path().join("config.json");
    fs::write(&config, cfg.to_pretty_json().unwrap()).unwrap();
    let corpora = dir.path().join("corpora");
    modir::cli::cmd_generate(
        &modir::cli::GenerateArgs {
            config: Some(config.clone()),
            out: corpora.clone(),
            seed: None,
            force: false,
        },
        &mut Vec::new(),
    )
    .unwrap();
    let args = |out: &str, resume: Option<std::path::PathBuf>| TrainArgs {
        config: Some(config.clone()),
        corpora: corpora.clone(),
        out: dir.path().join(out),
        seed: None,
        force: false,
        resume,
    };
    cmd_train(&args("a", None), &mut Vec::new()).unwrap();
    cmd_train(&args("b", None), &mut Vec::new()).unwrap();
    let mid = dir
        .path()
        .join(format!("a/checkpoints/step-{:06}.json", cfg.train.total_steps / 2));
    cmd_train(&args("resumed", Some(mid)), &mut Vec::new()).unwrap();

    let read = |p: &str| fs::read(dir.path().join(p)).unwrap();
    let identical = read("a/metrics.jsonl") == read("b/metrics.jsonl");
    let a = String::from_utf8(read("a/metrics.jsonl")).unwrap();
    let r = String::from_utf8(read("resumed/metrics.jsonl")).unwrap();
    let resumed_final = a.lines().last().is_some() && a.lines().last() == r.lines().last();
    let same_checkpoint = read("a/checkpoints/final.json") == read("resumed/checkpoints/final.json");
    outcome(
        identical && resumed_final && same_checkpoint,
        format!(
            "metrics byte-identical: {identical}; midpoint resume final report identical: {resumed_final}; \
             final checkpoint identical: {same_checkpoint}"
        ),
    )
}

// ---------------------------------------------------------------------- main

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let names = [
        "gradient correctness",
        "analytic loss values",
        "retrieval exactness",
        "invariance rises, separability falls",
        "zero-shot gain",
        "KNN-Source% trend",
        "momentum necessity",
        "zero-shot contract",
        "determinism",
    ];
    let mut results: Vec<Outcome> = Vec::new();
    let mut report = |i: usize, o: Outcome| {
        println!(
            "criterion {} [{}] {}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            names[i],
            o.detail
        );
        results.push(o);
    };
    report(0, guarded(criterion_1));
    report(1, guarded(criterion_2));
    report(2, guarded(criterion_3));
    match catch_unwind(run_all) {
        Ok(runs) => {
            report(3, guarded(|| criterion_4(&runs)));
            report(4, guarded(|| criterion_5(&runs)));
            report(5, guarded(|| criterion_6(&runs)));
            report(6, guarded(|| criterion_7(&runs)));
        }
        Err(_) => {
            for i in 3..7 {
                report(i, outcome(false, "training runs panicked"));
            }
        }
    }
    report(7, guarded(criterion_8));
    report(8, guarded(criterion_9));

    let failed = results.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
