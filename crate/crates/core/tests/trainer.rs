use modir::metrics::{EvalConfig, EvalReport, Evaluator};
use modir::objectives::AdvLossKind;
use modir::synthdata::{generate, Corpus, GenConfig};
use modir::trainer::{resume, train, Mode, NegativeMode, TrainConfig, Trainer};
use modir::Error;

fn small_corpora() -> (Corpus, Corpus) {
    generate(&GenConfig {
        queries_per_domain: 48,
        docs_per_domain: 256,
        ..GenConfig::default()
    })
    .unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        momentum_n: 4,
        mining_refresh_steps: 20,
        warmup_steps: 20,
        half_life_steps: 40,
        total_steps: 80,
        eval_every: 20,
        eval: EvalConfig {
            knn_k: 20,
            local_batch_per_domain: 32,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn run(cfg: &TrainConfig, s: &Corpus, t: &Corpus) -> (modir::trainer::Checkpoint, Vec<EvalReport>) {
    let ev = Evaluator::new(s.clone(), t.clone(), cfg.eval.clone(), cfg.seed).unwrap();
    train(cfg.clone(), s, &t.unlabeled(), &ev).unwrap()
}

fn lines(reports: &[EvalReport]) -> Vec<String> {
    reports.iter().map(|r| r.to_json_line().unwrap()).collect()
}

#[test]
fn same_seed_gives_identical_reports_and_checkpoints() {
    let (s, t) = small_corpora();
    let cfg = small_config();
    let (c1, r1) = run(&cfg, &s, &t);
    let (c2, r2) = run(&cfg, &s, &t);
    assert_eq!(lines(&r1), lines(&r2));
    assert_eq!(c1.to_json().unwrap(), c2.to_json().unwrap());
    assert_eq!(r1.len(), 4);

    let (_, r3) = run(&TrainConfig { seed: 2, ..cfg }, &s, &t);
    assert_ne!(lines(&r1), lines(&r3));
}

#[test]
fn zero_lambda_leaves_encoder_on_the_baseline_trajectory() {
    let (s, t) = small_corpora();
    let modir = TrainConfig {
        lambda0: 0.0,
        ..small_config()
    };
    let baseline = TrainConfig {
        mode: Mode::BaselineRankingOnly,
        ..small_config()
    };
    let (cm, rm) = run(&modir, &s, &t);
    let (cb, rb) = run(&baseline, &s, &t);
    assert_eq!(cm.encoder, cb.encoder);
    // The classifier still trained in the modir run.
    assert!(cm.classifier.weights().values().iter().any(|&w| w != 0.0));
    for (a, b) in rm.iter().zip(&rb) {
        assert_eq!(a.source_ndcg, b.source_ndcg);
        assert_eq!(a.target_ndcg, b.target_ndcg);
    }
}

#[test]
fn classifier_is_frozen_and_embeddings_detached() {
    let (s, t) = small_corpora();
    let target = t.unlabeled();
    let mut tr = Trainer::new(small_config(), &s, &target).unwrap();
    let mut adversarial_steps = 0;
    for _ in 0..60 {
        let sum = tr.step().unwrap();
        let (enc_before, enc_after) = sum.encoder_checksum_around_classifier.unwrap();
        assert_eq!(enc_before, enc_after, "classifier training moved the encoder at step {}", sum.step);
        let (clf_before, clf_after) = sum.classifier_checksum_around_encoder.unwrap();
        assert_eq!(clf_before, clf_after, "encoder update moved the classifier at step {}", sum.step);
        if sum.lambda > 0.0 {
            adversarial_steps += 1;
            assert!(sum.adversarial_loss.is_some());
        }
    }
    assert!(adversarial_steps > 0);
    assert_eq!(tr.queue().batches_held(), 4);
}

#[test]
fn midpoint_resume_matches_uninterrupted_run() {
    let (s, t) = small_corpora();
    let cfg = small_config();
    let (full_ck, full) = run(&cfg, &s, &t);

    let half = TrainConfig {
        total_steps: 40,
        ..cfg.clone()
    };
    let (mid_ck, first) = run(&half, &s, &t);
    let ev = Evaluator::new(s.clone(), t.clone(), cfg.eval.clone(), cfg.seed).unwrap();
    let (end_ck, rest) = resume(&mid_ck, cfg.clone(), &s, &t.unlabeled(), &ev).unwrap();

    let mut joined = lines(&first);
    joined.extend(lines(&rest));
    assert_eq!(joined, lines(&full));
    assert_eq!(end_ck.to_json().unwrap(), full_ck.to_json().unwrap());

    // Resuming a finished run does nothing.
    let (again, none) = resume(&end_ck, cfg, &s, &t.unlabeled(), &ev).unwrap();
    assert!(none.is_empty());
    assert_eq!(again.to_json().unwrap(), end_ck.to_json().unwrap());
}

#[test]
fn resume_with_changed_hyperparameter_is_refused() {
    let (s, t) = small_corpora();
    let cfg = small_config();
    let target = t.unlabeled();
    let mut tr = Trainer::new(cfg.clone(), &s, &target).unwrap();
    tr.step().unwrap();
    let ck = tr.checkpoint();
    let changed = TrainConfig {
        lambda0: 0.2,
        ..cfg.clone()
    };
    assert!(matches!(
        Trainer::from_checkpoint(&ck, changed, &s, &target),
        Err(Error::ConfigHashMismatch { .. })
    ));
    let longer = TrainConfig {
        total_steps: 400,
        ..cfg
    };
    assert!(Trainer::from_checkpoint(&ck, longer, &s, &target).is_ok());
}

#[test]
fn baseline_reports_have_no_domain_fields() {
    let (s, t) = small_corpora();
    let cfg = TrainConfig {
        mode: Mode::BaselineRankingOnly,
        ..small_config()
    };
    let (ck, reports) = run(&cfg, &s, &t);
    for r in &reports {
        assert_eq!(r.mode, "baseline_ranking_only");
        assert!(r.global_domain_acc.is_none() && r.local_domain_acc.is_none());
        assert!(r.adv_loss.is_none() && r.adversarial_loss.is_none() && r.discrimination_loss.is_none());
        assert!(r.ranking_loss.is_some());
    }
    assert!(ck.queue.is_empty());
}

#[test]
fn every_adversarial_loss_and_negative_mode_trains() {
    let (s, t) = small_corpora();
    for kind in [AdvLossKind::Confusion, AdvLossKind::Minimax, AdvLossKind::Gan] {
        for neg in [NegativeMode::MinedHard, NegativeMode::InBatchRandom] {
            let cfg = TrainConfig {
                adv_loss: kind,
                negative_mode: neg,
                ..small_config()
            };
            let (_, reports) = run(&cfg, &s, &t);
            let last = reports.last().unwrap();
            assert_eq!(last.adv_loss.as_deref(), Some(kind.as_str()));
            assert!(last.adversarial_loss.unwrap().is_finite());
            assert!(last.source_ndcg > 0.5, "{kind:?}/{neg:?}: {}", last.source_ndcg);
        }
    }
}

#[test]
fn divergence_aborts_with_the_step() {
    let (s, t) = small_corpora();
    let cfg = TrainConfig {
        encoder_lr: 1e200,
        ..small_config()
    };
    let ev = Evaluator::new(s.clone(), t.clone(), cfg.eval.clone(), cfg.seed).unwrap();
    match train(cfg, &s, &t.unlabeled(), &ev) {
        Err(Error::Diverged { step }) => assert!(step < 80),
        other => panic!("expected divergence, got {:?}", other.map(|(_, r)| r.len())),
    }
}

#[test]
fn invalid_configs_are_rejected_before_training() {
    let (s, t) = small_corpora();
    let target = t.unlabeled();
    for bad in [
        TrainConfig {
            momentum_n: 0,
            ..small_config()
        },
        TrainConfig {
            batch_size: 7,
            ..small_config()
        },
        TrainConfig {
            total_steps: 10,
            eval_every: 20,
            ..small_config()
        },
        TrainConfig {
            encoder_dims: vec![16, 8],
            ..small_config()
        },
    ] {
        assert!(Trainer::new(bad, &s, &target).is_err());
    }
}
