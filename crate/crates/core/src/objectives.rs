//! Losses with analytic gradients, and the adversarial weight schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;
use crate::synthdata::Domain;

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingLoss {
    pub loss: f64,
    pub d_pos: f64,
    pub d_negs: Vec<f64>,
}

/// Negative log-likelihood of the positive among `[pos] ++ negs`.
pub fn ranking_loss(score_pos: f64, scores_neg: &[f64]) -> Result<RankingLoss> {
    if scores_neg.is_empty() {
        return Err(Error::Usage("ranking_loss needs at least one negative".into()));
    }
    if !score_pos.is_finite() || scores_neg.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("ranking scores".into()));
    }
    let mut all = Vec::with_capacity(scores_neg.len() + 1);
    all.push(score_pos);
    all.extend_from_slice(scores_neg);
    let lse = log_sum_exp(&all);
    let loss = (lse - score_pos).max(0.0);
    let d_pos = (score_pos - lse).exp() - 1.0;
    let d_negs = scores_neg.iter().map(|s| (s - lse).exp()).collect();
    Ok(RankingLoss { loss, d_pos, d_negs })
}

/// Cross-entropy of the domain classifier; gradient is with respect to the
/// two logits `(source, target)`.
pub fn discrimination_loss(p_source: f64, domain: Domain) -> (f64, [f64; 2]) {
    let p = clamp_prob(p_source);
    let (loss, onehot) = match domain {
        Domain::Source => (-p.ln(), [1.0, 0.0]),
        Domain::Target => (-(1.0 - p).ln(), [0.0, 1.0]),
    };
    (loss, [p - onehot[0], (1.0 - p) - onehot[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvLossKind {
    #[default]
    Confusion,
    Minimax,
    Gan,
}

impl AdvLossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AdvLossKind::Confusion => "confusion",
            AdvLossKind::Minimax => "minimax",
            AdvLossKind::Gan => "gan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvLoss {
    pub loss: f64,
    /// Derivative with respect to the query's source probability.
    pub dp_q: f64,
    pub dp_d: f64,
}

/// Encoder-side adversarial loss for one query–document pair.
///
/// * Confusion: `-½ Σ_{e∈{q,d}} [ln p_e + ln(1-p_e)]`, minimal at `p = ½`.
/// * Minimax: `-½ Σ_e L_D(p_e, domain)`, the encoder ascends the
///   classifier's loss.
/// * GAN: target pairs pay `-½ Σ_e ln p_e` (pushed toward "source"),
///   source pairs pay nothing.
pub fn adversarial_loss(kind: AdvLossKind, p_q: f64, p_d: f64, domain: Domain) -> AdvLoss {
    let (q, d) = (clamp_prob(p_q), clamp_prob(p_d));
    match kind {
        AdvLossKind::Confusion => {
            let term = |p: f64| -0.5 * (p.ln() + (1.0 - p).ln());
            let grad = |p: f64| -0.5 * (1.0 / p - 1.0 / (1.0 - p));
            AdvLoss {
                loss: term(q) + term(d),
                dp_q: grad(q),
                dp_d: grad(d),
            }
        }
        AdvLossKind::Minimax => match domain {
            Domain::Source => AdvLoss {
                loss: 0.5 * (q.ln() + d.ln()),
                dp_q: 0.5 / q,
                dp_d: 0.5 / d,
            },
            Domain::Target => AdvLoss {
                loss: 0.5 * ((1.0 - q).ln() + (1.0 - d).ln()),
                dp_q: -0.5 / (1.0 - q),
                dp_d: -0.5 / (1.0 - d),
            },
        },
        AdvLossKind::Gan => match domain {
            Domain::Source => AdvLoss {
                loss: 0.0,
                dp_q: 0.0,
                dp_d: 0.0,
            },
            Domain::Target => AdvLoss {
                loss: -0.5 * (q.ln() + d.ln()),
                dp_q: -0.5 / q,
                dp_d: -0.5 / d,
            },
        },
    }
}

/// Chain rule through `p = softmax2(logits)[0]`.
pub fn prob_grad_to_logits(p_source: f64, dp: f64) -> [f64; 2] {
    let s = p_source * (1.0 - p_source) * dp;
    [s, -s]
}

/// `λ(t) = λ₀ · 2^(−t / half_life)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub lambda0: f64,
    pub half_life_steps: u64,
}

impl LambdaSchedule {
    pub fn new(lambda0: f64, half_life_steps: u64) -> Result<Self> {
        if !(lambda0 >= 0.0 && lambda0.is_finite()) {
            return Err(Error::Config(format!("lambda0 must be finite and >= 0, got {lambda0}")));
        }
        if half_life_steps == 0 {
            return Err(Error::Config("half_life_steps must be positive".into()));
        }
        Ok(Self {
            lambda0,
            half_life_steps,
        })
    }

    pub fn at(&self, step: u64) -> f64 {
        self.lambda0 * (-(step as f64) / self.half_life_steps as f64).exp2()
    }
}

pub fn lambda_at(sched: &LambdaSchedule, step: u64) -> f64 {
    sched.at(step)
}
