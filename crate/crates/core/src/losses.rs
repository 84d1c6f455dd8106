//! Unlearning losses and their gradients.
//!
//! Every loss is a mean over scored spans. A triplet pair `(X_ent, X_attr)`
//! scores `X_attr` given `X_ent`; a sentence scores everything after its
//! first token. Per span, with `lp = log p_theta(span)`:
//!
//! ```text
//! GA : lp
//! NPO: (2 / beta) * softplus(beta * (lp - lp_pre))
//! ```
//!
//! The NPO ratio form `(2/beta) log(1 + (p/p_pre)^beta)` is never evaluated
//! directly; the softplus of the log-ratio is exact and cannot overflow.
//! Its gradient is `2 * sigmoid(beta * delta) * d lp`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, Span};
use crate::world::{TokenId, TokenSeq};

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// NPO value for a log-likelihood ratio `delta = log p - log p_pre`.
pub fn npo_from_delta(delta: f64, beta: f64) -> f64 {
    2.0 / beta * softplus(beta * delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Ga,
    Npo { beta: f64 },
}

impl Objective {
    fn validate(&self) -> Result<()> {
        match *self {
            Objective::Npo { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::Invalid(format!("NPO beta must be positive, got {beta}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    TripletGa,
    TripletNpo,
    SentGa,
    SentNpo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossInput {
    /// `(X_ent, X_attr)` pairs; the loss averages over pairs.
    Triplet {
        objective: Objective,
        pairs: Vec<(TokenSeq, TokenSeq)>,
    },
    /// Whole sentences; the loss averages over sentences.
    Sentence {
        objective: Objective,
        sentences: Vec<TokenSeq>,
    },
}

impl LossInput {
    pub fn variant(&self) -> LossVariant {
        match self {
            LossInput::Triplet {
                objective: Objective::Ga,
                ..
            } => LossVariant::TripletGa,
            LossInput::Triplet {
                objective: Objective::Npo { .. },
                ..
            } => LossVariant::TripletNpo,
            LossInput::Sentence {
                objective: Objective::Ga,
                ..
            } => LossVariant::SentGa,
            LossInput::Sentence {
                objective: Objective::Npo { .. },
                ..
            } => LossVariant::SentNpo,
        }
    }

    fn objective(&self) -> Objective {
        match self {
            LossInput::Triplet { objective, .. } | LossInput::Sentence { objective, .. } => *objective,
        }
    }

    /// Concatenated sequences and the index where scoring starts.
    fn sequences(&self) -> Vec<(TokenSeq, usize)> {
        match self {
            LossInput::Triplet { pairs, .. } => pairs
                .iter()
                .map(|(ent, attr)| ([ent.as_slice(), attr.as_slice()].concat(), ent.len()))
                .collect(),
            LossInput::Sentence { sentences, .. } => sentences.iter().map(|s| (s.clone(), 1)).collect(),
        }
    }
}

/// Value and gradient of a loss, computed together.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Per-span `log p_theta - log p_pre` (zero for GA).
    pub deltas: Vec<f64>,
}

fn validate_input(input: &LossInput) -> Result<Vec<(TokenSeq, usize)>> {
    input.objective().validate()?;
    let seqs = input.sequences();
    if seqs.is_empty() {
        return Err(Error::Invalid("loss input has no spans".into()));
    }
    if seqs.iter().any(|(s, start)| *start == 0 || s.is_empty()) {
        return Err(Error::Invalid("every span needs a nonempty conditioning prefix".into()));
    }
    Ok(seqs)
}

/// Loss value only.
pub fn loss_value(theta: &ModelParams, theta_pre: &ModelParams, input: &LossInput) -> Result<f64> {
    let seqs = validate_input(input)?;
    let spans: Vec<Span<'_>> = seqs.iter().map(|(s, start)| Span::new(s, *start, 0.0)).collect();
    let n = spans.len() as f64;
    let lp = theta.span_logprobs(&spans)?;
    Ok(match input.objective() {
        Objective::Ga => lp.iter().sum::<f64>() / n,
        Objective::Npo { beta } => {
            let lp_pre = theta_pre.span_logprobs(&spans)?;
            lp.iter()
                .zip(&lp_pre)
                .map(|(a, b)| npo_from_delta(a - b, beta))
                .sum::<f64>()
                / n
        }
    })
}

/// Loss value and exact gradient with respect to `theta`.
pub fn loss_eval(theta: &ModelParams, theta_pre: &ModelParams, input: &LossInput) -> Result<LossEval> {
    let seqs = validate_input(input)?;
    let n = seqs.len() as f64;
    let unit: Vec<Span<'_>> = seqs.iter().map(|(s, start)| Span::new(s, *start, 1.0 / n)).collect();
    match input.objective() {
        Objective::Ga => {
            let (grad, lp) = theta.weighted_grad(&unit)?;
            Ok(LossEval {
                value: lp.iter().sum::<f64>() / n,
                grad,
                deltas: vec![0.0; lp.len()],
            })
        }
        Objective::Npo { beta } => {
            let lp = theta.span_logprobs(&unit)?;
            let lp_pre = theta_pre.span_logprobs(&unit)?;
            let deltas: Vec<f64> = lp.iter().zip(&lp_pre).map(|(a, b)| a - b).collect();
            let weighted: Vec<Span<'_>> = unit
                .iter()
                .zip(&deltas)
                .map(|(s, d)| Span::new(s.seq, s.start, 2.0 * sigmoid(beta * d) / n))
                .collect();
            let (grad, _) = theta.weighted_grad(&weighted)?;
            let value = deltas.iter().map(|d| npo_from_delta(*d, beta)).sum::<f64>() / n;
            if !value.is_finite() {
                return Err(Error::Numerical("NPO loss is not finite".into()));
            }
            Ok(LossEval { value, grad, deltas })
        }
    }
}

pub fn loss_grad(theta: &ModelParams, theta_pre: &ModelParams, input: &LossInput) -> Result<Vec<f64>> {
    Ok(loss_eval(theta, theta_pre, input)?.grad)
}

/// `log p_theta(X_attr | X_ent)`.
pub fn loss_triplet_ga(theta: &ModelParams, x_ent: &[TokenId], x_attr: &[TokenId]) -> Result<f64> {
    theta.cond_logprob(x_ent, x_attr)
}

pub fn loss_triplet_npo(
    theta: &ModelParams,
    theta_pre: &ModelParams,
    x_ent: &[TokenId],
    x_attr: &[TokenId],
    beta: f64,
) -> Result<f64> {
    Objective::Npo { beta }.validate()?;
    let delta = theta.cond_logprob(x_ent, x_attr)? - theta_pre.cond_logprob(x_ent, x_attr)?;
    Ok(npo_from_delta(delta, beta))
}

/// Mean sentence log-likelihood.
pub fn loss_sent_ga(theta: &ModelParams, sentences: &[TokenSeq]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Invalid("sentence loss needs at least one sentence".into()));
    }
    let mut total = 0.0;
    for s in sentences {
        total += theta.seq_logprob(s)?;
    }
    Ok(total / sentences.len() as f64)
}

pub fn loss_sent_npo(theta: &ModelParams, theta_pre: &ModelParams, sentences: &[TokenSeq], beta: f64) -> Result<f64> {
    Objective::Npo { beta }.validate()?;
    if sentences.is_empty() {
        return Err(Error::Invalid("sentence loss needs at least one sentence".into()));
    }
    let mut total = 0.0;
    for s in sentences {
        total += npo_from_delta(theta.seq_logprob(s)? - theta_pre.seq_logprob(s)?, beta);
    }
    Ok(total / sentences.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};

    fn model(seed: u64) -> ModelParams {
        init_model(&ModelConfig {
            vocab_size: 10,
            context_window: 8,
            embed_dim: 3,
            hidden_dim: 6,
            n_layers: 1,
            seed,
        })
        .unwrap()
    }

    fn uniform() -> ModelParams {
        let mut m = model(1);
        m.zero_output_layer();
        m
    }

    #[test]
    fn closed_forms_on_uniform_and_equal_models() {
        let u = uniform();
        let ga = loss_triplet_ga(&u, &[0, 3], &[5, 6, 1]).unwrap();
        assert!((ga + 6.907755).abs() < 1e-6);
        assert_eq!(ga, u.cond_logprob(&[0, 3], &[5, 6, 1]).unwrap());
        let sent = loss_sent_ga(&u, &[vec![0, 3, 4, 5, 1]]).unwrap();
        assert!((sent + 9.21034).abs() < 1e-5);

        let m = model(2);
        let npo = loss_triplet_npo(&m, &m, &[0, 3], &[5, 6], 1.0).unwrap();
        assert!((npo - 1.386294).abs() < 1e-6);
        let npo = loss_sent_npo(&m, &m, &[vec![0, 3, 4]], 0.5).unwrap();
        assert!((npo - 2.772589).abs() < 1e-6);
        assert!((npo_from_delta(1.0, 1.0) - 2.626523).abs() < 1e-6);
    }

    #[test]
    fn npo_is_stable_for_extreme_ratios() {
        let low = npo_from_delta(-700.0, 1.0);
        assert!(low.is_finite() && (0.0..1e-300).contains(&low));
        let high = npo_from_delta(700.0, 1.0);
        assert!((high - 1400.0).abs() < 1e-9);
        assert!(npo_from_delta(1e6, 1.0).is_finite());
    }

    #[test]
    fn npo_bounds_monotonicity_and_scale() {
        for beta in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let mut last = f64::NEG_INFINITY;
            for k in -200..=200 {
                let delta = k as f64 * 0.25;
                let v = npo_from_delta(delta, beta);
                assert!(v >= 0.0);
                assert!(v >= (2.0 * delta).max(0.0) - 1e-12);
                assert!(v <= 2.0 * delta.max(0.0) + 2.0 / beta * std::f64::consts::LN_2 + 1e-12);
                assert!(v >= last);
                last = v;
            }
            let c = 4.0;
            assert!((npo_from_delta(0.0, beta * c) - npo_from_delta(0.0, beta) / c).abs() < 1e-12);
        }
    }

    #[test]
    fn sentence_loss_is_a_mean() {
        let m = model(3);
        let a = vec![0, 4, 5, 1];
        let b = vec![0, 7, 2, 8, 1];
        let both = loss_sent_ga(&m, &[a.clone(), b.clone()]).unwrap();
        let mean = (loss_sent_ga(&m, std::slice::from_ref(&a)).unwrap() + loss_sent_ga(&m, &[b]).unwrap()) / 2.0;
        assert!((both - mean).abs() < 1e-12);
        assert_eq!(
            loss_sent_ga(&m, std::slice::from_ref(&a)).unwrap(),
            m.seq_logprob(&a).unwrap()
        );
        assert!(loss_sent_ga(&m, &[]).is_err());
        assert!(loss_sent_npo(&m, &m, &[a], 0.0).is_err());
    }

    #[test]
    fn npo_gradient_equals_ga_gradient_at_reference() {
        let m = model(4);
        let pairs = vec![(vec![0, 3], vec![5, 6, 1])];
        let ga = loss_grad(
            &m,
            &m,
            &LossInput::Triplet {
                objective: Objective::Ga,
                pairs: pairs.clone(),
            },
        )
        .unwrap();
        let npo = loss_grad(
            &m,
            &m,
            &LossInput::Triplet {
                objective: Objective::Npo { beta: 0.7 },
                pairs,
            },
        )
        .unwrap();
        for (a, b) in ga.iter().zip(&npo) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn single_step_lowers_likelihood() {
        let m = model(5);
        let (ent, attr) = (vec![0, 3], vec![5, 6, 1]);
        let input = LossInput::Triplet {
            objective: Objective::Ga,
            pairs: vec![(ent.clone(), attr.clone())],
        };
        let g = loss_grad(&m, &m, &input).unwrap();
        let mut stepped = m.clone();
        stepped.axpy(-1e-3, &g).unwrap();
        assert!(stepped.cond_logprob(&ent, &attr).unwrap() < m.cond_logprob(&ent, &attr).unwrap());
    }

    #[test]
    fn variant_tags() {
        let t = LossInput::Triplet {
            objective: Objective::Npo { beta: 0.1 },
            pairs: vec![],
        };
        assert_eq!(t.variant(), LossVariant::TripletNpo);
        let s = LossInput::Sentence {
            objective: Objective::Ga,
            sentences: vec![],
        };
        assert_eq!(s.variant(), LossVariant::SentGa);
        let m = model(6);
        assert!(loss_grad(&m, &m, &s).is_err());
    }
}
