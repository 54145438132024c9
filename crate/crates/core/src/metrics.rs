//! Answer metrics and posterior diagnostics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::normalize_answer;
use crate::error::{Error, Result};

/// 1 when both strings normalize to the same token list.
pub fn exact_match(pred: &str, gold: &str) -> u8 {
    (normalize_answer(pred) == normalize_answer(gold)) as u8
}

/// Token-level F1 over normalized token multisets.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// 1 iff every question of the bundle was answered exactly.
pub fn consistency(bundle_results: &[u8]) -> Result<u8> {
    if bundle_results.is_empty() {
        return Err(Error::Argument("consistency of an empty bundle".into()));
    }
    Ok(bundle_results.iter().all(|&r| r == 1) as u8)
}

/// `-sum p log p` over (up to) the ten most probable candidates, using the
/// raw probabilities as given.
pub fn entropy_top10(candidate_probs: &[f64]) -> Result<f64> {
    if let Some(p) = candidate_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Argument(format!("probability {p} outside [0, 1]")));
    }
    let mut ps = candidate_probs.to_vec();
    ps.sort_by(|a, b| b.total_cmp(a));
    Ok(ps
        .iter()
        .take(10)
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// `log(p1 / p2)` for the two most probable candidates.
pub fn top2_ratio(p1: f64, p2: f64) -> Result<f64> {
    if !(p2 > 0.0) {
        return Err(Error::Argument(format!("p2 must be positive, got {p2}")));
    }
    if p1 < p2 {
        return Err(Error::Argument(format!("p1 ({p1}) < p2 ({p2})")));
    }
    Ok((p1 / p2).ln())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub instances: usize,
    pub bundles: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub em: f64,
    pub f1: f64,
    pub consistency: f64,
    pub n: Counts,
}

impl MetricsReport {
    /// Aggregates per-question (em, f1) pairs and per-bundle consistency
    /// indicators; every mean is 0 over an empty list.
    pub fn from_scores(per_question: &[(u8, f64)], per_bundle: &[u8]) -> Self {
        let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| {
            if n == 0 {
                0.0
            } else {
                xs.sum::<f64>() / n as f64
            }
        };
        let nq = per_question.len();
        let nb = per_bundle.len();
        MetricsReport {
            em: mean(&mut per_question.iter().map(|s| s.0 as f64), nq),
            f1: mean(&mut per_question.iter().map(|s| s.1), nq),
            consistency: mean(&mut per_bundle.iter().map(|&c| c as f64), nb),
            n: Counts {
                instances: nq,
                bundles: nb,
            },
        }
    }
}

/// Per-instance Entropy10 and Top-2 ratio with their means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub entropy10: f64,
    pub top2_ratio: f64,
    pub per_instance_entropy10: Vec<f64>,
    /// Instances with fewer than two candidates have no ratio.
    pub per_instance_top2: Vec<Option<f64>>,
}

impl Diagnostics {
    /// Builds diagnostics from each instance's candidate probabilities.
    pub fn from_candidates(per_instance: &[Vec<f64>]) -> Result<Self> {
        let mut ent = Vec::with_capacity(per_instance.len());
        let mut top2 = Vec::with_capacity(per_instance.len());
        for probs in per_instance {
            ent.push(entropy_top10(probs)?);
            let mut sorted = probs.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            top2.push(match sorted.as_slice() {
                [p1, p2, ..] if *p2 > 0.0 => Some(top2_ratio(*p1, *p2)?),
                _ => None,
            });
        }
        let entropy10 = if ent.is_empty() {
            0.0
        } else {
            ent.iter().sum::<f64>() / ent.len() as f64
        };
        let ratios: Vec<f64> = top2.iter().flatten().copied().collect();
        let top2_ratio = if ratios.is_empty() {
            0.0
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        };
        Ok(Diagnostics {
            entropy10,
            top2_ratio,
            per_instance_entropy10: ent,
            per_instance_top2: top2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("Marsilea ", "marsilea"), 1);
        assert_eq!(exact_match("the cat", "cat"), 1);
        assert_eq!(exact_match("cat", "dog"), 0);
    }

    #[test]
    fn f1_examples() {
        assert_relative_eq!(token_f1("black cat", "cat"), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(token_f1("black cat", "black cat"), 1.0);
        assert_eq!(token_f1("cat black", "black cat"), 1.0);
        assert_eq!(token_f1("", "the"), 1.0);
        assert_eq!(token_f1("cat", ""), 0.0);
        // multiset: repeated tokens only match as often as they occur
        assert_relative_eq!(token_f1("cat cat", "cat"), 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn consistency_examples() {
        assert_eq!(consistency(&[1, 1]).unwrap(), 1);
        assert_eq!(consistency(&[1, 0]).unwrap(), 0);
        assert_eq!(consistency(&[0, 0]).unwrap(), 0);
        assert!(consistency(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(entropy_top10(&[0.1; 10]).unwrap(), 10f64.ln(), epsilon = 1e-12);
        assert_eq!(entropy_top10(&[1.0]).unwrap(), 0.0);
        assert_relative_eq!(entropy_top10(&[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        assert_eq!(entropy_top10(&[0.0, 1.0]).unwrap(), 0.0);
        assert!(entropy_top10(&[1.2]).is_err());
        assert!(entropy_top10(&[-0.1]).is_err());
        // only the ten largest count
        let mut ps = vec![0.05; 12];
        ps.push(0.3);
        let expected = -0.3 * 0.3f64.ln() - 9.0 * 0.05 * 0.05f64.ln();
        assert_relative_eq!(entropy_top10(&ps).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn top2_examples() {
        assert_eq!(top2_ratio(0.4, 0.4).unwrap(), 0.0);
        assert_relative_eq!(top2_ratio(0.9, 0.09).unwrap(), 10f64.ln(), epsilon = 1e-12);
        assert!(top2_ratio(0.9, 0.0).is_err());
        assert!(top2_ratio(0.1, 0.2).is_err());
    }

    #[test]
    fn report_of_nothing_is_zero() {
        let r = MetricsReport::from_scores(&[], &[]);
        assert_eq!(r.em, 0.0);
        assert_eq!(r.consistency, 0.0);
        assert_eq!(r.n.instances, 0);
    }

    #[test]
    fn entropy_monotone_under_concentration() {
        // (p, p) -> (2p, 0) never increases the value for p <= 1/e
        let mut p = 1e-4;
        while p <= 1.0 / std::f64::consts::E {
            let spread = entropy_top10(&[p, p]).unwrap();
            let merged = entropy_top10(&[2.0 * p, 0.0]).unwrap();
            assert!(merged <= spread + 1e-15, "p = {p}");
            p += 1e-3;
        }
    }
}
