//! Property suites runnable from the command line.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::EncodedBundle;
use crate::error::{Error, Result};
use crate::inference::{assign_bruteforce, joint_assign};
use crate::losses::{
    ce_joint, ce_pairwise, ce_total, interpolated_loss, log_sum_exp, score_matrix, LogScoreMatrix, LossSpec,
    LossVariant,
};
use crate::scorer::{compat, init_params, CompatMode, Dims, ScorerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma,
    Decomposition,
    Shift,
    Assignment,
    Gradients,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lemma" => Suite::Lemma,
            "decomposition" => Suite::Decomposition,
            "shift" => Suite::Shift,
            "assignment" => Suite::Assignment,
            "gradients" => Suite::Gradients,
            "all" => Suite::All,
            other => return Err(Error::Config(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<SuiteResult>> {
    Ok(match suite {
        Suite::Lemma => vec![lemma(seed, 1000)?],
        Suite::Decomposition => vec![decomposition(seed, 100)?],
        Suite::Shift => vec![shift(seed, 100)?],
        Suite::Assignment => vec![assignment(seed, 500)?],
        Suite::Gradients => vec![gradients(seed, 50)?],
        Suite::All => {
            let mut out = Vec::new();
            for s in [
                Suite::Lemma,
                Suite::Decomposition,
                Suite::Shift,
                Suite::Assignment,
                Suite::Gradients,
            ] {
                out.extend(run_suite(s, seed)?);
            }
            out
        }
    })
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gold: Vec<(usize, usize)>) -> Result<LogScoreMatrix> {
    let values = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    LogScoreMatrix::new(rows, cols, values, gold)
}

/// Multi-label CE summed over both gold pairs stays strictly below joint CE
/// on 2x2 matrices.
pub fn lemma(seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..trials {
        let m = normal_matrix(&mut rng, 2, 2, vec![(0, 0), (1, 1)])?;
        let gap = ce_total(&m, LossVariant::CeMl, 0.0, 0.0)? - ce_joint(&m)?;
        worst = worst.max(gap);
        if gap >= 0.0 {
            failures += 1;
        }
    }
    Ok(SuiteResult {
        name: "lemma",
        passed: failures == 0,
        detail: format!("{trials} trials, {failures} violations, max(ML - JT) = {worst:.3e}"),
    })
}

/// Small random bundle over a small random scorer.
pub fn random_case(rng: &mut ChaCha8Rng, dims: Dims, vocab: usize, n_q: usize, n_a: usize) -> Result<(ScorerParams, EncodedBundle)> {
    let mut params = init_params(rng.gen(), dims, vocab)?;
    // widen the default init so scores are not all near-uniform
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= 5.0);
    }
    let mut seq = |lo: usize, hi: usize| -> Vec<usize> {
        let n = rng.gen_range(lo..=hi);
        (0..n).map(|_| rng.gen_range(4..vocab)).collect()
    };
    let context = seq(0, 5);
    let questions = (0..n_q).map(|_| seq(1, 4)).collect();
    let answers = (0..n_a).map(|_| seq(1, dims.max_len - 1)).collect();
    let gold = (0..n_q.min(n_a)).map(|k| (k, k)).collect();
    Ok((
        params,
        EncodedBundle {
            context,
            questions,
            answers,
            gold,
        },
    ))
}

fn small_dims() -> Dims {
    Dims {
        d: 3,
        d_pos: 2,
        hidden: 4,
        max_len: 4,
    }
}

/// Answer-conditional CE equals the gold log-likelihood minus the log of the
/// summed likelihoods of the bundle's answers, each computed separately.
pub fn decomposition(seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let n_a = rng.gen_range(2..=4);
        let (params, b) = random_case(&mut rng, small_dims(), 9, 1, n_a)?;
        let m = score_matrix(&params, CompatMode::Ln, &b)?;
        let ac = ce_pairwise(&m, LossVariant::CeAc, (0, 0), 0.0, 0.0)?;
        let lls = b
            .answers
            .iter()
            .map(|a| compat(&params, CompatMode::Ln, &b.context, &b.questions[0], a))
            .collect::<Result<Vec<_>>>()?;
        let reg = -log_sum_exp(&lls)?;
        worst = worst.max((ac - (lls[0] + reg)).abs());
    }
    Ok(SuiteResult {
        name: "decomposition",
        passed: worst < 1e-9,
        detail: format!("{trials} bundles, max |AC - (MLE + reg)| = {worst:.3e}"),
    })
}

/// Adding a constant to every log-score leaves each CE value and the joint
/// assignment unchanged.
pub fn shift(seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut changed = 0;
    for _ in 0..trials {
        let m = normal_matrix(&mut rng, 2, 2, vec![(0, 0), (1, 1)])?;
        let pairs = joint_assign(&m).pairs;
        for c in [-50.0, 3.7, 1000.0] {
            let s = m.shifted(c);
            for v in LossVariant::PAIRWISE {
                let d = (ce_total(&m, v, 0.5, 0.5)? - ce_total(&s, v, 0.5, 0.5)?).abs();
                worst = worst.max(d);
            }
            worst = worst.max((ce_joint(&m)? - ce_joint(&s)?).abs());
            if joint_assign(&s).pairs != pairs {
                changed += 1;
            }
        }
    }
    Ok(SuiteResult {
        name: "shift",
        passed: worst < 1e-9 && changed == 0,
        detail: format!("{trials} matrices, max value change {worst:.3e}, {changed} assignment changes"),
    })
}

/// Hungarian totals equal brute-force totals exactly.
pub fn assignment(seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let n = rng.gen_range(2..=4);
        let m = normal_matrix(&mut rng, n, n, vec![])?;
        if joint_assign(&m).total_score != assign_bruteforce(&m)?.total_score {
            mismatches += 1;
        }
    }
    Ok(SuiteResult {
        name: "assignment",
        passed: mismatches == 0,
        detail: format!("{trials} matrices, {mismatches} total mismatches"),
    })
}

/// Every (loss, compat) combination the trainer accepts.
pub fn gradient_cases() -> Vec<LossSpec> {
    let mut out = vec![
        LossSpec::new(LossVariant::Mle),
        LossSpec {
            ul_per_token: true,
            ..LossSpec::new(LossVariant::Ul)
        },
        LossSpec {
            ul_per_token: false,
            ..LossSpec::new(LossVariant::Ul)
        },
    ];
    for v in LossVariant::ALL.into_iter().filter(|v| v.is_contrastive()) {
        for c in CompatMode::ALL {
            out.push(LossSpec {
                compat: c,
                lambda1: 0.3,
                lambda2: 0.7,
                ..LossSpec::new(v)
            });
        }
    }
    out
}

/// Largest relative gap between the analytic gradient and central
/// differences with step `h`; coordinates whose absolute gap is below
/// `floor` count as exact.
pub fn gradient_gap(spec: &LossSpec, params: &ScorerParams, b: &EncodedBundle, h: f64, floor: f64) -> Result<f64> {
    let analytic = interpolated_loss(spec, params, b)?.grad;
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for k in 0..p.num_params() {
        let x = p.get_flat(k);
        p.set_flat(k, x + h);
        let up = interpolated_loss(spec, &p, b)?.value;
        p.set_flat(k, x - h);
        let down = interpolated_loss(spec, &p, b)?.value;
        p.set_flat(k, x);
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.get_flat(k);
        let gap = (a - numeric).abs();
        if gap < floor {
            continue;
        }
        worst = worst.max(gap / a.abs().max(numeric.abs()));
    }
    Ok(worst)
}

pub fn gradients(seed: u64, trials: usize) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: (f64, String) = (0.0, String::new());
    let cases = gradient_cases();
    for spec in &cases {
        for _ in 0..trials {
            let (params, b) = random_case(&mut rng, small_dims(), 8, 2, 2)?;
            let gap = gradient_gap(spec, &params, &b, 1e-4, 1e-7)?;
            if gap > worst.0 {
                worst = (gap, format!("{} ({})", spec.variant, spec.compat));
            }
        }
    }
    Ok(SuiteResult {
        name: "gradients",
        passed: worst.0 < 1e-4,
        detail: format!(
            "{} cases x {trials} trials, max relative error {:.3e} {}",
            cases.len(),
            worst.0,
            worst.1
        ),
    })
}
