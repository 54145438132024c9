//! Independent and joint evaluation, and posterior diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bundling::{diverse_samples, extract_choices, gen_contrast_questions_with, instance_rng, HeuristicTables};
use crate::data::{join, normalize_tokens, Dataset, EncodedBundle, InstanceBundle, QaInstance, Vocab};
use crate::error::{Error, Result};
use crate::inference::{greedy_decode, joint_assign};
use crate::losses::score_matrix;
use crate::metrics::{consistency, exact_match, token_f1, Diagnostics, MetricsReport};
use crate::scorer::{compat, CompatMode, ScorerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Independent,
    Joint,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Independent => "independent",
            EvalMode::Joint => "joint",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(EvalMode::Independent),
            "joint" => Ok(EvalMode::Joint),
            other => Err(Error::Config(format!("unknown eval mode {other:?}"))),
        }
    }
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
    pub mode: EvalMode,
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction>,
}

/// Scores a dataset. With bundles, every gold question is answered from its
/// bundle's answers: by ranking in independent mode, by joint assignment in
/// joint mode. Without bundles, independent mode decodes each instance
/// greedily and joint mode is a configuration error.
pub fn evaluate(
    params: &ScorerParams,
    vocab: &Vocab,
    data: &Dataset,
    mode: EvalMode,
    compat_mode: CompatMode,
) -> Result<Evaluation> {
    let mut per_question = Vec::new();
    let mut per_bundle = Vec::new();
    let mut predictions = Vec::new();
    if data.bundles.is_empty() {
        if mode == EvalMode::Joint {
            return Err(Error::Config("joint evaluation needs bundles".into()));
        }
        let mut insts: Vec<&QaInstance> = data.instances.iter().collect();
        insts.sort_by(|a, b| a.id.cmp(&b.id));
        for inst in insts {
            let out = greedy_decode(params, &vocab.encode(&inst.context), &vocab.encode(&inst.question))?;
            let pred = join(&vocab.decode(&out));
            let gold = join(&inst.answer);
            per_question.push((exact_match(&pred, &gold), token_f1(&pred, &gold)));
            predictions.push(Prediction {
                id: inst.id.clone(),
                prediction: pred,
                mode,
                scores: vec![],
            });
        }
        return Ok(Evaluation {
            report: MetricsReport::from_scores(&per_question, &per_bundle),
            predictions,
        });
    }
    let mut bundles: Vec<&InstanceBundle> = data.bundles.iter().collect();
    bundles.sort_by(|a, b| a.bundle_id.cmp(&b.bundle_id));
    for b in bundles {
        let enc = EncodedBundle::new(b, vocab);
        let m = score_matrix(params, compat_mode, &enc)?;
        let rows = m.to_rows();
        let assignment = (mode == EvalMode::Joint).then(|| joint_assign(&m));
        let mut gold_pairs = b.gold.clone();
        gold_pairs.sort_unstable();
        let mut ems = Vec::with_capacity(gold_pairs.len());
        for (q, a) in gold_pairs {
            let (pick, scores) = match &assignment {
                Some(asg) => (asg.answer_of(q), rows.clone()),
                None => (Some(crate::inference::argmax(&rows[q])), vec![rows[q].clone()]),
            };
            let pred = pick.map(|j| join(&b.answers[j])).unwrap_or_default();
            let gold = join(&b.answers[a]);
            let em = exact_match(&pred, &gold);
            ems.push(em);
            per_question.push((em, token_f1(&pred, &gold)));
            predictions.push(Prediction {
                id: format!("{}#{q}", b.bundle_id),
                prediction: pred,
                mode,
                scores,
            });
        }
        if !ems.is_empty() {
            per_bundle.push(consistency(&ems)?);
        }
    }
    Ok(Evaluation {
        report: MetricsReport::from_scores(&per_question, &per_bundle),
        predictions,
    })
}

/// Joint or independent answers for questions given on their own. Each
/// choice question is bundled at test time with its first generated contrast
/// question; the candidates are the two extracted choices in question order,
/// so candidate position carries no label. Metrics count the original
/// questions; consistency also requires the contrast question to be right.
/// Questions without a usable contrast are decoded greedily.
pub fn evaluate_augmented(
    params: &ScorerParams,
    vocab: &Vocab,
    instances: &[QaInstance],
    tables: &HeuristicTables,
    mode: EvalMode,
    compat_mode: CompatMode,
) -> Result<Evaluation> {
    let mut insts: Vec<&QaInstance> = instances.iter().collect();
    insts.sort_by(|a, b| a.id.cmp(&b.id));
    let mut per_question = Vec::with_capacity(insts.len());
    let mut per_bundle = Vec::with_capacity(insts.len());
    let mut predictions = Vec::with_capacity(insts.len());
    for inst in insts {
        let gold = join(&inst.answer);
        let contrast = gen_contrast_questions_with(inst, tables).into_iter().next();
        let (Some(g), Some((ca, cb))) = (contrast, extract_choices(&inst.question)) else {
            let out = greedy_decode(params, &vocab.encode(&inst.context), &vocab.encode(&inst.question))?;
            let pred = join(&vocab.decode(&out));
            let em = exact_match(&pred, &gold);
            per_question.push((em, token_f1(&pred, &gold)));
            per_bundle.push(em);
            predictions.push(Prediction {
                id: inst.id.clone(),
                prediction: pred,
                mode,
                scores: vec![],
            });
            continue;
        };
        let answers = [ca, cb];
        let gold_idx = usize::from(normalize_tokens(&inst.answer) != normalize_tokens(&answers[0]));
        let enc = EncodedBundle {
            context: vocab.encode(&inst.context),
            questions: vec![vocab.encode(&inst.question), vocab.encode(&g.question)],
            answers: answers.iter().map(|a| vocab.encode(a)).collect(),
            gold: vec![(0, gold_idx), (1, 1 - gold_idx)],
        };
        let m = score_matrix(params, compat_mode, &enc)?;
        let rows = m.to_rows();
        let picks: Vec<Option<usize>> = match mode {
            EvalMode::Joint => {
                let asg = joint_assign(&m);
                (0..2).map(|q| asg.answer_of(q)).collect()
            }
            EvalMode::Independent => rows.iter().map(|r| Some(crate::inference::argmax(r))).collect(),
        };
        let pred_of = |q: usize| picks[q].map(|j| join(&answers[j])).unwrap_or_default();
        let pred = pred_of(0);
        let em = exact_match(&pred, &gold);
        per_question.push((em, token_f1(&pred, &gold)));
        let contrast_em = exact_match(&pred_of(1), &join(&g.answer));
        per_bundle.push(consistency(&[em, contrast_em])?);
        predictions.push(Prediction {
            id: inst.id.clone(),
            prediction: pred,
            mode,
            scores: rows,
        });
    }
    Ok(Evaluation {
        report: MetricsReport::from_scores(&per_question, &per_bundle),
        predictions,
    })
}

/// Candidate generation behind the diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub nucleus_p: f64,
    pub nucleus_steps: usize,
    pub attempts: usize,
    pub seed: u64,
}

impl Default for DiagnosticsConfig {
    /// The whole vocabulary as the first-step nucleus, so a second candidate
    /// always exists for the Top-2 ratio.
    fn default() -> Self {
        DiagnosticsConfig {
            nucleus_p: 1.0,
            nucleus_steps: 1,
            attempts: 40,
            seed: 0,
        }
    }
}

/// Locally normalized probabilities of the ten best distinct sampled answers
/// of one instance, highest first.
pub fn top_candidate_probs(
    params: &ScorerParams,
    vocab: &Vocab,
    inst: &QaInstance,
    cfg: &DiagnosticsConfig,
) -> Result<Vec<f64>> {
    let ctx = vocab.encode(&inst.context);
    let q = vocab.encode(&inst.question);
    let mut rng = instance_rng(cfg.seed, &inst.id);
    let samples = diverse_samples(params, &ctx, &q, cfg.nucleus_p, cfg.nucleus_steps, cfg.attempts, &mut rng)?;
    let mut scores = samples
        .iter()
        .map(|s| compat(params, CompatMode::Ln, &ctx, &q, s))
        .collect::<Result<Vec<f64>>>()?;
    scores.sort_by(|a, b| b.total_cmp(a));
    Ok(scores.into_iter().take(10).map(f64::exp).collect())
}

/// Entropy10 and Top-2 ratio over `instances`, in id order.
pub fn diagnose(
    params: &ScorerParams,
    vocab: &Vocab,
    instances: &[QaInstance],
    cfg: &DiagnosticsConfig,
) -> Result<Diagnostics> {
    let mut insts: Vec<&QaInstance> = instances.iter().collect();
    insts.sort_by(|a, b| a.id.cmp(&b.id));
    let probs = insts
        .iter()
        .map(|i| top_candidate_probs(params, vocab, i, cfg))
        .collect::<Result<Vec<_>>>()?;
    Diagnostics::from_candidates(&probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{tokenize, BundleSource};
    use crate::scorer::Dims;

    fn bundle() -> InstanceBundle {
        InstanceBundle {
            bundle_id: "b".into(),
            context: tokenize("x has 3 y . z has 5 y ."),
            questions: vec![tokenize("which has more y ?"), tokenize("which has less y ?")],
            answers: vec![tokenize("z"), tokenize("x")],
            gold: vec![(0, 0), (1, 1)],
            source: BundleSource::Synthetic,
        }
    }

    #[test]
    fn empty_dataset_reports_zero() {
        let data = Dataset::default();
        let p = ScorerParams::zeros(Dims::default(), data.vocab.len()).unwrap();
        let e = evaluate(&p, &data.vocab, &data, EvalMode::Independent, CompatMode::Ln).unwrap();
        assert_eq!(e.report.n.instances, 0);
        assert_eq!(e.report.em, 0.0);
        assert!(matches!(
            evaluate(&p, &data.vocab, &data, EvalMode::Joint, CompatMode::Ln),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn joint_forces_distinct_answers() {
        let data = Dataset::from_parts(vec![], vec![bundle()]);
        // zero params: every cell ties, so independent ranking picks answer 0 twice
        let p = ScorerParams::zeros(Dims::default(), data.vocab.len()).unwrap();
        let ind = evaluate(&p, &data.vocab, &data, EvalMode::Independent, CompatMode::Ln).unwrap();
        let joint = evaluate(&p, &data.vocab, &data, EvalMode::Joint, CompatMode::Ln).unwrap();
        assert_eq!(ind.predictions[0].prediction, ind.predictions[1].prediction);
        assert_ne!(joint.predictions[0].prediction, joint.predictions[1].prediction);
        assert_eq!(joint.report.em, 1.0);
        assert_eq!(ind.report.em, 0.5);
        assert_eq!(ind.report.consistency, 0.0);
        assert_eq!(joint.report.consistency, 1.0);
        assert_eq!(joint.predictions[0].scores.len(), 2);
    }

    #[test]
    fn diagnostics_are_in_range() {
        let data = Dataset::from_parts(vec![], vec![bundle()]);
        let p = crate::scorer::init_params(5, Dims::default(), data.vocab.len()).unwrap();
        let insts = data.bundles[0].gold_instances();
        let d = diagnose(&p, &data.vocab, &insts, &DiagnosticsConfig::default()).unwrap();
        assert_eq!(d.per_instance_entropy10.len(), 2);
        for e in &d.per_instance_entropy10 {
            assert!(*e >= 0.0 && *e <= 10f64.ln() + 1e-12);
        }
        assert!(d.per_instance_top2.iter().all(|r| r.is_some_and(|r| r >= 0.0)));
    }

    #[test]
    fn augmented_eval_scores_original_questions() {
        let choice = QaInstance::from_text("a", "the hare runs . the turtle walks .", "which animal is faster , turtle or hare ?", "hare").unwrap();
        let open = QaInstance::from_text("b", "he was born in paris .", "where was he born ?", "paris").unwrap();
        let data = Dataset::from_parts(vec![choice, open], vec![]);
        let p = ScorerParams::zeros(Dims::default(), data.vocab.len()).unwrap();
        let tables = HeuristicTables::builtin();
        let joint = evaluate_augmented(&p, &data.vocab, &data.instances, tables, EvalMode::Joint, CompatMode::Ln).unwrap();
        assert_eq!(joint.report.n.instances, 2);
        assert_eq!(joint.predictions[0].id, "a");
        // all-tied scores: joint assignment pairs question 0 with the first choice
        assert_eq!(joint.predictions[0].prediction, "turtle");
        assert_eq!(joint.predictions[0].scores.len(), 2);
        assert!(joint.predictions[1].scores.is_empty());
        let ind = evaluate_augmented(&p, &data.vocab, &data.instances, tables, EvalMode::Independent, CompatMode::Ln).unwrap();
        assert_eq!(ind.predictions[0].prediction, "turtle");
    }
}
