//! Training objectives over instance bundles.
//!
//! Every loss here is a log-likelihood to be maximized. Contrastive losses
//! are functions of a [`LogScoreMatrix`] holding `f(q_i, a_j)` for every
//! question/answer pair of a bundle; their parameter gradients are obtained
//! by chaining the matrix-level partials through the scorer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EncodedBundle;
use crate::error::{Error, Result};
use crate::scorer::{log_softmax, softmax, CompatMode, Forward, ScorerParams};

/// Probabilities this close to 1 are clamped in unlikelihood terms.
pub const UL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    #[serde(rename = "mle")]
    Mle,
    #[serde(rename = "ul")]
    Ul,
    #[serde(rename = "ce-ac")]
    CeAc,
    #[serde(rename = "ce-qc")]
    CeQc,
    #[serde(rename = "ce-tw")]
    CeTw,
    #[serde(rename = "ce-ml")]
    CeMl,
    #[serde(rename = "ce-jt")]
    CeJt,
    #[serde(rename = "ce-fp")]
    CeFp,
}

impl LossVariant {
    pub const ALL: [LossVariant; 8] = [
        LossVariant::Mle,
        LossVariant::Ul,
        LossVariant::CeAc,
        LossVariant::CeQc,
        LossVariant::CeTw,
        LossVariant::CeMl,
        LossVariant::CeJt,
        LossVariant::CeFp,
    ];

    pub const PAIRWISE: [LossVariant; 5] = [
        LossVariant::CeAc,
        LossVariant::CeQc,
        LossVariant::CeTw,
        LossVariant::CeMl,
        LossVariant::CeFp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::Mle => "mle",
            LossVariant::Ul => "ul",
            LossVariant::CeAc => "ce-ac",
            LossVariant::CeQc => "ce-qc",
            LossVariant::CeTw => "ce-tw",
            LossVariant::CeMl => "ce-ml",
            LossVariant::CeJt => "ce-jt",
            LossVariant::CeFp => "ce-fp",
        }
    }

    pub fn is_contrastive(&self) -> bool {
        !matches!(self, LossVariant::Mle | LossVariant::Ul)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss {s:?}")))
    }
}

/// Which objective to optimize and with what weights.
///
/// The optimized value is `alpha1 * sum_gold MLE + alpha2 * aux`, where
/// `aux` is the selected variant summed over the bundle. For
/// [`LossVariant::Mle`] there is no auxiliary term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub variant: LossVariant,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub compat: CompatMode,
    pub ul_per_token: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec {
            variant: LossVariant::Mle,
            alpha1: 1.0,
            alpha2: 1.0,
            lambda1: 0.5,
            lambda2: 0.5,
            compat: CompatMode::Ln,
            ul_per_token: true,
        }
    }
}

impl LossSpec {
    pub fn new(variant: LossVariant) -> Self {
        LossSpec {
            variant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [self.alpha1, self.alpha2, self.lambda1, self.lambda2];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if self.alpha1 + self.alpha2 <= 0.0 {
            return Err(Error::Config("alpha1 + alpha2 must be positive".into()));
        }
        if self.variant == LossVariant::Mle && self.alpha1 <= 0.0 {
            return Err(Error::Config("mle needs alpha1 > 0".into()));
        }
        if self.variant == LossVariant::CeTw && self.lambda1 + self.lambda2 <= 0.0 {
            return Err(Error::Config("lambda1 + lambda2 must be positive".into()));
        }
        if matches!(self.variant, LossVariant::Mle | LossVariant::Ul) && self.compat != CompatMode::Ln {
            return Err(Error::UnsupportedMode {
                mode: self.compat.to_string(),
                what: self.variant.to_string(),
            });
        }
        Ok(())
    }
}

/// `log sum exp(values)`, shifted by the maximum.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("log_sum_exp of an empty list".into()));
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln())
}

/// `f(q_i, a_j)` for every pair in a bundle, plus the gold pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct LogScoreMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    gold: Vec<(usize, usize)>,
}

impl LogScoreMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, gold: Vec<(usize, usize)>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "matrix of {rows}x{cols} given {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("log-scores must be finite".into()));
        }
        for (k, &(i, j)) in gold.iter().enumerate() {
            if i >= rows || j >= cols {
                return Err(Error::Argument(format!("gold pair ({i}, {j}) out of range")));
            }
            if gold[..k].iter().any(|&(a, b)| a == i || b == j) {
                return Err(Error::Argument("gold pairing is not injective".into()));
            }
        }
        Ok(LogScoreMatrix {
            rows,
            cols,
            values,
            gold,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], gold: Vec<(usize, usize)>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("ragged score matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat(), gold)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gold(&self) -> &[(usize, usize)] {
        &self.gold
    }

    pub fn is_gold(&self, i: usize, j: usize) -> bool {
        self.gold.contains(&(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    /// Every entry plus `c`.
    pub fn shifted(&self, c: f64) -> Self {
        LogScoreMatrix {
            values: self.values.iter().map(|v| v + c).collect(),
            ..self.clone()
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }
}

/// `f(g) - lse(f over cells)` with its partials added into `partials`,
/// scaled by `weight`.
fn log_softmax_at(m: &LogScoreMatrix, gold: usize, cells: &[usize], weight: f64, partials: &mut [f64]) -> f64 {
    let vals: Vec<f64> = cells.iter().map(|&c| m.values[c]).collect();
    let lse = log_sum_exp(&vals).expect("neighborhood contains the gold cell");
    partials[gold] += weight;
    for (&c, v) in cells.iter().zip(&vals) {
        partials[c] -= weight * (v - lse).exp();
    }
    m.values[gold] - lse
}

/// Value and matrix partials of one pairwise CE variant at one gold pair.
pub fn ce_pairwise_partials(
    m: &LogScoreMatrix,
    variant: LossVariant,
    gold_pair: (usize, usize),
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, Vec<f64>)> {
    let (gq, ga) = gold_pair;
    if !m.is_gold(gq, ga) {
        return Err(Error::Argument(format!("({gq}, {ga}) is not a gold pair")));
    }
    let g = m.idx(gq, ga);
    let mut partials = vec![0.0; m.values.len()];
    let row: Vec<usize> = (0..m.cols).map(|j| m.idx(gq, j)).collect();
    let col: Vec<usize> = (0..m.rows).map(|i| m.idx(i, ga)).collect();
    let value = match variant {
        LossVariant::CeAc => log_softmax_at(m, g, &row, 1.0, &mut partials),
        LossVariant::CeQc => log_softmax_at(m, g, &col, 1.0, &mut partials),
        LossVariant::CeTw => {
            lambda1 * log_softmax_at(m, g, &row, lambda1, &mut partials)
                + lambda2 * log_softmax_at(m, g, &col, lambda2, &mut partials)
        }
        LossVariant::CeMl => {
            let all: Vec<usize> = (0..m.values.len()).collect();
            log_softmax_at(m, g, &all, 1.0, &mut partials)
        }
        LossVariant::CeFp => {
            let mut cells = vec![g];
            for i in 0..m.rows {
                for j in 0..m.cols {
                    if !m.is_gold(i, j) {
                        cells.push(m.idx(i, j));
                    }
                }
            }
            log_softmax_at(m, g, &cells, 1.0, &mut partials)
        }
        other => {
            return Err(Error::Argument(format!("{other} is not a pairwise CE variant")));
        }
    };
    Ok((value, partials))
}

/// One pairwise CE variant evaluated at one gold pair.
pub fn ce_pairwise(
    m: &LogScoreMatrix,
    variant: LossVariant,
    gold_pair: (usize, usize),
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    Ok(ce_pairwise_partials(m, variant, gold_pair, lambda1, lambda2)?.0)
}

/// Joint (power-set) CE over all unordered pairs of distinct cells.
pub fn ce_joint_partials(m: &LogScoreMatrix) -> Result<(f64, Vec<f64>)> {
    if m.gold.len() != 2 {
        return Err(Error::UnsupportedBundle(format!(
            "joint CE needs exactly 2 gold pairs, got {}",
            m.gold.len()
        )));
    }
    let n = m.values.len();
    if n < 2 {
        return Err(Error::UnsupportedBundle("cross product has fewer than 2 cells".into()));
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            pairs.push((a, b));
            terms.push(m.values[a] + m.values[b]);
        }
    }
    let lse = log_sum_exp(&terms)?;
    let g1 = m.idx(m.gold[0].0, m.gold[0].1);
    let g2 = m.idx(m.gold[1].0, m.gold[1].1);
    let mut partials = vec![0.0; n];
    partials[g1] += 1.0;
    partials[g2] += 1.0;
    for (&(a, b), t) in pairs.iter().zip(&terms) {
        let p = (t - lse).exp();
        partials[a] -= p;
        partials[b] -= p;
    }
    Ok((m.values[g1] + m.values[g2] - lse, partials))
}

pub fn ce_joint(m: &LogScoreMatrix) -> Result<f64> {
    Ok(ce_joint_partials(m)?.0)
}

/// Bundle-level CE value and partials: pairwise variants are summed over
/// gold pairs, the joint variant is a single bundle term.
pub fn ce_total_partials(
    m: &LogScoreMatrix,
    variant: LossVariant,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, Vec<f64>)> {
    if variant == LossVariant::CeJt {
        return ce_joint_partials(m);
    }
    let mut total = 0.0;
    let mut partials = vec![0.0; m.values.len()];
    for &g in &m.gold {
        let (v, p) = ce_pairwise_partials(m, variant, g, lambda1, lambda2)?;
        total += v;
        partials.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    Ok((total, partials))
}

pub fn ce_total(m: &LogScoreMatrix, variant: LossVariant, lambda1: f64, lambda2: f64) -> Result<f64> {
    Ok(ce_total_partials(m, variant, lambda1, lambda2)?.0)
}

/// Forward passes for every (question, answer) cell of a bundle, with one
/// pending d/dlogits accumulator per cell so each cell is backpropagated
/// once no matter how many loss terms touch it.
struct CellGrid<'a> {
    rows: usize,
    cols: usize,
    cells: Vec<Forward<'a>>,
    pending: Vec<Option<Vec<Vec<f64>>>>,
}

impl<'a> CellGrid<'a> {
    fn new(params: &ScorerParams, bundle: &'a EncodedBundle) -> Result<Self> {
        let rows = bundle.questions.len();
        let cols = bundle.answers.len();
        let mut cells = Vec::with_capacity(rows * cols);
        for q in &bundle.questions {
            let enc = crate::scorer::encode(params, &bundle.context, q);
            for a in &bundle.answers {
                cells.push(Forward::with_encoding(params, &bundle.context, q, &enc, a)?);
            }
        }
        Ok(CellGrid {
            rows,
            cols,
            pending: vec![None; cells.len()],
            cells,
        })
    }

    fn cell(&self, i: usize, j: usize) -> &Forward<'a> {
        &self.cells[i * self.cols + j]
    }

    fn matrix(&self, mode: CompatMode, gold: &[(usize, usize)]) -> Result<LogScoreMatrix> {
        let values = self.cells.iter().map(|c| c.score(mode)).collect();
        LogScoreMatrix::new(self.rows, self.cols, values, gold.to_vec())
    }

    fn add(&mut self, k: usize, weight: f64, dlogits: Vec<Vec<f64>>) {
        if weight == 0.0 {
            return;
        }
        match &mut self.pending[k] {
            Some(acc) => {
                for (a, d) in acc.iter_mut().zip(dlogits) {
                    a.iter_mut().zip(d).for_each(|(x, y)| *x += weight * y);
                }
            }
            slot @ None => {
                let mut d = dlogits;
                d.iter_mut().flatten().for_each(|x| *x *= weight);
                *slot = Some(d);
            }
        }
    }

    fn add_score(&mut self, i: usize, j: usize, mode: CompatMode, weight: f64) {
        let k = i * self.cols + j;
        let d = self.cells[k].score_dlogits(mode);
        self.add(k, weight, d);
    }

    fn backward(&self, params: &ScorerParams) -> ScorerParams {
        let mut grad = params.zeros_like();
        for (c, p) in self.cells.iter().zip(&self.pending) {
            if let Some(d) = p {
                c.backward(params, d, &mut grad);
            }
        }
        grad
    }
}

/// `log(1 - p)` from `log p`, clamped at `log(UL_CLAMP)`.
/// Returns the value, `d value / d log p`, and whether it was clamped.
fn log1m_exp(logp: f64) -> (f64, f64, bool) {
    let p = logp.exp();
    let q = -logp.exp_m1();
    if q < UL_CLAMP {
        (UL_CLAMP.ln(), 0.0, true)
    } else {
        (q.ln(), -p / q, false)
    }
}

/// Value of an unlikelihood objective plus how many terms hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlValue {
    pub value: f64,
    pub clamped: usize,
}

/// Adds the unlikelihood terms of negative cell `neg` (against gold cell
/// `gold`) to the grid; returns (value, clamped count).
fn ul_terms(grid: &mut CellGrid<'_>, row: usize, gold: usize, neg: usize, per_token: bool, weight: f64) -> (f64, usize) {
    let k = row * grid.cols + neg;
    let fwd = &grid.cells[k];
    if !per_token {
        let (v, dv, clamped) = log1m_exp(fwd.score(CompatMode::Ln));
        let d = fwd.score_dlogits(CompatMode::Ln);
        grid.add(k, weight * dv, d);
        return (v, clamped as usize);
    }
    let gold_targets = grid.cell(row, gold).targets.clone();
    let mut value = 0.0;
    let mut clamped = 0;
    let mut dl = vec![vec![0.0; fwd.steps[0].logits.len()]; fwd.steps.len()];
    // Content steps only; steps where the negative still agrees with the
    // gold prefix are gold tokens and are skipped.
    let content = fwd.targets.len() - 1;
    for t in 0..content {
        if gold_targets.len() > t && gold_targets[..=t] == fwd.targets[..=t] {
            continue;
        }
        let tok = fwd.targets[t];
        let logits = &fwd.steps[t].logits;
        let logp = log_softmax(logits)[tok];
        let (v, dv, c) = log1m_exp(logp);
        value += v;
        clamped += c as usize;
        if dv != 0.0 {
            for (g, p) in dl[t].iter_mut().zip(softmax(logits)) {
                *g -= dv * p;
            }
            dl[t][tok] += dv;
        }
    }
    grid.add(k, weight, dl);
    (value, clamped)
}

fn single_instance_bundle(context: &[usize], question: &[usize], gold: &[usize], negatives: &[Vec<usize>]) -> EncodedBundle {
    let mut answers = vec![gold.to_vec()];
    answers.extend(negatives.iter().cloned());
    EncodedBundle {
        context: context.to_vec(),
        questions: vec![question.to_vec()],
        answers,
        gold: vec![(0, 0)],
    }
}

fn require_ln(mode: CompatMode, what: &str) -> Result<()> {
    if mode != CompatMode::Ln {
        return Err(Error::UnsupportedMode {
            mode: mode.to_string(),
            what: what.to_string(),
        });
    }
    Ok(())
}

/// Token-level log-likelihood `sum_t log p(a_t | a_<t, q)` of the answer.
pub fn mle_loss(params: &ScorerParams, context: &[usize], question: &[usize], answer: &[usize], mode: CompatMode) -> Result<f64> {
    require_ln(mode, "mle")?;
    Ok(Forward::run(params, context, question, answer)?.score(CompatMode::Ln))
}

pub fn mle_loss_grad(
    params: &ScorerParams,
    context: &[usize],
    question: &[usize],
    answer: &[usize],
    mode: CompatMode,
) -> Result<(f64, ScorerParams)> {
    require_ln(mode, "mle")?;
    crate::scorer::compat_grad(params, CompatMode::Ln, context, question, answer)
}

/// MLE of the gold answer plus `log(1 - p)` for each negative answer, either
/// per decoding step (`per_token`) or over whole sequences.
pub fn ul_loss(
    params: &ScorerParams,
    context: &[usize],
    question: &[usize],
    gold: &[usize],
    negatives: &[Vec<usize>],
    mode: CompatMode,
    per_token: bool,
) -> Result<UlValue> {
    Ok(ul_loss_grad(params, context, question, gold, negatives, mode, per_token)?.0)
}

pub fn ul_loss_grad(
    params: &ScorerParams,
    context: &[usize],
    question: &[usize],
    gold: &[usize],
    negatives: &[Vec<usize>],
    mode: CompatMode,
    per_token: bool,
) -> Result<(UlValue, ScorerParams)> {
    require_ln(mode, "ul")?;
    let b = single_instance_bundle(context, question, gold, negatives);
    let mut grid = CellGrid::new(params, &b)?;
    let mut value = grid.cell(0, 0).score(CompatMode::Ln);
    grid.add_score(0, 0, CompatMode::Ln, 1.0);
    let mut clamped = 0;
    for neg in 1..b.answers.len() {
        let (v, c) = ul_terms(&mut grid, 0, 0, neg, per_token, 1.0);
        value += v;
        clamped += c;
    }
    Ok((UlValue { value, clamped }, grid.backward(params)))
}

/// Log-score matrix of a bundle under `mode`.
pub fn score_matrix(params: &ScorerParams, mode: CompatMode, bundle: &EncodedBundle) -> Result<LogScoreMatrix> {
    CellGrid::new(params, bundle)?.matrix(mode, &bundle.gold)
}

/// Bundle-level CE value and parameter gradient.
pub fn ce_loss_grad(
    params: &ScorerParams,
    variant: LossVariant,
    mode: CompatMode,
    lambda1: f64,
    lambda2: f64,
    bundle: &EncodedBundle,
) -> Result<(f64, ScorerParams)> {
    let mut grid = CellGrid::new(params, bundle)?;
    let m = grid.matrix(mode, &bundle.gold)?;
    let (v, partials) = ce_total_partials(&m, variant, lambda1, lambda2)?;
    for (k, &p) in partials.iter().enumerate() {
        grid.add_score(k / grid.cols, k % grid.cols, mode, p);
    }
    Ok((v, grid.backward(params)))
}

/// Value, gradient and diagnostics of the interpolated objective.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub mle: f64,
    pub aux: f64,
    pub grad: ScorerParams,
    pub clamped: usize,
}

/// `alpha1 * sum_gold MLE + alpha2 * aux` over one bundle, with gradient.
pub fn interpolated_loss(spec: &LossSpec, params: &ScorerParams, bundle: &EncodedBundle) -> Result<LossEval> {
    spec.validate()?;
    if bundle.gold.is_empty() {
        return Err(Error::UnsupportedBundle("bundle has no gold pairs".into()));
    }
    let mut grid = CellGrid::new(params, bundle)?;
    let mut mle = 0.0;
    for &(i, j) in &bundle.gold {
        mle += grid.cell(i, j).score(CompatMode::Ln);
        grid.add_score(i, j, CompatMode::Ln, spec.alpha1);
    }
    let mut aux = 0.0;
    let mut clamped = 0;
    match spec.variant {
        LossVariant::Mle => {}
        LossVariant::Ul => {
            for &(i, j) in &bundle.gold {
                aux += grid.cell(i, j).score(CompatMode::Ln);
                grid.add_score(i, j, CompatMode::Ln, spec.alpha2);
                for neg in (0..grid.cols).filter(|&c| c != j) {
                    let (v, c) = ul_terms(&mut grid, i, j, neg, spec.ul_per_token, spec.alpha2);
                    aux += v;
                    clamped += c;
                }
            }
        }
        variant => {
            let m = grid.matrix(spec.compat, &bundle.gold)?;
            let (v, partials) = ce_total_partials(&m, variant, spec.lambda1, spec.lambda2)?;
            aux = v;
            for (k, &p) in partials.iter().enumerate() {
                grid.add_score(k / grid.cols, k % grid.cols, spec.compat, spec.alpha2 * p);
            }
        }
    }
    let value = spec.alpha1 * mle + spec.alpha2 * aux;
    Ok(LossEval {
        value,
        mle,
        aux,
        grad: grid.backward(params),
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2(rows: &[[f64; 2]; 2]) -> LogScoreMatrix {
        LogScoreMatrix::from_rows(&[rows[0].to_vec(), rows[1].to_vec()], vec![(0, 0), (1, 1)]).unwrap()
    }

    #[test]
    fn lse_examples() {
        assert_relative_eq!(log_sum_exp(&[0.0, 0.0]).unwrap(), 2f64.ln());
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]).unwrap(), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[5.0]).unwrap(), 5.0);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn pairwise_examples() {
        let m = LogScoreMatrix::from_rows(&[vec![1.0, 0.0]], vec![(0, 0)]).unwrap();
        let v = ce_pairwise(&m, LossVariant::CeAc, (0, 0), 0.5, 0.5).unwrap();
        assert_relative_eq!(v, 1.0 - (1f64.exp() + 1.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(v, -0.3133, epsilon = 1e-4);

        let m = LogScoreMatrix::from_rows(&[vec![2.0], vec![2.0]], vec![(0, 0)]).unwrap();
        let v = ce_pairwise(&m, LossVariant::CeQc, (0, 0), 0.5, 0.5).unwrap();
        assert_relative_eq!(v, -(2f64.ln()), epsilon = 1e-12);

        let z = m2(&[[0.0, 0.0], [0.0, 0.0]]);
        let v = ce_pairwise(&z, LossVariant::CeFp, (0, 0), 0.5, 0.5).unwrap();
        assert_relative_eq!(v, -(3f64.ln()), epsilon = 1e-12);
        let v = ce_pairwise(&z, LossVariant::CeMl, (0, 0), 0.5, 0.5).unwrap();
        assert_relative_eq!(v, -(4f64.ln()), epsilon = 1e-12);
        let total = ce_total(&z, LossVariant::CeMl, 0.5, 0.5).unwrap();
        assert_relative_eq!(total, -2.0 * 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn two_way_is_weighted_sum() {
        let m = m2(&[[0.3, -1.2], [0.7, 2.0]]);
        let ac = ce_pairwise(&m, LossVariant::CeAc, (1, 1), 0.0, 0.0).unwrap();
        let qc = ce_pairwise(&m, LossVariant::CeQc, (1, 1), 0.0, 0.0).unwrap();
        let tw = ce_pairwise(&m, LossVariant::CeTw, (1, 1), 0.3, 0.9).unwrap();
        assert_relative_eq!(tw, 0.3 * ac + 0.9 * qc, epsilon = 1e-12);
    }

    #[test]
    fn pairwise_rejects_non_gold() {
        let m = m2(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            ce_pairwise(&m, LossVariant::CeAc, (0, 1), 0.5, 0.5),
            Err(Error::Argument(_))
        ));
        assert!(ce_pairwise(&m, LossVariant::CeJt, (0, 0), 0.5, 0.5).is_err());
    }

    #[test]
    fn joint_examples() {
        let z = m2(&[[0.0, 0.0], [0.0, 0.0]]);
        assert_relative_eq!(ce_joint(&z).unwrap(), (1.0f64 / 6.0).ln(), epsilon = 1e-12);

        let l2 = 2f64.ln();
        let m = m2(&[[l2, 0.0], [0.0, l2]]);
        assert_relative_eq!(ce_joint(&m).unwrap(), (4.0f64 / 13.0).ln(), epsilon = 1e-12);

        let one = LogScoreMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![(0, 0)]).unwrap();
        assert!(matches!(ce_joint(&one), Err(Error::UnsupportedBundle(_))));
    }

    #[test]
    fn matrix_rejects_bad_input() {
        assert!(LogScoreMatrix::new(1, 2, vec![0.0, f64::NAN], vec![(0, 0)]).is_err());
        assert!(LogScoreMatrix::new(2, 2, vec![0.0; 4], vec![(0, 0), (1, 0)]).is_err());
        assert!(LogScoreMatrix::new(2, 2, vec![0.0; 3], vec![(0, 0)]).is_err());
        assert!(LogScoreMatrix::new(2, 2, vec![0.0; 4], vec![(2, 0)]).is_err());
    }

    #[test]
    fn log1m_exp_clamps() {
        let (v, _, c) = log1m_exp(0.0);
        assert!(c);
        assert_relative_eq!(v, UL_CLAMP.ln());
        let (v, d, c) = log1m_exp(f64::NEG_INFINITY);
        assert!(!c);
        assert_eq!(v, 0.0);
        assert_eq!(d, 0.0);
        let (v, _, _) = log1m_exp(0.1f64.ln());
        assert_relative_eq!(v, 0.9f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec::default().validate().is_ok());
        let s = LossSpec {
            alpha1: 0.0,
            alpha2: 0.0,
            ..LossSpec::new(LossVariant::CeAc)
        };
        assert!(s.validate().is_err());
        let s = LossSpec {
            lambda1: 0.0,
            lambda2: 0.0,
            ..LossSpec::new(LossVariant::CeTw)
        };
        assert!(s.validate().is_err());
        let s = LossSpec {
            compat: CompatMode::Un,
            ..LossSpec::new(LossVariant::Ul)
        };
        assert!(matches!(s.validate(), Err(Error::UnsupportedMode { .. })));
        let s = LossSpec {
            compat: CompatMode::Gs,
            ..LossSpec::new(LossVariant::CeQc)
        };
        assert!(s.validate().is_ok());
        for v in LossVariant::ALL {
            assert_eq!(v.name().parse::<LossVariant>().unwrap(), v);
        }
    }
}
