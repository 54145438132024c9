//! Greedy decoding, candidate ranking and joint question-answer assignment.

use serde::{Deserialize, Serialize};

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::losses::LogScoreMatrix;
use crate::scorer::{compat, decoder_logits, encode, CompatMode, ScorerParams};

/// Filler for the cells added when a rectangular matrix is made square.
pub const PAD_SCORE: f64 = -1e9;

/// Largest `min(rows, cols)` accepted by [`assign_bruteforce`].
pub const BRUTEFORCE_MAX: usize = 6;

/// Index of the largest value, lowest index on ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax decoding from BOS until EOS or `max_len` steps. EOS is not
/// returned.
pub fn greedy_decode(params: &ScorerParams, context: &[usize], question: &[usize]) -> Result<Vec<usize>> {
    let enc = encode(params, context, question);
    let mut out = Vec::new();
    let mut prev = BOS;
    for t in 0..params.dims.max_len {
        let tok = argmax(&decoder_logits(params, &enc, prev, t)?);
        if tok == EOS {
            break;
        }
        out.push(tok);
        prev = tok;
    }
    Ok(out)
}

/// Scores every candidate and returns the best index with all scores.
pub fn rank_candidates(
    params: &ScorerParams,
    mode: CompatMode,
    context: &[usize],
    question: &[usize],
    candidates: &[Vec<usize>],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::Argument("no candidates to rank".into()));
    }
    let scores = candidates
        .iter()
        .map(|c| compat(params, mode, context, question, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((argmax(&scores), scores))
}

/// A one-to-one matching of questions (rows) to answers (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Sorted by question index.
    pub pairs: Vec<(usize, usize)>,
    pub total_score: f64,
}

impl Assignment {
    fn from_pairs(m: &LogScoreMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let total_score = canonical_total(m, &pairs);
        Assignment { pairs, total_score }
    }

    /// Answer matched to question `q`, if any.
    pub fn answer_of(&self, q: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == q).map(|p| p.1)
    }
}

/// Sum of the entries at `pairs`, added in pair order.
fn canonical_total(m: &LogScoreMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().fold(0.0, |acc, &(i, j)| acc + m.get(i, j))
}

/// Minimum-cost perfect matching on a square cost matrix with the
/// shortest-augmenting-path Hungarian method. Returns the column of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Square score matrix padded with [`PAD_SCORE`].
fn padded(m: &LogScoreMatrix) -> Vec<Vec<f64>> {
    let n = m.rows().max(m.cols());
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i < m.rows() && j < m.cols() {
                        m.get(i, j)
                    } else {
                        PAD_SCORE
                    }
                })
                .collect()
        })
        .collect()
}

/// Best completion of a padded matrix with rows `fixed[..]` already matched.
/// Returns the column of every row.
fn complete(scores: &[Vec<f64>], fixed: &[(usize, usize)]) -> Vec<usize> {
    let n = scores.len();
    let free_rows: Vec<usize> = (0..n).filter(|i| !fixed.iter().any(|f| f.0 == *i)).collect();
    let free_cols: Vec<usize> = (0..n).filter(|j| !fixed.iter().any(|f| f.1 == *j)).collect();
    let cost: Vec<Vec<f64>> = free_rows
        .iter()
        .map(|&i| free_cols.iter().map(|&j| -scores[i][j]).collect())
        .collect();
    let sub = hungarian(&cost);
    let mut cols = vec![0; n];
    for &(i, j) in fixed {
        cols[i] = j;
    }
    for (k, &i) in free_rows.iter().enumerate() {
        cols[i] = free_cols[sub[k]];
    }
    cols
}

fn real_pairs(m: &LogScoreMatrix, cols: &[usize]) -> Vec<(usize, usize)> {
    cols.iter()
        .enumerate()
        .filter(|&(i, &j)| i < m.rows() && j < m.cols())
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Maximum-total-score one-to-one assignment. Rectangular matrices are
/// padded to square; padded pairs are dropped. Among optimal assignments the
/// lexicographically smallest pair list is returned.
pub fn joint_assign(m: &LogScoreMatrix) -> Assignment {
    let scores = padded(m);
    let n = scores.len();
    let mut best = canonical_total(m, &real_pairs(m, &complete(&scores, &[])));
    // fix questions in order to the smallest answer that keeps the optimum;
    // real answers before padding
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    for i in 0..m.rows() {
        let mut options: Vec<usize> = (0..m.cols()).filter(|j| !fixed.iter().any(|f| f.1 == *j)).collect();
        if let Some(pad) = (m.cols()..n).find(|j| !fixed.iter().any(|f| f.1 == *j)) {
            options.push(pad);
        }
        let mut chosen = None;
        for j in options {
            fixed.push((i, j));
            let total = canonical_total(m, &real_pairs(m, &complete(&scores, &fixed)));
            fixed.pop();
            if total >= best {
                best = total;
                chosen = Some(j);
                break;
            }
        }
        // rounding inside the solver can hide the optimum; fall back to its answer
        let j = chosen.unwrap_or_else(|| complete(&scores, &fixed)[i]);
        fixed.push((i, j));
    }
    let cols = complete(&scores, &fixed);
    Assignment::from_pairs(m, real_pairs(m, &cols))
}

/// Exhaustive search over injective matchings with the same tie-break as
/// [`joint_assign`]. Fails when `min(rows, cols)` exceeds [`BRUTEFORCE_MAX`].
pub fn assign_bruteforce(m: &LogScoreMatrix) -> Result<Assignment> {
    let k = m.rows().min(m.cols());
    if k > BRUTEFORCE_MAX {
        return Err(Error::Size(format!(
            "brute force limited to {BRUTEFORCE_MAX} matched pairs, got {k}"
        )));
    }
    let transpose = m.rows() > m.cols();
    let (short, long) = if transpose {
        (m.cols(), m.rows())
    } else {
        (m.rows(), m.cols())
    };
    let mut best: Option<Assignment> = None;
    let mut pick = Vec::with_capacity(short);
    let mut used = vec![false; long];
    enumerate(short, long, &mut pick, &mut used, &mut |pick| {
        let pairs: Vec<(usize, usize)> = pick
            .iter()
            .enumerate()
            .map(|(s, &l)| if transpose { (l, s) } else { (s, l) })
            .collect();
        let cand = Assignment::from_pairs(m, pairs);
        let better = match &best {
            None => true,
            Some(b) => {
                cand.total_score > b.total_score || (cand.total_score == b.total_score && cand.pairs < b.pairs)
            }
        };
        if better {
            best = Some(cand);
        }
    });
    Ok(best.expect("at least one matching exists"))
}

fn enumerate(short: usize, long: usize, pick: &mut Vec<usize>, used: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
    if pick.len() == short {
        visit(pick);
        return;
    }
    for l in 0..long {
        if !used[l] {
            used[l] = true;
            pick.push(l);
            enumerate(short, long, pick, used, visit);
            pick.pop();
            used[l] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{Dims, ScorerParams};

    fn mat(rows: &[Vec<f64>]) -> LogScoreMatrix {
        LogScoreMatrix::from_rows(rows, vec![]).unwrap()
    }

    #[test]
    fn assignment_examples() {
        let a = joint_assign(&mat(&[vec![0.9, 0.1], vec![0.2, 0.8]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert!((a.total_score - 1.7).abs() < 1e-12);

        let a = joint_assign(&mat(&[vec![0.6, 0.5], vec![0.9, 0.1]]));
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert!((a.total_score - 1.4).abs() < 1e-12);

        let a = joint_assign(&mat(&[vec![-3.5]]));
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.total_score, -3.5);
    }

    #[test]
    fn ties_go_to_smallest_pair_list() {
        let a = joint_assign(&mat(&[vec![1.0, 1.0], vec![1.0, 1.0]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        let z = mat(&vec![vec![0.0; 3]; 3]);
        assert_eq!(joint_assign(&z).pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(assign_bruteforce(&z).unwrap().pairs, vec![(0, 0), (1, 1), (2, 2)]);
        // more questions than answers: the earliest questions are served
        let tall = mat(&[vec![0.0], vec![0.0], vec![0.0]]);
        assert_eq!(joint_assign(&tall).pairs, vec![(0, 0)]);
        assert_eq!(assign_bruteforce(&tall).unwrap().pairs, vec![(0, 0)]);
    }

    #[test]
    fn rectangular() {
        let wide = mat(&[vec![0.1, 0.9, 0.5], vec![0.2, 0.95, 0.6]]);
        let a = joint_assign(&wide);
        assert_eq!(a, assign_bruteforce(&wide).unwrap());
        assert_eq!(a.pairs, vec![(0, 1), (1, 2)]);
        let tall = mat(&[vec![0.1, 0.2], vec![0.9, 0.95], vec![0.5, 0.6]]);
        let a = joint_assign(&tall);
        assert_eq!(a, assign_bruteforce(&tall).unwrap());
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn bruteforce_bound() {
        let big = mat(&vec![vec![0.0; 7]; 7]);
        assert!(matches!(assign_bruteforce(&big), Err(Error::Size(_))));
        let ok = mat(&vec![vec![0.0; 9]; 2]);
        assert!(assign_bruteforce(&ok).is_ok());
    }

    #[test]
    fn rank_examples() {
        let p = ScorerParams::zeros(Dims::default(), 10).unwrap();
        assert!(matches!(
            rank_candidates(&p, CompatMode::Ln, &[5], &[6], &[]),
            Err(Error::Argument(_))
        ));
        let (i, s) = rank_candidates(&p, CompatMode::Ln, &[5], &[6], &[vec![7]]).unwrap();
        assert_eq!((i, s.len()), (0, 1));
        let (i, _) = rank_candidates(&p, CompatMode::Ln, &[5], &[6], &[vec![7], vec![8]]).unwrap();
        assert_eq!(i, 0);
        assert_eq!(argmax(&[-1.0, -0.3]), 1);
    }

    #[test]
    fn greedy_on_zero_params() {
        let p = ScorerParams::zeros(Dims::default(), 10).unwrap();
        // all logits tie, so BOS (index 0) wins every step until max_len
        let out = greedy_decode(&p, &[4, 5], &[6]).unwrap();
        assert_eq!(out, vec![0; p.dims.max_len]);
        let out = greedy_decode(&p, &[], &[crate::data::UNK; 3]).unwrap();
        assert!(out.len() <= p.dims.max_len);
    }
}
