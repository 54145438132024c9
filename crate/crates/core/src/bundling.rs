//! Building instance bundles: Jaccard question mining, rule-based contrast
//! questions, and diverse top-k negative answers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_tokens, validate_bundle, BundleSource, InstanceBundle, QaInstance, Tokens, Vocab, BOS, EOS};
use crate::error::{Error, Result};
use crate::scorer::{compat, decoder_logits, encode, softmax, CompatMode, Model, ScorerParams};

/// `|A ∩ B| / |A ∪ B|` over token sets; 1 when both are empty.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&str> = a.iter().map(String::as_str).collect();
    let sb: HashSet<&str> = b.iter().map(String::as_str).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub jaccard_threshold: f64,
    pub max_cluster_size: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            jaccard_threshold: 0.8,
            max_cluster_size: 4,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "jaccard threshold {} outside (0, 1]",
                self.jaccard_threshold
            )));
        }
        if self.max_cluster_size < 2 {
            return Err(Error::Config("max cluster size must be at least 2".into()));
        }
        Ok(())
    }
}

struct Clusters {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Clusters {
    fn new(n: usize) -> Self {
        Clusters {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize, cap: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb || self.size[ra] + self.size[rb] > cap {
            return;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[gone] = keep;
        self.size[keep] += self.size[gone];
    }
}

/// Greedy single-link clustering of questions over one shared context.
///
/// Pairs are visited in sorted-id order and merged when their Jaccard index
/// reaches the threshold, unless the merged cluster would exceed
/// `max_cluster_size`. Clusters whose members share a normalized answer (or
/// repeat a question) are dropped, as are singletons.
pub fn mine_bundles(instances: &[QaInstance], cfg: &MiningConfig) -> Vec<InstanceBundle> {
    let mut sorted: Vec<&QaInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len();
    let mut clusters = Clusters::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if jaccard(&sorted[i].question, &sorted[j].question) >= cfg.jaccard_threshold {
                clusters.union(i, j, cfg.max_cluster_size);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        let r = clusters.find(i);
        let k = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[k].push(i);
    }
    groups
        .into_iter()
        .filter(|g| g.len() > 1)
        .filter_map(|g| {
            let members: Vec<&QaInstance> = g.iter().map(|&i| sorted[i]).collect();
            let ids: Vec<&str> = members.iter().map(|m| m.id.as_str()).collect();
            let b = InstanceBundle {
                bundle_id: format!("mined:{}", ids.join("|")),
                context: members[0].context.clone(),
                questions: members.iter().map(|m| m.question.clone()).collect(),
                answers: members.iter().map(|m| m.answer.clone()).collect(),
                gold: (0..members.len()).map(|k| (k, k)).collect(),
                source: BundleSource::Mined,
            };
            validate_bundle(&b).ok().map(|_| b)
        })
        .collect()
}

/// [`mine_bundles`] applied to each group of instances sharing a context.
pub fn mine_corpus(instances: &[QaInstance], cfg: &MiningConfig) -> Vec<InstanceBundle> {
    let mut groups: Vec<(Tokens, Vec<QaInstance>)> = Vec::new();
    let mut slot: HashMap<Tokens, usize> = HashMap::new();
    for inst in instances {
        let k = *slot.entry(inst.context.clone()).or_insert_with(|| {
            groups.push((inst.context.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(inst.clone());
    }
    let mut out: Vec<InstanceBundle> = groups
        .iter()
        .flat_map(|(_, members)| mine_bundles(members, cfg))
        .collect();
    out.sort_by(|a, b| a.bundle_id.cmp(&b.bundle_id));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicTag {
    SuperlativeSwap,
    VerbNegation,
    NpSwap,
}

impl fmt::Display for HeuristicTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicTag::SuperlativeSwap => "superlative_swap",
            HeuristicTag::VerbNegation => "verb_negation",
            HeuristicTag::NpSwap => "np_swap",
        })
    }
}

/// Word tables behind the question rewrites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicTables {
    pub antonyms: Vec<(String, String)>,
    /// Past-tense form to base form.
    pub irregular_verbs: HashMap<String, String>,
    /// `-ed` words that are not verbs.
    #[serde(default)]
    pub not_verbs: Vec<String>,
}

const DEFAULT_TABLES: &str = include_str!("../resources/heuristics.json");

impl HeuristicTables {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The tables shipped with the crate.
    pub fn builtin() -> &'static HeuristicTables {
        static TABLES: OnceLock<HeuristicTables> = OnceLock::new();
        TABLES.get_or_init(|| Self::from_json(DEFAULT_TABLES).expect("bundled tables parse"))
    }

    fn antonym(&self, w: &str) -> Option<&str> {
        self.antonyms.iter().find_map(|(a, b)| {
            if a == w {
                Some(b.as_str())
            } else if b == w {
                Some(a.as_str())
            } else {
                None
            }
        })
    }

    /// Base form of a past-tense verb, or `None` when `w` is not one.
    fn past_to_base(&self, w: &str) -> Option<String> {
        if let Some(base) = self.irregular_verbs.get(w) {
            return Some(base.clone());
        }
        if w.len() <= 4 || !w.ends_with("ed") || self.not_verbs.iter().any(|n| n == w) {
            return None;
        }
        if let Some(stem) = w.strip_suffix("ied") {
            return Some(format!("{stem}y"));
        }
        let stem = &w[..w.len() - 2];
        let b = stem.as_bytes();
        let n = b.len();
        if n >= 2 && b[n - 1] == b[n - 2] && !b"aeiouylsfz".contains(&b[n - 1]) {
            return Some(stem[..n - 1].to_string());
        }
        Some(stem.to_string())
    }
}

fn is_delim(t: &str) -> bool {
    matches!(t, "or" | "," | "?")
}

/// Token ranges of the two answer choices and what ends the second one.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Choices {
    a: Range<usize>,
    b: Range<usize>,
}

fn choice_spans(q: &[String]) -> Option<Choices> {
    let last_is_qmark = q.last().is_some_and(|t| t == "?");
    for o in (0..q.len()).filter(|&i| q[i] == "or") {
        // ", A or B ?"
        let b_end = (o + 1..q.len())
            .find(|&i| is_delim(&q[i]) || q[i] == "than")
            .unwrap_or(q.len());
        let b = o + 1..b_end;
        let ends_q = b_end + 1 == q.len() && last_is_qmark;
        if !b.is_empty() && ends_q {
            let a_start = (0..o).rev().find(|&i| is_delim(&q[i])).map_or(0, |i| i + 1);
            if a_start > 0 && a_start < o && q[a_start - 1] == "," {
                return Some(Choices { a: a_start..o, b });
            }
        }
        // "is the A or the B ..."
        if q.get(o + 1).is_some_and(|t| t == "the") {
            let the = (1..o).rev().find(|&i| q[i] == "the" && q[i - 1] == "is");
            if let Some(the) = the {
                let a = the + 1..o;
                let b_end = (o + 2..q.len()).find(|&i| is_delim(&q[i])).unwrap_or(q.len());
                let b = o + 2..b_end;
                if !a.is_empty() && !b.is_empty() && !q[a.clone()].iter().any(|t| is_delim(t)) {
                    return Some(Choices { a, b });
                }
            }
        }
        // "... A or B ?" and "... A or B than ...", A as long as B
        let than = q.get(b_end).is_some_and(|t| t == "than");
        if !b.is_empty() && (ends_q || than) && b.len() <= o {
            let a = o - b.len()..o;
            if !q[a.clone()].iter().any(|t| is_delim(t)) {
                return Some(Choices { a, b });
            }
        }
    }
    None
}

/// The two answer choices offered by a question, if it has the form
/// `..., A or B ?`, `is the A or the B ...` or `... A or B ?`.
pub fn extract_choices(question: &[String]) -> Option<(Tokens, Tokens)> {
    let c = choice_spans(question)?;
    let a = question[c.a].to_vec();
    let b = question[c.b].to_vec();
    if a == b {
        None
    } else {
        Some((a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub question: Tokens,
    pub answer: Tokens,
    pub tag: HeuristicTag,
}

/// Contrast questions whose answer is the other choice, with the built-in
/// tables.
pub fn gen_contrast_questions(inst: &QaInstance) -> Vec<GeneratedQuestion> {
    gen_contrast_questions_with(inst, HeuristicTables::builtin())
}

pub fn gen_contrast_questions_with(inst: &QaInstance, tables: &HeuristicTables) -> Vec<GeneratedQuestion> {
    let q = &inst.question;
    let Some(c) = choice_spans(q) else {
        return vec![];
    };
    let (ca, cb) = (q[c.a.clone()].to_vec(), q[c.b.clone()].to_vec());
    if ca == cb {
        return vec![];
    }
    let gold = normalize_tokens(&inst.answer);
    let (na, nb) = (normalize_tokens(&ca), normalize_tokens(&cb));
    let other = match (gold == na, gold == nb) {
        (true, false) => cb,
        (false, true) => ca,
        _ => return vec![],
    };
    let outside = |i: &usize| !c.a.contains(i) && !c.b.contains(i);
    let mut out: Vec<GeneratedQuestion> = Vec::new();
    let mut push = |question: Tokens, tag| {
        if question != *q && !out.iter().any(|g| g.question == question) {
            out.push(GeneratedQuestion {
                question,
                answer: other.clone(),
                tag,
            });
        }
    };

    if let Some((i, ant)) = (0..q.len())
        .filter(outside)
        .find_map(|i| tables.antonym(&q[i]).map(|a| (i, a)))
    {
        let mut nq = q.clone();
        nq[i] = ant.to_string();
        push(nq, HeuristicTag::SuperlativeSwap);
    }

    if let Some((i, base)) = (0..q.len())
        .filter(outside)
        .find_map(|i| tables.past_to_base(&q[i]).map(|b| (i, b)))
    {
        let mut nq = q[..i].to_vec();
        nq.extend(["did".to_string(), "not".to_string(), base]);
        nq.extend_from_slice(&q[i + 1..]);
        push(nq, HeuristicTag::VerbNegation);
    }

    if let Some(nq) = np_swap(q, &c) {
        push(nq, HeuristicTag::NpSwap);
    }
    out
}

/// `P NP1 Q A or B than NP2 ?` becomes `P NP2 Q A or B than NP1 ?`.
fn np_swap(q: &[String], c: &Choices) -> Option<Tokens> {
    if q.get(c.b.end).map(String::as_str) != Some("than") || q.last().map(String::as_str) != Some("?") {
        return None;
    }
    let np2 = c.b.end + 1..q.len() - 1;
    if np2.is_empty() {
        return None;
    }
    let prefix = &q[..c.a.start];
    let w = np2.len();
    let np1 = (0..prefix.len().saturating_sub(w - 1))
        .map(|s| s..s + w)
        .find(|r| {
            q[r.clone()]
                .iter()
                .zip(&q[np2.clone()])
                .filter(|(x, y)| x != y)
                .count()
                == 1
        })
        .or_else(|| (prefix.len() >= 2).then_some(1..prefix.len()))?;
    let mut nq = q[..np1.start].to_vec();
    nq.extend_from_slice(&q[np2.clone()]);
    nq.extend_from_slice(&q[np1.end..np2.start]);
    nq.extend_from_slice(&q[np1]);
    nq.push("?".to_string());
    Some(nq)
}

/// One two-question bundle per generated contrast question.
pub fn augment(instances: &[QaInstance], tables: &HeuristicTables) -> Vec<InstanceBundle> {
    let mut out = Vec::new();
    for inst in instances {
        for (k, g) in gen_contrast_questions_with(inst, tables).into_iter().enumerate() {
            let b = InstanceBundle {
                bundle_id: format!("gen:{}:{k}", inst.id),
                context: inst.context.clone(),
                questions: vec![inst.question.clone(), g.question],
                answers: vec![inst.answer.clone(), g.answer],
                gold: vec![(0, 0), (1, 1)],
                source: BundleSource::Generated,
            };
            if validate_bundle(&b).is_ok() {
                out.push(b);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: usize,
    pub nucleus_p: f64,
    pub nucleus_steps: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            k: 1,
            nucleus_p: 0.9,
            nucleus_steps: 2,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::Config(format!("nucleus_p {} outside (0, 1]", self.nucleus_p)));
        }
        if self.nucleus_steps == 0 {
            return Err(Error::Config("nucleus_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Per-instance PRNG: `seed ^ fnv1a(id)`.
pub fn instance_rng(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(id))
}

/// Smallest prefix of tokens, by descending probability, whose mass reaches `p`.
fn nucleus(probs: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    let mut out = Vec::new();
    for i in order {
        out.push(i);
        mass += probs[i];
        if mass >= p {
            break;
        }
    }
    out
}

/// Draws up to `attempts` answers: nucleus sampling for the first
/// `nucleus_steps` tokens, without replacement over sampled prefixes, then
/// greedy decoding until EOS or until only the final EOS slot of `max_len`
/// is left. A prefix whose nucleus continuations are all used is itself
/// used, so an attempt backs off to a shorter prefix instead of repeating.
/// Returns the distinct answers in draw order, EOS stripped.
pub fn diverse_samples(
    params: &ScorerParams,
    context: &[usize],
    question: &[usize],
    nucleus_p: f64,
    nucleus_steps: usize,
    attempts: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<usize>>> {
    let enc = encode(params, context, question);
    let max_len = params.dims.max_len;
    let mut used: HashSet<Vec<usize>> = HashSet::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    // the last step is reserved for EOS
    let steps = nucleus_steps.min(max_len - 1);
    for _ in 0..attempts {
        let mut seq: Vec<usize> = Vec::new();
        while seq.len() < steps && seq.last() != Some(&EOS) {
            let t = seq.len();
            let prev = seq.last().copied().unwrap_or(BOS);
            let probs = softmax(&decoder_logits(params, &enc, prev, t)?);
            let pool: Vec<usize> = nucleus(&probs, nucleus_p)
                .into_iter()
                .filter(|&c| {
                    let mut pre = seq.clone();
                    pre.push(c);
                    !used.contains(&pre)
                })
                .collect();
            let total: f64 = pool.iter().map(|&c| probs[c]).sum();
            if pool.is_empty() || !(total > 0.0) {
                if seq.is_empty() {
                    return Ok(out);
                }
                used.insert(seq.clone());
                seq.pop();
                continue;
            }
            let mut r = rng.gen::<f64>() * total;
            let mut pick = *pool.last().expect("nonempty pool");
            for &c in &pool {
                r -= probs[c];
                if r < 0.0 {
                    pick = c;
                    break;
                }
            }
            seq.push(pick);
        }
        if steps == 0 && !used.is_empty() {
            break;
        }
        used.insert(seq.clone());
        let mut ended = seq.last() == Some(&EOS);
        let mut prev = seq.last().copied().unwrap_or(BOS);
        let mut t = seq.len();
        while !ended && t + 1 < max_len {
            let logits = decoder_logits(params, &enc, prev, t)?;
            let tok = crate::inference::argmax(&logits);
            prev = tok;
            t += 1;
            ended = tok == EOS;
            if !ended {
                seq.push(tok);
            }
        }
        if seq.last() == Some(&EOS) {
            seq.pop();
        }
        if !out.contains(&seq) {
            out.push(seq);
        }
    }
    Ok(out)
}

/// A bundle of the gold answer plus the `k` best-scoring sampled negatives,
/// or `None` when sampling finds no usable negative.
pub fn topk_bundle(model: &Model, inst: &QaInstance, cfg: &SamplingConfig) -> Result<Option<InstanceBundle>> {
    cfg.validate()?;
    let vocab = &model.vocab;
    let params = &model.params;
    let ctx = vocab.encode(&inst.context);
    let q = vocab.encode(&inst.question);
    let gold = normalize_tokens(&inst.answer);
    let mut rng = instance_rng(cfg.seed, &inst.id);
    let samples = diverse_samples(params, &ctx, &q, cfg.nucleus_p, cfg.nucleus_steps, 4 * cfg.k, &mut rng)?;
    let mut seen: HashSet<Tokens> = HashSet::new();
    let mut scored: Vec<(f64, Tokens)> = Vec::new();
    for s in samples {
        if s.iter().any(|&t| Vocab::is_reserved(t)) {
            continue;
        }
        let toks = vocab.decode(&s);
        let norm = normalize_tokens(&toks);
        if norm.is_empty() || norm == gold || !seen.insert(norm) {
            continue;
        }
        scored.push((compat(params, CompatMode::Ln, &ctx, &q, &s)?, toks));
    }
    if scored.is_empty() {
        return Ok(None);
    }
    // stable: equal scores keep draw order
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut answers = vec![inst.answer.clone()];
    answers.extend(scored.into_iter().take(cfg.k).map(|s| s.1));
    Ok(Some(InstanceBundle {
        bundle_id: format!("topk:{}", inst.id),
        context: inst.context.clone(),
        questions: vec![inst.question.clone()],
        answers,
        gold: vec![(0, 0)],
        source: BundleSource::Topk,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;

    fn inst(id: &str, q: &str, a: &str) -> QaInstance {
        QaInstance::from_text(id, "ctx .", q, a).unwrap()
    }

    #[test]
    fn jaccard_examples() {
        let a = tokenize("which genus has more individual species , marsilea or brassica ?");
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&tokenize("a b"), &tokenize("c d")), 0.0);
        assert_eq!(jaccard(&[], &[]), 1.0);
        let b = tokenize("which genus has less individual species , marsilea or brassica ?");
        assert!((jaccard(&a, &b) - 10.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn mining_examples() {
        let cfg = MiningConfig::default();
        let q1 = "which genus has more individual species , marsilea or brassica ?";
        let q2 = "which genus has less individual species , marsilea or brassica ?";
        let b = mine_bundles(&[inst("2", q2, "brassica"), inst("1", q1, "marsilea")], &cfg);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].bundle_id, "mined:1|2");
        assert_eq!(b[0].answers, vec![tokenize("marsilea"), tokenize("brassica")]);
        assert!(validate_bundle(&b[0]).is_ok());

        let b = mine_bundles(&[inst("1", "a b c d", "x"), inst("2", "a b e f", "y")], &cfg);
        assert!(b.is_empty());

        let b = mine_bundles(&[inst("1", q1, "marsilea"), inst("2", q2, "the marsilea")], &cfg);
        assert!(b.is_empty());
    }

    #[test]
    fn cluster_size_cap() {
        let cfg = MiningConfig {
            jaccard_threshold: 0.5,
            max_cluster_size: 2,
        };
        let b = mine_bundles(
            &[
                inst("1", "p q r s", "w"),
                inst("2", "p q r t", "x"),
                inst("3", "p q r u", "y"),
            ],
            &cfg,
        );
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].questions.len(), 2);
    }

    #[test]
    fn choices() {
        let t = |s: &str| tokenize(s);
        assert_eq!(
            extract_choices(&t("which animal is faster , turtle or hare ?")),
            Some((t("turtle"), t("hare")))
        );
        assert_eq!(extract_choices(&t("where was he born ?")), None);
        assert_eq!(extract_choices(&t("is it a or a ?")), None);
        assert_eq!(
            extract_choices(&t("is the cat or the dog bigger ?")),
            Some((t("cat"), t("dog bigger")))
        );
        assert_eq!(
            extract_choices(&t("are rock a's wavelengths shorter or longer than rock b's ?")),
            Some((t("shorter"), t("longer")))
        );
    }

    #[test]
    fn generation_examples() {
        let g = gen_contrast_questions(&inst("1", "which animal is faster , turtle or hare ?", "turtle"));
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].question, tokenize("which animal is slower , turtle or hare ?"));
        assert_eq!(g[0].answer, tokenize("hare"));
        assert_eq!(g[0].tag, HeuristicTag::SuperlativeSwap);

        let g = gen_contrast_questions(&inst("2", "which team played at home , x or y ?", "x"));
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].question, tokenize("which team did not play at home , x or y ?"));
        assert_eq!(g[0].answer, tokenize("y"));
        assert_eq!(g[0].tag, HeuristicTag::VerbNegation);

        let g = gen_contrast_questions(&inst(
            "3",
            "are rock a's wavelengths shorter or longer than rock b's ?",
            "shorter",
        ));
        assert_eq!(g.len(), 1);
        assert_eq!(
            g[0].question,
            tokenize("are rock b's wavelengths shorter or longer than rock a's ?")
        );
        assert_eq!(g[0].answer, tokenize("longer"));
        assert_eq!(g[0].tag, HeuristicTag::NpSwap);

        assert!(gen_contrast_questions(&inst("4", "where was he born ?", "paris")).is_empty());
        assert!(gen_contrast_questions(&inst("5", "which is faster , a or b ?", "c")).is_empty());
    }

    #[test]
    fn verb_base_forms() {
        let t = HeuristicTables::builtin();
        assert_eq!(t.past_to_base("played").as_deref(), Some("play"));
        assert_eq!(t.past_to_base("carried").as_deref(), Some("carry"));
        assert_eq!(t.past_to_base("stopped").as_deref(), Some("stop"));
        assert_eq!(t.past_to_base("called").as_deref(), Some("call"));
        assert_eq!(t.past_to_base("won").as_deref(), Some("win"));
        assert_eq!(t.past_to_base("hundred"), None);
        assert_eq!(t.past_to_base("red"), None);
        assert_eq!(t.past_to_base("team"), None);
    }

    #[test]
    fn augment_bundles_validate() {
        let b = augment(
            &[inst("1", "which animal is faster , turtle or hare ?", "turtle")],
            HeuristicTables::builtin(),
        );
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].source, BundleSource::Generated);
        assert!(validate_bundle(&b[0]).is_ok());
    }

    #[test]
    fn nucleus_mass() {
        assert_eq!(nucleus(&[0.5, 0.3, 0.2], 0.9), vec![0, 1, 2]);
        assert_eq!(nucleus(&[0.5, 0.3, 0.2], 0.8), vec![0, 1]);
        assert_eq!(nucleus(&[0.2, 0.7, 0.1], 0.5), vec![1]);
        assert_eq!(nucleus(&[0.5, 0.5], 1.0), vec![0, 1]);
    }

    #[test]
    fn sampling_config_validation() {
        assert!(SamplingConfig::default().validate().is_ok());
        assert!(SamplingConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(SamplingConfig { nucleus_p: 0.0, ..Default::default() }.validate().is_err());
        assert!(SamplingConfig { nucleus_p: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn sampling_never_repeats_a_prefix() {
        use crate::scorer::{init_params, Dims};
        let dims = Dims {
            d: 3,
            d_pos: 2,
            hidden: 4,
            max_len: 4,
        };
        let p = init_params(3, dims, 9).unwrap();
        let draw = |attempts| {
            let mut rng = instance_rng(0, "x");
            diverse_samples(&p, &[4, 5], &[6], 1.0, 1, attempts, &mut rng).unwrap()
        };
        // one sampled step over the whole vocabulary: every attempt opens a new first token
        assert_eq!(draw(9).len(), 9);
        assert_eq!(draw(30).len(), 9);
        let firsts: HashSet<Option<usize>> = draw(9).iter().map(|s| s.first().copied()).collect();
        assert_eq!(firsts.len(), 9);
    }
}
