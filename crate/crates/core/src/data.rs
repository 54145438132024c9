//! Data model shared by every other module: vocabulary, QA instances,
//! instance bundles, tokenization, answer normalization and bundle
//! validation, plus the JSON Lines readers and writers.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Characters split off as standalone tokens. The apostrophe is kept inside
/// words so possessives like `a's` survive as one token.
const SPLIT_CHARS: [char; 7] = ['.', ',', '?', '!', '"', ';', ':'];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub type Tokens = Vec<String>;

/// Lowercase, split on whitespace, and split the punctuation characters
/// `. , ? ! " ; :` into standalone tokens.
pub fn tokenize(text: &str) -> Tokens {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        let mut cur = String::new();
        for ch in lower.chars() {
            if SPLIT_CHARS.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn join(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn is_punct_token(tok: &str) -> bool {
    !tok.is_empty() && tok.chars().all(|c| SPLIT_CHARS.contains(&c) || c == '\'')
}

/// Tokenize, then drop articles and standalone punctuation.
pub fn normalize_answer(text: &str) -> Tokens {
    normalize_tokens(&tokenize(text))
}

/// [`normalize_answer`] for text that is already tokenized.
pub fn normalize_tokens(tokens: &[String]) -> Tokens {
    tokens
        .iter()
        .filter(|t| !ARTICLES.contains(&t.as_str()) && !is_punct_token(t))
        .cloned()
        .collect()
}

/// Token vocabulary with the four reserved symbols at indices 0..3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Builds a vocabulary from `tokens` in first-seen order. Reserved
    /// symbols and duplicates are skipped.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            vocab.insert(r.to_string());
        }
        for t in tokens {
            vocab.insert(t.into());
        }
        vocab
    }

    /// Rebuilds a vocabulary from a serialized token list, which must start
    /// with the reserved symbols and contain no duplicates.
    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::Data("vocab must start with reserved tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocab token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    fn insert(&mut self, tok: String) -> usize {
        if let Some(&i) = self.index.get(&tok) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(tok.clone(), i);
        self.tokens.push(tok);
        i
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, tok: &str) -> Option<usize> {
        self.index.get(tok).copied()
    }

    /// Index of `tok`, or UNK when it is out of vocabulary.
    pub fn index_of(&self, tok: &str) -> usize {
        self.get(tok).unwrap_or(UNK)
    }

    pub fn token_at(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Tokens {
        ids.iter()
            .map(|&i| self.token_at(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    pub fn is_reserved(i: usize) -> bool {
        i < RESERVED.len()
    }
}

/// One (context, question, answer) triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaInstance {
    pub id: String,
    pub context: Tokens,
    pub question: Tokens,
    pub answer: Tokens,
}

impl QaInstance {
    pub fn from_text(id: &str, context: &str, question: &str, answer: &str) -> Result<Self> {
        let inst = QaInstance {
            id: id.to_string(),
            context: tokenize(context),
            question: tokenize(question),
            answer: tokenize(answer),
        };
        if inst.id.is_empty() {
            return Err(Error::Data("instance id is empty".into()));
        }
        if inst.question.is_empty() || inst.answer.is_empty() {
            return Err(Error::Data(format!(
                "instance {}: question and answer must be nonempty",
                inst.id
            )));
        }
        Ok(inst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleSource {
    Mined,
    Generated,
    Topk,
    Synthetic,
}

impl fmt::Display for BundleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BundleSource::Mined => "mined",
            BundleSource::Generated => "generated",
            BundleSource::Topk => "topk",
            BundleSource::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

impl FromStr for BundleSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mined" => Ok(BundleSource::Mined),
            "generated" => Ok(BundleSource::Generated),
            "topk" => Ok(BundleSource::Topk),
            "synthetic" => Ok(BundleSource::Synthetic),
            other => Err(Error::Data(format!("unknown bundle source {other:?}"))),
        }
    }
}

/// Questions and answers over one context with an injective gold pairing
/// `gold = [(question_index, answer_index)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceBundle {
    pub bundle_id: String,
    pub context: Tokens,
    pub questions: Vec<Tokens>,
    pub answers: Vec<Tokens>,
    pub gold: Vec<(usize, usize)>,
    pub source: BundleSource,
}

impl InstanceBundle {
    /// Gold answer index of question `q`, if it has one.
    pub fn answer_of(&self, q: usize) -> Option<usize> {
        self.gold.iter().find(|&&(qi, _)| qi == q).map(|&(_, a)| a)
    }

    pub fn is_gold(&self, q: usize, a: usize) -> bool {
        self.gold.contains(&(q, a))
    }

    /// The bundle's gold pairs as standalone instances, ids `<bundle_id>#<k>`.
    pub fn gold_instances(&self) -> Vec<QaInstance> {
        self.gold
            .iter()
            .enumerate()
            .map(|(k, &(q, a))| QaInstance {
                id: format!("{}#{k}", self.bundle_id),
                context: self.context.clone(),
                question: self.questions[q].clone(),
                answer: self.answers[a].clone(),
            })
            .collect()
    }
}

/// A bundle with every token mapped to a vocabulary index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBundle {
    pub context: Vec<usize>,
    pub questions: Vec<Vec<usize>>,
    pub answers: Vec<Vec<usize>>,
    pub gold: Vec<(usize, usize)>,
}

impl EncodedBundle {
    pub fn new(b: &InstanceBundle, vocab: &Vocab) -> Self {
        EncodedBundle {
            context: vocab.encode(&b.context),
            questions: b.questions.iter().map(|q| vocab.encode(q)).collect(),
            answers: b.answers.iter().map(|a| vocab.encode(a)).collect(),
            gold: b.gold.clone(),
        }
    }
}

/// A violated bundle invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyGold,
    GoldOutOfRange { question: usize, answer: usize },
    QuestionIndexReused(usize),
    AnswerIndexReused(usize),
    NoContrastiveElement,
    DuplicateQuestion(usize, usize),
    DuplicateAnswer(usize, usize),
    EmptyQuestion(usize),
    EmptyAnswer(usize),
}

impl Violation {
    /// Stable short name of the violated invariant.
    pub fn name(&self) -> &'static str {
        match self {
            Violation::EmptyGold => "empty gold",
            Violation::GoldOutOfRange { .. } => "gold index out of range",
            Violation::QuestionIndexReused(_) => "question index reused",
            Violation::AnswerIndexReused(_) => "answer index reused",
            Violation::NoContrastiveElement => "no contrastive element",
            Violation::DuplicateQuestion(..) => "duplicate question",
            Violation::DuplicateAnswer(..) => "duplicate answer",
            Violation::EmptyQuestion(_) => "empty question",
            Violation::EmptyAnswer(_) => "empty answer",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GoldOutOfRange { question, answer } => {
                write!(f, "{} ({question}, {answer})", self.name())
            }
            Violation::QuestionIndexReused(i)
            | Violation::AnswerIndexReused(i)
            | Violation::EmptyQuestion(i)
            | Violation::EmptyAnswer(i) => write!(f, "{} ({i})", self.name()),
            Violation::DuplicateQuestion(i, j) | Violation::DuplicateAnswer(i, j) => {
                write!(f, "{} ({i}, {j})", self.name())
            }
            _ => f.write_str(self.name()),
        }
    }
}

/// Checks every bundle invariant and returns all violations found.
pub fn validate_bundle(b: &InstanceBundle) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if b.gold.is_empty() {
        v.push(Violation::EmptyGold);
    }
    let mut seen_q = HashSet::new();
    let mut seen_a = HashSet::new();
    for &(q, a) in &b.gold {
        if q >= b.questions.len() || a >= b.answers.len() {
            v.push(Violation::GoldOutOfRange {
                question: q,
                answer: a,
            });
        }
        if !seen_q.insert(q) {
            v.push(Violation::QuestionIndexReused(q));
        }
        if !seen_a.insert(a) {
            v.push(Violation::AnswerIndexReused(a));
        }
    }
    if b.questions.len() < 2 && b.answers.len() < 2 {
        v.push(Violation::NoContrastiveElement);
    }
    for (i, q) in b.questions.iter().enumerate() {
        if q.is_empty() {
            v.push(Violation::EmptyQuestion(i));
        }
        for j in 0..i {
            if b.questions[j] == *q {
                v.push(Violation::DuplicateQuestion(j, i));
            }
        }
    }
    let normed: Vec<Tokens> = b.answers.iter().map(|a| normalize_tokens(a)).collect();
    for (i, a) in normed.iter().enumerate() {
        if a.is_empty() {
            v.push(Violation::EmptyAnswer(i));
        }
        for j in 0..i {
            if normed[j] == *a {
                v.push(Violation::DuplicateAnswer(j, i));
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Instances, bundles and the vocabulary covering them.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub instances: Vec<QaInstance>,
    pub bundles: Vec<InstanceBundle>,
    pub vocab: Vocab,
}

impl Dataset {
    /// Builds a dataset whose vocabulary covers every token of every
    /// instance and bundle, in first-seen order.
    pub fn from_parts(instances: Vec<QaInstance>, bundles: Vec<InstanceBundle>) -> Self {
        let mut toks: Vec<String> = Vec::new();
        for i in &instances {
            toks.extend(i.context.iter().chain(&i.question).chain(&i.answer).cloned());
        }
        for b in &bundles {
            toks.extend(b.context.iter().cloned());
            for q in b.questions.iter().chain(&b.answers) {
                toks.extend(q.iter().cloned());
            }
        }
        Dataset {
            instances,
            bundles,
            vocab: Vocab::new(toks),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleRecord {
    pub bundle_id: String,
    pub context: String,
    pub questions: Vec<String>,
    pub answers: Vec<String>,
    pub gold: Vec<[usize; 2]>,
    pub source: BundleSource,
}

impl From<&QaInstance> for InstanceRecord {
    fn from(i: &QaInstance) -> Self {
        InstanceRecord {
            id: i.id.clone(),
            context: join(&i.context),
            question: join(&i.question),
            answer: join(&i.answer),
        }
    }
}

impl TryFrom<InstanceRecord> for QaInstance {
    type Error = Error;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        QaInstance::from_text(&r.id, &r.context, &r.question, &r.answer)
    }
}

impl From<&InstanceBundle> for BundleRecord {
    fn from(b: &InstanceBundle) -> Self {
        BundleRecord {
            bundle_id: b.bundle_id.clone(),
            context: join(&b.context),
            questions: b.questions.iter().map(|q| join(q)).collect(),
            answers: b.answers.iter().map(|a| join(a)).collect(),
            gold: b.gold.iter().map(|&(q, a)| [q, a]).collect(),
            source: b.source,
        }
    }
}

impl From<BundleRecord> for InstanceBundle {
    fn from(r: BundleRecord) -> Self {
        InstanceBundle {
            bundle_id: r.bundle_id,
            context: tokenize(&r.context),
            questions: r.questions.iter().map(|q| tokenize(q)).collect(),
            answers: r.answers.iter().map(|a| tokenize(a)).collect(),
            gold: r.gold.iter().map(|g| (g[0], g[1])).collect(),
            source: r.source,
        }
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an instances file. Ids must be unique.
pub fn read_instances(path: &Path) -> Result<Vec<QaInstance>> {
    let recs: Vec<InstanceRecord> = read_jsonl(path)?;
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(recs.len());
    for r in recs {
        if !ids.insert(r.id.clone()) {
            return Err(Error::Data(format!("duplicate instance id {:?}", r.id)));
        }
        out.push(QaInstance::try_from(r)?);
    }
    Ok(out)
}

pub fn write_instances(path: &Path, instances: &[QaInstance]) -> Result<()> {
    write_jsonl(path, instances.iter().map(InstanceRecord::from))
}

pub fn read_bundles(path: &Path) -> Result<Vec<InstanceBundle>> {
    Ok(read_jsonl::<BundleRecord>(path)?
        .into_iter()
        .map(InstanceBundle::from)
        .collect())
}

pub fn write_bundles(path: &Path, bundles: &[InstanceBundle]) -> Result<()> {
    write_jsonl(path, bundles.iter().map(BundleRecord::from))
}
