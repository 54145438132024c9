//! Paired more/less comparison questions over generated contexts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{tokenize, validate_bundle, BundleSource, Dataset, InstanceBundle, Vocab};
use crate::error::{Error, Result};

const NAMES: [&str; 24] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "mike", "nina", "oscar",
    "peggy", "quinn", "rupert", "sybil", "trent", "ursula", "victor", "wendy", "xavier", "yvonne", "zack",
];

const ATTRIBUTES: [&str; 16] = [
    "stones", "coins", "apples", "books", "shells", "cards", "marbles", "stamps", "pens", "keys", "cups", "hats",
    "rings", "bells", "kites", "drums",
];

const TEMPLATE_WORDS: [&str; 7] = ["which", "person", "has", "more", "less", "?", "."];

/// How the two compared values relate to the entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueModel {
    /// Every entity holds a hidden rank per seed; the higher-ranked entity of
    /// a pair always gets the larger value.
    Ranked,
    /// Values are independent of the entities.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_train_bundles: usize,
    pub n_dev_bundles: usize,
    pub entity_pool_size: usize,
    pub attribute_pool_size: usize,
    pub value_min: u32,
    pub value_max: u32,
    pub distractors_min: usize,
    pub distractors_max: usize,
    pub value_model: ValueModel,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 1,
            n_train_bundles: 2000,
            n_dev_bundles: 500,
            entity_pool_size: 12,
            attribute_pool_size: 8,
            value_min: 1,
            value_max: 20,
            distractors_min: 0,
            distractors_max: 2,
            value_model: ValueModel::Ranked,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entity_pool_size < 2 || self.attribute_pool_size < 2 {
            return Err(Error::Config("entity and attribute pools need at least 2 members".into()));
        }
        if self.value_max <= self.value_min {
            return Err(Error::Config("value range needs at least 2 distinct values".into()));
        }
        if self.distractors_min > self.distractors_max {
            return Err(Error::Config("distractors_min exceeds distractors_max".into()));
        }
        Ok(())
    }

    pub fn entities(&self) -> Vec<String> {
        pool(&NAMES, "person", self.entity_pool_size)
    }

    pub fn attributes(&self) -> Vec<String> {
        pool(&ATTRIBUTES, "thing", self.attribute_pool_size)
    }

    /// Every token the generator can emit, reserved symbols first.
    pub fn vocab(&self) -> Vocab {
        let values = (self.value_min..=self.value_max).map(|v| v.to_string());
        Vocab::new(
            TEMPLATE_WORDS
                .iter()
                .map(|s| s.to_string())
                .chain(self.entities())
                .chain(self.attributes())
                .chain(values),
        )
    }
}

fn pool(base: &[&str], stem: &str, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| base.get(i).map_or_else(|| format!("{stem}{i}"), |s| s.to_string()))
        .collect()
}

/// Train and dev splits drawn from one generator.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub dev: Dataset,
}

fn sentence(entity: &str, value: u32, attr: &str) -> String {
    format!("{entity} has {value} {attr} .")
}

/// Generates train and dev bundles. Each bundle asks "which person has more
/// X ?" and "which person has less X ?" about two entities over a context
/// stating both values, plus distractor sentences about other
/// (entity, attribute) pairs.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entities = cfg.entities();
    let attributes = cfg.attributes();
    let mut rank: Vec<usize> = (0..entities.len()).collect();
    rank.shuffle(&mut rng);
    let mut split = |name: &str, n: usize| -> Result<Dataset> {
        let mut bundles = Vec::with_capacity(n);
        for k in 0..n {
            let b = one_bundle(cfg, &mut rng, &entities, &attributes, &rank, format!("syn:{name}:{k:05}"));
            if let Err(v) = validate_bundle(&b) {
                return Err(Error::Data(format!("generated invalid bundle {}: {v:?}", b.bundle_id)));
            }
            bundles.push(b);
        }
        let instances = bundles.iter().flat_map(InstanceBundle::gold_instances).collect();
        // same vocabulary order as a split read back from its files
        Ok(Dataset::from_parts(instances, bundles))
    };
    let train = split("train", cfg.n_train_bundles)?;
    let dev = split("dev", cfg.n_dev_bundles)?;
    Ok(SyntheticData { train, dev })
}

fn one_bundle(
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
    entities: &[String],
    attributes: &[String],
    rank: &[usize],
    bundle_id: String,
) -> InstanceBundle {
    let pair: Vec<usize> = rand::seq::index::sample(rng, entities.len(), 2).into_vec();
    let attr = rng.gen_range(0..attributes.len());
    let vals: Vec<u32> = rand::seq::index::sample(rng, (cfg.value_max - cfg.value_min + 1) as usize, 2)
        .into_iter()
        .map(|v| cfg.value_min + v as u32)
        .collect();
    let (hi, lo) = (vals[0].max(vals[1]), vals[0].min(vals[1]));
    let (e1, e2) = (pair[0], pair[1]);
    let (v1, v2) = match cfg.value_model {
        ValueModel::Ranked if rank[e1] > rank[e2] => (hi, lo),
        ValueModel::Ranked => (lo, hi),
        ValueModel::Uniform => (vals[0], vals[1]),
    };
    let mut sentences = vec![
        sentence(&entities[e1], v1, &attributes[attr]),
        sentence(&entities[e2], v2, &attributes[attr]),
    ];
    let n_distract = rng.gen_range(cfg.distractors_min..=cfg.distractors_max);
    for _ in 0..n_distract {
        let e = rng.gen_range(0..entities.len());
        let mut a = rng.gen_range(0..attributes.len() - 1);
        if a >= attr {
            a += 1;
        }
        let v = rng.gen_range(cfg.value_min..=cfg.value_max);
        sentences.push(sentence(&entities[e], v, &attributes[a]));
    }
    sentences[..].shuffle(rng);
    let (more, less) = if v1 > v2 { (e1, e2) } else { (e2, e1) };
    let attr = &attributes[attr];
    InstanceBundle {
        bundle_id,
        context: tokenize(&sentences.join(" ")),
        questions: vec![
            tokenize(&format!("which person has more {attr} ?")),
            tokenize(&format!("which person has less {attr} ?")),
        ],
        answers: vec![vec![entities[more].clone()], vec![entities[less].clone()]],
        gold: vec![(0, 0), (1, 1)],
        source: BundleSource::Synthetic,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            n_train_bundles: 50,
            n_dev_bundles: 10,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.train.bundles, b.train.bundles);
        assert_eq!(a.dev.instances, b.dev.instances);
        assert_eq!(a.train.bundles.len(), 50);
        assert_eq!(a.train.instances.len(), 100);
        let closed = small().vocab();
        for split in [&a.train, &b.dev] {
            for bundle in &split.bundles {
                assert!(validate_bundle(bundle).is_ok());
                for tok in bundle.context.iter().chain(bundle.questions.iter().flatten()) {
                    assert!(split.vocab.get(tok).is_some(), "{tok} missing from vocab");
                }
            }
            for tok in split.vocab.tokens() {
                assert!(closed.get(tok).is_some(), "{tok} outside the closed language");
            }
        }
    }

    #[test]
    fn more_question_names_the_larger_value() {
        for vm in [ValueModel::Ranked, ValueModel::Uniform] {
            let cfg = GeneratorConfig {
                value_model: vm,
                distractors_max: 0,
                ..small()
            };
            for b in generate_synthetic(&cfg).unwrap().train.bundles {
                // context: e has v attr . e has v attr .
                let c = &b.context;
                let (ea, va) = (&c[0], c[2].parse::<u32>().unwrap());
                let (eb, vb) = (&c[5], c[7].parse::<u32>().unwrap());
                let winner = if va > vb { ea } else { eb };
                assert_eq!(&b.answers[0][0], winner);
                assert_ne!(va, vb);
            }
        }
    }

    #[test]
    fn ranked_values_follow_a_fixed_order() {
        let cfg = GeneratorConfig {
            distractors_max: 0,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let mut beats = std::collections::HashSet::new();
        for b in &data.train.bundles {
            beats.insert((b.answers[0][0].clone(), b.answers[1][0].clone()));
        }
        for (w, l) in &beats {
            assert!(!beats.contains(&(l.clone(), w.clone())));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let bad = GeneratorConfig {
            entity_pool_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeneratorConfig {
            value_min: 3,
            value_max: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
