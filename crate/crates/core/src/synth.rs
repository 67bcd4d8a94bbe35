//! Seeded synthetic datasets and runs with known structure.
//!
//! Every core query gets `conditions_per_core` gold positives (one per
//! instructed variant), one extra "base" positive that no variant asks for,
//! and `corpus_noise_docs` non-relevant documents. A core's candidate pool is
//! its positives plus its noise documents, identified by the
//! `"{core_id}-n"` id prefix.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoreQuery, Dataset, Dimension, Document, InstructedQuery, Mode, Positive, RankedList, RunSet};

/// Recorded alongside generated fixtures so other implementations can
/// reproduce them.
pub const GENERATOR_ID: &str = "rand_chacha::ChaCha8Rng::seed_from_u64";

pub const BASE_CONDITION: &str = "base";
pub const NOISE_CONDITION: &str = "noise";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("core query {0} has no noise documents to fill its pool")]
    EmptyPool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub dims: Vec<Dimension>,
    pub cores_per_dim: usize,
    pub conditions_per_core: usize,
    pub corpus_noise_docs: usize,
    pub run_depth: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.dims.is_empty() {
            return bad("at least one dimension is required");
        }
        let mut dims = self.dims.clone();
        dims.sort();
        dims.dedup();
        if dims.len() != self.dims.len() {
            return bad("dimensions must be distinct");
        }
        if self.cores_per_dim == 0 || self.conditions_per_core == 0 || self.corpus_noise_docs == 0 || self.run_depth == 0 {
            return bad("all counts must be at least 1");
        }
        if self.run_depth < self.conditions_per_core {
            return bad("run_depth must be at least conditions_per_core");
        }
        Ok(())
    }

    /// Positives per core: the gold documents plus the base positive.
    pub fn positives_per_core(&self) -> usize {
        self.conditions_per_core + 1
    }

    pub fn pool_size(&self) -> usize {
        self.positives_per_core() + self.corpus_noise_docs
    }

    pub fn query_count(&self) -> usize {
        self.dims.len() * self.cores_per_dim * self.conditions_per_core
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Behavior {
    /// Gold first when instructed, last when reversed, all positives on top
    /// in original mode.
    Perfect,
    /// Gold last when instructed, first when reversed.
    AntiInstruction,
    /// Uniform shuffles of the pool, truncated to the run depth.
    Random,
    /// Coarse scores with many ties, negative values and random depths, for
    /// exercising edge cases rather than modelling a system.
    Noisy,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [Behavior::Perfect, Behavior::AntiInstruction, Behavior::Random, Behavior::Noisy];

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Perfect => "perfect",
            Behavior::AntiInstruction => "anti-instruction",
            Behavior::Random => "random",
            Behavior::Noisy => "noisy",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Behavior::Perfect => 0x5045_5246,
            Behavior::AntiInstruction => 0x414e_5449,
            Behavior::Random => 0x524e_444d,
            Behavior::Noisy => 0x4e4f_4953,
        }
    }
}

impl std::str::FromStr for Behavior {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Behavior::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown behavior {s:?}")))
    }
}

const WORDS: &[&str] = &[
    "river", "engine", "garden", "protein", "market", "signal", "orbit", "ledger", "canyon", "vaccine", "lattice",
    "harbor", "thesis", "glacier", "python", "rust", "sonnet", "diet", "insulin", "tariff", "quartz", "folio",
];

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn core_id(dim: Dimension, i: usize) -> String {
    format!("{}-c{i:03}", dim.as_str().to_lowercase())
}

fn noise_prefix(core_id: &str) -> String {
    format!("{core_id}-n")
}

pub fn gen_synthetic_dataset(spec: &SynthSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut ds = Dataset::default();
    for &dim in &spec.dims {
        let tag = dim.as_str().to_lowercase();
        for i in 0..spec.cores_per_dim {
            let cid = core_id(dim, i);
            let topic = words(&mut rng, 3);
            let doc = |ds: &mut Dataset, id: String, condition: &str, rng: &mut ChaCha8Rng| {
                let text = format!("{topic} {} {condition}", words(rng, 5));
                ds.documents.insert(id.clone(), Document { doc_id: id, text, dimension: dim, condition: condition.into() });
            };
            let mut positives = Vec::new();
            let base_id = format!("{cid}-base");
            doc(&mut ds, base_id.clone(), BASE_CONDITION, &mut rng);
            positives.push(Positive { doc_id: base_id, condition: BASE_CONDITION.into() });
            for j in 0..spec.conditions_per_core {
                let condition = format!("{tag}{j}");
                let gold = format!("{cid}-p{j}");
                doc(&mut ds, gold.clone(), &condition, &mut rng);
                positives.push(Positive { doc_id: gold.clone(), condition: condition.clone() });
                let query_id = format!("{cid}-q{j}");
                ds.instructed_queries.insert(
                    query_id.clone(),
                    InstructedQuery {
                        query_id,
                        core_id: cid.clone(),
                        dimension: dim,
                        condition: condition.clone(),
                        instructed_text: format!("{topic}. Only {condition} documents."),
                        reversed_text: format!("{topic}. No {condition} documents."),
                        gold_doc_id: gold,
                    },
                );
            }
            for k in 0..spec.corpus_noise_docs {
                doc(&mut ds, format!("{}{k:03}", noise_prefix(&cid)), NOISE_CONDITION, &mut rng);
            }
            ds.core_queries.insert(cid.clone(), CoreQuery { core_id: cid, text: topic.clone(), dimension: dim, positives });
        }
    }
    Ok(ds)
}

/// Positives of the core (base first, then in listed order) and its noise
/// documents in id order.
fn pool(dataset: &Dataset, core: &CoreQuery) -> (Vec<String>, Vec<String>) {
    let mut positives: Vec<String> = core.positives.iter().map(|p| p.doc_id.clone()).collect();
    positives.sort_by_key(|id| !id.ends_with("-base"));
    let prefix = noise_prefix(&core.core_id);
    let noise = dataset.documents.range(prefix.clone()..).map(|(id, _)| id).take_while(|id| id.starts_with(&prefix)).cloned().collect();
    (positives, noise)
}

fn by_rank(key: &str, mode: Mode, docs: Vec<String>) -> RankedList {
    let entries = docs.into_iter().enumerate().map(|(i, d)| (d, 1.0 / (i + 1) as f64)).collect();
    RankedList::new(key, mode, entries).expect("pool ids are distinct")
}

/// Moves `doc` to the 1-based `position`.
fn place(mut docs: Vec<String>, doc: &str, position: usize) -> Vec<String> {
    docs.retain(|d| d != doc);
    docs.insert(position - 1, doc.to_string());
    docs
}

fn noisy_list(key: &str, mode: Mode, pool: &[String], rng: &mut ChaCha8Rng) -> RankedList {
    let mut docs = pool.to_vec();
    docs.shuffle(rng);
    docs.truncate(rng.gen_range(1..=docs.len()));
    let entries = docs.into_iter().map(|d| (d, rng.gen_range(-4i32..=6) as f64 * 0.25)).collect();
    RankedList::new(key, mode, entries).expect("pool ids are distinct")
}

pub fn gen_synthetic_runs(dataset: &Dataset, spec: &SynthSpec, behavior: Behavior) -> Result<RunSet, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ behavior.salt());
    let mut run = RunSet::new(behavior.as_str());
    let mut push = |l: RankedList| run.insert(l).expect("one list per key and mode");
    for core in dataset.core_queries.values() {
        let (positives, noise) = pool(dataset, core);
        if noise.is_empty() {
            return Err(SynthError::EmptyPool(core.core_id.clone()));
        }
        let all: Vec<String> = positives.iter().chain(&noise).cloned().collect();
        // one noise document below every positive keeps the reversed gold
        // strictly under its original rank
        let depth = spec.run_depth.max(positives.len() + 1).min(all.len());
        let fixed: Vec<String> = all[..depth].to_vec();
        let variants = dataset.instructed_queries.values().filter(|q| q.core_id == core.core_id);
        match behavior {
            Behavior::Perfect | Behavior::AntiInstruction => {
                push(by_rank(&core.core_id, Mode::Original, fixed.clone()));
                for q in variants {
                    let (ins_pos, rev_pos) = if behavior == Behavior::Perfect { (1, depth) } else { (depth, 1) };
                    push(by_rank(&q.query_id, Mode::Instructed, place(fixed.clone(), &q.gold_doc_id, ins_pos)));
                    push(by_rank(&q.query_id, Mode::Reversed, place(fixed.clone(), &q.gold_doc_id, rev_pos)));
                }
            }
            Behavior::Random => {
                let depth = spec.run_depth.min(all.len());
                let shuffled = |rng: &mut ChaCha8Rng| {
                    let mut docs = all.clone();
                    docs.shuffle(rng);
                    docs.truncate(depth);
                    docs
                };
                push(by_rank(&core.core_id, Mode::Original, shuffled(&mut rng)));
                for q in variants {
                    push(by_rank(&q.query_id, Mode::Instructed, shuffled(&mut rng)));
                    push(by_rank(&q.query_id, Mode::Reversed, shuffled(&mut rng)));
                }
            }
            Behavior::Noisy => {
                push(noisy_list(&core.core_id, Mode::Original, &all, &mut rng));
                for q in variants {
                    push(noisy_list(&q.query_id, Mode::Instructed, &all, &mut rng));
                    push(noisy_list(&q.query_id, Mode::Reversed, &all, &mut rng));
                }
            }
        }
    }
    Ok(run)
}

/// Random spec for differential testing, at most 48 instructed queries.
pub fn random_spec(seed: u64) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = Dimension::ALL.to_vec();
    dims.shuffle(&mut rng);
    dims.truncate(rng.gen_range(1..=3));
    let conditions_per_core = rng.gen_range(1..=4);
    SynthSpec {
        seed,
        dims,
        cores_per_dim: rng.gen_range(1..=4),
        conditions_per_core,
        corpus_noise_docs: rng.gen_range(1..=6),
        run_depth: conditions_per_core + rng.gen_range(0..=8),
    }
}
