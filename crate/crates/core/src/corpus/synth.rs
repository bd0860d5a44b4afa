//! Synthetic two-class corpus with known discriminative words.
//!
//! Each class bank holds `exclusive_words` words of its own plus the
//! `shared_words` words common to both. Every word gets a random unit
//! embedding. A document draws each token from its class bank with
//! probability `class_share` and from the shared words otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{write_records, CaseRecord};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub exclusive_words: usize,
    pub shared_words: usize,
    pub docs_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub class_share: f64,
    pub labels: [String; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 50,
            exclusive_words: 70,
            shared_words: 30,
            docs_per_class: 200,
            min_len: 80,
            max_len: 300,
            class_share: 0.9,
            labels: ["class_a".into(), "class_b".into()],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub table: EmbeddingTable,
    pub records: Vec<CaseRecord>,
    /// Class label → its exclusive (discriminative) words.
    pub planted: BTreeMap<String, Vec<String>>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.dim == 0 || config.exclusive_words == 0 || config.docs_per_class == 0 {
        return Err(Error::InvalidArgument("synthetic corpus sizes must be positive".into()));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::InvalidArgument("need 0 < min_len <= max_len".into()));
    }
    if !(0.0..=1.0).contains(&config.class_share) || (config.class_share < 1.0 && config.shared_words == 0) {
        return Err(Error::InvalidArgument("class_share must be in [0, 1] with a non-empty shared bank".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prefixes = ["aw", "bw"];
    let banks: Vec<Vec<String>> = prefixes
        .iter()
        .map(|p| (0..config.exclusive_words).map(|i| format!("{p}{i:03}")).collect())
        .collect();
    let shared: Vec<String> = (0..config.shared_words).map(|i| format!("sw{i:03}")).collect();

    let mut entries = Vec::new();
    for word in banks.iter().flatten().chain(&shared) {
        let v = DVector::from_fn(config.dim, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        entries.push((word.clone(), v.as_slice().to_vec()));
    }
    let table = EmbeddingTable::from_entries("synthetic", config.dim, entries)?;

    let mut records = Vec::with_capacity(2 * config.docs_per_class);
    for doc in 0..config.docs_per_class {
        for (class, bank) in banks.iter().enumerate() {
            let len = rng.random_range(config.min_len..=config.max_len);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.random::<f64>() < config.class_share {
                        let i = rng.random_range(0..bank.len() + shared.len());
                        bank.get(i).unwrap_or_else(|| &shared[i - bank.len()]).as_str()
                    } else {
                        shared[rng.random_range(0..shared.len())].as_str()
                    }
                })
                .collect();
            let label = &config.labels[class];
            records.push(CaseRecord::new(format!("{label}-{doc:04}"), words.join(" ")).with_label(label.clone()));
        }
    }

    let planted = config.labels.iter().cloned().zip(banks).collect();
    Ok(SynthCorpus {
        config: config.clone(),
        table,
        records,
        planted,
    })
}

impl SynthCorpus {
    /// Writes `embeddings.txt`, `corpus.jsonl` and `planted.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.table.save(&dir.join("embeddings.txt"))?;
        let corpus = dir.join("corpus.jsonl");
        let file = fs::File::create(&corpus).map_err(|e| Error::io(&corpus, e))?;
        write_records(&self.records, std::io::BufWriter::new(file)).map_err(|e| Error::io(&corpus, e))?;
        let planted = dir.join("planted.json");
        let json = serde_json::to_string_pretty(&self.planted).expect("map serializes");
        fs::write(&planted, json).map_err(|e| Error::io(&planted, e))?;
        Ok(())
    }
}
