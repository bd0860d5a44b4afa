use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use achords::lvq::DistanceKind;
use clap::Args;

use crate::failure::{Failure, Kind};

/// Options shared by every subcommand. Any of them may also be given in a
/// `--config` file as `key = value` (key spelled like the flag, without
/// dashes in front); flags take precedence.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Word embeddings in whitespace-separated text format.
    #[arg(long, global = true, value_name = "FILE")]
    pub embeddings: Option<String>,
    /// Stop-word file (one word per line) or `none`; default is the built-in English list.
    #[arg(long, global = true, value_name = "FILE")]
    pub stopwords: Option<String>,
    /// Record file (one JSON object per line) or directory of text files. Repeatable.
    #[arg(long, global = true, value_name = "PATH")]
    pub corpus: Vec<String>,
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<String>,
    /// Output directory [default: achords-out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
    /// Subspace dimension [default: 50]
    #[arg(long, global = true)]
    pub d: Option<usize>,
    /// Sigmoid slope of the score [default: 5]
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// chordal or geodesic [default: chordal]
    #[arg(long, global = true)]
    pub distance: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Prototype learning rate [default: 0.05]
    #[arg(long = "lr-w", global = true)]
    pub lr_w: Option<f64>,
    /// Relevance learning rate, 0 freezes λ [default: 0.005]
    #[arg(long = "lr-lambda", global = true)]
    pub lr_lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// [default: 0.8]
    #[arg(long = "train-fraction", global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long = "positive-label", global = true)]
    pub positive_label: Option<String>,
    /// Cases scoring strictly above this are counted as detected [default: 0.5]
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// [default: 10]
    #[arg(long = "top-k", global = true)]
    pub top_k: Option<usize>,
    /// Percentile bands, `lo-hi,lo-hi,...` or `topN` [default: top13]
    #[arg(long, global = true)]
    pub bands: Option<String>,
    /// [default: 20]
    #[arg(long = "per-band", global = true)]
    pub per_band: Option<usize>,
    /// Scored table written by score-corpus.
    #[arg(long, global = true, value_name = "FILE")]
    pub scores: Option<String>,
    /// Annotation records: {"case_id": ..., "positive": true|false} per line.
    #[arg(long, global = true, value_name = "FILE")]
    pub annotations: Option<String>,
    #[arg(long = "target-precision", global = true)]
    pub target_precision: Option<f64>,
    /// Prototypes per class [default: 1]
    #[arg(long = "per-class", global = true)]
    pub per_class: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub embeddings: Option<PathBuf>,
    pub stopwords: Option<String>,
    pub corpus: Vec<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    pub d: usize,
    pub beta: f64,
    pub distance: DistanceKind,
    pub epochs: usize,
    pub lr_w: f64,
    pub lr_lambda: f64,
    pub seed: Option<u64>,
    pub train_fraction: f64,
    pub positive_label: Option<String>,
    pub threshold: f64,
    pub top_k: usize,
    pub bands: String,
    pub per_band: usize,
    pub scores: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub target_precision: Option<f64>,
    pub per_class: usize,
    /// Effective value of every setting, for the run manifest.
    pub snapshot: BTreeMap<String, String>,
}

pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::new(
                Kind::Argument,
                format!("{}:{}: expected `key = value`", origin.display(), i + 1),
            ));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        out.insert(key, value);
    }
    Ok(out)
}

struct Merge {
    file: BTreeMap<String, String>,
    snapshot: BTreeMap<String, String>,
}

impl Merge {
    fn take<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        let value = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(raw)) => Some(
                raw.parse::<T>()
                    .map_err(|e| Failure::new(Kind::Argument, format!("config key `{key}`: {e}")))?,
            ),
            (None, None) => None,
        };
        if let Some(v) = &value {
            self.snapshot.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    fn take_or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.take(key, flag)?.unwrap_or(default);
        self.snapshot.insert(key.to_string(), v.to_string());
        Ok(v)
    }
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::new(Kind::Argument, message()))
    }
}

impl Settings {
    pub fn resolve(flags: Flags) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
                parse_config(&text, path)?
            }
            None => BTreeMap::new(),
        };
        Self::merge(flags, file)
    }

    pub fn merge(flags: Flags, file: BTreeMap<String, String>) -> Result<Self, Failure> {
        let mut m = Merge {
            file,
            snapshot: BTreeMap::new(),
        };
        let corpus_flag = (!flags.corpus.is_empty()).then(|| flags.corpus.join(","));
        let corpus: Vec<PathBuf> = m
            .take::<String>("corpus", corpus_flag)?
            .map(|c| c.split(',').map(|p| PathBuf::from(p.trim())).filter(|p| !p.as_os_str().is_empty()).collect())
            .unwrap_or_default();
        let distance = m.take_or("distance", flags.distance, "chordal".to_string())?;
        let settings = Settings {
            embeddings: m.take::<String>("embeddings", flags.embeddings)?.map(PathBuf::from),
            stopwords: m.take("stopwords", flags.stopwords)?,
            corpus,
            model: m.take::<String>("model", flags.model)?.map(PathBuf::from),
            out: PathBuf::from(m.take_or("out", flags.out, "achords-out".to_string())?),
            d: m.take_or("d", flags.d, 50)?,
            beta: m.take_or("beta", flags.beta, 5.0)?,
            distance: distance
                .parse()
                .map_err(|e| Failure::new(Kind::Argument, format!("--distance: {e}")))?,
            epochs: m.take_or("epochs", flags.epochs, 100)?,
            lr_w: m.take_or("lr-w", flags.lr_w, 0.05)?,
            lr_lambda: m.take_or("lr-lambda", flags.lr_lambda, 0.005)?,
            seed: m.take("seed", flags.seed)?,
            train_fraction: m.take_or("train-fraction", flags.train_fraction, 0.8)?,
            positive_label: m.take("positive-label", flags.positive_label)?,
            threshold: m.take_or("threshold", flags.threshold, 0.5)?,
            top_k: m.take_or("top-k", flags.top_k, 10)?,
            bands: m.take_or("bands", flags.bands, "top13".to_string())?,
            per_band: m.take_or("per-band", flags.per_band, 20)?,
            scores: m.take::<String>("scores", flags.scores)?.map(PathBuf::from),
            annotations: m.take::<String>("annotations", flags.annotations)?.map(PathBuf::from),
            target_precision: m.take("target-precision", flags.target_precision)?,
            per_class: m.take_or("per-class", flags.per_class, 1)?,
            snapshot: BTreeMap::new(),
        };
        if let Some(key) = m.file.keys().next() {
            return Err(Failure::new(Kind::Argument, format!("unknown config key `{key}`")));
        }
        settings.validate()?;
        Ok(Settings {
            snapshot: m.snapshot,
            ..settings
        })
    }

    fn validate(&self) -> Result<(), Failure> {
        check(self.d > 0, || "--d must be at least 1".into())?;
        check(self.beta > 0.0 && self.beta.is_finite(), || format!("--beta must be positive, got {}", self.beta))?;
        check(self.epochs > 0, || "--epochs must be at least 1".into())?;
        check(self.lr_w > 0.0 && self.lr_w.is_finite(), || format!("--lr-w must be positive, got {}", self.lr_w))?;
        check(self.lr_lambda >= 0.0 && self.lr_lambda.is_finite(), || {
            format!("--lr-lambda must be non-negative, got {}", self.lr_lambda)
        })?;
        check(self.train_fraction > 0.0 && self.train_fraction < 1.0, || {
            format!("--train-fraction must lie in (0, 1), got {}", self.train_fraction)
        })?;
        check((0.0..=1.0).contains(&self.threshold), || format!("--threshold must lie in [0, 1], got {}", self.threshold))?;
        check(self.top_k > 0, || "--top-k must be at least 1".into())?;
        check(self.per_band > 0, || "--per-band must be at least 1".into())?;
        check(self.per_class > 0, || "--per-class must be at least 1".into())?;
        if let Some(t) = self.target_precision {
            check((0.0..=1.0).contains(&t), || format!("--target-precision must lie in [0, 1], got {t}"))?;
        }
        Ok(())
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, Failure> {
        self.seed
            .ok_or_else(|| Failure::new(Kind::MissingInput, format!("{command} needs --seed")))
    }
}

pub fn require<'a, T>(value: &'a Option<T>, flag: &str, command: &str) -> Result<&'a T, Failure> {
    value
        .as_ref()
        .ok_or_else(|| Failure::new(Kind::MissingInput, format!("{command} needs --{flag}")))
}
