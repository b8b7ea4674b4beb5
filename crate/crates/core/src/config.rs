//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{Format, SplitConfig};
use crate::diagnostics::{DiagnosticsConfig, InitKind};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_CUTOFFS;
use crate::model::{GammaC, HyperParams};
use crate::trainer::{OptimConfig, TrainConfig};

/// Output root for relative `output_dir` values.
pub const OUTPUT_ROOT_ENV: &str = "MIREC_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// `None` picks from the file extension.
    pub format: Option<Format>,
    /// Label used in report records; defaults to the dataset file stem.
    pub dataset_name: Option<String>,
    pub output_dir: PathBuf,
    pub k_core: usize,
    pub split: SplitConfig,
    pub hp: HyperParams,
    pub train: TrainConfig,
    pub cutoffs: Vec<usize>,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: None,
            dataset_name: None,
            output_dir: PathBuf::from("run"),
            k_core: 0,
            split: SplitConfig::default(),
            hp: HyperParams::default(),
            train: TrainConfig::default(),
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Invalid(format!("bad value {v:?} for `{key}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Invalid(format!("bad value {v:?} for `{key}`"))),
    }
}

fn format_name(f: Format) -> &'static str {
    match f {
        Format::Tsv => "tsv",
        Format::Csv => "csv",
        Format::Dat => "dat",
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let hp = &mut self.hp;
        let tr = &mut self.train;
        match key.trim() {
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "format" => self.format = if v == "auto" { None } else { Some(Format::parse(v)?) },
            "dataset_name" => self.dataset_name = (!v.is_empty() && v != "auto").then(|| v.to_string()),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "k_core" => self.k_core = parse_num(key, v)?,
            "split_train" => self.split.train = parse_num(key, v)?,
            "split_valid" => self.split.valid = parse_num(key, v)?,
            "split_test" => self.split.test = parse_num(key, v)?,
            "min_interactions" => self.split.min_interactions = parse_num(key, v)?,
            "profile_fraction" => self.split.profile_fraction = parse_num(key, v)?,
            "d" => hp.d = parse_num(key, v)?,
            "d_h" => hp.d_h = parse_num(key, v)?,
            "d_b" => hp.d_b = parse_num(key, v)?,
            "n_z" => hp.n_z = parse_num(key, v)?,
            "n_x" => hp.n_x = parse_num(key, v)?,
            "tau" => hp.tau = parse_num(key, v)?,
            "gamma_c" => {
                hp.gamma_c = if v == "adaptive" {
                    GammaC::Adaptive
                } else {
                    GammaC::Fixed(parse_num(key, v)?)
                }
            }
            "lambda_cl" => hp.lambda_cl = parse_num(key, v)?,
            "lambda_att" => hp.lambda_att = parse_num(key, v)?,
            "lambda_ct" => hp.lambda_ct = parse_num(key, v)?,
            "s_neg" => hp.s_neg = parse_num(key, v)?,
            "s_seq_neg" => hp.s_seq_neg = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "logq_correction" => hp.logq_correction = parse_bool(key, v)?,
            "epochs" => tr.epochs = parse_num(key, v)?,
            "batch_size" => tr.batch_size = parse_num(key, v)?,
            "seed" => tr.seed = parse_num(key, v)?,
            "eval_every" => tr.eval_every = parse_num(key, v)?,
            "patience" => tr.patience = parse_num(key, v)?,
            "lr" => tr.optim.lr = parse_num(key, v)?,
            "beta1" => tr.optim.beta1 = parse_num(key, v)?,
            "beta2" => tr.optim.beta2 = parse_num(key, v)?,
            "eps" => tr.optim.eps = parse_num(key, v)?,
            "weight_decay" => tr.optim.weight_decay = parse_num(key, v)?,
            "clip_norm" => tr.optim.clip_norm = if v == "none" { None } else { Some(parse_num(key, v)?) },
            "cutoffs" => {
                self.cutoffs = v
                    .split(',')
                    .map(|c| parse_num(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "diag_k" => self.diagnostics.k_global = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "diag_max_k" => self.diagnostics.max_k = parse_num(key, v)?,
            "diag_global_init" => self.diagnostics.global_init = InitKind::parse(v)?,
            "diag_user_init" => self.diagnostics.user_init = InitKind::parse(v)?,
            "diag_max_iter" => self.diagnostics.max_iter = parse_num(key, v)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: n + 1,
                msg: "expected `key = value`".into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, sets: &[S]) -> Result<()> {
        for s in sets {
            let s = s.as_ref();
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("override {s:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        self.train.validate()?;
        crate::eval::validate_cutoffs(&self.cutoffs)
    }

    /// Every key in a fixed order; parsing this text reproduces `self`.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let tr = &self.train;
        let o: &OptimConfig = &tr.optim;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("dataset", self.dataset.as_ref().map_or(String::new(), |p| p.display().to_string()));
        kv("format", self.format.map_or("auto".into(), |f| format_name(f).into()));
        kv("dataset_name", self.dataset_name.clone().unwrap_or_else(|| "auto".into()));
        kv("output_dir", self.output_dir.display().to_string());
        kv("k_core", self.k_core.to_string());
        kv("split_train", self.split.train.to_string());
        kv("split_valid", self.split.valid.to_string());
        kv("split_test", self.split.test.to_string());
        kv("min_interactions", self.split.min_interactions.to_string());
        kv("profile_fraction", self.split.profile_fraction.to_string());
        kv("d", hp.d.to_string());
        kv("d_h", hp.d_h.to_string());
        kv("d_b", hp.d_b.to_string());
        kv("n_z", hp.n_z.to_string());
        kv("n_x", hp.n_x.to_string());
        kv("tau", hp.tau.to_string());
        kv("gamma_c", hp.gamma_c.to_string());
        kv("lambda_cl", hp.lambda_cl.to_string());
        kv("lambda_att", hp.lambda_att.to_string());
        kv("lambda_ct", hp.lambda_ct.to_string());
        kv("s_neg", hp.s_neg.to_string());
        kv("s_seq_neg", hp.s_seq_neg.map_or("auto".into(), |s| s.to_string()));
        kv("logq_correction", hp.logq_correction.to_string());
        kv("epochs", tr.epochs.to_string());
        kv("batch_size", tr.batch_size.to_string());
        kv("seed", tr.seed.to_string());
        kv("eval_every", tr.eval_every.to_string());
        kv("patience", tr.patience.to_string());
        kv("lr", o.lr.to_string());
        kv("beta1", o.beta1.to_string());
        kv("beta2", o.beta2.to_string());
        kv("eps", o.eps.to_string());
        kv("weight_decay", o.weight_decay.to_string());
        kv("clip_norm", o.clip_norm.map_or("none".into(), |c| c.to_string()));
        kv(
            "cutoffs",
            self.cutoffs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        );
        let dg = &self.diagnostics;
        kv("diag_k", dg.k_global.map_or("auto".into(), |k| k.to_string()));
        kv("diag_max_k", dg.max_k.to_string());
        kv("diag_global_init", dg.global_init.name().into());
        kv("diag_user_init", dg.user_init.name().into());
        kv("diag_max_iter", dg.max_iter.to_string());
        out
    }

    /// First 12 hex digits of the SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        short_hash(self.to_text().as_bytes())
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.dataset
                .as_ref()
                .and_then(|p| p.file_stem())
                .map_or("unknown".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    /// `output_dir`, placed under `$MIREC_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..6])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["lambda_cl=0", "gamma_c=0.25", "s_seq_neg=7", "cutoffs=5,10", "clip_norm=none"])
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("t")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 12);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("d = 8\nlamda_cl = 1\n", Path::new("c")).unwrap_err();
        assert!(matches!(err, Error::UnknownKey(ref k) if k == "lamda_cl"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# defaults\n\nd = 64 # embedding\n", Path::new("c")).unwrap();
        assert_eq!(cfg.hp.d, 64);
    }

    #[test]
    fn grid_lambdas_accepted() {
        for lam in ["0.01", "0.1", "1", "10"] {
            let mut cfg = RunConfig::default();
            cfg.apply_overrides(&[format!("lambda_ct={lam}")]).unwrap();
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn zero_cutoff_rejected() {
        let mut cfg = RunConfig::default();
        cfg.set("cutoffs", "0,20").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_changes_with_config() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
