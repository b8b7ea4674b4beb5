//! Command implementations behind the `mirec` binary.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{resolve_output, short_hash, RunConfig};
use crate::data::{generate_synthetic, ingest, split, DatasetSplit, Format, InteractionLog, SplitTag, SyntheticSpec};
use crate::diagnostics::{diagnose, export_embeddings, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::eval::{evaluate, validate_cutoffs, EvalReport};
use crate::model::{checkpoint, HyperParams, ModelParams};
use crate::trainer::{fit, TrainConfig};

pub const CONFIG_FILE: &str = "resolved.cfg";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const REPORT_FILE: &str = "report.txt";
pub const RECORD_FILE: &str = "report.record";
pub const SPLIT_FILE: &str = "split.tsv";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(Error::io(path))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(Error::io(path))
}

/// Reads the dataset named in `cfg`, applies the k-core filter and splits.
pub fn load_dataset(cfg: &RunConfig) -> Result<(InteractionLog, DatasetSplit)> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Invalid("no dataset configured (set `dataset = <path>`)".into()))?;
    if !path.is_file() {
        return Err(Error::Invalid(format!("dataset {} does not exist", path.display())));
    }
    let format = cfg.format.unwrap_or_else(|| Format::from_path(path));
    let mut log = ingest(path, format)?;
    if cfg.k_core > 1 {
        log = log.k_core(cfg.k_core);
    }
    let split = split(&log, &cfg.split, cfg.train.seed)?;
    Ok((log, split))
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub report: EvalReport,
    pub record: String,
}

fn report_text(report: &EvalReport, cfg: &RunConfig, split: SplitTag, extra: &str) -> String {
    format!(
        "dataset: {}\nsplit: {}\nconfig_hash: {}\nseed: {}\nn_z: {}\n{}{extra}",
        cfg.dataset_label(),
        split.name(),
        cfg.hash(),
        cfg.train.seed,
        cfg.hp.n_z,
        report.to_text()
    )
}

/// Trains on the configured dataset and writes the resolved config, the
/// split manifest, index maps, epoch log, checkpoint and test report.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let (log, split) = load_dataset(cfg)?;
    let dir = cfg.resolved_output_dir();
    create_dir(&dir)?;
    write_file(&dir.join(CONFIG_FILE), cfg.to_text())?;
    write_file(&dir.join(SPLIT_FILE), split.manifest(&log))?;
    log.write_index_maps(&dir)?;

    let checkpoint = dir.join(CHECKPOINT_FILE);
    let train = TrainConfig {
        checkpoint_path: Some(checkpoint.clone()),
        ..cfg.train.clone()
    };
    let log_path = dir.join(TRAIN_LOG_FILE);
    let mut log_file = fs::File::create(&log_path).map_err(Error::io(&log_path))?;
    let valid = split.held_out(SplitTag::Valid);
    let result = fit(&split.train_sequences(), log.num_items(), &valid, &cfg.hp, &train, &mut log_file)?;
    log_file.flush().map_err(Error::io(&log_path))?;

    let test = split.held_out(SplitTag::Test);
    let report = evaluate(&result.params, &cfg.hp, &test, &cfg.cutoffs, false)?;
    let extra = format!(
        "best_epoch: {}\nepochs_run: {}\ndropped_users: {}\nskipped_sequences: {}\n",
        result.best_epoch,
        result.history.len(),
        split.dropped,
        result.skipped_sequences
    );
    write_file(&dir.join(REPORT_FILE), report_text(&report, cfg, SplitTag::Test, &extra))?;
    let record = report.record_line(&cfg.dataset_label(), cfg.hp.n_z, cfg.train.seed, &cfg.hash());
    write_file(&dir.join(RECORD_FILE), format!("{record}\n"))?;
    Ok(TrainOutput {
        dir,
        checkpoint,
        report,
        record,
    })
}

/// The config stored next to a checkpoint unless one is given.
pub fn config_for_checkpoint(checkpoint: &Path, config: Option<&Path>) -> Result<RunConfig> {
    let path = match config {
        Some(p) => p.to_path_buf(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(CONFIG_FILE),
    };
    RunConfig::from_file(&path)
}

fn load_model(checkpoint_path: &Path, cfg: &RunConfig) -> Result<(ModelParams, HyperParams, String)> {
    let bytes = fs::read(checkpoint_path).map_err(Error::io(checkpoint_path))?;
    let (header, params) = checkpoint::read(&mut bytes.as_slice())?;
    let hp = header.apply_to(&cfg.hp);
    params.check_shapes(&hp)?;
    Ok((params, hp, short_hash(&bytes)))
}

/// Evaluates a checkpoint on one split and writes `eval_<split>.txt` next to it.
pub fn cmd_eval(checkpoint_path: &Path, cfg: &RunConfig, split_tag: SplitTag, cutoffs: &[usize]) -> Result<EvalReport> {
    validate_cutoffs(cutoffs)?;
    let (params, hp, ckpt_hash) = load_model(checkpoint_path, cfg)?;
    let (log, split) = load_dataset(cfg)?;
    if log.num_items() != params.vocab() {
        return Err(Error::shape("checkpoint vocabulary", params.vocab(), log.num_items()));
    }
    let report = evaluate(&params, &hp, &split.held_out(split_tag), cutoffs, false)?;
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let text = report_text(&report, cfg, split_tag, &format!("checkpoint_hash: {ckpt_hash}\n"));
    write_file(&dir.join(format!("eval_{}.txt", split_tag.name())), text)?;
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct DiagnoseOutput {
    pub report: DiagnosticsReport,
    pub checkpoint_hash: String,
    pub text: String,
    pub embeddings: PathBuf,
    pub rows: usize,
}

/// INTER/INTRA on one split plus an embedding export, written next to the checkpoint.
pub fn cmd_diagnose(checkpoint_path: &Path, cfg: &RunConfig, split_tag: SplitTag) -> Result<DiagnoseOutput> {
    let (params, hp, checkpoint_hash) = load_model(checkpoint_path, cfg)?;
    let (log, split) = load_dataset(cfg)?;
    let users = split.held_out(split_tag);
    let (report, embeddings) = diagnose(&params, &hp, &users, &cfg.diagnostics)?;
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let emb_path = dir.join(format!("embeddings_{}.tsv", split_tag.name()));
    let rows = export_embeddings(&emb_path, &params, &embeddings, &log.users)?;
    let text = format!(
        "checkpoint_hash: {checkpoint_hash}\nconfig_hash: {}\nsplit: {}\nseed: {}\n{}embedding_rows: {rows}\n",
        cfg.hash(),
        split_tag.name(),
        cfg.diagnostics.seed,
        report.to_text()
    );
    write_file(&dir.join(format!("diagnostics_{}.txt", split_tag.name())), &text)?;
    Ok(DiagnoseOutput {
        report,
        checkpoint_hash,
        text,
        embeddings: emb_path,
        rows,
    })
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub interactions: PathBuf,
    pub labels: PathBuf,
}

/// Writes `interactions.tsv`, `labels.tsv` and the index maps into `out_dir`
/// (under the output root when relative).
pub fn cmd_synth(spec: &SyntheticSpec, out_dir: &Path) -> Result<SynthOutput> {
    let data = generate_synthetic(spec)?;
    let dir = resolve_output(out_dir);
    create_dir(&dir)?;
    let interactions = dir.join("interactions.tsv");
    data.log.write(&interactions, Format::Tsv)?;
    let labels = dir.join("labels.tsv");
    write_file(&labels, data.labels_text())?;
    data.log.write_index_maps(&dir)?;
    Ok(SynthOutput {
        dir,
        interactions,
        labels,
    })
}
