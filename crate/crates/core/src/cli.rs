//! Command-line front end. The binary only parses arguments and calls [`run`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::coherence::CoherenceMatrix;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{
    bradley_terry, AdjacencyLabels, BtScores, LabelsFile, PairwisePreferences, BT_MAX_ITERATIONS, BT_TOLERANCE,
};
use crate::formats::{
    encode_checkpoint, read_checkpoint, read_file, sha256_hex, write_atomic, CheckpointMeta, FeatureStore,
};
use crate::pipeline::{compose, evaluate, extract_features, train_stream, ComposeMode, OrderingArtifact, Stream};

#[derive(Debug, Parser)]
#[command(name = "vstory", version, about = "Compose coherent video stories from short clips")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute clip features from a corpus manifest into a feature store.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train one recurrent stream. Each --store is one video in temporal order.
    Train {
        #[arg(long = "store", required = true)]
        stores: Vec<PathBuf>,
        #[arg(long, value_enum)]
        stream: StreamArg,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch log; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Order the clips of a feature store.
    Compose {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        semantic: PathBuf,
        #[arg(long)]
        motion: PathBuf,
        #[arg(long, value_enum, default_value = "ranked")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        coherence_out: Option<PathBuf>,
        #[arg(long)]
        dynamics_out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Dynamics, ROC and Bradley-Terry reports for an ordering.
    Eval {
        #[arg(long)]
        ordering: PathBuf,
        #[arg(long)]
        coherence: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        preferences: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Bradley-Terry scores from a pairwise preference matrix.
    BtRank {
        #[arg(long)]
        preferences: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StreamArg {
    Semantic,
    Motion,
}

impl From<StreamArg> for Stream {
    fn from(s: StreamArg) -> Self {
        match s {
            StreamArg::Semantic => Stream::Semantic,
            StreamArg::Motion => Stream::Motion,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Ranked,
}

impl From<ModeArg> for ComposeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => ComposeMode::Baseline,
            ModeArg::Ranked => ComposeMode::Ranked,
        }
    }
}

/// Overrides for [`PipelineConfig`]; unset flags keep the defaults, or the
/// values of `--config` when given.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file holding a full or partial configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub pyramid: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c: PipelineConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            bins => bins,
            pyramid => pyramid,
            seq_len => train.seq_len,
            hidden => hidden,
            lambda => lambda,
            gamma => gamma,
            lr => train.learning_rate,
            momentum => train.momentum,
            weight_decay => train.weight_decay,
            epochs => train.epochs,
            seed => train.seed,
            lr_decay => train.lr_decay_factor,
            patience => train.patience,
            grad_clip => train.grad_clip,
        );
        c.validate()?;
        Ok(c)
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_file(path)?))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Features { manifest, out, config } => {
            let config = config.resolve()?;
            let store = extract_features(&manifest, &config)?;
            write_atomic(&out, &store.encode()?)?;
            info!("wrote {} clips to {}", store.clips.len(), out.display());
        }
        Command::Train {
            stores,
            stream,
            out,
            log,
            config,
        } => {
            let config = config.resolve()?;
            let stream = Stream::from(stream);
            let mut videos = Vec::with_capacity(stores.len());
            let mut inputs = BTreeMap::new();
            for (i, p) in stores.iter().enumerate() {
                let bytes = read_file(p)?;
                inputs.insert(format!("store{i}"), sha256_hex(&bytes));
                videos.push(FeatureStore::decode(&bytes, p)?);
            }
            let outcome = train_stream(&videos, stream, &config)?;
            let meta = CheckpointMeta {
                train: config.train.clone(),
                stream: Some(stream.to_string()),
                inputs,
            };
            let mut csv = String::from("epoch,mean_log_likelihood,learning_rate\n");
            for e in &outcome.history {
                writeln!(csv, "{},{:?},{:?}", e.epoch, e.mean_log_likelihood, e.learning_rate).unwrap();
            }
            let log = log.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log.csv");
                PathBuf::from(p)
            });
            let ckpt = encode_checkpoint(&outcome.params, &meta)?;
            write_atomic(&log, csv.as_bytes())?;
            write_atomic(&out, &ckpt)?;
            info!("trained {stream} stream for {} epochs", outcome.history.len());
        }
        Command::Compose {
            store,
            semantic,
            motion,
            mode,
            out,
            coherence_out,
            dynamics_out,
            config,
        } => {
            let config = config.resolve()?;
            let fs = FeatureStore::read(&store)?;
            let (sem, sem_meta) = read_checkpoint(&semantic)?;
            let (mot, mot_meta) = read_checkpoint(&motion)?;
            for (meta, want, path) in [(&sem_meta, "semantic", &semantic), (&mot_meta, "motion", &motion)] {
                if let Some(s) = &meta.stream {
                    if s != want {
                        return Err(Error::format(
                            path,
                            format!("checkpoint is for the {s} stream, expected {want}"),
                        ));
                    }
                }
            }
            let inputs = BTreeMap::from([
                ("store".to_string(), digest(&store)?),
                ("semantic".to_string(), digest(&semantic)?),
                ("motion".to_string(), digest(&motion)?),
            ]);
            let comp = compose(&fs, sem, mot, &config, mode.into(), inputs)?;
            if let Some(p) = &coherence_out {
                write_atomic(p, comp.coherence.to_csv().as_bytes())?;
            }
            if let Some(p) = &dynamics_out {
                let report = crate::eval::dynamics_report(
                    &comp.artifact.order_indices()?,
                    &comp.artifact.clip_ids,
                    &comp.artifact.phi()?,
                )?;
                write_atomic(p, report.to_csv().as_bytes())?;
            }
            write_json(&out, &comp.artifact)?;
        }
        Command::Eval {
            ordering,
            coherence,
            labels,
            preferences,
            out_dir,
        } => {
            let artifact: OrderingArtifact = read_json(&ordering)?;
            let coherence = coherence.as_deref().map(CoherenceMatrix::read_csv).transpose()?;
            let labels = labels
                .as_deref()
                .map(|p| {
                    let f: LabelsFile = read_json(p)?;
                    AdjacencyLabels::from_entries(&f.pairs)
                })
                .transpose()?;
            let prefs: Option<PairwisePreferences> = preferences.as_deref().map(read_json).transpose()?;
            let report = evaluate(&artifact, coherence.as_ref(), labels.as_ref(), prefs.as_ref())?;

            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_atomic(&out_dir.join("dynamics.csv"), report.dynamics.to_csv().as_bytes())?;
            if let Some(roc) = &report.roc {
                let mut csv = String::from("fpr,tpr\n");
                for (x, y) in &roc.points {
                    writeln!(csv, "{x:?},{y:?}").unwrap();
                }
                write_atomic(&out_dir.join("roc.csv"), csv.as_bytes())?;
            }
            if let Some(bt) = &report.bradley_terry {
                write_atomic(&out_dir.join("bradley_terry.csv"), bt_csv(bt).as_bytes())?;
            }
            write_json(&out_dir.join("report.json"), &report)?;
        }
        Command::BtRank { preferences, out } => {
            let prefs: PairwisePreferences = read_json(&preferences)?;
            let bt = bradley_terry(&prefs, BT_MAX_ITERATIONS, BT_TOLERANCE)?;
            write_json(&out, &bt)?;
        }
    }
    Ok(())
}

fn bt_csv(bt: &BtScores) -> String {
    let mut csv = String::from("item,score\n");
    for (item, s) in bt.items.iter().zip(&bt.scores) {
        writeln!(csv, "{item},{s:?}").unwrap();
    }
    csv
}
