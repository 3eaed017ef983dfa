//! Command-line surface. `main` only parses arguments and maps errors to
//! exit codes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use streamformer_core::encoder::Encoder;
use streamformer_core::stream::lookahead_ms;
use streamformer_core::transducer::{CountBigramLm, Fusion};

use crate::bench::{bench_segment_costs, write_csv};
use crate::config::{DecodeMode, RunConfig};
use crate::decode::{recognize, train_bigram, Search, TokenTable};
use crate::error::{Error, Result};
use crate::features::{save_features, FeatureSource};
use crate::model::Model;
use crate::verify::{run_suite, SuiteReport, SUITES};
use crate::weights::{load_weights, save_weights};
use crate::wer::{compute_wer_str, WerReport};

pub const EXIT_VERIFY_FAILED: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "streamformer", version, about = "Streaming transducer toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the streaming encoder and write its output frames.
    Encode {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature file or `synth:SEED:FRAMES`.
        #[arg(long)]
        features: FeatureSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode utterances, one JSON line each.
    Decode {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature file or `synth:SEED:FRAMES`; repeatable.
        #[arg(long, required = true)]
        features: Vec<FeatureSource>,
        /// Bigram training text; enables shallow fusion.
        #[arg(long)]
        lm: Option<PathBuf>,
        /// LM weight for fusion.
        #[arg(long)]
        lambda: Option<f64>,
        /// Beam width; selects beam search.
        #[arg(long)]
        beam: Option<usize>,
        /// Token table, one entry per line.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Run a named self-check suite, or `all`.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-segment cost table as CSV.
    Bench {
        #[arg(long)]
        segments: usize,
        #[arg(long)]
        memory_cap: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the model width.
        #[arg(long)]
        dim: Option<usize>,
        /// Override the layer count.
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Pooled word error rate of line-paired files.
    Wer {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Print the algorithmic lookahead in milliseconds.
    Lookahead {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write seeded random weights for the configured model.
    Init {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// The model named by `paths.weights`, or seeded random weights.
pub fn load_model(cfg: &RunConfig) -> Result<Model> {
    match &cfg.paths.weights {
        Some(p) => load_weights(p, &cfg.runtime()),
        None => Model::random(cfg.model_spec(), &cfg.runtime(), cfg.seed),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn emit(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("stdout", e))
}

/// Runs one command, writing its report to `out`. Returns the exit status.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Encode {
            config,
            features,
            out: path,
        } => {
            let cfg = load_config(config.as_deref())?;
            let model = load_model(&cfg)?;
            let frames = crate::decode::encode(&model, &features.load()?)?;
            save_features(&path, &frames)?;
        }
        Command::Decode {
            config,
            features,
            lm,
            lambda,
            beam,
            vocab,
        } => {
            let cfg = load_config(config.as_deref())?;
            if let Some(l) = lambda {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(Error::Config(format!(
                        "--lambda must be finite and >= 0, got {l}"
                    )));
                }
            }
            if beam == Some(0) {
                return Err(Error::Config("--beam must be >= 1".into()));
            }
            let model = load_model(&cfg)?;
            let table = match vocab.as_ref().or(cfg.paths.vocab.as_ref()) {
                Some(p) => TokenTable::load(p)?,
                None => TokenTable::default(),
            };
            let lm_path = lm.or_else(|| {
                (cfg.decode.mode == DecodeMode::Fusion)
                    .then(|| cfg.paths.lm.clone())
                    .flatten()
            });
            let bigram: Option<CountBigramLm> = match &lm_path {
                Some(p) => Some(train_bigram(&read_text(p)?, model.spec.vocab_size, &table)),
                None => None,
            };
            let fusion = bigram.as_ref().map(|lm| Fusion {
                lm,
                weight: lambda.unwrap_or(cfg.decode.lm_weight),
            });
            let search = match (beam, cfg.decode.mode, fusion) {
                (Some(width), _, fusion) => Search::Beam { width, fusion },
                (None, DecodeMode::Greedy, None) => Search::Greedy,
                (None, _, fusion) => Search::Beam {
                    width: cfg.decode.beam,
                    fusion,
                },
            };
            for src in &features {
                let utt = recognize(
                    &model,
                    &src.id(),
                    &src.load()?,
                    search,
                    cfg.decode.max_symbols_per_frame,
                    &table,
                )?;
                emit(
                    out,
                    &serde_json::to_string(&utt).expect("utterance serializes"),
                )?;
            }
        }
        Command::Verify { suite, seed } => {
            let names: Vec<&str> = if suite == "all" {
                SUITES.to_vec()
            } else if SUITES.contains(&suite.as_str()) {
                vec![suite.as_str()]
            } else {
                return Err(Error::Config(format!(
                    "unknown suite {suite:?}; expected one of {} or all",
                    SUITES.join(", ")
                )));
            };
            // Suites are independent; run them side by side and report in
            // the order requested.
            let reports: Vec<Result<SuiteReport>> = std::thread::scope(|s| {
                let handles: Vec<_> = names
                    .iter()
                    .map(|&n| s.spawn(move || run_suite(n, seed).expect("known suite")))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("suite thread"))
                    .collect()
            });
            let mut passed = true;
            for r in reports {
                let r = r?;
                passed &= r.passed;
                emit(out, &serde_json::to_string(&r).expect("report serializes"))?;
            }
            if !passed {
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
        Command::Bench {
            segments,
            memory_cap,
            config,
            dim,
            layers,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if memory_cap.is_some() {
                cfg.memory_cap = memory_cap;
            }
            cfg.model.dim = dim.or(cfg.model.dim);
            cfg.model.num_layers = layers.or(cfg.model.num_layers);
            cfg.validate()?;
            let encoder =
                Encoder::random(cfg.model_spec().encoder_config(&cfg.runtime()), cfg.seed)?;
            let rows = bench_segment_costs(&encoder, segments, cfg.seed)?;
            write_csv(out, &rows)?;
        }
        Command::Wer { reference, hyp } => {
            let refs = read_text(&reference)?;
            let hyps = read_text(&hyp)?;
            let (refs, hyps): (Vec<&str>, Vec<&str>) =
                (refs.lines().collect(), hyps.lines().collect());
            if refs.len() != hyps.len() {
                return Err(Error::malformed(
                    hyp.display().to_string(),
                    format!("{} lines but the reference has {}", hyps.len(), refs.len()),
                ));
            }
            let reports = refs
                .iter()
                .zip(&hyps)
                .enumerate()
                .map(|(i, (r, h))| {
                    compute_wer_str(r, h).map_err(|_| {
                        Error::malformed(
                            reference.display().to_string(),
                            format!("line {} is empty", i + 1),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let total = WerReport::combine(&reports)?;
            emit(
                out,
                &serde_json::to_string(&total).expect("report serializes"),
            )?;
        }
        Command::Lookahead { config } => {
            let cfg = load_config(config.as_deref())?;
            emit(out, &lookahead_ms(&cfg.segmenter.into()).to_string())?;
        }
        Command::Init { config, out: path } => {
            let cfg = load_config(config.as_deref())?;
            let model = Model::random(cfg.model_spec(), &cfg.runtime(), cfg.seed)?;
            save_weights(&path, &model)?;
        }
    }
    Ok(0)
}
