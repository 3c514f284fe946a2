use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cineqc::augment::{AugmentPolicy, Label, LabeledSample};
use cineqc::benchmark::{generate_benchmark, BenchmarkConfig};
use cineqc::cnn::{read_checkpoint, write_checkpoint, NetworkConfig, TrainConfig};
use cineqc::eval::{cross_validate, Averaging, CvConfig, Method};
use cineqc::kspace::{corrupt_sequence, CorruptionSpec, OffsetPolicy, PhasePolicy};
use cineqc::preprocess::{crop_roi, find_roi_center_with_maps, normalize, RoiConfig};
use cineqc::{dataset, json, pgm};

#[derive(Parser)]
#[command(name = "cineqc", version, about = "Motion artefact detection for cine MR sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled phantom dataset.
    Gen {
        #[arg(long, default_value_t = 100)]
        n_clean: usize,
        #[arg(long, default_value_t = 100)]
        n_artefact: usize,
        /// Benchmark configuration JSON; counts and seed flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        z: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply k-space line replacement to every stored sequence.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        z: usize,
        /// Frame offset, an integer or "random".
        #[arg(long, default_value = "random")]
        offset: String,
        /// Line phase, an integer or "random".
        #[arg(long, default_value = "random")]
        phase: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mark every output sequence as an artefact.
        #[arg(long)]
        label_artefact: bool,
    },
    /// Normalize, locate the heart and crop a square window.
    Roi {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        crop_size: usize,
        /// Write harmonic, accumulator and first cropped frame as PGM.
        #[arg(long)]
        pgm_dir: Option<PathBuf>,
    },
    /// Train the CNN and write a checkpoint and JSON history.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
        profile: ProfileArg,
        /// Network configuration JSON; replaces the profile's built-in layout.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Training configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AugmentArg::Both)]
        augment: AugmentArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// Stratified k-fold cross-validation of one method.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Number of folds.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Neighbours for the kNN method.
        #[arg(long, default_value_t = 3)]
        neighbours: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AveragingArg::Micro)]
        averaging: AveragingArg,
        #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
        profile: ProfileArg,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AugmentArg::Both)]
        augment: AugmentArg,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print `index<TAB>probability<TAB>label` for every sequence.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentArg {
    None,
    Kspace,
    Translate,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cnn,
    Knn,
    Svm,
    Nb,
    Vol,
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Micro,
    Macro,
}

fn parse_choice(s: &str, what: &str) -> Result<Option<usize>> {
    if s == "random" {
        Ok(None)
    } else {
        Ok(Some(s.parse().with_context(|| format!("{what} must be an integer or \"random\", got {s:?}"))?))
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load(path: &Path) -> Result<Vec<LabeledSample>> {
    dataset::load(path).with_context(|| format!("loading {}", path.display()))
}

fn save(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    dataset::save(path, samples).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn policy(arg: AugmentArg, seed: u64) -> AugmentPolicy {
    let (translate, balance) = match arg {
        AugmentArg::None => (false, false),
        AugmentArg::Kspace => (false, true),
        AugmentArg::Translate => (true, false),
        AugmentArg::Both => (true, true),
    };
    AugmentPolicy { translate, balance, seed, ..AugmentPolicy::default() }
}

fn network_for(samples: &[LabeledSample], profile: ProfileArg, path: Option<&Path>, seed: u64) -> Result<NetworkConfig> {
    if let Some(p) = path {
        let cfg: NetworkConfig = read_json(p)?;
        return Ok(NetworkConfig { seed, ..cfg });
    }
    let Some(first) = samples.first() else {
        bail!(cineqc::Error::EmptyClass(Label::Good.name()));
    };
    let (t, h, w) = first.seq.dims();
    Ok(match profile {
        ProfileArg::Desk => NetworkConfig::desk([t, h, w], seed),
        ProfileArg::Full => NetworkConfig::full([t, h, w], seed),
    })
}

fn train_config(path: Option<&Path>, profile: ProfileArg, seed: u64) -> Result<TrainConfig> {
    let base = match (path, profile) {
        (Some(p), _) => read_json(p)?,
        (None, ProfileArg::Desk) => TrainConfig::desk(),
        (None, ProfileArg::Full) => TrainConfig::default(),
    };
    Ok(TrainConfig { seed, ..base })
}

fn cmd_gen(n_clean: usize, n_artefact: usize, config: Option<&Path>, z: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let mut cfg: BenchmarkConfig = match config {
        Some(p) => read_json(p)?,
        None => BenchmarkConfig::default(),
    };
    cfg.n_clean = n_clean;
    cfg.n_artefact = n_artefact;
    cfg.seed = seed;
    if let Some(z) = z {
        cfg.corruption.z = z;
    }
    let samples = generate_benchmark(&cfg)?;
    save(out, &samples)?;
    log::info!("wrote {} sequences to {}", samples.len(), out.display());
    Ok(())
}

fn cmd_corrupt(input: &Path, out: &Path, z: usize, offset: &str, phase: &str, seed: u64, label_artefact: bool) -> Result<()> {
    let offset = match parse_choice(offset, "offset")? {
        Some(j) => OffsetPolicy::Fixed(j),
        None => OffsetPolicy::UniformRandom,
    };
    let phase = match parse_choice(phase, "phase")? {
        Some(p) => PhasePolicy::Fixed(p),
        None => PhasePolicy::Random,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = load(input)?;
    for (i, s) in samples.iter_mut().enumerate() {
        let spec = CorruptionSpec { z, offset, phase, seed: rng.next_u64() };
        s.seq = corrupt_sequence(&s.seq, &spec).with_context(|| format!("sequence {i}"))?;
        if label_artefact {
            s.label = Label::Artefact;
        }
    }
    save(out, &samples)
}

fn cmd_roi(input: &Path, out: &Path, crop_size: usize, pgm_dir: Option<&Path>) -> Result<()> {
    let cfg = RoiConfig { crop_size, ..RoiConfig::default() };
    if let Some(dir) = pgm_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut cropped = Vec::new();
    for (i, s) in load(input)?.into_iter().enumerate() {
        let seq = normalize(s.seq.volume()).with_context(|| format!("sequence {i}"))?;
        let (roi, maps) = find_roi_center_with_maps(&seq, &cfg).with_context(|| format!("sequence {i}"))?;
        let crop = crop_roi(&seq, &roi).with_context(|| format!("sequence {i}"))?;
        log::debug!("sequence {i}: center {:?}", roi.center);
        if let Some(dir) = pgm_dir {
            let write = |name: &str, autoscale: bool, frame: &cineqc::numerics::Frame| -> Result<()> {
                let path = dir.join(format!("{i:05}_{name}.pgm"));
                let f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                if autoscale {
                    pgm::write_pgm_autoscale(f, frame)?;
                } else {
                    pgm::write_pgm(f, frame)?;
                }
                Ok(())
            };
            write("harmonic", true, &maps.harmonic)?;
            write("accumulator", true, &maps.accumulator)?;
            write("crop", false, &crop.frame_owned(0))?;
        }
        cropped.push(LabeledSample { seq: crop, ..s });
    }
    save(out, &cropped)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    dataset: &Path,
    profile: ProfileArg,
    network: Option<&Path>,
    config: Option<&Path>,
    augment: AugmentArg,
    seed: u64,
    model_out: &Path,
    history_out: Option<&Path>,
) -> Result<()> {
    let samples = load(dataset)?;
    let tc = train_config(config, profile, seed)?;
    let net_cfg = network_for(&samples, profile, network, seed)?;
    let outcome = cineqc::cnn::train(&samples, &net_cfg, &tc, &policy(augment, seed))?;
    let mut w = BufWriter::new(File::create(model_out).with_context(|| format!("creating {}", model_out.display()))?);
    write_checkpoint(&mut w, &outcome.network)?;
    w.flush()?;
    if let Some(p) = history_out {
        write_text(p, &(json::to_canonical_string(&outcome.history)? + "\n"))?;
    }
    log::info!(
        "best epoch {} of {}, validation accuracy {:.3}",
        outcome.history.best_epoch,
        outcome.history.epochs.len(),
        outcome.history.best_val_accuracy
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    dataset: &Path,
    method: MethodArg,
    k: usize,
    neighbours: usize,
    seed: u64,
    averaging: AveragingArg,
    profile: ProfileArg,
    network: Option<&Path>,
    config: Option<&Path>,
    augment: AugmentArg,
    report: Option<&Path>,
) -> Result<()> {
    let samples = load(dataset)?;
    let method = match method {
        MethodArg::Cnn => Method::Cnn {
            network: network_for(&samples, profile, network, seed)?,
            train: train_config(config, profile, seed)?,
        },
        MethodArg::Knn => Method::Knn { k: neighbours },
        MethodArg::Svm => Method::svm(),
        MethodArg::Nb => Method::NaiveBayes,
        MethodArg::Vol => Method::vol(),
    };
    let averaging = match averaging {
        AveragingArg::Micro => Averaging::Micro,
        AveragingArg::Macro => Averaging::Macro,
    };
    let r = cross_validate(&method, &samples, &CvConfig { k, seed, averaging }, &policy(augment, seed))?;
    print!("{}", r.table());
    if let Some(p) = report {
        write_text(p, &(r.to_json()? + "\n"))?;
    }
    Ok(())
}

fn cmd_predict(model: &Path, dataset: &Path) -> Result<()> {
    let f = File::open(model).with_context(|| format!("opening {}", model.display()))?;
    let net = read_checkpoint(std::io::BufReader::new(f)).with_context(|| format!("reading {}", model.display()))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, s) in load(dataset)?.iter().enumerate() {
        let p = net.predict(&s.seq).with_context(|| format!("sequence {i}"))?;
        writeln!(out, "{i}\t{:.6}\t{}", p.prob_artefact, p.label.name())?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("CINE_QC_THREADS") {
        let n: usize = v.parse().with_context(|| format!("CINE_QC_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("CINE_QC_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen { n_clean, n_artefact, config, z, seed, out } => {
            cmd_gen(n_clean, n_artefact, config.as_deref(), z, seed, &out)
        }
        Command::Corrupt { input, out, z, offset, phase, seed, label_artefact } => {
            cmd_corrupt(&input, &out, z, &offset, &phase, seed, label_artefact)
        }
        Command::Roi { input, out, crop_size, pgm_dir } => cmd_roi(&input, &out, crop_size, pgm_dir.as_deref()),
        Command::Train { dataset, profile, network, config, augment, seed, model_out, history_out } => {
            cmd_train(&dataset, profile, network.as_deref(), config.as_deref(), augment, seed, &model_out, history_out.as_deref())
        }
        Command::Eval { dataset, method, k, neighbours, seed, averaging, profile, network, config, augment, report } => cmd_eval(
            &dataset,
            method,
            k,
            neighbours,
            seed,
            averaging,
            profile,
            network.as_deref(),
            config.as_deref(),
            augment,
            report.as_deref(),
        ),
        Command::Predict { model, dataset } => cmd_predict(&model, &dataset),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
