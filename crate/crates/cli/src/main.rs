use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use doalab::acoustics::{self, Room, SPEED_OF_SOUND};
use doalab::datagen::{self, DoaClasses, FrameStore, Manifest, SourceProvider};
use doalab::eval::{self, Estimator, Experiment};
use doalab::nn::{self, Model, ModelSpec};
use doalab::{RunConfig, SteeringTable};

#[derive(Parser)]
#[command(name = "doalab", version, about = "Multi-speaker DOA estimation with a phase-map CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config; the built-in desk-scale config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for generation and evaluation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training shards and a manifest.
    GenTrain {
        #[command(flatten)]
        common: Common,
    },
    /// Generate two-source test mixtures.
    GenTest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snr_db: Option<f64>,
        /// Directory of mono 16-bit WAV recordings to use instead of synthetic sources.
        #[arg(long)]
        sources: Option<PathBuf>,
    },
    /// Train the CNN on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by gen-train.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Evaluate a checkpoint on a test set.
    EvalCnn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory written by gen-test.
        #[arg(long)]
        test: PathBuf,
    },
    /// Evaluate the SRP-PHAT baseline on a test set.
    EvalSrp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        test: PathBuf,
    },
    /// Tabulate CNN against SRP-PHAT results; repeat the flags once per SNR.
    Compare {
        #[arg(long, required = true)]
        cnn: Vec<PathBuf>,
        #[arg(long, required = true)]
        srp: Vec<PathBuf>,
        /// SNR labels, used when no summary.json sits next to the CSVs.
        #[arg(long)]
        snr_db: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the backward pass on a toy network.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one room impulse response as raw f32 plus a text sidecar.
    RirDump {
        #[arg(long)]
        out: PathBuf,
        /// x,y,z in meters.
        #[arg(long, value_parser = parse_vec3)]
        dims: [f64; 3],
        #[arg(long)]
        rt60: f64,
        /// x,y,z in meters.
        #[arg(long, value_parser = parse_vec3)]
        src: [f64; 3],
        /// x,y,z in meters.
        #[arg(long, value_parser = parse_vec3)]
        mic: [f64; 3],
        #[arg(long, default_value_t = acoustics::SAMPLE_RATE)]
        fs: f64,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk_scale(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Records the resolved config and command next to the outputs.
fn echo_run(out: &Path, command: &str, cfg: &RunConfig, extra: serde_json::Value) -> Result<()> {
    cfg.save(&out.join("config.json"))?;
    write_json(&out.join("run.json"), &json!({ "command": command, "seed": cfg.seed, "args": extra }))
}

fn parse_vec3(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    parts.try_into().map_err(|p: Vec<f64>| format!("expected x,y,z, got {} values", p.len()))
}

fn write_experiment(out: &Path, exp: &Experiment, doas: &[f64]) -> Result<()> {
    eval::write_results_csv(&out.join("results.csv"), &exp.rows)?;
    eval::write_posterior_csv(&out.join("posteriors.csv"), &exp.rows, &exp.posteriors, doas)?;
    write_json(&out.join("summary.json"), &exp.summary)?;
    println!(
        "{}: {} mixtures ({} skipped), mean MAE {:.2} deg",
        exp.summary.method.label(),
        exp.summary.mixtures,
        exp.summary.skipped,
        exp.summary.mean_mae_deg
    );
    Ok(())
}

fn snr_label(csv: &Path, fallback: Option<f64>) -> Result<f64> {
    let summary = csv.with_file_name("summary.json");
    if summary.exists() {
        let s: eval::Summary = serde_json::from_str(&fs::read_to_string(&summary)?)?;
        return Ok(s.snr_db);
    }
    fallback.with_context(|| format!("no summary.json next to {} and no --snr-db given", csv.display()))
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::GenTrain { common } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            prepare_out(&common.out)?;
            echo_run(&common.out, "gen-train", &cfg, json!({}))?;
            log::info!(
                "projected {} frames",
                cfg.train_grid.projected_frames(&cfg.features)?
            );
            let manifest = datagen::generate_dataset(&cfg.train_grid, &cfg.array, &cfg.features, cfg.seed, &common.out, cfg.threads)?;
            let digest = datagen::file_sha256(&common.out.join(Manifest::FILE_NAME))?;
            println!(
                "wrote {} records in {} shards ({} cells skipped); manifest sha256 {digest}",
                manifest.total_records,
                manifest.shards.len(),
                manifest.skipped.len()
            );
        }
        Command::GenTest { common, snr_db, sources } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = snr_db {
                cfg.test.snr_db = s;
            }
            cfg.validate()?;
            prepare_out(&common.out)?;
            echo_run(&common.out, "gen-test", &cfg, json!({ "sources": sources }))?;
            let provider = match &sources {
                Some(dir) => SourceProvider::from_wav_dir(dir, cfg.features.fs.round() as u32)?,
                None => SourceProvider::Synthetic,
            };
            let index = datagen::gen_test_mixtures(&cfg.test, &cfg.array, &cfg.features, &provider, cfg.seed, &common.out, cfg.threads)?;
            println!("wrote {} mixtures at {} dB", index.mixtures.len(), cfg.test.snr_db);
        }
        Command::Train { common, data, epochs, lr, batch } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = common.seed {
                cfg.training.seed = s;
            }
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            if let Some(l) = lr {
                cfg.training.lr = l;
            }
            if let Some(b) = batch {
                cfg.training.batch = b;
            }
            cfg.validate()?;
            prepare_out(&common.out)?;
            echo_run(&common.out, "train", &cfg, json!({ "data": data }))?;
            let (_, store) = FrameStore::from_manifest(&data)?;
            log::info!("loaded {} frames", store.len());
            let mut model = Model::new(cfg.model.clone(), cfg.training.init_seed())?;
            let report = nn::train(&mut model, &store, &cfg.training, Some(&common.out))?;
            write_json(&common.out.join("train_report.json"), &report)?;
            println!(
                "trained {} epochs: loss {:.4} -> {:.4}",
                report.epochs.len(),
                report.initial_loss,
                report.final_loss()
            );
        }
        Command::EvalCnn { common, checkpoint, test } => {
            let cfg = load_config(&common)?;
            let set = datagen::load_test_set(&test)?;
            let classes = DoaClasses::new(set.index.config.doa_resolution_deg)?;
            let model = nn::load_checkpoint_for(
                &checkpoint,
                set.index.array.mic_count,
                set.index.features.band_count(),
                classes.count(),
            )?;
            prepare_out(&common.out)?;
            echo_run(&common.out, "eval-cnn", &cfg, json!({ "checkpoint": checkpoint, "test": test }))?;
            let exp = eval::run_experiment(&set, &Estimator::Cnn(&model), cfg.threads)?;
            write_experiment(&common.out, &exp, &classes.doas())?;
        }
        Command::EvalSrp { common, test } => {
            let cfg = load_config(&common)?;
            let set = datagen::load_test_set(&test)?;
            let classes = DoaClasses::new(set.index.config.doa_resolution_deg)?;
            let f = &set.index.features;
            let table = SteeringTable::new(
                &classes.doas(),
                f.bands(),
                set.index.array.mic_count,
                set.index.array.spacing,
                SPEED_OF_SOUND,
                f.fs,
                f.dft_len,
            )?;
            prepare_out(&common.out)?;
            echo_run(&common.out, "eval-srp", &cfg, json!({ "test": test }))?;
            let exp = eval::run_experiment(&set, &Estimator::Srp(&table), cfg.threads)?;
            write_experiment(&common.out, &exp, &classes.doas())?;
        }
        Command::Compare { cnn, srp, snr_db, out } => {
            if cnn.len() != srp.len() {
                bail!("need one --srp per --cnn ({} vs {})", cnn.len(), srp.len());
            }
            let mut loaded = Vec::with_capacity(cnn.len());
            for (i, (c, s)) in cnn.iter().zip(&srp).enumerate() {
                let snr = snr_label(c, snr_db.get(i).copied())?;
                loaded.push((snr, eval::read_results_csv(c)?, eval::read_results_csv(s)?));
            }
            let groups: Vec<_> = loaded.iter().map(|(snr, c, s)| (*snr, c.as_slice(), s.as_slice())).collect();
            let cmp = eval::compare(&groups)?;
            print!("{}", cmp.table());
            if let Some(dir) = out {
                prepare_out(&dir)?;
                write_json(&dir.join("run.json"), &json!({ "command": "compare", "cnn": cnn, "srp": srp, "snr_db": snr_db }))?;
                write_json(&dir.join("comparison.json"), &cmp)?;
                fs::write(dir.join("comparison.txt"), cmp.table())?;
            }
        }
        Command::Gradcheck { seed, out } => {
            let report = nn::gradcheck(&ModelSpec::toy(), seed)?;
            for p in &report.per_param {
                log::info!("{:<12} {:.3e}", p.name, p.max_rel_error);
            }
            println!(
                "max relative gradient error {:.3e} over {} parameters: {}",
                report.max_rel_error,
                report.checked,
                if report.passed() { "PASS" } else { "FAIL" }
            );
            if let Some(dir) = out {
                prepare_out(&dir)?;
                write_json(&dir.join("gradcheck.json"), &json!({ "seed": seed, "report": report }))?;
            }
            if !report.passed() {
                bail!("gradient check failed (tolerance {:e})", nn::GRADCHECK_TOLERANCE);
            }
        }
        Command::RirDump { out, dims, rt60, src, mic, fs } => {
            let room = Room::new(dims, rt60)?;
            let beta = acoustics::sabine_reflection(&room)?;
            let rir = acoustics::simulate_rir(&room, beta, src, mic, fs, None)?;
            prepare_out(&out)?;
            let bytes: Vec<u8> = rir.taps.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
            fs::write(out.join("rir.f32"), bytes)?;
            let sidecar = format!(
                "format f32le\nfs {fs}\ntaps {}\nroom {} {} {}\nrt60 {rt60}\nbeta {beta}\nsource {} {} {}\nmic {} {} {}\n",
                rir.taps.len(),
                dims[0],
                dims[1],
                dims[2],
                src[0],
                src[1],
                src[2],
                mic[0],
                mic[1],
                mic[2]
            );
            fs::write(out.join("rir.txt"), sidecar)?;
            println!("wrote {} taps", rir.taps.len());
        }
    }
    log::info!("done in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
