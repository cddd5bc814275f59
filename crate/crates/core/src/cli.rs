//! The `bdloss` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 a
//! gradient check above its threshold.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::boundary::gt_split_boundary;
use crate::edt::{edt_exact, DistanceMap, DistanceUnit};
use crate::error::{Error, Result};
use crate::fields::{LabelField3D, LogitField, UNIT_SPACING};
use crate::io::dataset::{read_dataset, write_dataset};
use crate::io::{emit_report, read_report, ExperimentConfig, ReportFormat};
use crate::losses::{
    boundary_distance_loss, combined_loss, cross_entropy, gradcheck, soft_dice_loss, uniform_weights, BoundaryLossConfig,
};
use crate::metrics::MetricsReport;
use crate::phantom::{make_dataset, Dataset};
use crate::pipeline::{gamma_sweep, run_baseline, run_two_stage, LossCurve, ModelBundle, Stage};
use crate::rng::Stream;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

pub const DEFAULT_GAMMAS: &str = "0,0.01,0.05,0.1,0.5";

#[derive(Parser, Debug)]
#[command(name = "bdloss", version, about = "Boundary distance loss experiments on synthetic split-tumour phantoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom dataset directory.
    GenData {
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        train: usize,
        #[arg(long, default_value_t = 10)]
        val: usize,
        #[arg(long, default_value_t = 20)]
        test: usize,
        /// Experiment config supplying the phantom distribution.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the cascade (and the direct baseline if configured) at the config's gamma.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on the test split of a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to markdown for `.md` outputs, CSV otherwise.
        #[arg(long)]
        format: Option<Format>,
    },
    /// Train one cascade per gamma on a shared stage 1 and write one report per gamma.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = DEFAULT_GAMMAS, allow_negative_numbers = true)]
        gammas: Vec<f64>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Use an existing dataset instead of generating one from the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Finite-difference check of a loss gradient on a random 8x8x8 three-class instance.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        loss: LossName,
    },
    /// Merge CSV reports and re-emit them.
    Report {
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossName {
    Ce,
    Dice,
    Boundary,
    Combined,
}

impl LossName {
    /// Largest accepted relative error.
    pub fn threshold(self) -> f64 {
        match self {
            LossName::Ce | LossName::Dice => 1e-5,
            LossName::Boundary | LossName::Combined => 1e-4,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_config(cfg: &ExperimentConfig) {
    eprintln!("resolved config:\n{}", cfg.to_json());
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn curve_csv(curve: &LossCurve) -> String {
    let mut s = String::from("iteration,total,cross_entropy,dice,boundary\n");
    for i in 0..curve.total.len() {
        let b = curve.boundary.get(i).map(|v| v.to_string()).unwrap_or_default();
        s += &format!("{i},{},{},{},{b}\n", curve.total[i], curve.cross_entropy[i], curve.dice[i]);
    }
    s
}

fn bundle_json(bundle: &ModelBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("model serializes");
    s.push('\n');
    s
}

/// `0.05` becomes `0.05`, `0` becomes `0`; safe in file names.
fn gamma_tag(g: f64) -> String {
    format!("{g}")
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::GenData {
            seed,
            train,
            val,
            test,
            config,
            out,
        } => {
            let cfg = ExperimentConfig {
                seed,
                n_train: train,
                n_val: val,
                n_test: test,
                ..load_config(config.as_deref())?
            };
            cfg.validate()?;
            print_config(&cfg);
            let dist = cfg.distribution();
            let data = make_dataset(seed, train, val, test, &dist)?;
            write_dataset(&data, seed, &dist, &out)?;
            println!("wrote {} cases to {}", train + val + test, out.display());
            Ok(EXIT_OK)
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            print_config(&cfg);
            let (_, d) = read_dataset(&data)?;
            create_dir(&out)?;
            let run = run_two_stage(&d.train, &d.test, &cfg.stage_config(Stage::Stage2))?;
            write_text(&out.join("model.json"), &bundle_json(&ModelBundle::TwoStage(run.model)))?;
            write_text(&out.join("stage1_curve.csv"), &curve_csv(&run.stage1_curve))?;
            write_text(&out.join("stage2_curve.csv"), &curve_csv(&run.stage2_curve))?;
            if cfg.baseline {
                let b = run_baseline(&d.train, &d.test, &cfg.stage_config(Stage::Direct))?;
                write_text(&out.join("baseline.json"), &bundle_json(&ModelBundle::Baseline { model: b.model }))?;
                write_text(&out.join("baseline_curve.csv"), &curve_csv(&b.curve))?;
            }
            write_text(&out.join("config.json"), &(cfg.to_json() + "\n"))?;
            println!("wrote models to {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Evaluate {
            model,
            data,
            out,
            format,
        } => {
            let text = fs::read_to_string(&model).map_err(|e| Error::io(&model, e))?;
            let bundle: ModelBundle =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", model.display())))?;
            let (_, d) = read_dataset(&data)?;
            let cfg = ExperimentConfig::default();
            let format = format.map(ReportFormat::from).unwrap_or_else(|| {
                if out.extension().is_some_and(|e| e == "md") {
                    ReportFormat::Markdown
                } else {
                    ReportFormat::Csv
                }
            });
            let reports = bundle.evaluate(&d.test)?;
            write_text(&out, &emit_report(&reports, format, cfg.assd_unit)?)?;
            println!("wrote {} report rows to {}", reports.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Sweep {
            config,
            gammas,
            seed,
            data,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            print_config(&cfg);
            eprintln!("gammas: {gammas:?}");
            let d: Dataset = match data {
                Some(dir) => read_dataset(&dir)?.1,
                None => make_dataset(cfg.seed, cfg.n_train, cfg.n_val, cfg.n_test, &cfg.distribution())?,
            };
            let runs = gamma_sweep(&d.train, &d.test, &cfg.stage_config(Stage::Stage2), &gammas)?;
            let baseline: Vec<MetricsReport> = if cfg.baseline {
                run_baseline(&d.train, &d.test, &cfg.stage_config(Stage::Direct))?.reports
            } else {
                Vec::new()
            };
            create_dir(&out)?;
            for run in &runs {
                let mut reports = baseline.clone();
                reports.extend(run.reports.iter().cloned());
                let path = out.join(format!("report_gamma_{}.csv", gamma_tag(run.model.gamma)));
                write_text(&path, &emit_report(&reports, ReportFormat::Csv, cfg.assd_unit)?)?;
                println!("{}", path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Gradcheck { seed, loss } => {
            let (logits, target, phi) = gradcheck_instance(seed)?;
            let bcfg = BoundaryLossConfig::default();
            let w = uniform_weights(3);
            let r = match loss {
                LossName::Ce => gradcheck(|l| cross_entropy(l, &target, &w), &logits, 1e-4, seed)?,
                LossName::Dice => gradcheck(|l| soft_dice_loss(l, &target), &logits, 1e-4, seed)?,
                LossName::Boundary => gradcheck(|l| boundary_distance_loss(l, &phi, &bcfg), &logits, 1e-4, seed)?,
                LossName::Combined => gradcheck(
                    |l| combined_loss(l, &target, &phi, &bcfg, &w).map(|o| o.total),
                    &logits,
                    1e-4,
                    seed,
                )?,
            };
            let pass = r.max_relative_error < loss.threshold();
            println!(
                "loss={loss:?} seed={seed} coordinates={} max_relative_error={:e} threshold={:e} {}",
                r.coordinates_checked,
                r.max_relative_error,
                loss.threshold(),
                if pass { "ok" } else { "FAILED" }
            );
            Ok(if pass { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Report { inputs, format, out } => {
            let mut reports = Vec::new();
            for p in &inputs {
                reports.extend(read_report(p)?);
            }
            let cfg = ExperimentConfig::default();
            let doc = emit_report(&reports, format.into(), cfg.assd_unit)?;
            match out {
                Some(p) => write_text(&p, &doc)?,
                None => print!("{doc}"),
            }
            Ok(EXIT_OK)
        }
    }
}

/// Random 8x8x8 logits, a three-class target split by a plane, and the
/// distance map of its split boundary.
pub fn gradcheck_instance(seed: u64) -> Result<(LogitField, LabelField3D, DistanceMap)> {
    let dims = [8, 8, 8];
    let n = 512;
    let mut s = Stream::new(seed);
    let chans = (0..3).map(|_| (0..n).map(|_| s.range(-2.0, 2.0)).collect()).collect();
    let logits = LogitField::new(dims, UNIT_SPACING, chans)?;
    let k = 2 + s.below(4);
    let target = LabelField3D::from_fn(dims, UNIT_SPACING, |x, y, z| {
        if y == 0 || z == 0 {
            0
        } else if x < k {
            1
        } else {
            2
        }
    })?;
    let phi = edt_exact(&gt_split_boundary(&target), DistanceUnit::Voxels)?;
    Ok((logits, target, phi))
}
