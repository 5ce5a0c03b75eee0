use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emkd::data::{load_dataset, save_dataset, Dataset, DatasetSpec, WindowSpec};
use emkd::harness::{self, Split, TrainConfig};
use emkd::metrics::{metrics_csv, VoeVariant};
use emkd::nets::load_model;
use emkd::{gradcheck, Error, Result};

#[derive(Parser)]
#[command(
    name = "emkd",
    version,
    about = "Knowledge distillation for segmentation on synthetic CT-like data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset from a spec file.
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the teacher network with the segmentation loss alone.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the student against a frozen teacher.
    Distill {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on one side of a fold.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, default_value_t = WindowSpec::LIVER.lo, allow_negative_numbers = true)]
        window_lo: f64,
        #[arg(long, default_value_t = WindowSpec::LIVER.hi, allow_negative_numbers = true)]
        window_hi: f64,
        #[arg(long, default_value = "as_printed")]
        voe: VoeVariant,
    },
    /// Finite-difference gradient checks; exits nonzero on any failure.
    Gradcheck {
        #[arg(long)]
        op: Option<String>,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare finished runs.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Config plus its dataset; relative `data` paths resolve against the
/// config file's directory.
fn load_config(path: &Path) -> Result<(TrainConfig, Dataset)> {
    let cfg = TrainConfig::parse(&read_text(path)?)?;
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config(format!("{}: no `data` path configured", path.display())))?;
    let data = if data.is_relative() {
        path.parent().unwrap_or(Path::new(".")).join(data)
    } else {
        data
    };
    let ds = load_dataset(&data)?;
    Ok((cfg, ds))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::GenData { spec, out } => {
            let spec = match spec {
                Some(p) => DatasetSpec::parse(&read_text(&p)?)?,
                None => DatasetSpec::default(),
            };
            let ds = Dataset::generate(&spec)?;
            save_dataset(&ds, &out)?;
            log::info!("wrote {} cases to {}", ds.cases.len(), out.display());
        }
        Cmd::Train { config, out } => {
            let (cfg, ds) = load_config(&config)?;
            let r = harness::train_teacher(&cfg, &ds)?;
            harness::save_run(&r, &out)?;
            println!(
                "teacher: final dice {:.4} ({:.1}s)",
                r.report.final_dice(),
                r.report.wall_clock_secs
            );
        }
        Cmd::Distill {
            config,
            teacher,
            out,
        } => {
            let (cfg, ds) = load_config(&config)?;
            let teacher = load_model(&teacher)?;
            let r = harness::distill_student(&cfg, &ds, &teacher, None)?;
            harness::save_run(&r, &out)?;
            println!(
                "student {}: final dice {:.4} ({:.1}s)",
                r.report.label,
                r.report.final_dice(),
                r.report.wall_clock_secs
            );
        }
        Cmd::Eval {
            model,
            data,
            split,
            out,
            folds,
            fold,
            window_lo,
            window_hi,
            voe,
        } => {
            let net = load_model(&model)?;
            let ds = load_dataset(&data)?;
            let cases = harness::split_cases(&ds, folds, fold, split)?;
            let rows =
                harness::evaluate(&net, &cases, WindowSpec::new(window_lo, window_hi)?, voe)?;
            write_text(&out, &metrics_csv(&rows)?)?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Cmd::Gradcheck {
            op,
            instances,
            seed,
        } => {
            let results = match op {
                Some(name) => vec![gradcheck::check(&name, instances, seed)?],
                None => gradcheck::check_all(instances, seed)?,
            };
            let mut ok = true;
            for r in &results {
                let verdict = if r.passed() { "ok" } else { "FAIL" };
                println!(
                    "{:<20} {:>3} instances  max rel err {:.3e}  {verdict}",
                    r.name, r.instances, r.max_rel_error
                );
                ok &= r.passed();
            }
            return Ok(ok);
        }
        Cmd::Report { dirs, csv } => {
            let table = harness::report(&dirs)?;
            print!("{}", table.text);
            if let Some(p) = csv {
                write_text(&p, &table.csv)?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
