//! `nnhls`: compile, simulate, estimate and dump tables for small
//! feed-forward networks.
//!
//! Exit status: 0 success, 2 invalid model or dataset, 3 invalid
//! configuration, 4 I/O failure. A run manifest is printed to stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use nnhls::emit::{emit_source, emit_tables, sha256_hex, ManifestEntry, SourceBundle};
use nnhls::estimate::estimate;
use nnhls::model::{build_ir, parse_model, NetworkModel, QuantConfig, TypedIr};
use nnhls::sim::{evaluate, Dataset};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "nnhls", version, about = "Quantizing compiler for small feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Inputs {
    /// Network description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Quantization config (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reserved; has no effect.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Emit C source, table dumps and a manifest into a directory.
    Compile {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare the quantized network with the f64 reference over a dataset.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// CSV with header x0,...,xN and an optional label column.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the analytic resource estimate.
    Estimate {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
    },
    /// Write only the lookup-table dumps and a manifest.
    Tables {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Input(String),
    Config(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Config(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Config(m) | Failure::Io(m) => m,
        }
    }
}

#[derive(Serialize)]
struct InputDigests {
    model: String,
    config: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
}

#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    inputs: InputDigests,
    outputs: Vec<ManifestEntry>,
    timestamp: u64,
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Io(format!("reading {}: {e}", path.display())))
}

fn text(path: &Path, bytes: &[u8]) -> Result<String, Failure> {
    String::from_utf8(bytes.to_vec()).map_err(|_| Failure::Input(format!("{}: not UTF-8", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<ManifestEntry, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Io(format!("creating {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("writing {}: {e}", path.display())))?;
    Ok(ManifestEntry { path: path.display().to_string(), sha256: sha256_hex(contents.as_bytes()) })
}

struct Loaded {
    model: NetworkModel,
    ir: TypedIr,
    digests: InputDigests,
}

fn load(inputs: &Inputs) -> Result<Loaded, Failure> {
    let model_bytes = read(&inputs.model)?;
    let config_bytes = inputs.config.as_deref().map(read).transpose()?;
    let model = parse_model(&text(&inputs.model, &model_bytes)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", inputs.model.display())))?;
    let config = match (&inputs.config, &config_bytes) {
        (Some(path), Some(bytes)) => {
            let t = String::from_utf8(bytes.clone())
                .map_err(|_| Failure::Config(format!("{}: not UTF-8", path.display())))?;
            QuantConfig::parse(&t).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        _ => QuantConfig::default(),
    };
    let ir = build_ir(&model, &config).map_err(|e| Failure::Config(e.to_string()))?;
    let digests = InputDigests {
        model: sha256_hex(&model_bytes),
        config: config_bytes.as_deref().map(sha256_hex),
        dataset: None,
    };
    Ok(Loaded { model, ir, digests })
}

/// Writes a bundle plus its `manifest.json`; returns entries relative to `dir`.
fn write_bundle(dir: &Path, bundle: &SourceBundle) -> Result<Vec<ManifestEntry>, Failure> {
    bundle.write_to(dir).map_err(|e| Failure::Io(format!("writing into {}: {e}", dir.display())))?;
    let mut entries = bundle.manifest();
    entries.push(ManifestEntry { path: "manifest.json".into(), sha256: sha256_hex(bundle.manifest_json().as_bytes()) });
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

fn run(cli: Cli) -> Result<RunManifest, Failure> {
    let (subcommand, inputs, outputs) = match cli.command {
        Command::Compile { inputs, out_dir } => {
            let l = load(&inputs)?;
            let bundle = emit_source(&l.ir).map_err(|e| Failure::Config(e.to_string()))?;
            ("compile", l.digests, write_bundle(&out_dir, &bundle)?)
        }
        Command::Tables { inputs, out_dir } => {
            let l = load(&inputs)?;
            ("tables", l.digests, write_bundle(&out_dir, &emit_tables(&l.ir))?)
        }
        Command::Simulate { inputs, dataset, report } => {
            let mut l = load(&inputs)?;
            let bytes = read(&dataset)?;
            let data = Dataset::from_csv(bytes.as_slice())
                .map_err(|e| Failure::Input(format!("{}: {e}", dataset.display())))?;
            let r =
                evaluate(&l.ir, &l.model, &data).map_err(|e| Failure::Input(format!("{}: {e}", dataset.display())))?;
            l.digests.dataset = Some(sha256_hex(&bytes));
            let mut json = serde_json::to_string_pretty(&r).expect("report serializes");
            json.push('\n');
            ("simulate", l.digests, vec![write(&report, &json)?])
        }
        Command::Estimate { inputs, report, format } => {
            let l = load(&inputs)?;
            let r = estimate(&l.ir);
            let body = match format {
                ReportFormat::Json => {
                    let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
                    s.push('\n');
                    s
                }
                ReportFormat::Text => r.to_table(),
            };
            ("estimate", l.digests, vec![write(&report, &body)?])
        }
    };
    Ok(RunManifest {
        tool: "nnhls",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        inputs,
        outputs,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(manifest) => {
            println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
