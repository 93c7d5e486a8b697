use clap::Parser;
use kernel_perturb::cli::{exit_code, reproduce_paper_suite, run, ExperimentConfig, OutputFormat, SuiteOptions};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

/// Perturbation series of forward kernels: batch experiments and checks.
#[derive(Parser, Debug)]
#[command(name = "kperturb", version)]
struct Args {
    /// Experiment config (TOML)
    #[arg(long, required_unless_present = "suite")]
    config: Option<PathBuf>,
    /// Run the fixed acceptance suite instead of a config
    #[arg(long, conflicts_with = "config")]
    suite: bool,
    /// Output file (default: config `output`, else stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["json", "csv"])]
    format: Option<String>,
    /// Seed for randomized spot-checks
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, env = "KPERTURB_THREADS")]
    threads: Option<usize>,
    /// Dotted-path config override, e.g. quadrature.time.nodes=32
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("kperturb: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let code = if args.suite { suite(&args) } else { experiment(&args) };
    ExitCode::from(code as u8)
}

fn open(path: Option<&PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn suite(args: &Args) -> i32 {
    let rep = reproduce_paper_suite(SuiteOptions::from_env(args.seed.unwrap_or(0)));
    for item in &rep.items {
        eprintln!(
            "[{}] criterion {} {}: exit {}",
            if item.passed { "pass" } else { "FAIL" },
            item.criterion,
            item.name,
            item.exit_code
        );
    }
    let text = serde_json::to_string_pretty(&rep.to_json()).expect("report serializes");
    match open(args.out.as_ref()).and_then(|mut w| writeln!(w, "{text}").and_then(|_| w.flush())) {
        Ok(()) => rep.exit_code(),
        Err(e) => {
            eprintln!("kperturb: {e}");
            2
        }
    }
}

fn experiment(args: &Args) -> i32 {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(f) = &args.format {
        overrides.push(format!("format=\"{f}\""));
    }
    let path = args.config.as_ref().expect("clap requires --config");
    let result = ExperimentConfig::from_path(path, &overrides).and_then(|cfg| {
        let rep = run(&cfg)?;
        let out = args.out.as_ref().or(cfg.output.as_ref());
        let mut w = open(out)?;
        rep.write(&mut w, cfg.format)?;
        w.flush()?;
        if cfg.format == OutputFormat::Csv {
            eprintln!("kperturb: status {:?}, exit {}", rep.status, rep.exit_code());
        }
        Ok(rep.exit_code())
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kperturb: {e}");
            exit_code(&e)
        }
    }
}
