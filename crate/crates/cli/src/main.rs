use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use emres_core::pairing::{build_pairs, PairingPolicy};
use emres_core::spectral::SpaceTag;
use emres_core::sweep::{summarize, LayerSelection, SweepConfig, SweepReport, SCHEMA_VERSION};
use emres_core::synth::{generate, SynthConfig};
use emres_core::{emit_figure_data, load_dataset, run_sweep, validate_dataset, write_dataset, Figure};

/// Residual analysis of emphasis in word-level speech representations.
#[derive(Parser, Debug)]
#[command(name = "emres", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Split seed for probes, or generator seed for `synth`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also run every space under its alternate centering.
    #[arg(long, global = true)]
    both_centerings: bool,
    /// Score the duration probe on its training rows instead of a held-out split.
    #[arg(long, global = true)]
    in_sample: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a dataset and print its invariant violations.
    Validate { manifest: PathBuf },
    /// Print neutral/emphasized pairs as CSV.
    Pairs {
        manifest: PathBuf,
        #[arg(long, default_value = "first-variant")]
        policy: PairingPolicy,
    },
    /// Analyze one layer of one dataset.
    Analyze {
        manifest: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long, value_delimiter = ',', default_value = "A,B,C,R")]
        spaces: Vec<SpaceTag>,
    },
    /// Run a sweep described by a JSON config.
    Sweep { config: PathBuf },
    /// Best layer per model, space and task across reports.
    Summarize {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Export plot data from a report.
    Figure {
        report: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        which: Vec<Figure>,
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Generate a synthetic dataset with planted ground truth.
    Synth { config: PathBuf },
}

/// Finished, but some cells or checks failed.
struct Partial;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Partial)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Option<Partial>> {
    let g = cli.global;
    match cli.command {
        Command::Validate { manifest } => validate(&manifest),
        Command::Pairs { manifest, policy } => pairs(&manifest, policy, g.out.as_deref()),
        Command::Analyze {
            manifest,
            layer,
            spaces,
        } => {
            let mut config = SweepConfig::new(vec![manifest], g.out.unwrap_or_else(|| "out".into()));
            config.layers = LayerSelection::List(vec![layer]);
            config.spaces = spaces;
            config.both_centerings = g.both_centerings;
            config.probes.in_sample = g.in_sample;
            if let Some(seed) = g.seed {
                config.probes.split_seed = seed;
            }
            sweep(&config)
        }
        Command::Sweep { config } => {
            let mut config = SweepConfig::load(&config)?;
            if let Some(out) = g.out {
                config.output_dir = out;
            }
            if let Some(seed) = g.seed {
                config.probes.split_seed = seed;
            }
            config.both_centerings |= g.both_centerings;
            config.probes.in_sample |= g.in_sample;
            sweep(&config)
        }
        Command::Summarize { reports } => summarize_reports(&reports, g.out.as_deref()),
        Command::Figure {
            report,
            which,
            layer,
        } => figure(&report, &which, layer, g.out.as_deref()),
        Command::Synth { config } => synth(&config, g.seed, g.out),
    }
}

fn validate(manifest: &Path) -> anyhow::Result<Option<Partial>> {
    let dataset = match load_dataset(manifest) {
        Ok(d) => d,
        Err(e @ emres_core::Error::Metadata(_)) => {
            println!("{e}");
            return Ok(Some(Partial));
        }
        Err(e) => return Err(e.into()),
    };
    let report = validate_dataset(&dataset);
    let s = &report.summary;
    println!(
        "{}: {} tokens ({} emphasized, {} neutral), {} speakers, {} sentences, {} layers",
        dataset.model_name(),
        s.tokens,
        s.emphasized,
        s.neutral,
        s.speakers,
        s.sentences,
        s.layers
    );
    for v in &report.violations {
        println!("{v}");
    }
    if report.is_valid() {
        println!("ok");
        Ok(None)
    } else {
        println!("{} violations", report.violations.len());
        Ok(Some(Partial))
    }
}

fn pairs(manifest: &Path, policy: PairingPolicy, out: Option<&Path>) -> anyhow::Result<Option<Partial>> {
    let dataset = load_dataset(manifest)?;
    let outcome = build_pairs(&dataset, policy);
    eprintln!(
        "{} pairs, {} unmatched emphasized tokens",
        outcome.pairs.len(),
        outcome.unmatched.len()
    );
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("pairs.csv");
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            outcome.pairs.write_csv(io::BufWriter::new(file))?;
            eprintln!("wrote {}", path.display());
        }
        None => outcome.pairs.write_csv(io::stdout().lock())?,
    }
    Ok(None)
}

fn sweep(config: &SweepConfig) -> anyhow::Result<Option<Partial>> {
    let report = run_sweep(config)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "model\tlayer\tspace\td95\tr2_auc\tr2_dim95\twid_auc\twid_dim95")?;
    for c in &report.cells {
        let space = format!("{}/{}", c.space, c.centering);
        match (&c.metrics, &c.error) {
            (Some(m), _) => {
                let (wa, wd) = m
                    .word_id
                    .as_ref()
                    .map_or(("-".to_string(), "-".to_string()), |w| {
                        (format!("{:.3}", w.auc), w.dim95.to_string())
                    });
                writeln!(
                    stdout,
                    "{}\t{}\t{space}\t{}\t{:.3}\t{}\t{wa}\t{wd}",
                    c.model, c.layer, m.spectrum.d95, m.duration.auc, m.duration.dim95
                )?;
            }
            (None, Some(e)) => writeln!(stdout, "{}\t{}\t{space}\tfailed: {}", c.model, c.layer, e.message)?,
            (None, None) => {}
        }
    }
    writeln!(stdout, "report: {}", config.output_dir.join("report.json").display())?;
    if report.failed_cells() > 0 {
        eprintln!("{} of {} cells failed", report.failed_cells(), report.cells.len());
        return Ok(Some(Partial));
    }
    Ok(None)
}

fn summarize_reports(paths: &[PathBuf], out: Option<&Path>) -> anyhow::Result<Option<Partial>> {
    let reports = paths
        .iter()
        .map(|p| SweepReport::read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = summarize(&reports)?;
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "summary": rows,
    }))?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("summary.json");
            fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(None)
}

fn figure(report: &Path, which: &[Figure], layer: Option<usize>, out: Option<&Path>) -> anyhow::Result<Option<Partial>> {
    let parsed = SweepReport::read(report)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => report.parent().unwrap_or(Path::new(".")).join("figures"),
    };
    for &f in which {
        let path = emit_figure_data(&parsed, f, layer, &dir)?;
        println!("{}", path.display());
    }
    Ok(None)
}

fn synth(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> anyhow::Result<Option<Partial>> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg: SynthConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out = out.unwrap_or_else(|| PathBuf::from("synth"));
    if out.join("manifest.json").exists() {
        bail!("{} already holds a dataset", out.display());
    }
    let (dataset, truth) = generate(&cfg)?;
    let manifest = write_dataset(&dataset, &out)?;
    truth.write(&out.join("ground_truth.json"))?;
    println!("{}", manifest.display());
    Ok(None)
}
