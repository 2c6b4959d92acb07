mod args;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;

use bcg_core::io::pipeline::compute_traces;
use bcg_core::io::record::record_id;
use bcg_core::io::report::{beats_csv, compare_csv, markers_csv, traces_csv};
use bcg_core::io::{load_record, save_record, Config, LoadOptions, RecordReport};
use bcg_core::run_pipeline;
use bcg_core::synth::{generate, ComplexTemplate, SynthOutput};

use args::{Cli, Command, CompareArgs, Preset, RecordArgs, SynthArgs};

/// Suffixes of files this tool writes; never picked up as record inputs.
const DERIVED: [&str; 5] = [
    ".beats.csv",
    ".traces.csv",
    ".markers.csv",
    ".truth.csv",
    "compare.csv",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Transform,
    Detect,
    Eval,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(w) = cli.workers {
        config.run.workers = w;
    }
    match cli.command {
        Command::Transform(a) => batch(&config, &a, Stage::Transform),
        Command::Detect(a) => batch(&config, &a, Stage::Detect),
        Command::Eval(a) => batch(&config, &a, Stage::Eval),
        Command::Synth(a) => synth(&config, &a),
        Command::Compare(a) => compare(&config, &a),
    }
}

/// Expands directories into their files accepted by `keep`, sorted.
fn expand(inputs: &[PathBuf], keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .filter(|f| f.file_name().and_then(|n| n.to_str()).is_some_and(&keep))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no input files found");
    }
    Ok(out)
}

fn is_record_name(name: &str) -> bool {
    name.ends_with(".csv") && !DERIVED.iter().any(|d| name.ends_with(d))
}

fn pool(config: &Config) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.effective_workers())
        .build()
        .context("starting worker pool")
}

/// Prints per-item failures and maps them to the exit code.
fn finish(results: Vec<(PathBuf, Result<String>)>) -> ExitCode {
    let total = results.len();
    let mut failed = 0;
    for (path, r) in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                failed += 1;
                let msg = format!("{e:#}");
                let shown = path.display().to_string();
                if msg.starts_with(&shown) {
                    eprintln!("error: {msg}");
                } else {
                    eprintln!("error: {shown}: {msg}");
                }
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failed} of {total} inputs failed");
        ExitCode::FAILURE
    }
}

fn batch(config: &Config, args: &RecordArgs, stage: Stage) -> Result<ExitCode> {
    let inputs = expand(&args.inputs, is_record_name)?;
    let mut seen: HashMap<String, &Path> = HashMap::new();
    for p in &inputs {
        if let Some(prev) = seen.insert(record_id(p), p) {
            bail!(
                "{} and {} map to the same record id `{}`",
                prev.display(),
                p.display(),
                record_id(p)
            );
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let opts = LoadOptions {
        fs: args.fs,
        columns: config.columns.clone(),
    };
    let results = pool(config)?.install(|| {
        inputs
            .par_iter()
            .map(|p| (p.clone(), process(p, config, &opts, &args.out, stage)))
            .collect()
    });
    Ok(finish(results))
}

fn write(dir: &Path, id: &str, suffix: &str, text: &str) -> Result<()> {
    let path = dir.join(format!("{id}{suffix}"));
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn process(
    path: &Path,
    config: &Config,
    opts: &LoadOptions,
    out: &Path,
    stage: Stage,
) -> Result<String> {
    let record = load_record(path, opts)?;
    let id = record.id.clone();
    let cfg = config.pipeline();
    if stage == Stage::Transform {
        let traces = compute_traces(&record, &cfg)?;
        write(out, &id, ".traces.csv", &traces_csv(&traces)?)?;
        return Ok(format!("{id}: {} samples", record.len()));
    }

    let output = run_pipeline(&record, &cfg)?;
    // Every report is checked against the schema, including the ones that
    // only feed the CSVs.
    let report = RecordReport::from_output(&output);
    let json = report.to_json()?;
    write(out, &id, ".beats.csv", &beats_csv(&output)?)?;
    write(out, &id, ".markers.csv", &markers_csv(&output)?)?;
    if stage == Stage::Eval {
        write(out, &id, ".report.json", &json)?;
        write(out, &id, ".traces.csv", &traces_csv(&output.traces)?)?;
    }
    let recalls: Vec<String> = report
        .reports
        .iter()
        .map(|r| format!("{} {:.3}", r.variant.as_str(), r.recall))
        .collect();
    Ok(format!(
        "{id}: {} beats scored; recall {}",
        report.beats_scored,
        recalls.join(", ")
    ))
}

fn truth_csv(out: &SynthOutput) -> String {
    let mut text = String::from("beat,onset,h,i,j,k,l\n");
    for (b, (onset, c)) in out.onsets.iter().zip(&out.truth).enumerate() {
        let cells: Vec<String> = [c.h, c.i, c.j, c.k, c.l]
            .iter()
            .map(|p| p.map(|p| p.index.to_string()).unwrap_or_default())
            .collect();
        text.push_str(&format!("{b},{onset},{}\n", cells.join(",")));
    }
    text
}

fn synth(config: &Config, args: &SynthArgs) -> Result<ExitCode> {
    let mut spec = config.synth.clone();
    match args.preset {
        Some(Preset::Default) => spec.template = ComplexTemplate::default(),
        Some(Preset::SharperI) => spec.template = ComplexTemplate::sharper_i(),
        Some(Preset::BuriedK) => spec.template = ComplexTemplate::buried_k(),
        None => {}
    }
    macro_rules! set {
        ($($field:ident),*) => {$(if let Some(v) = args.$field { spec.$field = v; })*};
    }
    set!(
        seed,
        fs,
        duration_s,
        hr_bpm,
        hrv_jitter_ms,
        shorter_j_fraction,
        k_band_energy,
        noise_snr_db
    );
    if args.count == 0 {
        bail!("--count must be at least 1");
    }

    let targets: Vec<PathBuf> = if args.count == 1 {
        if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        vec![args.out.clone()]
    } else {
        fs::create_dir_all(&args.out)?;
        (0..args.count)
            .map(|n| args.out.join(format!("synth_{n:03}.csv")))
            .collect()
    };
    let results = pool(config)?.install(|| {
        targets
            .par_iter()
            .enumerate()
            .map(|(n, path)| {
                let mut spec = spec.clone();
                spec.seed = spec.seed.wrapping_add(n as u64);
                let r = (|| {
                    let mut out = generate(&spec)?;
                    out.record.id = record_id(path);
                    save_record(path, &out.record)?;
                    if args.truth {
                        let stem = path.with_extension("");
                        let truth = PathBuf::from(format!("{}.truth.csv", stem.display()));
                        fs::write(&truth, truth_csv(&out))?;
                    }
                    Ok(format!(
                        "{}: {} beats, seed {}",
                        path.display(),
                        out.onsets.len(),
                        spec.seed
                    ))
                })();
                (path.clone(), r)
            })
            .collect()
    });
    Ok(finish(results))
}

fn compare(config: &Config, args: &CompareArgs) -> Result<ExitCode> {
    let inputs = expand(&args.inputs, |n| n.ends_with(".report.json"))?;
    let parsed: Vec<(PathBuf, Result<RecordReport>)> = pool(config)?.install(|| {
        inputs
            .par_iter()
            .map(|p| {
                let r = fs::read_to_string(p)
                    .map_err(anyhow::Error::from)
                    .and_then(|t| Ok(RecordReport::from_json(&t)?));
                (p.clone(), r)
            })
            .collect()
    });
    let reports: Vec<RecordReport> = parsed
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok().cloned())
        .collect();
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, compare_csv(&reports)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let results = parsed
        .into_iter()
        .map(|(p, r)| {
            let line = r.map(|rep| format!("{}: {} reports", rep.record_id, rep.reports.len()));
            (p, line)
        })
        .collect();
    Ok(finish(results))
}
