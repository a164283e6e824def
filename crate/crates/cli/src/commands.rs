use std::fs;
use std::io::{self, Write};
use std::path::Path;

use scma::codebook::CodebookSet;
use scma::detector::MpaConfig;
use scma::fixtures::{self, validate_codebook, ValidationReport};
use scma::format::{fmt_sig, to_json_pretty, CSV_DIGITS};
use scma::metrics::{il_profile, kpi, IlPoint};
use scma::montecarlo::{sweep_ser, Budget, Detection, CSV_HEADER};
use scma::optimizer::{optimize_template, DeConfig, EvalConfig};
use scma::structure::{builtin_names, builtin_template, StructureTemplate};
use serde_json::json;

use crate::manifest::{path_for_file, Clock, Manifest};
use crate::{
    AnalyzeArgs, Command, Detector, Failure, FixturesArgs, MpaArgs, OptimizeArgs, SimulateArgs, ValidateArgs,
};

const FIXTURE_PREFIX: &str = "fixture:";

pub fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Optimize(a) => optimize(a),
        Command::Fixtures(a) => list_fixtures(a),
    }
}

/// `fixture:<id>` or a path to a codebook JSON file.
fn load_codebook(source: &str) -> Result<CodebookSet, Failure> {
    match source.strip_prefix(FIXTURE_PREFIX) {
        Some(id) => Ok(fixtures::load_codebooks(id)?),
        None => CodebookSet::read_json(source).map_err(|e| Failure::usage(format!("{source}: {e}"))),
    }
}

fn load_template(source: &str) -> Result<StructureTemplate, Failure> {
    if builtin_names().contains(&source) {
        return Ok(builtin_template(source)?);
    }
    if !Path::new(source).exists() {
        return Err(Failure::usage(format!(
            "`{source}` is neither a built-in template ({}) nor an existing file",
            builtin_names().join(", ")
        )));
    }
    StructureTemplate::read_json(source).map_err(|e| Failure::usage(format!("{source}: {e}")))
}

/// Loads and checks a set that a command is about to use; violations exit 1.
fn load_valid(source: &str) -> Result<CodebookSet, Failure> {
    let set = load_codebook(source)?;
    let report = validate_codebook(&set, None);
    if !report.passed {
        return Err(Failure { code: 1, message: format!("{source} is not a valid codebook set: {}", report.violations.join("; ")) });
    }
    Ok(set)
}

fn mpa_config(a: &MpaArgs) -> Result<MpaConfig, Failure> {
    let cfg = MpaConfig { iterations: a.mpa_iters, domain: a.mpa_domain.into(), damping: a.damping };
    cfg.validate()?;
    Ok(cfg)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Result<(), Failure> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))
}

fn validate(a: ValidateArgs) -> Result<u8, Failure> {
    let set = load_codebook(&a.codebook)?;
    let template = a.template.as_deref().map(load_template).transpose()?;
    let report: ValidationReport = validate_codebook(&set, template.as_ref());
    let out = json!({ "codebook": a.codebook, "template": a.template, "report": report });
    emit(&to_json_pretty(&out)?)?;
    Ok(if report.passed { 0 } else { 1 })
}

fn il_rows(points: &[IlPoint]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for p in points {
        let snr = fmt_sig(p.snr_db, CSV_DIGITS);
        for (k, v) in p.per_resource.iter().enumerate() {
            rows.push(vec![snr.clone(), (k + 1).to_string(), fmt_sig(*v, CSV_DIGITS)]);
        }
        rows.push(vec![snr, "mean".into(), fmt_sig(p.mean, CSV_DIGITS)]);
    }
    rows
}

fn analyze(a: AnalyzeArgs) -> Result<u8, Failure> {
    let clock = Clock::start();
    let set = load_valid(&a.codebook)?;
    let report = kpi(&set, a.rel_tol)?;
    let grid = a.grid.map(|g| g.0).unwrap_or_default();
    let points = if grid.is_empty() { Vec::new() } else { il_profile(&set, &grid)? };
    let doc = json!({ "codebook": a.codebook, "kpi": report, "il": points });
    let text = to_json_pretty(&doc)?;
    emit(&text)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_text(&dir.join("kpi.json"), &format!("{text}\n"))?;
        let mut outputs = vec!["kpi.json".to_string()];
        if !points.is_empty() {
            write_csv(&dir.join("il.csv"), &["snr_db", "resource", "il_bits"], &il_rows(&points))?;
            outputs.push("il.csv".into());
        }
        let config = json!({ "codebook": a.codebook, "n0_grid_db": grid, "rel_tol": a.rel_tol });
        Manifest::new("analyze", config, None, outputs, &clock).write(&dir.join("manifest.json"))?;
    }
    Ok(0)
}

fn simulate(a: SimulateArgs) -> Result<u8, Failure> {
    let clock = Clock::start();
    let set = load_valid(&a.codebook)?;
    let budget = match (a.frames, a.target_errors) {
        (Some(n), None) => Budget::Frames(n),
        (None, Some(e)) => Budget::TargetErrors { errors: e, max_frames: a.max_frames },
        (None, None) => return Err(Failure::usage("give either --frames or --target-errors")),
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    let detection = match a.detector {
        Detector::Mpa => Detection::Mpa(mpa_config(&a.mpa)?),
        Detector::Map => Detection::Map,
    };
    let channel = a.channel.into();
    let rows: Vec<Vec<String>> =
        sweep_ser(&set, &a.ebno.0, channel, budget, detection, a.seed)?.iter().map(|e| e.csv_record().to_vec()).collect();
    match &a.out {
        None => {
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(CSV_HEADER)?;
            for r in &rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            write_csv(path, &CSV_HEADER, &rows)?;
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let config = json!({
                "codebook": a.codebook,
                "channel": channel,
                "ebno_db": a.ebno.0,
                "budget": budget,
                "detection": detection,
            });
            Manifest::new("simulate", config, Some(a.seed), vec![name], &clock).write(&path_for_file(path))?;
        }
    }
    Ok(0)
}

fn optimize(a: OptimizeArgs) -> Result<u8, Failure> {
    let clock = Clock::start();
    let template = load_template(&a.template)?;
    let de = DeConfig {
        population: a.np,
        dim: 2 * template.num_params(),
        alpha: a.f,
        crossover: a.cr,
        max_iter: a.max_iter,
        plateau_eps: a.plateau_eps,
        plateau_window: a.plateau_window,
        seed: a.seed,
    };
    de.validate()?;
    if a.frames_per_eval == 0 {
        return Err(Failure::usage("--frames-per-eval must be positive"));
    }
    let eval = EvalConfig {
        ebn0_db: a.ebno,
        channel: a.channel.into(),
        frames: a.frames_per_eval,
        mpa: mpa_config(&a.mpa)?,
        crn: a.crn.into(),
    };
    create_dir(&a.out)?;
    let quiet = a.quiet;
    let artifact = optimize_template(&template, &de, &eval, |pop| {
        if !quiet {
            let (_, best) = pop.best();
            eprintln!("generation {:>3}: best SER {}", pop.generation, fmt_sig(best, CSV_DIGITS));
        }
    })?;

    write_text(&a.out.join("run.json"), &format!("{}\n", to_json_pretty(&artifact)?))?;
    let history: Vec<Vec<String>> =
        artifact.history.iter().enumerate().map(|(g, v)| vec![g.to_string(), fmt_sig(*v, CSV_DIGITS)]).collect();
    write_csv(&a.out.join("history.csv"), &["generation", "best_ser"], &history)?;
    let codebook = CodebookSet::from_json_str(&artifact.codebook.to_string())?;
    codebook.write_json(a.out.join("codebook.json"))?;

    let config = json!({
        "template": a.template,
        "de": de,
        "eval": eval,
        "np": a.np,
        "cr": a.cr,
        "f": a.f,
        "max_iter": a.max_iter,
        "frames_per_eval": a.frames_per_eval,
    });
    let outputs = vec!["run.json".into(), "history.csv".into(), "codebook.json".into()];
    Manifest::new("optimize", config, Some(a.seed), outputs, &clock).write(&a.out.join("manifest.json"))?;
    if !quiet {
        eprintln!(
            "stopped after {} generations ({:?}); best SER {}",
            artifact.generations,
            artifact.stop_reason,
            fmt_sig(artifact.best_ser, CSV_DIGITS)
        );
    }
    Ok(0)
}

fn list_fixtures(a: FixturesArgs) -> Result<u8, Failure> {
    let clock = Clock::start();
    let mut listing = Vec::new();
    for id in fixtures::FIXTURE_IDS {
        listing.push(format!("{id}\t{}", fixtures::load_fixture(id)?.source));
    }
    emit(&listing.join("\n"))?;
    if let Some(dir) = &a.export {
        create_dir(dir)?;
        let mut outputs = Vec::new();
        for id in fixtures::FIXTURE_IDS {
            let name = format!("{id}.json");
            write_text(&dir.join(&name), fixtures::fixture_text(id)?)?;
            outputs.push(name);
        }
        Manifest::new("fixtures", json!({ "export": true }), None, outputs, &clock).write(&dir.join("manifest.json"))?;
    }
    Ok(0)
}
