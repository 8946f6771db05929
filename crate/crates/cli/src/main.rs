//! Elastic shape matching CLI.
//!
//! Subcommands: `match`, `distance`, `dist-matrix`, `mds`, `interpolate`.
//! Every command takes `--config` (TOML run configuration), `--output`
//! (directory for result files), `--seed` and `--threads`. Exit codes:
//! 0 success, 1 numerical failure, 2 input error, 3 partial batch failure.
//! Logging is controlled by `RUST_LOG` only.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use shapematch::{
    atoms, classical_mds, distance_matrix, match_to_atoms_from, read_shape, srnf_interpolate,
    write_shape, DiscreteShape, Error, MatchRecord, Polyline, Result, Shape, ShapeFormat, TriMesh,
};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "shapematch",
    version,
    about = "Elastic shape matching with SRNF energies and varifold fidelity"
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    output: PathBuf,

    /// Random seed recorded in all outputs (reserved for tie-breaking).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for kernel sums and batch pairs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Match a template shape onto a target shape.
    Match {
        template: PathBuf,
        target: PathBuf,
    },
    /// Unparametrized shape distance between two shapes.
    Distance { a: PathBuf, b: PathBuf },
    /// All-pairs distance matrix over shape files.
    #[command(name = "dist-matrix")]
    DistMatrix {
        #[arg(required = true)]
        shapes: Vec<PathBuf>,
    },
    /// Classical MDS embedding of a symmetric distance matrix CSV.
    Mds {
        matrix: PathBuf,
        /// Embedding dimension (overrides the config).
        #[arg(long)]
        dim: Option<usize>,
    },
    /// SRNF linear-homotopy interpolation between two curves.
    Interpolate {
        a: PathBuf,
        b: PathBuf,
        /// Number of frames including both endpoints.
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error_kind: &'a str,
    message: String,
    exit_code: u8,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::DegenerateCell { .. } | Error::ZeroCell { .. } | Error::NonFiniteValue(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code_for(&e);
            let record = ErrorRecord {
                error_kind: e.kind(),
                message: e.to_string(),
                exit_code: code,
            };
            let json = serde_json::to_string_pretty(&record).expect("error record serializes");
            eprintln!("{json}");
            if std::fs::create_dir_all(&cli.output).is_ok() {
                let _ = std::fs::write(cli.output.join("error_record.json"), json);
            }
            ExitCode::from(code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(0);
    }

    let Some(command) = &cli.command else {
        return Err(Error::ConfigError(
            "no command given; see --help for match, distance, dist-matrix, mds, interpolate".into(),
        ));
    };

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.output)?;

    match command {
        Command::Match { template, target } => cmd_match(cli, &config, template, target),
        Command::Distance { a, b } => cmd_distance(cli, &config, a, b),
        Command::DistMatrix { shapes } => cmd_dist_matrix(cli, &config, shapes),
        Command::Mds { matrix, dim } => cmd_mds(cli, &config, matrix, dim.unwrap_or(config.mds_dim)),
        Command::Interpolate { a, b, steps } => cmd_interpolate(cli, &config, a, b, *steps),
    }
}

fn load(path: &Path) -> Result<(Shape, ShapeFormat)> {
    let format = ShapeFormat::from_path(path)?;
    Ok((read_shape(path, format)?, format))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn stem_with_ext(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

// ---------------------------------------------------------------------------
// match
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MatchRunRecord<'a> {
    command: &'a str,
    template: String,
    target: String,
    /// File name next to this record.
    matched_shape_file: String,
    seed: u64,
    config: &'a RunConfig,
    result: &'a MatchRecord,
}

/// Runs the matcher for one concrete shape type and returns the deformed
/// shape together with the serializable diagnostics.
fn run_match_generic<const D: usize, S: DiscreteShape<D>>(
    template: &S,
    target: &S,
    init: Option<&S>,
    config: &RunConfig,
) -> Result<(S, MatchRecord)> {
    let match_config = config.match_config();
    let target_atoms = atoms(target)?;
    let result = match_to_atoms_from(
        template,
        init.unwrap_or(template),
        &target_atoms,
        &match_config,
    )?;
    let record = result.record();
    Ok((result.shape, record))
}

fn resolve_init(config: &RunConfig, template: &Shape) -> Result<Option<Shape>> {
    if config.init == "template" {
        return Ok(None);
    }
    let path = PathBuf::from(&config.init);
    let (shape, _) = load(&path)?;
    if shape.ambient_dim() != template.ambient_dim() {
        return Err(Error::DimensionMismatch(
            "initial shape and template have different ambient dimensions".into(),
        ));
    }
    Ok(Some(shape))
}

fn cmd_match(cli: &Cli, config: &RunConfig, template_path: &Path, target_path: &Path) -> Result<u8> {
    let (template, template_format) = load(template_path)?;
    let (target, _) = load(target_path)?;
    let init = resolve_init(config, &template)?;
    let (matched, record) = match (&template, &target) {
        (Shape::Curve(t), Shape::Curve(g)) => {
            let init = match &init {
                Some(Shape::Curve(i)) => Some(i.clone()),
                _ => None,
            };
            let (shape, record) = run_match_generic(t, g, init.as_ref(), config)?;
            (Shape::Curve(shape), record)
        }
        (Shape::Mesh(t), Shape::Mesh(g)) => {
            let init = match &init {
                Some(Shape::Mesh(i)) => Some(i.clone()),
                _ => None,
            };
            let (shape, record) = run_match_generic(t, g, init.as_ref(), config)?;
            (Shape::Mesh(shape), record)
        }
        _ => {
            return Err(Error::DimensionMismatch(
                "template and target must both be curves or both be meshes".into(),
            ))
        }
    };

    let ext = template_path
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_default();
    let matched_file = cli.output.join(format!("matched_{}.{ext}", stem(template_path)));
    write_shape(&matched, &matched_file, template_format)?;

    let trace_file = cli.output.join("energy_trace.csv");
    std::fs::write(&trace_file, energy_trace_csv(&record))?;

    let run_record = MatchRunRecord {
        command: "match",
        template: template_path.display().to_string(),
        target: target_path.display().to_string(),
        matched_shape_file: stem_with_ext(&matched_file),
        seed: config.seed,
        config,
        result: &record,
    };
    let record_file = cli.output.join("match_record.json");
    std::fs::write(&record_file, to_json(&run_record))?;

    println!(
        "matched {} -> {}: varifold residual_rel {:.6e}, srnf distance {:.6e}, {} stages",
        stem(template_path),
        stem(target_path),
        record.final_residual_rel,
        record.final_srnf_dist,
        record.stages.len()
    );
    println!("wrote {}", matched_file.display());
    println!("wrote {}", record_file.display());
    Ok(0)
}

fn energy_trace_csv(record: &MatchRecord) -> String {
    let mut out = String::from("stage,sigma,lambda,iteration,energy\n");
    for (si, stage) in record.stages.iter().enumerate() {
        for (it, value) in stage.energy_trace.iter().enumerate() {
            let _ = writeln!(out, "{si},{},{},{it},{value}", stage.sigma, stage.lambda);
        }
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// distance
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DistanceRunRecord<'a> {
    command: &'a str,
    a: String,
    b: String,
    seed: u64,
    symmetrized: bool,
    distance: f64,
    distance_ab: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance_ba: Option<f64>,
    config: &'a RunConfig,
    result_ab: MatchRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    result_ba: Option<MatchRecord>,
}

fn cmd_distance(cli: &Cli, config: &RunConfig, path_a: &Path, path_b: &Path) -> Result<u8> {
    let (a, _) = load(path_a)?;
    let (b, _) = load(path_b)?;
    let (d_ab, rec_ab, d_ba, rec_ba) = match (&a, &b) {
        (Shape::Curve(a), Shape::Curve(b)) => distance_pair(a, b, config)?,
        (Shape::Mesh(a), Shape::Mesh(b)) => distance_pair(a, b, config)?,
        _ => {
            return Err(Error::DimensionMismatch(
                "both shapes must be curves or both meshes".into(),
            ))
        }
    };
    let distance = match d_ba {
        Some(d_ba) => 0.5 * (d_ab + d_ba),
        None => d_ab,
    };
    let record = DistanceRunRecord {
        command: "distance",
        a: path_a.display().to_string(),
        b: path_b.display().to_string(),
        seed: config.seed,
        symmetrized: config.symmetrize,
        distance,
        distance_ab: d_ab,
        distance_ba: d_ba,
        config,
        result_ab: rec_ab,
        result_ba: rec_ba,
    };
    let record_file = cli.output.join("distance_record.json");
    std::fs::write(&record_file, to_json(&record))?;
    println!("{distance}");
    println!("wrote {}", record_file.display());
    Ok(0)
}

fn distance_pair<const D: usize, S: DiscreteShape<D>>(
    a: &S,
    b: &S,
    config: &RunConfig,
) -> Result<(f64, MatchRecord, Option<f64>, Option<MatchRecord>)> {
    let match_config = config.match_config();
    let forward = shapematch::match_shapes(a, b, &match_config)?;
    let (d_ab, rec_ab) = (forward.final_srnf_dist, forward.record());
    if config.symmetrize {
        let backward = shapematch::match_shapes(b, a, &match_config)?;
        Ok((
            d_ab,
            rec_ab,
            Some(backward.final_srnf_dist),
            Some(backward.record()),
        ))
    } else {
        Ok((d_ab, rec_ab, None, None))
    }
}

// ---------------------------------------------------------------------------
// dist-matrix
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MatrixRunRecord<'a> {
    command: &'a str,
    inputs: Vec<String>,
    seed: u64,
    config: &'a RunConfig,
    matrix: &'a shapematch::DistanceMatrixRecord,
}

fn matrix_csv(ids: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("id");
    for id in ids {
        let _ = write!(out, ",{id}");
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(rows) {
        let _ = write!(out, "{id}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn cmd_dist_matrix(cli: &Cli, config: &RunConfig, paths: &[PathBuf]) -> Result<u8> {
    let mut curves: Vec<(String, Polyline)> = Vec::new();
    let mut meshes: Vec<(String, TriMesh)> = Vec::new();
    for path in paths {
        let id = stem(path);
        if id.contains(',') || id.contains('"') {
            return Err(Error::ConfigError(format!(
                "shape identifier {id:?} contains CSV delimiters"
            )));
        }
        match load(path)?.0 {
            Shape::Curve(c) => curves.push((id, c)),
            Shape::Mesh(m) => meshes.push((id, m)),
        }
    }
    if !curves.is_empty() && !meshes.is_empty() {
        return Err(Error::DimensionMismatch(
            "cannot mix curves and meshes in one distance matrix".into(),
        ));
    }
    let match_config = config.match_config();
    let record = if curves.is_empty() {
        distance_matrix(&meshes, &match_config)?
    } else {
        distance_matrix(&curves, &match_config)?
    };

    let raw_file = cli.output.join("distance_matrix_raw.csv");
    std::fs::write(&raw_file, matrix_csv(&record.ids, &record.raw))?;
    let sym_file = cli.output.join("distance_matrix_sym.csv");
    std::fs::write(&sym_file, matrix_csv(&record.ids, &record.symmetrized))?;
    let run_record = MatrixRunRecord {
        command: "dist-matrix",
        inputs: paths.iter().map(|p| p.display().to_string()).collect(),
        seed: config.seed,
        config,
        matrix: &record,
    };
    let record_file = cli.output.join("distance_matrix_record.json");
    std::fs::write(&record_file, to_json(&run_record))?;

    let failed = record.failed_pairs();
    println!(
        "{} shapes, {} ordered pairs, {} failed",
        record.ids.len(),
        record.pairs.len(),
        failed
    );
    for f in [&raw_file, &sym_file, &record_file] {
        println!("wrote {}", f.display());
    }
    Ok(if failed > 0 { 3 } else { 0 })
}

// ---------------------------------------------------------------------------
// mds
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct MdsRunRecord<'a> {
    command: &'a str,
    method: &'a str,
    input: String,
    dim: usize,
    seed: u64,
    eigenvalues: &'a [f64],
    clamped: usize,
    coordinates_file: String,
}

fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::ParseError {
            path: path.display().to_string(),
            line: 0,
            message: "file not found".into(),
        },
        _ => Error::Io(e),
    })?;
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate().peekable();
    let labelled = lines
        .peek()
        .map(|(_, l)| l.starts_with("id,"))
        .unwrap_or(false);
    let mut ids = Vec::new();
    if labelled {
        let (_, header) = lines.next().unwrap();
        ids = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let values = if labelled { &fields[1..] } else { &fields[..] };
        let row = values
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::ParseError {
                    path: name.clone(),
                    line: idx + 1,
                    message: format!("invalid number {s:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if ids.is_empty() {
        ids = (0..rows.len()).map(|i| i.to_string()).collect();
    }
    Ok((ids, rows))
}

fn cmd_mds(cli: &Cli, config: &RunConfig, matrix_path: &Path, dim: usize) -> Result<u8> {
    let (ids, rows) = read_matrix_csv(matrix_path)?;
    let embedding = classical_mds(&rows, dim)?;

    let mut csv = String::from("id");
    for k in 0..dim {
        let _ = write!(csv, ",c{k}");
    }
    csv.push('\n');
    for (id, coords) in ids.iter().zip(&embedding.coordinates) {
        let _ = write!(csv, "{id}");
        for v in coords {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let coords_file = cli.output.join("mds_coordinates.csv");
    std::fs::write(&coords_file, csv)?;

    let record = MdsRunRecord {
        command: "mds",
        method: "classical",
        input: matrix_path.display().to_string(),
        dim,
        seed: config.seed,
        eigenvalues: &embedding.eigenvalues,
        clamped: embedding.clamped,
        coordinates_file: stem_with_ext(&coords_file),
    };
    let record_file = cli.output.join("mds_record.json");
    std::fs::write(&record_file, to_json(&record))?;
    println!("wrote {}", coords_file.display());
    println!("wrote {}", record_file.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// interpolate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct InterpolateRunRecord<'a> {
    command: &'a str,
    a: String,
    b: String,
    steps: usize,
    seed: u64,
    frames: Vec<String>,
    /// Closed-inversion residual per frame (zero for open curves).
    residuals: &'a [f64],
}

fn cmd_interpolate(
    cli: &Cli,
    config: &RunConfig,
    path_a: &Path,
    path_b: &Path,
    steps: usize,
) -> Result<u8> {
    let (a, format) = load(path_a)?;
    let (b, _) = load(path_b)?;
    let (Shape::Curve(a), Shape::Curve(b)) = (&a, &b) else {
        return Err(Error::UnsupportedShape(
            "interpolation is defined for planar curves only (surface SRNF inversion is out of scope)"
                .into(),
        ));
    };
    let interp = srnf_interpolate(a, b, steps)?;

    let ext = path_a
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut frame_files = Vec::with_capacity(interp.frames.len());
    for (k, frame) in interp.frames.iter().enumerate() {
        let file = cli.output.join(format!("frame_{k:03}.{ext}"));
        write_shape(&Shape::Curve(frame.clone()), &file, format)?;
        frame_files.push(stem_with_ext(&file));
    }
    let record = InterpolateRunRecord {
        command: "interpolate",
        a: path_a.display().to_string(),
        b: path_b.display().to_string(),
        steps,
        seed: config.seed,
        frames: frame_files,
        residuals: &interp.residuals,
    };
    let record_file = cli.output.join("interpolation_manifest.json");
    std::fs::write(&record_file, to_json(&record))?;
    println!("wrote {} frames", interp.frames.len());
    println!("wrote {}", record_file.display());
    Ok(0)
}
