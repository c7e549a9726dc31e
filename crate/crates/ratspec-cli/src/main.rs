//! `ratspec`: fit all-pole spectral models to signals and compare, blend,
//! and organize them with pole-space and optimal-transport distances.
//!
//! The binary is a batch front end over the `ratspec` library: it reads
//! signals (WAV or CSV) and model JSON files, and writes plot-ready CSV or
//! JSON. Numeric output files start with `#` comment lines (or carry JSON
//! fields) naming the metric variant, the order `p`, and the pole-assignment
//! mode, so every artifact is self-describing. Runs are deterministic for
//! fixed inputs, flags, and seed. Set `RAYON_NUM_THREADS` to bound the
//! worker threads used by the parallel subcommands (`distmat`, `cluster`,
//! and the corpus scenario of `reproduce`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ratspec::experiments;
use ratspec::interpolation::{
    barycenter_ot, barycenter_rd, barycentric_coordinates, coordinates_rd_leastsquares,
    spectral_path, root_path, BarycentricCoordinates, PathPoints,
};
use ratspec::io;
use ratspec::learning::{kbarycenter_cluster, knn_classify, RootEmbedding};
use ratspec::metrics::{
    self, distance_matrix, welch_periodogram, Assignment, MetricConfig, Variant,
};
use ratspec::model::{fit_ar, RationalModel, Signal};
use ratspec::transport::{DiscreteMeasure, TransportConfig};

/// Fit all-pole spectral models and compare them with pole-space and
/// optimal-transport distances.
///
/// Signals are read from single-channel 16-bit PCM WAV files or from CSV
/// files with one sample per line; models are JSON files with fields
/// `order`, `poles`, `gain`, and `sample_rate`. Numeric outputs carry `#`
/// header lines (or JSON fields) naming the metric variant, the order p,
/// and the assignment mode. All commands are deterministic given identical
/// inputs, flags, and seed. Set RAYON_NUM_THREADS to bound the thread count
/// of the parallel subcommands (distmat, cluster, reproduce fig7).
#[derive(Parser)]
#[command(name = "ratspec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an all-pole model to a signal and write it as JSON.
    ///
    /// The fitted model is normalized to unit spectral energy, so fits of
    /// signals that differ only in level coincide.
    Fit {
        /// Input signal: `.wav`, or CSV with one sample per line.
        input: PathBuf,
        /// Number of poles to fit.
        #[arg(long)]
        order: usize,
        #[command(flatten)]
        signal: SignalArgs,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Distance between two spectra.
    ///
    /// Model metrics (`rd`, `wrd`, `otrd`, `w-closed`) take two model JSON
    /// files; `w-welch` takes two signal files and compares their averaged
    /// periodograms. Prints a stamped CSV with the distance and its p-th
    /// power; `--out` writes the same bytes to a file.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        signal: SignalArgs,
        /// Optional output CSV path (same content as stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Pairwise distance matrix over model or signal files.
    ///
    /// Writes CSV with file names as row and column headers, or a JSON
    /// document when `--out` ends in `.json`. The matrix is symmetric with
    /// a zero diagonal; off-diagonal entries are computed in parallel.
    Distmat {
        /// Input files: model JSONs, or signal files for `--metric w-welch`.
        #[arg(num_args = 2.., required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        metric: MetricArgs,
        #[command(flatten)]
        signal: SignalArgs,
        /// Output path; `.json` selects the JSON schema, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },

    /// Interpolate between two equal-order models.
    ///
    /// `--metric rd` moves paired poles along straight lines (gain
    /// geometrically) and writes a JSON array of models; `--metric w-closed`
    /// writes displacement-interpolated spectral densities as CSV columns on
    /// a shared frequency grid. Other metric values are rejected.
    Interp {
        a: PathBuf,
        b: PathBuf,
        /// Number of equal steps from t=0 to t=1 (the output has steps+1 points).
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[command(flatten)]
        metric: MetricArgs,
        /// Output path: JSON for `rd`, CSV for `w-closed`.
        #[arg(long)]
        out: PathBuf,
    },

    /// Barycenter of several models.
    ///
    /// `--metric rd` averages paired poles in the plane and writes a model
    /// JSON. `--metric otrd` runs the free-support transport barycenter over
    /// the residue-weighted pole measures and writes the atoms and masses as
    /// JSON. Weights default to uniform.
    Bary {
        /// Input model JSON files.
        #[arg(num_args = 1.., required = true)]
        files: Vec<PathBuf>,
        /// Comma-separated convex weights, one per input (default uniform).
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[command(flatten)]
        metric: MetricArgs,
        /// Output path: model JSON for `rd`, atom/mass JSON for `otrd`.
        #[arg(long)]
        out: PathBuf,
    },

    /// Project a query model onto the barycentric hull of a dictionary.
    ///
    /// `--metric rd` solves the sum-one (optionally nonnegative)
    /// least-squares projection in root space; `--metric otrd` searches for
    /// convex weights whose transport barycenter is closest to the query.
    /// Writes the weights and the achieved objective as JSON.
    Project {
        /// Query model JSON.
        query: PathBuf,
        /// Dictionary model JSON files.
        #[arg(num_args = 1.., required = true)]
        dictionary: Vec<PathBuf>,
        /// Allow negative weights in the `rd` least-squares projection.
        #[arg(long)]
        allow_negative: bool,
        #[command(flatten)]
        metric: MetricArgs,
        /// Output JSON path (weights are also printed).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Cluster models by K-barycenter over their pole measures.
    ///
    /// Assigns each model to its transport-nearest barycenter, re-solving
    /// the barycenters until the assignment settles. Writes `file,cluster`
    /// CSV to `--out` and the nonincreasing objective trace to a sibling
    /// `.trace.json` file.
    Cluster {
        /// Input model JSON files.
        #[arg(num_args = 2.., required = true)]
        files: Vec<PathBuf>,
        /// Number of clusters.
        #[arg(long)]
        k: usize,
        /// Outer assignment/update rounds.
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[command(flatten)]
        metric: MetricArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Classify query models by k-nearest-neighbor vote in root space.
    ///
    /// The training set is a CSV of `path,label` lines (paths resolved
    /// relative to the CSV's directory). Predictions are printed and
    /// optionally written as `file,label` CSV.
    Classify {
        /// Training listing: CSV lines `model.json,label`.
        #[arg(long)]
        train: PathBuf,
        /// Neighborhood size for the majority vote.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Query model JSON files.
        #[arg(num_args = 1.., required = true)]
        queries: Vec<PathBuf>,
        /// Optional output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Averaged periodogram of a signal, written as `omega,density` CSV.
    ///
    /// Windows of `--window` samples (Hann, half-overlapping) are averaged;
    /// the density is per rad/s on the one-sided frequency grid.
    Welch {
        /// Input signal: `.wav`, or CSV with one sample per line.
        input: PathBuf,
        #[command(flatten)]
        signal: SignalArgs,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Regenerate a built-in validation scenario and write its CSV data.
    ///
    /// Each scenario rebuilds its synthetic dataset from scratch, writes
    /// plot-ready CSV to `--out`, prints one PASS/FAIL line per acceptance
    /// check, and exits nonzero naming any check that failed.
    Reproduce {
        /// Scenario to regenerate.
        #[arg(value_enum)]
        scenario: Scenario,
        /// Seed for scenarios that draw random data (fig5, fig7).
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Distance-selection flags shared by the comparison subcommands.
#[derive(Args)]
struct MetricArgs {
    /// Distance family.
    #[arg(long, value_enum, default_value_t = MetricChoice::Otrd)]
    metric: MetricChoice,
    /// Distance order; ground costs are |.|^p.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Pole pairing rule for rd and wrd.
    #[arg(long, value_enum, default_value_t = AssignmentChoice::Sorted)]
    assignment: AssignmentChoice,
    /// Entropic regularization weight for iterative transport solves.
    #[arg(long, default_value_t = 100.0)]
    sinkhorn_lambda: f64,
    /// Marginal relaxation penalty. A finite value switches `otrd` to the
    /// mass-relaxed solver, which may leave mass unmatched instead of
    /// hauling it across large frequency gaps.
    #[arg(long)]
    rho: Option<f64>,
    /// Rescale models to unit spectral energy before comparing.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    normalize: Switch,
}

/// Signal-reading flags (ignored for model JSON inputs).
#[derive(Args)]
struct SignalArgs {
    /// Sample rate in Hz for CSV signal inputs (WAV carries its own).
    #[arg(long, default_value_t = 1.0)]
    sample_rate: f64,
    /// Periodogram window length for `w-welch` and `welch`.
    #[arg(long, default_value_t = 128)]
    window: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    /// Order-p pole matching distance.
    Rd,
    /// Pole matching with residue-derived mass weights.
    Wrd,
    /// Optimal transport between residue-weighted pole measures.
    Otrd,
    /// Closed-form Wasserstein distance between the continuous spectra.
    WClosed,
    /// Wasserstein distance between averaged periodograms of two signals.
    WWelch,
}

impl MetricChoice {
    fn name(self) -> &'static str {
        match self {
            MetricChoice::Rd => "rd",
            MetricChoice::Wrd => "wrd",
            MetricChoice::Otrd => "otrd",
            MetricChoice::WClosed => "w-closed",
            MetricChoice::WWelch => "w-welch",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AssignmentChoice {
    /// Pair canonically sorted pole lists index by index.
    Sorted,
    /// Exact minimum-cost pairing.
    Optimal,
}

impl From<AssignmentChoice> for Assignment {
    fn from(choice: AssignmentChoice) -> Self {
        match choice {
            AssignmentChoice::Sorted => Assignment::Sorted,
            AssignmentChoice::Optimal => Assignment::Optimal,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    /// Sinusoid frequency sweep: each distance from a fixed reference tone,
    /// rescaled to maximum 1, with closed-form and periodogram references.
    Fig4,
    /// Lowpass cutoff sweep on filtered noise: pole distances against the
    /// cutoff offset from a fixed reference filter.
    Fig5,
    /// Bandpass corpus: 2500 noise-driven fits from 50 systems embedded in
    /// two principal components, labeled by source system.
    Fig7,
    /// Mass-relaxed transport between a three-signature pole dictionary and
    /// a query with one signature missing and an off-signature pair added.
    Fig11,
}

impl MetricArgs {
    /// Library config for the model metrics. `w-welch` has no model-side
    /// config and is dispatched separately.
    fn config(&self) -> Result<MetricConfig> {
        let variant = match (self.metric, self.rho) {
            (MetricChoice::Rd, _) => Variant::Rd,
            (MetricChoice::Wrd, _) => Variant::Wrd,
            (MetricChoice::Otrd, None) => Variant::Otrd,
            (MetricChoice::Otrd, Some(_)) => Variant::OtrdUnbalanced,
            (MetricChoice::WClosed, _) => Variant::WClosed,
            (MetricChoice::WWelch, _) => {
                bail!("w-welch compares signal files; it has no model-metric config")
            }
        };
        Ok(MetricConfig {
            p: self.p,
            assignment: self.assignment.into(),
            variant,
            transport: self.transport(),
        })
    }

    fn transport(&self) -> TransportConfig {
        TransportConfig {
            cost_exponent: self.p,
            lambda: self.sinkhorn_lambda,
            marginal_penalty: self.rho.unwrap_or(f64::INFINITY),
            ..TransportConfig::default()
        }
    }

    /// Metric name as it appears in output headers.
    fn header_name(&self) -> String {
        if self.metric == MetricChoice::Otrd && self.rho.is_some() {
            "otrd-unbalanced".to_string()
        } else {
            self.metric.name().to_string()
        }
    }

    fn assignment_name(&self) -> &'static str {
        match self.metric {
            // Transport and quantile couplings are computed, not chosen.
            MetricChoice::Otrd | MetricChoice::WClosed | MetricChoice::WWelch => "transport",
            _ => match self.assignment {
                AssignmentChoice::Sorted => "sorted",
                AssignmentChoice::Optimal => "optimal",
            },
        }
    }

    /// `#`-comment header naming metric, order, and assignment mode.
    fn stamp(&self) -> String {
        format!(
            "# metric={} p={} assignment={}\n",
            self.header_name(),
            self.p,
            self.assignment_name()
        )
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { input, order, signal, out } => run_fit(&input, order, &signal, &out),
        Command::Dist { a, b, metric, signal, out } => {
            run_dist(&a, &b, &metric, &signal, out.as_deref())
        }
        Command::Distmat { files, metric, signal, out } => {
            run_distmat(&files, &metric, &signal, &out)
        }
        Command::Interp { a, b, steps, metric, out } => run_interp(&a, &b, steps, &metric, &out),
        Command::Bary { files, weights, metric, out } => {
            run_bary(&files, &weights, &metric, &out)
        }
        Command::Project { query, dictionary, allow_negative, metric, out } => {
            run_project(&query, &dictionary, allow_negative, &metric, out.as_deref())
        }
        Command::Cluster { files, k, iterations, metric, out } => {
            run_cluster(&files, k, iterations, &metric, &out)
        }
        Command::Classify { train, k, queries, out } => {
            run_classify(&train, k, &queries, out.as_deref())
        }
        Command::Welch { input, signal, out } => run_welch(&input, &signal, &out),
        Command::Reproduce { scenario, seed, out } => run_reproduce(scenario, seed, &out),
    }
}

// ---------------------------------------------------------------------------
// Input helpers
// ---------------------------------------------------------------------------

fn load_signal(path: &Path, args: &SignalArgs) -> Result<Signal> {
    let is_wav = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("wav"))
        .unwrap_or(false);
    let signal = if is_wav {
        io::load_wav(path)
    } else {
        io::load_csv_signal(path, args.sample_rate)
    };
    signal.with_context(|| format!("reading signal {}", path.display()))
}

fn load_model(path: &Path, normalize: Switch) -> Result<RationalModel> {
    let model =
        io::load_model(path).with_context(|| format!("reading model {}", path.display()))?;
    match normalize {
        Switch::On => model
            .normalize_energy()
            .with_context(|| format!("normalizing {}", path.display())),
        Switch::Off => Ok(model),
    }
}

fn load_models(paths: &[PathBuf], normalize: Switch) -> Result<Vec<RationalModel>> {
    paths.iter().map(|p| load_model(p, normalize)).collect()
}

/// Residue-weighted pole measures, normalized to unit mass (the convention
/// of the balanced transport distance).
fn measures_of(models: &[RationalModel]) -> Result<Vec<DiscreteMeasure>> {
    models
        .iter()
        .map(|m| DiscreteMeasure::from_model(m).map(|d| d.normalized()).map_err(Into::into))
        .collect()
}

/// File stem used to label matrix rows and cluster listings.
fn display_name(path: &Path) -> String {
    path.display().to_string()
}

fn write_output(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn convex_weights(weights: &[f64], n: usize) -> Result<BarycentricCoordinates> {
    if weights.is_empty() {
        return Ok(BarycentricCoordinates::uniform(n)?);
    }
    if weights.len() != n {
        bail!("{} weights given for {} inputs", weights.len(), n);
    }
    Ok(BarycentricCoordinates::new(weights.to_vec())?)
}

fn json_weights(weights: &[f64]) -> serde_json::Value {
    serde_json::Value::Array(
        weights.iter().map(|&w| serde_json::json!(w)).collect(),
    )
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run_fit(input: &Path, order: usize, signal: &SignalArgs, out: &Path) -> Result<()> {
    let signal = load_signal(input, signal)?;
    let model = fit_ar(&signal, order)
        .with_context(|| format!("fitting order-{order} model to {}", input.display()))?;
    io::save_model(out, &model).with_context(|| format!("writing {}", out.display()))?;
    println!("fit order={} poles={} -> {}", order, model.order(), out.display());
    Ok(())
}

fn distance_between(
    a: &Path,
    b: &Path,
    metric: &MetricArgs,
    signal: &SignalArgs,
) -> Result<(f64, f64)> {
    if metric.metric == MetricChoice::WWelch {
        let s1 = load_signal(a, signal)?;
        let s2 = load_signal(b, signal)?;
        let d = metrics::w_welch(&s1, &s2, signal.window, metric.p)?;
        return Ok((d.value, d.raw));
    }
    let config = metric.config()?;
    let m1 = load_model(a, metric.normalize)?;
    let m2 = load_model(b, metric.normalize)?;
    let d = metrics::evaluate(&m1, &m2, &config)
        .with_context(|| format!("{} between {} and {}", metric.header_name(), a.display(), b.display()))?;
    Ok((d.value, d.raw))
}

fn run_dist(
    a: &Path,
    b: &Path,
    metric: &MetricArgs,
    signal: &SignalArgs,
    out: Option<&Path>,
) -> Result<()> {
    let (value, raw) = distance_between(a, b, metric, signal)?;
    let mut content = metric.stamp();
    content.push_str("distance,raw\n");
    let _ = writeln!(content, "{value},{raw}");
    print!("{content}");
    if let Some(path) = out {
        write_output(path, &content)?;
    }
    Ok(())
}

fn run_distmat(
    files: &[PathBuf],
    metric: &MetricArgs,
    signal: &SignalArgs,
    out: &Path,
) -> Result<()> {
    let matrix = if metric.metric == MetricChoice::WWelch {
        let signals: Vec<Signal> =
            files.iter().map(|f| load_signal(f, signal)).collect::<Result<_>>()?;
        distance_matrix(&signals, |x, y| {
            Ok(metrics::w_welch(x, y, signal.window, metric.p)?.value)
        })?
    } else {
        let config = metric.config()?;
        let models = load_models(files, metric.normalize)?;
        distance_matrix(&models, |x, y| Ok(metrics::evaluate(x, y, &config)?.value))?
    };

    let names: Vec<String> = files.iter().map(|f| display_name(f)).collect();
    let is_json = out.extension().map(|e| e.eq_ignore_ascii_case("json")).unwrap_or(false);
    let content = if is_json {
        let doc = serde_json::json!({
            "metric": metric.header_name(),
            "p": metric.p,
            "assignment": metric.assignment_name(),
            "files": names,
            "matrix": matrix,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("matrix serializes");
        text.push('\n');
        text
    } else {
        let mut text = metric.stamp();
        let _ = writeln!(text, "file,{}", names.join(","));
        for (name, row) in names.iter().zip(&matrix) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(text, "{name},{}", cells.join(","));
        }
        text
    };
    write_output(out, &content)?;
    println!("distmat {}x{} ({}) -> {}", files.len(), files.len(), metric.header_name(), out.display());
    Ok(())
}

fn run_interp(a: &Path, b: &Path, steps: usize, metric: &MetricArgs, out: &Path) -> Result<()> {
    if steps == 0 {
        bail!("--steps must be at least 1");
    }
    let m1 = load_model(a, metric.normalize)?;
    let m2 = load_model(b, metric.normalize)?;
    let t_values: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();

    match metric.metric {
        MetricChoice::Rd => {
            let path = root_path(&m1, &m2, &t_values, metric.assignment.into())?;
            let PathPoints::Roots(models) = path.points else { unreachable!() };
            let entries: Vec<serde_json::Value> = t_values
                .iter()
                .zip(&models)
                .map(|(t, m)| {
                    serde_json::json!({
                        "t": t,
                        "order": m.order(),
                        "poles": m.poles().iter().map(|p| [p.re, p.im]).collect::<Vec<_>>(),
                        "gain": m.gain(),
                        "sample_rate": m.sample_rate(),
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "metric": metric.header_name(),
                "p": metric.p,
                "assignment": metric.assignment_name(),
                "path": entries,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("path serializes");
            text.push('\n');
            write_output(out, &text)?;
        }
        MetricChoice::WClosed => {
            let extent = m1.grid_extent().max(m2.grid_extent());
            let grid: Vec<f64> = (0..2001).map(|k| extent * k as f64 / 2000.0).collect();
            let path = spectral_path(&m1, &m2, &t_values, &grid)?;
            let PathPoints::Spectra(spectra) = path.points else { unreachable!() };
            let mut text = metric.stamp();
            let labels: Vec<String> = t_values.iter().map(|t| format!("density_t{t}")).collect();
            let _ = writeln!(text, "omega,{}", labels.join(","));
            for (i, &w) in grid.iter().enumerate() {
                let row: Vec<String> =
                    spectra.iter().map(|s| format!("{}", s.density[i])).collect();
                let _ = writeln!(text, "{w},{}", row.join(","));
            }
            write_output(out, &text)?;
        }
        other => bail!(
            "--metric {} has no interpolant; choose rd (pole path) or w-closed (density path)",
            other.name()
        ),
    }
    println!("interp {} steps ({}) -> {}", steps, metric.header_name(), out.display());
    Ok(())
}

fn run_bary(files: &[PathBuf], weights: &[f64], metric: &MetricArgs, out: &Path) -> Result<()> {
    let models = load_models(files, metric.normalize)?;
    let lambda = convex_weights(weights, models.len())?;

    match metric.metric {
        MetricChoice::Rd => {
            let center = barycenter_rd(&models, &lambda, false)?;
            io::save_model(out, &center)?;
            println!("bary rd over {} models -> {}", models.len(), out.display());
        }
        MetricChoice::Otrd => {
            let measures = measures_of(&models)?;
            let result = barycenter_ot(&measures, &lambda, &metric.transport())?;
            let doc = serde_json::json!({
                "metric": metric.header_name(),
                "p": metric.p,
                "assignment": "transport",
                "atoms": result.measure.atoms().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "masses": result.measure.masses(),
                "objective": result.objective,
                "converged": result.converged,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("barycenter serializes");
            text.push('\n');
            write_output(out, &text)?;
            println!(
                "bary otrd over {} measures, objective {} -> {}",
                models.len(),
                result.objective,
                out.display()
            );
        }
        other => bail!(
            "--metric {} has no barycenter; choose rd (pole average) or otrd (transport)",
            other.name()
        ),
    }
    Ok(())
}

fn run_project(
    query: &Path,
    dictionary: &[PathBuf],
    allow_negative: bool,
    metric: &MetricArgs,
    out: Option<&Path>,
) -> Result<()> {
    let q = load_model(query, metric.normalize)?;
    let dict = load_models(dictionary, metric.normalize)?;

    let doc = match metric.metric {
        MetricChoice::Rd => {
            let fit = coordinates_rd_leastsquares(&q, &dict, !allow_negative)?;
            serde_json::json!({
                "metric": metric.header_name(),
                "p": metric.p,
                "assignment": "sorted",
                "weights": json_weights(&fit.weights),
                "residual": fit.residual,
                "rank_deficient": fit.rank_deficient,
            })
        }
        MetricChoice::Otrd => {
            let measures = measures_of(&dict)?;
            let target = DiscreteMeasure::from_model(&q)?;
            let result = barycentric_coordinates(&target, &measures, &metric.transport())?;
            serde_json::json!({
                "metric": metric.header_name(),
                "p": metric.p,
                "assignment": "transport",
                "weights": json_weights(result.coordinates.weights()),
                "objective": result.objective,
                "converged": result.converged,
            })
        }
        other => bail!(
            "--metric {} has no projection; choose rd (least squares) or otrd (transport)",
            other.name()
        ),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("projection serializes");
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        write_output(path, &text)?;
    }
    Ok(())
}

fn run_cluster(
    files: &[PathBuf],
    k: usize,
    iterations: usize,
    metric: &MetricArgs,
    out: &Path,
) -> Result<()> {
    let models = load_models(files, metric.normalize)?;
    let measures = measures_of(&models)?;
    let assignment = kbarycenter_cluster(&measures, k, &metric.transport(), iterations)?;

    let mut text = metric.stamp();
    text.push_str("file,cluster\n");
    for (file, label) in files.iter().zip(&assignment.labels) {
        let _ = writeln!(text, "{},{label}", display_name(file));
    }
    write_output(out, &text)?;

    let trace_doc = serde_json::json!({
        "metric": metric.header_name(),
        "p": metric.p,
        "assignment": "transport",
        "k": k,
        "objective": assignment.objective,
        "trace": assignment.trace,
    });
    let trace_path = out.with_extension("trace.json");
    let mut trace_text = serde_json::to_string_pretty(&trace_doc).expect("trace serializes");
    trace_text.push('\n');
    write_output(&trace_path, &trace_text)?;

    println!(
        "cluster k={} objective {} -> {} (trace {})",
        k,
        assignment.objective,
        out.display(),
        trace_path.display()
    );
    Ok(())
}

/// Parses `path,label` lines; blank lines and `#` comments are skipped and
/// relative paths are resolved against the listing's directory.
fn load_training(listing: &Path) -> Result<Vec<RootEmbedding>> {
    let text = fs::read_to_string(listing)
        .with_context(|| format!("reading training listing {}", listing.display()))?;
    let base = listing.parent().unwrap_or_else(|| Path::new("."));
    let mut training = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, label) = line.rsplit_once(',').with_context(|| {
            format!("{}:{}: expected `path,label`", listing.display(), idx + 1)
        })?;
        let mut full = PathBuf::from(path.trim());
        if full.is_relative() {
            full = base.join(full);
        }
        let model = load_model(&full, Switch::On)?;
        training.push(RootEmbedding::from_model(&model, Some(label.trim().to_string())));
    }
    if training.is_empty() {
        bail!("{}: no training entries", listing.display());
    }
    Ok(training)
}

fn run_classify(train: &Path, k: usize, queries: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let training = load_training(train)?;
    let mut text = String::from("# metric=rd p=2 assignment=sorted\nfile,label\n");
    for query in queries {
        let model = load_model(query, Switch::On)?;
        let embedding = RootEmbedding::from_model(&model, None);
        let label = knn_classify(&embedding, &training, k)
            .with_context(|| format!("classifying {}", query.display()))?;
        println!("{} -> {label}", query.display());
        let _ = writeln!(text, "{},{label}", display_name(query));
    }
    if let Some(path) = out {
        write_output(path, &text)?;
    }
    Ok(())
}

fn run_welch(input: &Path, signal: &SignalArgs, out: &Path) -> Result<()> {
    let s = load_signal(input, signal)?;
    let spectrum = welch_periodogram(&s, signal.window)?;
    let mut text = String::from("# metric=w-welch p=none assignment=none\n");
    let _ = writeln!(text, "# window={} sample_rate={}", signal.window, s.sample_rate());
    text.push_str("omega,density\n");
    for (w, d) in spectrum.grid.iter().zip(&spectrum.density) {
        let _ = writeln!(text, "{w},{d}");
    }
    write_output(out, &text)?;
    println!("welch {} bins -> {}", spectrum.grid.len(), out.display());
    Ok(())
}

fn run_reproduce(scenario: Scenario, seed: Option<u64>, out: &Path) -> Result<()> {
    let (csv, checks) = match scenario {
        Scenario::Fig4 => {
            if seed.is_some() {
                eprintln!("note: the frequency sweep is deterministic; --seed is ignored");
            }
            let sweep = experiments::sinusoid_frequency_sweep()?;
            (sweep.csv(), sweep.checks())
        }
        Scenario::Fig5 => {
            let sweep = experiments::lowpass_cutoff_sweep(seed.unwrap_or(42))?;
            (sweep.csv(), sweep.checks())
        }
        Scenario::Fig7 => {
            let corpus = experiments::bandpass_corpus(seed.unwrap_or(7))?;
            (corpus.csv(), corpus.checks())
        }
        Scenario::Fig11 => {
            if seed.is_some() {
                eprintln!("note: the signature-transport scenario is deterministic; --seed is ignored");
            }
            let transport = experiments::signature_transport()?;
            (transport.csv(), transport.checks())
        }
    };
    write_output(out, &csv)?;
    for check in &checks {
        println!("{}", check.line());
    }
    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        bail!("failed checks: {}", failed.join(", "));
    }
    println!("wrote {}", out.display());
    Ok(())
}
