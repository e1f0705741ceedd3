use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use qqe::embedding::{load_external_embedding, pca_init, EmbeddingInit};
use qqe::io::{read_cdf_tables, read_points, snapshot_file_name, write_snapshot};
use qqe::metrics::{kl_divergence, metrics_report, qq_line_diagnostics, KernelSpec, LineDiagnostic, MetricsReport};
use qqe::reference::{resize_reference, shape_sampler, CdfTable, ReferenceKind, StandardFamily};
use qqe::types::validate_dataset;
use qqe::{sample_reference, transform, transform_supervised, Dataset, Matrix, StopReason, Timings, TransformConfig};
use serde::Serialize;

use crate::args::{ReferenceArgs, RunArgs};
use crate::digest::{sha256_file, FileDigest};

/// The reference as given on the command line, loaded once.
enum Source {
    Families(Vec<StandardFamily>),
    Samples(Vec<Matrix<f64>>),
    Tables(Vec<CdfTable>),
}

impl Source {
    fn load(args: &ReferenceArgs) -> Result<(Self, ReferenceRecord)> {
        if !args.ref_dist.is_empty() {
            let specs = args.ref_dist.iter().map(ToString::to_string).collect();
            return Ok((Self::Families(args.ref_dist.clone()), ReferenceRecord::RefDist { specs }));
        }
        if !args.reference.is_empty() {
            let mut samples = Vec::new();
            for path in &args.reference {
                let table = read_points(path).with_context(|| format!("reading reference {}", path.display()))?;
                if let Some((row, col)) = table.points.first_non_finite() {
                    bail!("reference {} has a non-finite value at row {row}, column {col}", path.display());
                }
                samples.push(table.points);
            }
            return Ok((Self::Samples(samples), ReferenceRecord::Reference { files: digests(&args.reference)? }));
        }
        let mut tables = Vec::new();
        for path in &args.ref_cdf {
            tables.extend(read_cdf_tables(path).with_context(|| format!("reading CDF table {}", path.display()))?);
        }
        Ok((Self::Tables(tables), ReferenceRecord::RefCdf { files: digests(&args.ref_cdf)? }))
    }

    fn count(&self) -> usize {
        match self {
            Self::Families(v) => v.len(),
            Self::Samples(v) => v.len(),
            Self::Tables(_) => 1,
        }
    }

    /// Reference sample of `n x d` for dense class `class` out of `classes`.
    fn sample(&self, class: usize, classes: usize, n: usize, d: usize, seed: u64) -> Result<Matrix<f64>> {
        let count = self.count();
        if count != 1 && count != classes {
            bail!("expected 1 or {classes} reference values (one per class), got {count}");
        }
        let pick = if count == 1 { 0 } else { class };
        let seed = seed.wrapping_add(class as u64);
        let m = match self {
            Self::Families(v) => shape_sampler(&v[pick], n, d, seed)?,
            Self::Samples(v) => {
                if v[pick].cols() != d {
                    bail!("reference has {} columns but the data has {d}", v[pick].cols());
                }
                resize_reference(&v[pick], n, seed)?
            }
            Self::Tables(t) => sample_reference(&ReferenceKind::CdfTable(t.clone()), n, d, seed)?,
        };
        Ok(m)
    }
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| sha256_file(p)).collect()
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ReferenceRecord {
    RefDist { specs: Vec<String> },
    Reference { files: Vec<FileDigest> },
    RefCdf { files: Vec<FileDigest> },
}

#[derive(Debug, Serialize)]
struct SnapshotRecord {
    iteration: usize,
    cost: f64,
    file: String,
}

#[derive(Debug, Serialize)]
struct ClassRecord {
    label: Option<i64>,
    size: usize,
    matching_rounds: usize,
    matching_converged: bool,
    stop_reason: StopReason,
    iterations: usize,
    /// Per-dimension qq line of the final points against the matched reference.
    qq_lines: Option<Vec<LineDiagnostic>>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: &'static str,
    version: &'static str,
    seed: u64,
    input: FileDigest,
    #[serde(skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    reference: ReferenceRecord,
    config: TransformConfig,
    n: usize,
    d: usize,
    stop_reason: StopReason,
    iterations: usize,
    timings: Timings,
    snapshots: Vec<SnapshotRecord>,
    classes: Vec<ClassRecord>,
    /// Smallest final R² over all dimensions and classes.
    min_r_squared: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ClassMetrics {
    label: i64,
    kl_before: f64,
    kl_after: f64,
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    #[serde(flatten)]
    report: MetricsReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    per_class: Vec<ClassMetrics>,
}

/// What a finished run reports back to `main`.
pub struct Outcome {
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub out: PathBuf,
}

fn build_config(args: &RunArgs, base: TransformConfig) -> Result<TransformConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let parse = || -> Result<TransformConfig> {
                // fields missing from the file keep the command's defaults
                let mut merged = serde_json::to_value(&base)?;
                let serde_json::Value::Object(fields) = serde_json::from_str(&text)? else {
                    bail!("expected a JSON object");
                };
                merged.as_object_mut().expect("config serialises to an object").extend(fields);
                Ok(TransformConfig::from_json(&merged.to_string())?)
            };
            parse().with_context(|| format!("parsing config {}", path.display()))?
        }
        None => base,
    };
    if let Some(v) = args.mode {
        config.mode = v.into();
    }
    if args.supervised {
        config.supervised = true;
    }
    if let Some(v) = args.lambda {
        config.lambda = v;
    }
    if let Some(v) = args.eta {
        config.eta = v;
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.max_iters {
        config.max_iters = v;
    }
    if let Some(v) = args.snapshot_every {
        config.snapshot_every = v;
    }
    if let Some(v) = args.rel_tol {
        config.rel_cost_tol = v;
    }
    if args.rematch_every.is_some() {
        config.rematch_every = args.rematch_every;
    }
    if let Some(v) = args.gradient {
        config.gradient = v.into();
    }
    Ok(config)
}

fn initial_points(dataset: &Dataset<f64>, init: Option<&EmbeddingInit>) -> Result<Matrix<f64>> {
    Ok(match init {
        None => dataset.points().clone(),
        Some(EmbeddingInit::Pca(p)) => pca_init(dataset.points(), *p)?,
        Some(EmbeddingInit::External(path)) => load_external_embedding(path, dataset.n())
            .with_context(|| format!("reading embedding {}", path.display()))?,
    })
}

/// Runs `transform` (no `init`) or `embed` and writes the run directory.
pub fn run(args: &RunArgs, init: Option<&EmbeddingInit>) -> Result<Outcome> {
    let command = if init.is_some() { "embed" } else { "transform" };
    let base = if init.is_some() { TransformConfig::embedding_preset() } else { TransformConfig::default() };
    let config = build_config(args, base)?;

    let table = read_points(&args.input).with_context(|| format!("reading input {}", args.input.display()))?;
    let original_labels = table.labels.clone();
    let raw = validate_dataset(table.points, table.labels)?;
    if config.supervised && raw.labels().is_none() {
        bail!("--supervised needs a `label` column in the input");
    }
    let x0 = initial_points(&raw, init)?;
    let dataset = raw.with_points(x0)?;
    let (n, d) = dataset.points().shape();
    config.validate(n)?;

    let (source, reference_record) = Source::load(&args.reference)?;
    let x0 = dataset.points();

    let (trajectory, matched, timings, classes) = if config.supervised {
        let groups = dataset.class_indices();
        let references = groups
            .iter()
            .enumerate()
            .map(|(c, rows)| source.sample(c, groups.len(), rows.len(), d, args.seed))
            .collect::<Result<Vec<_>>>()?;
        let out = transform_supervised(&dataset, &references, &config)?;
        let classes = out
            .classes
            .iter()
            .zip(&out.class_indices)
            .enumerate()
            .map(|(c, (class, rows))| ClassRecord {
                label: dataset.original_label(c),
                size: rows.len(),
                matching_rounds: class.matching.iterations,
                matching_converged: class.matching.converged,
                stop_reason: class.trajectory.stop_reason(),
                iterations: class.trajectory.iterations(),
                qq_lines: lines(class.trajectory.final_points(), &class.matched_reference),
            })
            .collect();
        (out.trajectory, out.matched_reference, out.timings, classes)
    } else {
        let reference = source.sample(0, 1, n, d, args.seed)?;
        let out = transform(x0, &reference, &config)?;
        let class = ClassRecord {
            label: None,
            size: n,
            matching_rounds: out.matching.iterations,
            matching_converged: out.matching.converged,
            stop_reason: out.trajectory.stop_reason(),
            iterations: out.trajectory.iterations(),
            qq_lines: lines(out.trajectory.final_points(), &out.matched_reference),
        };
        (out.trajectory, out.matched_reference, out.timings, vec![class])
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let snapshot_labels = if config.supervised { original_labels.as_deref() } else { None };
    let mut snapshots = Vec::new();
    for snap in trajectory.snapshots() {
        write_snapshot(&args.out, snap.iteration, &snap.points, snapshot_labels)?;
        snapshots.push(SnapshotRecord {
            iteration: snap.iteration,
            cost: snap.cost,
            file: snapshot_file_name(snap.iteration),
        });
    }

    let min_r_squared = classes
        .iter()
        .flat_map(|c| c.qq_lines.iter().flatten())
        .map(|l| l.r_squared)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))));
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: args.seed,
        input: sha256_file(&args.input)?,
        init: init.map(init_string),
        reference: reference_record,
        config,
        n,
        d,
        stop_reason: trajectory.stop_reason(),
        iterations: trajectory.iterations(),
        timings,
        snapshots,
        classes,
        min_r_squared,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;

    if args.metrics {
        let ks: Vec<usize> = args.ks.iter().copied().filter(|&k| k >= 1 && k < n).collect();
        let labels = dataset.labels().map(|l| (l, ks.as_slice()));
        let report = metrics_report(x0, trajectory.final_points(), &matched, KernelSpec::default(), labels)?;
        let mut per_class = Vec::new();
        if manifest.config.supervised {
            for (c, rows) in dataset.class_indices().iter().enumerate() {
                let target = matched.select_rows(rows);
                per_class.push(ClassMetrics {
                    label: dataset.original_label(c).unwrap_or(c as i64),
                    kl_before: kl_divergence(&x0.select_rows(rows), &target)?,
                    kl_after: kl_divergence(&trajectory.final_points().select_rows(rows), &target)?,
                });
            }
        }
        write_json(&args.out.join("metrics.json"), &MetricsFile { report, per_class })?;
    }

    Ok(Outcome { stop_reason: trajectory.stop_reason(), iterations: trajectory.iterations(), out: args.out.clone() })
}

fn lines(points: &Matrix<f64>, matched: &Matrix<f64>) -> Option<Vec<LineDiagnostic>> {
    match qq_line_diagnostics(points, matched) {
        Ok(l) => Some(l),
        Err(e) => {
            log::warn!("no qq line diagnostics: {e}");
            None
        }
    }
}

fn init_string(init: &EmbeddingInit) -> String {
    match init {
        EmbeddingInit::Pca(p) => format!("pca:{p}"),
        EmbeddingInit::External(path) => format!("external:{}", path.display()),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
