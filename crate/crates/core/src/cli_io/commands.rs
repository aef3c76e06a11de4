use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config_hash;
use super::dataset::read_dataset_info;
use super::frame::{import_frame_csv, read_frame_file};
use super::plot::grid_to_pgm;
use crate::autodiff::SigmaNet;
use crate::baselines::{lambda_sweep, BaselineSolver, ElementRaster, Prior, DEFAULT_LAMBDA_FACTOR};
use crate::error::{EitError, Result};
use crate::fem::{
    add_noise, default_trig_patterns, simulate_measurements, trig_patterns, ExcitationPattern, MeasurementFrame, NoiseSpec,
    Protocol,
};
use crate::gridfield::{read_grid_file, write_grid_file, GridSpec, PotentialGrid, SigmaGrid};
use crate::mesh::TriMesh;
use crate::metrics::{evaluate, EvalReport};
use crate::phantom::{rasterize_sigma, Phantom, Preset};
use crate::pinn::{train_inverse_with, InverseConfig, InverseProblem, LossBreakdown};
use crate::pipeline::noisy_potential_grids;

/// Log line cadence of inverse training.
const PROGRESS_EVERY: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Pinn,
    Baseline(Prior),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pinn => "pinn",
            Method::Baseline(p) => p.name(),
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        if s == "pinn" {
            Some(Method::Pinn)
        } else {
            Prior::from_name(s).map(Method::Baseline)
        }
    }
}

/// Where the inverse network's potential grids come from.
#[derive(Debug, Clone, PartialEq)]
pub enum GridInput {
    /// Finite-element solves of the scene's phantom (or a record's stored
    /// grids).
    Fem,
    /// Grid files, one per excitation in order, e.g. from the surrogate.
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneInput {
    /// A dataset record directory.
    Record(PathBuf),
    Preset(Preset),
    /// A measured frame (binary or CSV) with optional ground truth given as
    /// a phantom JSON or a σ grid file.
    Imported { frame: PathBuf, truth: Option<PathBuf> },
}

/// Everything known about one reconstruction target.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub phantom: Option<Phantom>,
    pub truth: Option<SigmaGrid>,
    pub frame: MeasurementFrame,
    pub grids: Option<Vec<PotentialGrid>>,
    pub excitations: Vec<ExcitationPattern>,
}

#[derive(Debug, Clone)]
pub struct ReconstructOptions {
    pub method: Method,
    pub grids: GridInput,
    pub config: InverseConfig,
    /// Regularization weight of the baselines; swept against the truth when
    /// absent and a truth is known.
    pub lambda: Option<f64>,
    pub noise: Option<NoiseSpec>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            method: Method::Pinn,
            grids: GridInput::Fem,
            config: InverseConfig::default(),
            lambda: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructOutput {
    pub sigma_grid: SigmaGrid,
    pub report: Option<EvalReport>,
    pub loss_history: Vec<LossBreakdown>,
    pub net: Option<SigmaNet>,
    pub lambda: Option<f64>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| EitError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| EitError::io(path, e))
}

fn read_phantom(path: &Path) -> Result<Phantom> {
    Phantom::from_json(&read_text(path)?).map_err(|e| EitError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_truth(path: &Path, spec: &GridSpec) -> Result<SigmaGrid> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(rasterize_sigma(&read_phantom(path)?, spec))
    } else {
        read_grid_file(path)
    }
}

/// Loads or simulates a scene. Presets use `excitations` (the default four
/// trig patterns when `None`); records use the excitations of their dataset.
pub fn load_scene(input: &SceneInput, mesh: &TriMesh, excitations: Option<&[ExcitationPattern]>) -> Result<Scene> {
    let spec = GridSpec::canonical();
    match input {
        SceneInput::Preset(p) => {
            let phantom = p.phantom();
            let excitations = excitations.map_or_else(default_trig_patterns, <[_]>::to_vec);
            let grids = noisy_potential_grids(&phantom, mesh, &spec, &excitations, None)?;
            Ok(Scene {
                name: p.name().to_string(),
                truth: Some(rasterize_sigma(&phantom, &spec)),
                frame: simulate_measurements(&phantom, mesh, Protocol::AdjacentSkip, None)?,
                grids: Some(grids),
                phantom: Some(phantom),
                excitations,
            })
        }
        SceneInput::Record(dir) => {
            let parent = dir.parent().unwrap_or(Path::new("."));
            let excitations = match read_dataset_info(parent) {
                Ok(info) => info.options.excitations,
                Err(EitError::Io { .. }) => default_trig_patterns(),
                Err(e) => return Err(e),
            };
            let grids = (0..excitations.len())
                .map(|k| read_grid_file(&dir.join(format!("ugrid_{k}.bin"))))
                .collect::<Result<Vec<_>>>()?;
            Ok(Scene {
                name: dir.file_name().map_or_else(|| "record".into(), |n| n.to_string_lossy().into_owned()),
                phantom: Some(read_phantom(&dir.join("phantom.json"))?),
                truth: Some(read_grid_file(&dir.join("sigma.bin"))?),
                frame: read_frame_file(&dir.join("frame_0.bin"))?,
                grids: Some(grids),
                excitations,
            })
        }
        SceneInput::Imported { frame, truth } => {
            let f = if frame.extension().is_some_and(|e| e == "csv" || e == "txt") {
                import_frame_csv(&read_text(frame)?).map_err(|e| match e {
                    EitError::Format { field, .. } => EitError::format(frame.display().to_string(), field),
                    other => other,
                })?
            } else {
                read_frame_file(frame)?
            };
            Ok(Scene {
                name: frame.file_stem().map_or_else(|| "imported".into(), |n| n.to_string_lossy().into_owned()),
                phantom: None,
                truth: truth.as_deref().map(|t| load_truth(t, &spec)).transpose()?,
                frame: f,
                grids: None,
                excitations: excitations.map_or_else(default_trig_patterns, <[_]>::to_vec),
            })
        }
    }
}

fn read_grid_inputs(paths: &[PathBuf]) -> Result<Vec<PotentialGrid>> {
    let grids = paths.iter().map(|p| read_grid_file(p)).collect::<Result<Vec<_>>>()?;
    for (p, g) in paths.iter().zip(&grids) {
        if !g.source.is_potential() {
            return Err(EitError::format(p.display().to_string(), "source flag (not a potential grid)"));
        }
    }
    Ok(grids)
}

/// Runs one reconstruction of `scene` without touching the filesystem
/// except to read grid files named in `options.grids`.
pub fn reconstruct_scene(scene: &Scene, options: &ReconstructOptions, mesh: &TriMesh) -> Result<ReconstructOutput> {
    let spec = GridSpec::canonical();
    let (sigma_grid, loss_history, net, lambda) = match options.method {
        Method::Pinn => {
            let grids = match (&options.grids, options.noise) {
                (GridInput::Files(paths), _) => read_grid_inputs(paths)?,
                (GridInput::Fem, Some(noise)) => {
                    let phantom = scene.phantom.as_ref().ok_or_else(|| {
                        EitError::Usage("noisy finite-element grids need a known phantom".into())
                    })?;
                    noisy_potential_grids(phantom, mesh, &spec, &scene.excitations, Some(noise))?
                }
                (GridInput::Fem, None) => scene.grids.clone().ok_or_else(|| {
                    EitError::Usage("an imported frame has no finite-element grids; pass grid files".into())
                })?,
            };
            let problem = InverseProblem::new(&grids, &scene.excitations, &mesh.arcs)?;
            let res = train_inverse_with(&problem, &options.config, |i, l| {
                if i % PROGRESS_EVERY == 0 {
                    log::info!("iteration {i}: loss {:.6}", l.total);
                }
            })?;
            (res.sigma_grid, res.loss_history, Some(res.net), None)
        }
        Method::Baseline(prior) => {
            let mut frame = scene.frame.clone();
            if let Some(n) = options.noise {
                frame.values = add_noise(&frame.values, n.snr_db, n.seed);
                frame.snr_db = Some(n.snr_db);
            }
            let solver = BaselineSolver::new(mesh, frame.protocol, 1.0)?;
            let raster = ElementRaster::new(mesh, &spec);
            match (options.lambda, &scene.truth) {
                (Some(lambda), _) => {
                    let rec = solver.reconstruct(&frame, prior, lambda)?;
                    (raster.apply(&rec.element_sigma), Vec::new(), None, Some(lambda))
                }
                (None, Some(truth)) => {
                    let (mut points, best) = lambda_sweep(&solver, &raster, &frame, prior, truth)?;
                    for p in &points {
                        log::info!("{} lambda {:e}: ssim {:.4}", prior.name(), p.lambda, p.ssim);
                    }
                    let p = points.swap_remove(best);
                    (p.sigma_grid, Vec::new(), None, Some(p.lambda))
                }
                (None, None) => {
                    let lambda = DEFAULT_LAMBDA_FACTOR * solver.lambda_scale(prior);
                    let rec = solver.reconstruct(&frame, prior, lambda)?;
                    (raster.apply(&rec.element_sigma), Vec::new(), None, Some(lambda))
                }
            }
        }
    };
    let report = scene
        .truth
        .as_ref()
        .map(|t| evaluate(&sigma_grid, t, &scene.name, options.method.name()))
        .transpose()?;
    Ok(ReconstructOutput {
        sigma_grid,
        report,
        loss_history,
        net,
        lambda,
    })
}

#[derive(Debug, Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    scene: &'a str,
    method: &'a str,
    grid_source: &'a str,
    config_hash: String,
    config: String,
    seed: u64,
    lambda: Option<f64>,
    snr_db: Option<f64>,
    noise_seed: Option<u64>,
    report: Option<&'a EvalReport>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    write_bytes(path, text.as_bytes())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| EitError::io(dir, e))
}

/// Loads `input`, reconstructs, and writes `sigma.bin`, `run.json`,
/// `metrics.csv` (when a truth is known) and, for the network,
/// `loss.csv` and `weights.bin` under `out`.
pub fn reconstruct(input: &SceneInput, options: &ReconstructOptions, mesh: &TriMesh, out: &Path) -> Result<ReconstructOutput> {
    let scene = load_scene(input, mesh, None)?;
    if let GridInput::Files(paths) = &options.grids {
        // Validate before producing any output.
        read_grid_inputs(paths)?;
    }
    let res = reconstruct_scene(&scene, options, mesh)?;
    create_dir(out)?;
    let hash = config_hash(&options.config.to_kv());
    write_grid_file(&out.join("sigma.bin"), &res.sigma_grid)?;
    if let Some(r) = &res.report {
        let text = format!("{}\n{}\n", EvalReport::CSV_HEADER, r.csv_row(options.config.seed, &hash));
        write_bytes(&out.join("metrics.csv"), text.as_bytes())?;
    }
    if let Some(net) = &res.net {
        let mut csv = Vec::new();
        writeln_loss(&mut csv, &res.loss_history);
        write_bytes(&out.join("loss.csv"), &csv)?;
        net.save(&out.join("weights.bin"))?;
    }
    let info = RunInfo {
        command: "reconstruct",
        scene: &scene.name,
        method: options.method.name(),
        grid_source: match options.grids {
            GridInput::Fem => "fem",
            GridInput::Files(_) => "file",
        },
        config_hash: hash,
        config: options.config.to_kv(),
        seed: options.config.seed,
        lambda: res.lambda,
        snr_db: options.noise.map(|n| n.snr_db),
        noise_seed: options.noise.map(|n| n.seed),
        report: res.report.as_ref(),
    };
    write_json(&out.join("run.json"), &info)?;
    Ok(res)
}

fn writeln_loss(buf: &mut Vec<u8>, history: &[LossBreakdown]) {
    use std::io::Write;
    let _ = writeln!(buf, "{}", LossBreakdown::CSV_HEADER);
    for (i, b) in history.iter().enumerate() {
        let _ = writeln!(buf, "{}", b.csv_row(i));
    }
}

/// One row of a sweep: the swept value and the resulting metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub report: EvalReport,
}

fn write_sweep(out: &Path, column: &str, rows: &[SweepRow], seed: u64, hash: &str) -> Result<()> {
    let mut text = format!("{column},{}\n", EvalReport::CSV_HEADER);
    for r in rows {
        text.push_str(&format!("{:?},{}\n", r.value, r.report.csv_row(seed, hash)));
    }
    write_bytes(&out.join("metrics.csv"), text.as_bytes())
}

/// Inverse-network reconstructions of `preset` under the four trig
/// patterns at each frequency in `omegas`; writes `sigma_<i>.bin` and
/// `metrics.csv` (column `omega`) under `out`.
pub fn sweep_frequency(
    preset: Preset,
    omegas: &[f64],
    config: &InverseConfig,
    mesh: &TriMesh,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    if omegas.is_empty() {
        return Err(EitError::Usage("sweep-freq needs at least one frequency".into()));
    }
    if let Some(w) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(EitError::InvalidConfig(format!("frequency {w} must be finite and positive")));
    }
    let options = ReconstructOptions {
        config: config.clone(),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(omegas.len());
    let mut grids = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let excitations = trig_patterns(omega, default_trig_patterns().len());
        let scene = load_scene(&SceneInput::Preset(preset), mesh, Some(&excitations))?;
        let res = reconstruct_scene(&scene, &options, mesh)?;
        let report = res.report.expect("presets carry a truth");
        log::info!("omega {omega:.4}: ssim {:.4} cc {:.4} rie {:.4}", report.ssim, report.cc, report.rie);
        rows.push(SweepRow { value: omega, report });
        grids.push(res.sigma_grid);
    }
    create_dir(out)?;
    for (i, g) in grids.iter().enumerate() {
        write_grid_file(&out.join(format!("sigma_{i}.bin")), g)?;
    }
    write_sweep(out, "omega", &rows, config.seed, &config_hash(&config.to_kv()))?;
    Ok(rows)
}

/// Reconstructions of `input` at each SNR level with noise seed
/// `noise_seed`; writes `sigma_<i>.bin` and `metrics.csv` (column
/// `snr_db`) under `out`.
pub fn sweep_noise(
    input: &SceneInput,
    levels: &[f64],
    noise_seed: u64,
    options: &ReconstructOptions,
    mesh: &TriMesh,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    if levels.is_empty() {
        return Err(EitError::Usage("sweep-noise needs at least one level".into()));
    }
    let scene = load_scene(input, mesh, None)?;
    if scene.truth.is_none() {
        return Err(EitError::Usage("sweep-noise needs a ground truth".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    let mut grids = Vec::with_capacity(levels.len());
    for &snr_db in levels {
        let opts = ReconstructOptions {
            noise: Some(NoiseSpec { snr_db, seed: noise_seed }),
            ..options.clone()
        };
        let res = reconstruct_scene(&scene, &opts, mesh)?;
        let report = res.report.expect("truth checked above");
        log::info!("snr {snr_db} dB: ssim {:.4} cc {:.4} rie {:.4}", report.ssim, report.cc, report.rie);
        rows.push(SweepRow { value: snr_db, report });
        grids.push(res.sigma_grid);
    }
    create_dir(out)?;
    for (i, g) in grids.iter().enumerate() {
        write_grid_file(&out.join(format!("sigma_{i}.bin")), g)?;
    }
    write_sweep(out, "snr_db", &rows, options.config.seed, &config_hash(&options.config.to_kv()))?;
    Ok(rows)
}

/// Writes `<prefix>.pgm` and `<prefix>.json` for the grid file `grid`.
pub fn export_plot(grid: &Path, prefix: &Path) -> Result<()> {
    let field = read_grid_file(grid)?;
    let (img, sidecar) = grid_to_pgm(&field);
    write_bytes(&prefix.with_extension("pgm"), &img)?;
    write_json(&prefix.with_extension("json"), &sidecar)
}

/// Metrics of a σ grid file against a truth given as a σ grid file or a
/// phantom JSON.
pub fn evaluate_files(estimate: &Path, truth: &Path, case: &str, method: &str) -> Result<EvalReport> {
    let est = read_grid_file(estimate)?;
    let t = load_truth(truth, &est.spec)?;
    evaluate(&est, &t, case, method)
}
