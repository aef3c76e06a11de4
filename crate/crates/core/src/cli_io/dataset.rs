use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config_hash;
use super::frame::write_frame_file;
use crate::error::{EitError, Result};
use crate::fem::{
    add_noise, apply_excitation, assemble_stiffness, default_trig_patterns, measure_frame, ExcitationPattern,
    MeasurementFrame, NeumannSolver, Protocol, RasterMap,
};
use crate::gridfield::{write_grid_file, GridSpec, PotentialGrid, SigmaGrid};
use crate::mesh::{build_disk_mesh, TriMesh, REFERENCE_LEVEL};
use crate::phantom::{element_sigma, rasterize_sigma, sample_phantom, Category, Phantom};

pub const MANIFEST_HEADER: &str = "record,category,phantom_seed,noise_seed,snr_db,split,config_hash";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Split::Train, Split::Val, Split::Test].into_iter().find(|x| x.name() == s)
    }
}

/// Settings of one generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub count_per_category: usize,
    pub seed: u64,
    pub snr_min: f64,
    pub snr_max: f64,
    pub mesh_level: u32,
    pub grid_n: usize,
    pub protocol: Protocol,
    pub excitations: Vec<ExcitationPattern>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            count_per_category: 50,
            seed: 0,
            snr_min: 40.0,
            snr_max: 60.0,
            mesh_level: REFERENCE_LEVEL,
            grid_n: GridSpec::canonical().n(),
            protocol: Protocol::AdjacentSkip,
            excitations: default_trig_patterns(),
        }
    }
}

impl DatasetOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.snr_min <= self.snr_max) || !self.snr_min.is_finite() || !self.snr_max.is_finite() {
            return Err(EitError::InvalidConfig(format!(
                "noise range [{}, {}] is not a finite interval",
                self.snr_min, self.snr_max
            )));
        }
        if self.excitations.is_empty() {
            return Err(EitError::InvalidConfig("at least one excitation is required".into()));
        }
        Ok(())
    }

    /// Canonical text form; its hash identifies the dataset configuration.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count_per_category = {}", self.count_per_category);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "snr_min = {}", self.snr_min);
        let _ = writeln!(s, "snr_max = {}", self.snr_max);
        let _ = writeln!(s, "mesh_level = {}", self.mesh_level);
        let _ = writeln!(s, "grid_n = {}", self.grid_n);
        let _ = writeln!(s, "protocol = {}", self.protocol.name());
        for (k, e) in self.excitations.iter().enumerate() {
            let _ = writeln!(s, "excitation_{k} = {}", serde_json::to_string(e).expect("excitation serializes"));
        }
        s
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.canonical_text())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub record: String,
    pub category: Category,
    pub phantom_seed: u64,
    pub noise_seed: u64,
    pub snr_db: f64,
    pub split: Split,
    pub config_hash: String,
}

impl ManifestRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:?},{},{}",
            self.record,
            self.category.code(),
            self.phantom_seed,
            self.noise_seed,
            self.snr_db,
            self.split.name(),
            self.config_hash
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let err = |field: &str| EitError::format("manifest.csv", field);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err("column count"));
        }
        Ok(ManifestRow {
            record: f[0].to_string(),
            category: Category::from_code(f[1]).ok_or_else(|| err("category"))?,
            phantom_seed: f[2].parse().map_err(|_| err("phantom_seed"))?,
            noise_seed: f[3].parse().map_err(|_| err("noise_seed"))?,
            snr_db: f[4].parse().map_err(|_| err("snr_db"))?,
            split: Split::from_name(f[5]).ok_or_else(|| err("split"))?,
            config_hash: f[6].to_string(),
        })
    }
}

/// Top-level `dataset_info.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub options: DatasetOptions,
    pub config_hash: String,
    pub records: usize,
    pub measurement_count: usize,
    pub n_electrodes: usize,
    pub files: Vec<String>,
}

/// One regenerated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub phantom: Phantom,
    pub frame: MeasurementFrame,
    pub grids: Vec<PotentialGrid>,
    pub sigma: SigmaGrid,
}

/// 80/10/10 split by a seeded permutation of record indices.
pub fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5711));
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_val = (n as f64 * 0.1).round() as usize;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Manifest rows in record order: categories in their fixed order, then
/// sample index.
pub fn plan_manifest(options: &DatasetOptions) -> Vec<ManifestRow> {
    let n = options.count_per_category * Category::ALL.len();
    let splits = split_assignment(n, options.seed);
    let hash = options.config_hash();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut rows = Vec::with_capacity(n);
    for category in Category::ALL {
        for _ in 0..options.count_per_category {
            let i = rows.len();
            rows.push(ManifestRow {
                record: format!("r{i:05}"),
                category,
                phantom_seed: rng.next_u64(),
                noise_seed: rng.next_u64(),
                snr_db: rng.random_range(options.snr_min..=options.snr_max),
                split: splits[i],
                config_hash: hash.clone(),
            });
        }
    }
    rows
}

/// Rebuilds one record from its manifest row.
pub fn generate_record(options: &DatasetOptions, mesh: &TriMesh, raster: &RasterMap, row: &ManifestRow) -> Result<DatasetRecord> {
    let phantom = sample_phantom(row.phantom_seed, row.category)?;
    let solver = NeumannSolver::new(&assemble_stiffness(mesh, &element_sigma(&phantom, mesh))?)?;
    let mut frame = measure_frame(&solver, mesh, options.protocol, 1.0)?;
    frame.values = add_noise(&frame.values, row.snr_db, row.noise_seed);
    frame.snr_db = Some(row.snr_db);
    let grids = options
        .excitations
        .iter()
        .enumerate()
        .map(|(k, ex)| Ok(raster.potential(&solver.solve(&apply_excitation(mesh, ex))?, k as u32)))
        .collect::<Result<Vec<_>>>()?;
    let sigma = rasterize_sigma(&phantom, raster.spec());
    Ok(DatasetRecord {
        phantom,
        frame,
        grids,
        sigma,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| EitError::io(path, e))
}

fn record_files(n_grids: usize) -> Vec<String> {
    let mut files = vec!["phantom.json".to_string(), "frame_0.bin".to_string()];
    files.extend((0..n_grids).map(|k| format!("ugrid_{k}.bin")));
    files.push("sigma.bin".into());
    files
}

/// Writes the dataset under `out`: one directory per record plus
/// `manifest.csv` and `dataset_info.json`. Records are generated in
/// parallel; every record owns its seeds.
pub fn generate_dataset(options: &DatasetOptions, out: &Path) -> Result<Vec<ManifestRow>> {
    options.validate()?;
    std::fs::create_dir_all(out).map_err(|e| EitError::io(out, e))?;
    let mesh = build_disk_mesh(options.mesh_level);
    let raster = RasterMap::new(&mesh, &GridSpec::new(options.grid_n));
    let rows = plan_manifest(options);
    rows.par_iter().try_for_each(|row| -> Result<()> {
        let rec = generate_record(options, &mesh, &raster, row)?;
        let dir = out.join(&row.record);
        std::fs::create_dir_all(&dir).map_err(|e| EitError::io(&dir, e))?;
        write_text(&dir.join("phantom.json"), &rec.phantom.to_json())?;
        write_frame_file(&dir.join("frame_0.bin"), &rec.frame)?;
        for (k, g) in rec.grids.iter().enumerate() {
            write_grid_file(&dir.join(format!("ugrid_{k}.bin")), g)?;
        }
        write_grid_file(&dir.join("sigma.bin"), &rec.sigma)
    })?;
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for row in &rows {
        manifest.push_str(&row.csv());
        manifest.push('\n');
    }
    write_text(&out.join("manifest.csv"), &manifest)?;
    let info = DatasetInfo {
        options: options.clone(),
        config_hash: options.config_hash(),
        records: rows.len(),
        measurement_count: options.protocol.len(mesh.n_electrodes()),
        n_electrodes: mesh.n_electrodes(),
        files: record_files(options.excitations.len()),
    };
    let json = serde_json::to_string_pretty(&info).expect("dataset info serializes");
    write_text(&out.join("dataset_info.json"), &(json + "\n"))?;
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| EitError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(EitError::format(path.display().to_string(), "header"));
    }
    lines.filter(|l| !l.is_empty()).map(ManifestRow::parse).collect()
}

pub fn read_dataset_info(dir: &Path) -> Result<DatasetInfo> {
    let path: PathBuf = dir.join("dataset_info.json");
    let text = std::fs::read_to_string(&path).map_err(|e| EitError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| EitError::Json { path, source: e })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let s = split_assignment(15_000, 3);
        let count = |x: Split| s.iter().filter(|&&v| v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (12_000, 1_500, 1_500));
        let s = split_assignment(10, 3);
        assert_eq!(s.iter().filter(|&&v| v == Split::Train).count(), 8);
        assert_eq!(split_assignment(10, 3), s);
    }

    #[test]
    fn manifest_plan_is_seeded() {
        let o = DatasetOptions {
            count_per_category: 2,
            ..Default::default()
        };
        let a = plan_manifest(&o);
        assert_eq!(a.len(), 10);
        assert_eq!(a, plan_manifest(&o));
        assert!(a.iter().all(|r| (40.0..=60.0).contains(&r.snr_db)));
        for r in &a {
            assert_eq!(ManifestRow::parse(&r.csv()).unwrap(), *r);
        }
        let b = plan_manifest(&DatasetOptions { seed: 1, ..o });
        assert_ne!(a[0].phantom_seed, b[0].phantom_seed);
    }
}
