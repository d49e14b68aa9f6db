//! On-disk layout of simulated datasets and augmented outputs.
//!
//! A dataset directory holds `meta.json` plus headerless little-endian `f32`
//! files: complex arrays are interleaved `(re, im)` pairs, coil-major then
//! row-major; real arrays are row-major.
//!
//! ```text
//! meta.json
//! maps/v000.bin          sensitivities of volume 0
//! kspace/v000_s000.bin   noisy fully sampled k-space
//! object/v000_s000.bin   ground-truth object
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{SensitivityMaps, UndersamplingMask};
use crate::error::{Error, Result};
use crate::grid::{CoilStack, ComplexGrid, RealGrid};
use crate::phantom::{synth_slice, volume_sensitivities, SimulationParams, SyntheticSlice};
use crate::transforms::TransformSpec;

pub const META_FILE: &str = "meta.json";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
const FORMAT: &str = "mraugment-synthetic";
const VERSION: u32 = 1;

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_f32s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for v in values {
        out.write_all(&(v as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_f32s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(format_error(
            path,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

pub fn write_coil_stack(path: &Path, stack: &CoilStack) -> Result<()> {
    write_f32s(path, stack.samples().flat_map(|v| [v.re, v.im]))
}

pub fn read_coil_stack(path: &Path, coils: usize, height: usize, width: usize) -> Result<CoilStack> {
    let raw = read_f32s(path, 2 * coils * height * width)?;
    let grids = raw
        .chunks_exact(2 * height * width)
        .map(|c| {
            let data = c.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
            ComplexGrid::from_vec(height, width, data)
        })
        .collect::<Result<Vec<_>>>()?;
    CoilStack::new(grids)
}

pub fn write_real(path: &Path, grid: &RealGrid) -> Result<()> {
    write_f32s(path, grid.as_slice().iter().copied())
}

pub fn read_real(path: &Path, height: usize, width: usize) -> Result<RealGrid> {
    RealGrid::from_vec(height, width, read_f32s(path, height * width)?)
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub params: SimulationParams,
}

/// A simulated dataset on disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    meta: DatasetMeta,
}

impl Dataset {
    /// Creates the directory and writes `meta.json`; slices are added with
    /// [`Dataset::write_slice`] and [`Dataset::write_maps`].
    pub fn create(root: &Path, params: &SimulationParams) -> Result<Self> {
        params.validate()?;
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let meta = DatasetMeta {
            format: FORMAT.into(),
            version: VERSION,
            params: params.clone(),
        };
        let path = root.join(META_FILE);
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            meta,
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(META_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: DatasetMeta =
            serde_json::from_str(&text).map_err(|e| format_error(&path, e.to_string()))?;
        if meta.format != FORMAT || meta.version != VERSION {
            return Err(format_error(
                &path,
                format!("unsupported format {} v{}", meta.format, meta.version),
            ));
        }
        meta.params.validate()?;
        Ok(Self {
            root: root.to_path_buf(),
            meta,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn params(&self) -> &SimulationParams {
        &self.meta.params
    }

    /// Every `(volume, slice)` in order.
    pub fn slices(&self) -> Vec<(u64, u64)> {
        let p = &self.meta.params;
        (0..p.volumes as u64)
            .flat_map(|v| (0..p.slices_per_volume as u64).map(move |s| (v, s)))
            .collect()
    }

    pub fn kspace_path(&self, volume: u64, slice: u64) -> PathBuf {
        self.root.join(format!("kspace/v{volume:03}_s{slice:03}.bin"))
    }

    pub fn object_path(&self, volume: u64, slice: u64) -> PathBuf {
        self.root.join(format!("object/v{volume:03}_s{slice:03}.bin"))
    }

    pub fn maps_path(&self, volume: u64) -> PathBuf {
        self.root.join(format!("maps/v{volume:03}.bin"))
    }

    pub fn write_maps(&self, volume: u64, maps: &SensitivityMaps) -> Result<()> {
        write_coil_stack(&self.maps_path(volume), maps.maps())
    }

    pub fn write_slice(&self, volume: u64, slice: u64, data: &SyntheticSlice) -> Result<()> {
        write_coil_stack(&self.kspace_path(volume, slice), &data.kspace)?;
        write_real(&self.object_path(volume, slice), &data.object)
    }

    pub fn load_kspace(&self, volume: u64, slice: u64) -> Result<CoilStack> {
        let p = &self.meta.params;
        read_coil_stack(&self.kspace_path(volume, slice), p.coils, p.height, p.width)
    }

    pub fn load_object(&self, volume: u64, slice: u64) -> Result<RealGrid> {
        let p = &self.meta.params;
        read_real(&self.object_path(volume, slice), p.height, p.width)
    }

    /// Maps are stored as `f32`, so they are renormalized on load.
    pub fn load_maps(&self, volume: u64) -> Result<SensitivityMaps> {
        let p = &self.meta.params;
        let raw = read_coil_stack(&self.maps_path(volume), p.coils, p.height, p.width)?;
        SensitivityMaps::normalized(raw)
    }
}

/// Simulates and writes a whole dataset sequentially.
pub fn synth_dataset(root: &Path, params: &SimulationParams) -> Result<Dataset> {
    let ds = Dataset::create(root, params)?;
    for v in 0..params.volumes as u64 {
        let maps = volume_sensitivities(params, v)?;
        ds.write_maps(v, &maps)?;
        for s in 0..params.slices_per_volume as u64 {
            ds.write_slice(v, s, &synth_slice(params, &maps, v, s)?)?;
        }
    }
    Ok(ds)
}

/// One line of `manifest.jsonl` describing an augmented pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub volume: u64,
    pub slice: u64,
    pub epoch: u64,
    pub mode: String,
    pub spec: TransformSpec,
    /// One character per column, `1` for sampled.
    pub mask: String,
    pub mask_seed: Option<u64>,
    pub acceleration: u32,
    pub center_fraction: f64,
    /// `[coils, height, width]`.
    pub kspace_dims: [usize; 3],
    /// `[height, width]`.
    pub target_dims: [usize; 2],
    pub kspace_file: String,
    pub target_file: String,
}

impl ManifestRecord {
    pub fn mask(&self) -> Result<UndersamplingMask> {
        UndersamplingMask::from_bit_string(&self.mask, self.acceleration, self.center_fraction)
    }

    pub fn load_kspace(&self, dir: &Path) -> Result<CoilStack> {
        let [c, h, w] = self.kspace_dims;
        read_coil_stack(&dir.join(&self.kspace_file), c, h, w)
    }

    pub fn load_target(&self, dir: &Path) -> Result<RealGrid> {
        let [h, w] = self.target_dims;
        read_real(&dir.join(&self.target_file), h, w)
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| format_error(path, format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coil_stack_round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let stack = CoilStack::new(vec![
            ComplexGrid::from_fn(3, 4, |r, c| Complex64::new(r as f64 * 0.5, -(c as f64))),
            ComplexGrid::from_fn(3, 4, |r, c| Complex64::new(0.25, (r + c) as f64)),
        ])
        .unwrap();
        write_coil_stack(&path, &stack).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 2 * 3 * 4 * 8);
        assert_eq!(read_coil_stack(&path, 2, 3, 4).unwrap(), stack);
        assert!(matches!(read_coil_stack(&path, 2, 3, 5), Err(Error::Format { .. })));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params = SimulationParams {
            volumes: 2,
            slices_per_volume: 2,
            height: 40,
            width: 32,
            coils: 2,
            ..SimulationParams::default()
        };
        let ds = synth_dataset(dir.path(), &params).unwrap();
        let again = Dataset::open(dir.path()).unwrap();
        assert_eq!(again.params(), &params);
        assert_eq!(ds.slices(), vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let k = again.load_kspace(1, 1).unwrap();
        assert_eq!(k.shape(), (40, 32));
        let maps = again.load_maps(0).unwrap();
        assert!(maps.normalization_error() < 1e-12);
        assert!(again.load_object(0, 0).unwrap().max() <= 1.0);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let rec = ManifestRecord {
            volume: 1,
            slice: 2,
            epoch: 3,
            mode: "mraugment".into(),
            spec: TransformSpec::identity(1, 2, 3),
            mask: "1111".into(),
            mask_seed: Some(9),
            acceleration: 1,
            center_fraction: 0.04,
            kspace_dims: [2, 4, 4],
            target_dims: [4, 4],
            kspace_file: "a.bin".into(),
            target_file: "b.bin".into(),
        };
        write_manifest(&path, &[rec.clone(), rec.clone()]).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), vec![rec.clone(), rec]);
        fs::write(&path, "{\"volume\": 1, \"bogus\": 2}\n").unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Format { .. })));
    }
}
