//! The five CLI verbs. Slices are processed on a pool of `workers` threads;
//! results are gathered in slice order before anything is written, so output
//! files do not depend on the worker count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mraugment::acquisition::{apply_mask, validation_mask};
use mraugment::dataset::{
    read_manifest, read_real, write_coil_stack, write_manifest, write_real, Dataset,
    ManifestRecord, MANIFEST_FILE,
};
use mraugment::fourier::ifft2c_coils;
use mraugment::grid::{CoilStack, RealGrid};
use mraugment::metrics::{
    cross_coil_covariance, nmse, psnr, ssim, validate_noise, NoiseReport,
    MIN_NOISE_SAMPLES,
};
use mraugment::phantom::{synth_slice, volume_sensitivities};
use mraugment::pipeline::{
    augment_images, augment_slice_with_mode, build_pair, AugmentConfig, MaskChoice, Mode,
};
use mraugment::recon::{tv_reconstruct, zero_filled};
use mraugment::{SensitivityMaps, SliceKey};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const RUN_FILE: &str = "augment.json";
pub const NOISE_REPORT_FILE: &str = "noise_report.json";
pub const RECON_DIR: &str = "recon";
pub const RECON_INDEX: &str = "index.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")
}

/// Runs `f` over `items` on the pool and returns results in input order.
fn parallel_map<T: Sync, U: Send>(
    workers: usize,
    items: &[T],
    f: impl Fn(&T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    pool(workers)?.install(|| items.par_iter().map(&f).collect())
}

fn load_all_maps(ds: &Dataset) -> Result<Vec<SensitivityMaps>> {
    (0..ds.params().volumes as u64)
        .map(|v| ds.load_maps(v).with_context(|| format!("loading maps of volume {v}")))
        .collect()
}

/// Generates the synthetic dataset described by the config.
pub fn simulate(cfg: &RunConfig) -> Result<Dataset> {
    let params = cfg.simulation();
    let ds = Dataset::create(&cfg.dataset, &params)
        .with_context(|| format!("creating dataset {}", cfg.dataset.display()))?;
    for v in 0..params.volumes as u64 {
        let maps = volume_sensitivities(&params, v)?;
        ds.write_maps(v, &maps)?;
        let slices: Vec<u64> = (0..params.slices_per_volume as u64).collect();
        let data = parallel_map(cfg.workers, &slices, |&s| Ok(synth_slice(&params, &maps, v, s)?))?;
        for (s, d) in slices.iter().zip(&data) {
            ds.write_slice(v, *s, d)?;
        }
    }
    Ok(ds)
}

/// Settings of an augmentation run, stored next to its manifest so the run
/// can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub dataset: PathBuf,
    pub mode: Mode,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl RunInfo {
    pub fn read(output: &Path) -> Result<Self> {
        let path = output.join(RUN_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn pair_stem(epoch: u64, volume: u64, slice: u64) -> String {
    format!("e{epoch:03}_v{volume:03}_s{slice:03}")
}

/// Streams every slice of every configured epoch through the pipeline and
/// writes the pairs plus one manifest record per pair.
pub fn augment(cfg: &RunConfig) -> Result<Vec<ManifestRecord>> {
    let ds = Dataset::open(&cfg.dataset)
        .with_context(|| format!("opening dataset {}", cfg.dataset.display()))?;
    let mode = cfg.mode_enum()?;
    let aug = cfg.augment_config();
    let maps = if mode.needs_maps() { Some(load_all_maps(&ds)?) } else { None };

    let jobs: Vec<(u64, u64, u64)> = (cfg.epoch_start..cfg.epoch_end)
        .flat_map(|e| ds.slices().into_iter().map(move |(v, s)| (e, v, s)))
        .collect();
    let pairs = parallel_map(cfg.workers, &jobs, |&(e, v, s)| {
        let k = ds.load_kspace(v, s)?;
        let key = SliceKey::new(cfg.seed, v, s, e);
        let m = maps.as_ref().map(|m| &m[v as usize]);
        augment_slice_with_mode(mode, &k, m, &aug, &key)
            .with_context(|| format!("augmenting volume {v} slice {s} epoch {e}"))
    })?;

    let pairs_dir = cfg.output.join("pairs");
    fs::create_dir_all(&pairs_dir).with_context(|| format!("creating {}", pairs_dir.display()))?;
    let mut records = Vec::with_capacity(pairs.len());
    for (&(e, v, s), pair) in jobs.iter().zip(&pairs) {
        let stem = pair_stem(e, v, s);
        let kspace_file = format!("pairs/{stem}_kspace.bin");
        let target_file = format!("pairs/{stem}_target.bin");
        write_coil_stack(&cfg.output.join(&kspace_file), &pair.kspace)?;
        write_real(&cfg.output.join(&target_file), &pair.target)?;
        let (h, w) = pair.kspace.shape();
        records.push(ManifestRecord {
            volume: v,
            slice: s,
            epoch: e,
            mode: mode.as_str().into(),
            spec: pair.spec.clone(),
            mask: pair.mask.to_bit_string(),
            mask_seed: pair.mask_seed,
            acceleration: pair.mask.acceleration(),
            center_fraction: pair.mask.center_fraction(),
            kspace_dims: [pair.kspace.coils(), h, w],
            target_dims: [pair.target.height(), pair.target.width()],
            kspace_file,
            target_file,
        });
    }
    write_manifest(&cfg.output.join(MANIFEST_FILE), &records)?;
    let info = RunInfo {
        dataset: cfg.dataset.clone(),
        mode,
        seed: cfg.seed,
        augment: aug,
    };
    let path = cfg.output.join(RUN_FILE);
    fs::write(&path, serde_json::to_string_pretty(&info)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseValidation {
    pub mode: Mode,
    pub pairs: usize,
    /// Pairs whose stored k-space differs from a replay of their manifest record.
    pub replay_mismatches: usize,
    pub noise: NoiseReport,
    /// Cross-coil diagnostics; absent for single-coil data or too few samples per coil.
    pub max_cross_coil_z: Option<f64>,
    pub max_cross_coil_correlation: Option<f64>,
    pub pass: bool,
}

/// Extracts the noise carried by every pair of an augmentation run, as the
/// difference between the pipeline applied to the stored noisy slice and to
/// its noise-free regeneration, and tests it for i.i.d. complex Gaussianity.
/// Each pair is also replayed from its manifest record and compared with the
/// stored k-space.
pub fn validate_noise_run(cfg: &RunConfig) -> Result<NoiseValidation> {
    let info = RunInfo::read(&cfg.output)?;
    let records = read_manifest(&cfg.output.join(MANIFEST_FILE))?;
    if records.is_empty() {
        bail!("manifest in {} is empty", cfg.output.display());
    }
    let ds = Dataset::open(&info.dataset)
        .with_context(|| format!("opening dataset {}", info.dataset.display()))?;
    let params = ds.params().clone();
    let loaded_maps = if info.mode.needs_maps() { Some(load_all_maps(&ds)?) } else { None };
    let true_maps = (0..params.volumes as u64)
        .map(|v| volume_sensitivities(&params, v))
        .collect::<mraugment::Result<Vec<_>>>()?;
    let interp = info.augment.interpolation();

    let results = parallel_map(cfg.workers, &records, |rec| {
        let (v, s) = (rec.volume, rec.slice);
        let noisy = ds.load_kspace(v, s)?;
        let clean = synth_slice(&params, &true_maps[v as usize], v, s)?.clean_kspace;
        let maps = loaded_maps.as_ref().map(|m| &m[v as usize]);
        let a = augment_images(info.mode, &ifft2c_coils(&noisy), maps, &rec.spec.transforms, interp)?;
        let b = augment_images(info.mode, &ifft2c_coils(&clean), maps, &rec.spec.transforms, interp)?;
        let noise = a.coils.sub(&b.coils)?;

        let replay = build_pair(
            info.mode,
            &noisy,
            maps,
            rec.spec.clone(),
            MaskChoice::Given(rec.mask()?),
            &info.augment,
        )?;
        let replayed = encode_coil_stack(&replay.kspace);
        let stored = fs::read(cfg.output.join(&rec.kspace_file))
            .with_context(|| format!("reading {}", rec.kspace_file))?;
        Ok((noise, replayed == stored))
    })?;

    let replay_mismatches = results.iter().filter(|(_, ok)| !ok).count();
    let stacks: Vec<CoilStack> = results.into_iter().map(|(n, _)| n).collect();
    let samples: Vec<_> = stacks.iter().flat_map(|s| s.samples()).collect();
    let noise = validate_noise(&samples)?;
    let per_coil = stacks.iter().map(|s| s.coil(0).len()).sum::<usize>();
    let cov = if stacks[0].coils() > 1 && per_coil >= MIN_NOISE_SAMPLES {
        Some(cross_coil_covariance(&stacks)?)
    } else {
        None
    };
    let pass = noise.pass && replay_mismatches == 0;
    let out = NoiseValidation {
        mode: info.mode,
        pairs: stacks.len(),
        replay_mismatches,
        noise,
        max_cross_coil_z: cov.as_ref().map(|c| c.max_offdiag_z()),
        max_cross_coil_correlation: cov.as_ref().map(|c| c.max_offdiag_correlation()),
        pass,
    };
    let path = cfg.output.join(NOISE_REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&out)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(out)
}

/// Bytes of a coil stack in the on-disk format.
fn encode_coil_stack(stack: &CoilStack) -> Vec<u8> {
    stack
        .samples()
        .flat_map(|v| [v.re as f32, v.im as f32])
        .flat_map(f32::to_le_bytes)
        .collect()
}

/// One reconstructed image listed in `recon/index.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconEntry {
    pub name: String,
    pub volume: u64,
    pub slice: u64,
    pub epoch: Option<u64>,
    pub method: String,
    pub height: usize,
    pub width: usize,
    pub file: String,
    pub reference: String,
    pub mask: String,
}

struct ReconJob {
    name: String,
    volume: u64,
    slice: u64,
    epoch: Option<u64>,
    kspace: CoilStack,
    mask: mraugment::UndersamplingMask,
    reference: RealGrid,
}

fn methods(cfg: &RunConfig) -> Vec<&'static str> {
    match cfg.recon_method.as_str() {
        "zero-filled" => vec!["zero-filled"],
        "tv" => vec!["tv"],
        _ => vec!["zero-filled", "tv"],
    }
}

/// Zero-filled and/or TV reconstructions of a dataset (under the fixed
/// per-volume validation masks) or of an augmentation run.
pub fn recon(cfg: &RunConfig) -> Result<Vec<ReconEntry>> {
    let aug = cfg.augment_config();
    let methods = methods(cfg);
    let jobs: Vec<(u64, u64, Option<u64>, String)> = if cfg.recon_source == "dataset" {
        let ds = Dataset::open(&cfg.dataset)?;
        ds.slices()
            .into_iter()
            .map(|(v, s)| (v, s, None, format!("v{v:03}_s{s:03}")))
            .collect()
    } else {
        read_manifest(&cfg.output.join(MANIFEST_FILE))?
            .into_iter()
            .map(|r| (r.volume, r.slice, Some(r.epoch), pair_stem(r.epoch, r.volume, r.slice)))
            .collect()
    };
    let records = if cfg.recon_source == "augmented" {
        read_manifest(&cfg.output.join(MANIFEST_FILE))?
    } else {
        Vec::new()
    };
    let ds = if cfg.recon_source == "dataset" { Some(Dataset::open(&cfg.dataset)?) } else { None };

    let indexed: Vec<usize> = (0..jobs.len()).collect();
    let outputs = parallel_map(cfg.workers, &indexed, |&i| {
        let (v, s, e, ref name) = jobs[i];
        let job = match &ds {
            Some(ds) => {
                let k = ds.load_kspace(v, s)?;
                let (h, w) = k.shape();
                let mask = validation_mask(cfg.seed, v, w, aug.acceleration, aug.center_fraction)?;
                let (ch, cw) = aug.crop_for(h, w);
                ReconJob {
                    name: name.clone(),
                    volume: v,
                    slice: s,
                    epoch: e,
                    kspace: apply_mask(&k, &mask)?,
                    mask,
                    reference: ds.load_object(v, s)?.center_crop(ch, cw)?,
                }
            }
            None => {
                let rec = &records[i];
                ReconJob {
                    name: name.clone(),
                    volume: v,
                    slice: s,
                    epoch: e,
                    kspace: rec.load_kspace(&cfg.output)?,
                    mask: rec.mask()?,
                    reference: rec.load_target(&cfg.output)?,
                }
            }
        };
        let crop = job.reference.shape();
        let images = methods
            .iter()
            .map(|&m| {
                let img = if m == "tv" {
                    tv_reconstruct(&job.kspace, &job.mask, &cfg.tv_params(), crop)?.image
                } else {
                    zero_filled(&job.kspace, &job.mask, crop)?
                };
                Ok((m, img))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((job, images))
    })?;

    let dir = cfg.output.join(RECON_DIR);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut entries = Vec::new();
    for (job, images) in outputs {
        let reference = format!("{}_reference.bin", job.name);
        write_real(&dir.join(&reference), &job.reference)?;
        for (method, img) in images {
            let file = format!("{}_{method}.bin", job.name);
            write_real(&dir.join(&file), &img)?;
            entries.push(ReconEntry {
                name: job.name.clone(),
                volume: job.volume,
                slice: job.slice,
                epoch: job.epoch,
                method: method.into(),
                height: img.height(),
                width: img.width(),
                file,
                reference: reference.clone(),
                mask: job.mask.to_bit_string(),
            });
        }
    }
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e)?);
        text.push('\n');
    }
    let path = dir.join(RECON_INDEX);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub entry: ReconEntry,
    pub ssim: f64,
    pub psnr: f64,
    pub nmse: f64,
}

fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.8}")
    }
}

/// SSIM, PSNR and NMSE of every reconstruction against its reference, with
/// the data range taken as the largest reference value in the volume.
pub fn metrics(cfg: &RunConfig) -> Result<Vec<MetricRow>> {
    let dir = cfg.output.join(RECON_DIR);
    let path = dir.join(RECON_INDEX);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let entries: Vec<ReconEntry> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1))
        })
        .collect::<Result<_>>()?;
    if entries.is_empty() {
        bail!("no reconstructions listed in {}", path.display());
    }

    let rows = parallel_map(cfg.workers, &entries, |e| {
        let img = read_real(&dir.join(&e.file), e.height, e.width)?;
        let reference = read_real(&dir.join(&e.reference), e.height, e.width)?;
        Ok((img, reference))
    })?;
    let mut volume_max = std::collections::BTreeMap::<u64, f64>::new();
    for (e, (_, r)) in entries.iter().zip(&rows) {
        let m = volume_max.entry(e.volume).or_insert(0.0);
        *m = m.max(r.max());
    }
    let out = parallel_map(cfg.workers, &(0..entries.len()).collect::<Vec<_>>(), |&i| {
        let (img, reference) = &rows[i];
        let range = volume_max[&entries[i].volume];
        let range = if range > 0.0 { range } else { 1.0 };
        Ok(MetricRow {
            entry: entries[i].clone(),
            ssim: ssim(img, reference, range)?,
            psnr: psnr(img, reference, range)?,
            nmse: nmse(img, reference)?,
        })
    })?;

    let mut csv = String::from("name,volume,slice,epoch,method,ssim,psnr,nmse\n");
    for r in &out {
        let e = &r.entry;
        let epoch = e.epoch.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            e.name,
            e.volume,
            e.slice,
            epoch,
            e.method,
            fmt_metric(r.ssim),
            fmt_metric(r.psnr),
            fmt_metric(r.nmse)
        )?;
    }
    let mut methods: Vec<&str> = out.iter().map(|r| r.entry.method.as_str()).collect();
    methods.dedup();
    methods.sort_unstable();
    methods.dedup();
    for m in methods {
        let sel: Vec<&MetricRow> = out.iter().filter(|r| r.entry.method == m).collect();
        let n = sel.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n;
        writeln!(
            csv,
            "aggregate,,,,{m},{},{},{}",
            fmt_metric(mean(|r| r.ssim)),
            fmt_metric(mean(|r| r.psnr)),
            fmt_metric(mean(|r| r.nmse))
        )?;
    }
    let path = cfg.output.join(METRICS_FILE);
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(out)
}
