//! Run configuration: a flat JSON object whose keys can be overridden by
//! `MRAUG_<KEY>` environment variables and by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mraugment::phantom::{SimulationParams, Variant};
use mraugment::pipeline::{AugmentConfig, Mode, Ranges, ScheduleKind, Weights};
use mraugment::recon::TvParams;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const ENV_PREFIX: &str = "MRAUG_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub mode: String,
    pub epoch_start: u64,
    pub epoch_end: u64,
    pub workers: usize,

    pub volumes: usize,
    pub slices_per_volume: usize,
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub sigma: f64,
    pub variant: String,
    pub jitter: bool,

    pub p_max: f64,
    pub schedule: String,
    pub schedule_c: f64,
    pub total_epochs: u64,
    pub w_hflip: f64,
    pub w_vflip: f64,
    pub w_rot90: f64,
    pub w_rotate: f64,
    pub w_translate: f64,
    pub w_scale_iso: f64,
    pub w_scale_aniso: f64,
    pub w_shear: f64,
    pub rotate_min_deg: f64,
    pub rotate_max_deg: f64,
    pub translate_x_min: f64,
    pub translate_x_max: f64,
    pub translate_y_min: f64,
    pub translate_y_max: f64,
    pub scale_iso_min: f64,
    pub scale_iso_max: f64,
    pub scale_aniso_min: f64,
    pub scale_aniso_max: f64,
    pub shear_min_deg: f64,
    pub shear_max_deg: f64,
    pub integer_translation: bool,
    pub upsample: usize,
    pub acceleration: u32,
    pub center_fraction: f64,
    pub crop_height: usize,
    pub crop_width: usize,

    pub recon_source: String,
    pub recon_method: String,
    pub tv_lambda: f64,
    pub tv_iterations: usize,
    pub tv_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let aug = AugmentConfig::default();
        let sim = SimulationParams::default();
        let tv = TvParams::default();
        let (w, r) = (aug.weights, aug.ranges);
        Self {
            dataset: "data".into(),
            output: "run".into(),
            seed: 0,
            mode: Mode::MrAugment.as_str().into(),
            epoch_start: 0,
            epoch_end: 1,
            workers: 1,

            volumes: sim.volumes,
            slices_per_volume: sim.slices_per_volume,
            height: sim.height,
            width: sim.width,
            coils: sim.coils,
            sigma: sim.sigma,
            variant: "modified".into(),
            jitter: sim.jitter,

            p_max: aug.p_max,
            schedule: "exponential".into(),
            schedule_c: aug.schedule_c,
            total_epochs: aug.total_epochs,
            w_hflip: w.hflip,
            w_vflip: w.vflip,
            w_rot90: w.rot90,
            w_rotate: w.rotate,
            w_translate: w.translate,
            w_scale_iso: w.scale_iso,
            w_scale_aniso: w.scale_aniso,
            w_shear: w.shear,
            rotate_min_deg: r.rotate_deg.0,
            rotate_max_deg: r.rotate_deg.1,
            translate_x_min: r.translate_x.0,
            translate_x_max: r.translate_x.1,
            translate_y_min: r.translate_y.0,
            translate_y_max: r.translate_y.1,
            scale_iso_min: r.scale_iso.0,
            scale_iso_max: r.scale_iso.1,
            scale_aniso_min: r.scale_aniso.0,
            scale_aniso_max: r.scale_aniso.1,
            shear_min_deg: r.shear_deg.0,
            shear_max_deg: r.shear_deg.1,
            integer_translation: aug.integer_translation,
            upsample: aug.upsample,
            acceleration: aug.acceleration,
            center_fraction: aug.center_fraction,
            crop_height: aug.crop.0,
            crop_width: aug.crop.1,

            recon_source: "dataset".into(),
            recon_method: "both".into(),
            tv_lambda: 0.1,
            tv_iterations: tv.iterations,
            tv_step: tv.step,
        }
    }
}

/// `(key, description)` for `--help-config`, in schema order.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "dataset directory (written by simulate, read by the other commands)"),
    ("output", "run directory for augmented pairs, reconstructions and reports"),
    ("seed", "global seed for augmentation and validation masks"),
    ("mode", "augmentation mode: mraugment, naive or object-level"),
    ("epoch_start", "first epoch to generate (inclusive)"),
    ("epoch_end", "last epoch to generate (exclusive)"),
    ("workers", "worker threads; outputs do not depend on it"),
    ("volumes", "simulate: number of volumes"),
    ("slices_per_volume", "simulate: slices per volume"),
    ("height", "simulate: slice height (>= 32)"),
    ("width", "simulate: slice width (>= 32)"),
    ("coils", "simulate: receiver coils"),
    ("sigma", "simulate: noise standard deviation per real component"),
    ("variant", "simulate: phantom variant (modified, original, symmetric)"),
    ("jitter", "simulate: randomly perturb the phantom per slice"),
    ("p_max", "largest augmentation probability"),
    ("schedule", "probability schedule: exponential or constant"),
    ("schedule_c", "sharpness of the exponential schedule"),
    ("total_epochs", "epochs over which the schedule ramps up"),
    ("w_hflip", "weight of horizontal flips"),
    ("w_vflip", "weight of vertical flips"),
    ("w_rot90", "weight of quarter turns"),
    ("w_rotate", "weight of arbitrary rotations"),
    ("w_translate", "weight of translations"),
    ("w_scale_iso", "weight of isotropic scaling"),
    ("w_scale_aniso", "weight of anisotropic scaling"),
    ("w_shear", "weight of shearing"),
    ("rotate_min_deg", "rotation range lower bound (degrees)"),
    ("rotate_max_deg", "rotation range upper bound (degrees)"),
    ("translate_x_min", "horizontal translation lower bound (fraction of width)"),
    ("translate_x_max", "horizontal translation upper bound (fraction of width)"),
    ("translate_y_min", "vertical translation lower bound (fraction of height)"),
    ("translate_y_max", "vertical translation upper bound (fraction of height)"),
    ("scale_iso_min", "isotropic scale lower bound"),
    ("scale_iso_max", "isotropic scale upper bound"),
    ("scale_aniso_min", "per-axis scale lower bound"),
    ("scale_aniso_max", "per-axis scale upper bound"),
    ("shear_min_deg", "shear angle lower bound (degrees)"),
    ("shear_max_deg", "shear angle upper bound (degrees)"),
    ("integer_translation", "round translations to whole pixels"),
    ("upsample", "upsampling factor before interpolating warps"),
    ("acceleration", "undersampling factor R (1 = fully sampled)"),
    ("center_fraction", "fraction of always-sampled center columns"),
    ("crop_height", "target height (clamped to the image)"),
    ("crop_width", "target width (clamped to the image)"),
    ("recon_source", "recon input: dataset (validation masks) or augmented (run pairs)"),
    ("recon_method", "recon method: zero-filled, tv or both"),
    ("tv_lambda", "TV regularization weight"),
    ("tv_iterations", "TV gradient steps"),
    ("tv_step", "TV initial step size"),
];

/// Text printed by `--help-config`.
pub fn help_text() -> String {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut out = String::from(
        "Configuration keys (JSON object in --config; override with MRAUG_<KEY>):\n\n",
    );
    for (key, doc) in KEYS {
        out.push_str(&format!("  {key:<22} {:<14} {doc}\n", defaults[*key].to_string()));
    }
    out
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub epochs: Option<(u64, u64)>,
    pub workers: Option<usize>,
}

/// Parses `A..B` (end exclusive) or a single epoch `A`.
pub fn parse_epochs(s: &str) -> Result<(u64, u64)> {
    let parse = |t: &str| -> Result<u64> {
        t.trim()
            .parse()
            .with_context(|| format!("invalid epoch {t:?} in range {s:?}"))
    };
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let a = parse(s)?;
            (a, a + 1)
        }
    };
    if b <= a {
        bail!("epoch range {s:?} is empty");
    }
    Ok((a, b))
}

fn env_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl RunConfig {
    /// Defaults, then the config file, then `env`, then `overrides`.
    pub fn load(
        path: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut map: Map<String, Value> = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                match serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
                {
                    Value::Object(m) => m,
                    _ => bail!("config {} must be a JSON object", p.display()),
                }
            }
            None => Map::new(),
        };
        let env: BTreeMap<String, String> = env.into_iter().collect();
        for (name, raw) in &env {
            if let Some(key) = name.strip_prefix(ENV_PREFIX) {
                map.insert(key.to_ascii_lowercase(), env_value(raw));
            }
        }
        let value = Value::Object(map);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                anyhow::anyhow!("invalid config: {}", e.inner())
            } else {
                anyhow::anyhow!("invalid config key `{path}`: {}", e.inner())
            }
        })?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = &overrides.mode {
            cfg.mode = mode.clone();
        }
        if let Some((a, b)) = overrides.epochs {
            cfg.epoch_start = a;
            cfg.epoch_end = b;
        }
        if let Some(w) = overrides.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every key and names the first invalid one.
    pub fn validate(&self) -> Result<()> {
        let key_err = |key: &str, why: String| anyhow::anyhow!("invalid config key `{key}`: {why}");
        self.mode_enum().map_err(|e| key_err("mode", e.to_string()))?;
        self.variant_enum().map_err(|e| key_err("variant", e.to_string()))?;
        self.schedule_enum().map_err(|e| key_err("schedule", e))?;
        if self.epoch_end <= self.epoch_start {
            return Err(key_err("epoch_end", "must exceed epoch_start".into()));
        }
        if self.workers == 0 {
            return Err(key_err("workers", "must be at least 1".into()));
        }
        for (key, w) in [
            ("w_hflip", self.w_hflip),
            ("w_vflip", self.w_vflip),
            ("w_rot90", self.w_rot90),
            ("w_rotate", self.w_rotate),
            ("w_translate", self.w_translate),
            ("w_scale_iso", self.w_scale_iso),
            ("w_scale_aniso", self.w_scale_aniso),
            ("w_shear", self.w_shear),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(key_err(key, format!("{w} is outside [0, 1]")));
            }
        }
        for (lo_key, lo, hi) in [
            ("rotate_min_deg", self.rotate_min_deg, self.rotate_max_deg),
            ("translate_x_min", self.translate_x_min, self.translate_x_max),
            ("translate_y_min", self.translate_y_min, self.translate_y_max),
            ("scale_iso_min", self.scale_iso_min, self.scale_iso_max),
            ("scale_aniso_min", self.scale_aniso_min, self.scale_aniso_max),
            ("shear_min_deg", self.shear_min_deg, self.shear_max_deg),
        ] {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(key_err(lo_key, format!("range [{lo}, {hi}] is empty")));
            }
        }
        match self.recon_source.as_str() {
            "dataset" | "augmented" => {}
            other => return Err(key_err("recon_source", format!("unknown source {other:?}"))),
        }
        match self.recon_method.as_str() {
            "zero-filled" | "tv" | "both" => {}
            other => return Err(key_err("recon_method", format!("unknown method {other:?}"))),
        }
        if self.tv_lambda.is_nan() || self.tv_lambda < 0.0 {
            return Err(key_err("tv_lambda", "must be non-negative".into()));
        }
        if self.tv_iterations == 0 {
            return Err(key_err("tv_iterations", "must be at least 1".into()));
        }
        if self.tv_step.is_nan() || self.tv_step <= 0.0 {
            return Err(key_err("tv_step", "must be positive".into()));
        }
        self.augment_config().validate().map_err(|e| match e {
            mraugment::Error::InvalidParameter { name, reason } => key_err(name, reason),
            other => other.into(),
        })?;
        self.simulation().validate().map_err(|e| match e {
            mraugment::Error::InvalidParameter { name, reason } => key_err(name, reason),
            other => other.into(),
        })?;
        Ok(())
    }

    pub fn mode_enum(&self) -> mraugment::Result<Mode> {
        self.mode.parse()
    }

    pub fn variant_enum(&self) -> mraugment::Result<Variant> {
        self.variant.parse()
    }

    fn schedule_enum(&self) -> std::result::Result<ScheduleKind, String> {
        match self.schedule.as_str() {
            "exponential" => Ok(ScheduleKind::Exponential),
            "constant" => Ok(ScheduleKind::Constant),
            other => Err(format!("unknown schedule {other:?} (expected exponential or constant)")),
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            p_max: self.p_max,
            schedule_c: self.schedule_c,
            total_epochs: self.total_epochs,
            schedule: self.schedule_enum().unwrap_or(ScheduleKind::Exponential),
            weights: Weights {
                hflip: self.w_hflip,
                vflip: self.w_vflip,
                rot90: self.w_rot90,
                rotate: self.w_rotate,
                translate: self.w_translate,
                scale_iso: self.w_scale_iso,
                scale_aniso: self.w_scale_aniso,
                shear: self.w_shear,
            },
            ranges: Ranges {
                rotate_deg: (self.rotate_min_deg, self.rotate_max_deg),
                translate_x: (self.translate_x_min, self.translate_x_max),
                translate_y: (self.translate_y_min, self.translate_y_max),
                scale_iso: (self.scale_iso_min, self.scale_iso_max),
                scale_aniso: (self.scale_aniso_min, self.scale_aniso_max),
                shear_deg: (self.shear_min_deg, self.shear_max_deg),
            },
            integer_translation: self.integer_translation,
            upsample: self.upsample,
            acceleration: self.acceleration,
            center_fraction: self.center_fraction,
            crop: (self.crop_height, self.crop_width),
        }
    }

    pub fn simulation(&self) -> SimulationParams {
        SimulationParams {
            volumes: self.volumes,
            slices_per_volume: self.slices_per_volume,
            height: self.height,
            width: self.width,
            coils: self.coils,
            sigma: self.sigma,
            seed: self.seed,
            variant: self.variant_enum().unwrap_or_default(),
            jitter: self.jitter,
        }
    }

    pub fn tv_params(&self) -> TvParams {
        TvParams {
            lambda: self.tv_lambda,
            iterations: self.tv_iterations,
            step: self.tv_step,
            ..TvParams::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_json(json: &str, env: &[(&str, &str)]) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, json).unwrap();
        RunConfig::load(
            Some(&path),
            env.iter().map(|(k, v)| (k.to_string(), v.to_string())),
            &Overrides::default(),
        )
    }

    #[test]
    fn defaults_follow_the_reference_configuration() {
        let c = RunConfig::default();
        assert_eq!((c.p_max, c.schedule_c, c.acceleration, c.center_fraction), (0.55, 5.0, 8, 0.04));
        assert_eq!((c.w_translate, c.w_shear, c.w_hflip, c.w_rotate), (1.0, 1.0, 0.5, 0.5));
        assert_eq!((c.crop_height, c.crop_width), (320, 320));
        c.validate().unwrap();
    }

    #[test]
    fn every_key_is_documented() {
        let defaults = serde_json::to_value(RunConfig::default()).unwrap();
        let fields: Vec<&String> = defaults.as_object().unwrap().keys().collect();
        assert_eq!(fields.len(), KEYS.len());
        for (k, _) in KEYS {
            assert!(defaults.get(*k).is_some(), "{k}");
        }
        assert!(help_text().contains("p_max"));
    }

    #[test]
    fn unknown_and_mistyped_keys_are_named() {
        let e = load_json(r#"{"p_maxx": 0.3}"#, &[]).unwrap_err().to_string();
        assert!(e.contains("p_maxx"), "{e}");
        let e = load_json(r#"{"acceleration": "fast"}"#, &[]).unwrap_err().to_string();
        assert!(e.contains("acceleration"), "{e}");
        let e = load_json(r#"{"w_shear": 1.5}"#, &[]).unwrap_err().to_string();
        assert!(e.contains("w_shear"), "{e}");
        let e = load_json(r#"{"mode": "fancy"}"#, &[]).unwrap_err().to_string();
        assert!(e.contains("mode"), "{e}");
        let e = load_json(r#"{"height": 8}"#, &[]).unwrap_err().to_string();
        assert!(e.contains("`height`"), "{e}");
    }

    #[test]
    fn precedence_file_env_flags() {
        let c = load_json(r#"{"p_max": 0.3, "seed": 4}"#, &[("MRAUG_P_MAX", "0.2"), ("OTHER", "x")]).unwrap();
        assert_eq!((c.p_max, c.seed), (0.2, 4));
        let c = load_json(r#"{"mode": "naive"}"#, &[("MRAUG_SCHEDULE", "constant")]).unwrap();
        assert_eq!((c.mode.as_str(), c.schedule.as_str()), ("naive", "constant"));
        let e = load_json("{}", &[("MRAUG_BOGUS", "1")]).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let o = Overrides {
            seed: Some(9),
            epochs: Some((3, 5)),
            ..Overrides::default()
        };
        let c = RunConfig::load(None, [("MRAUG_SEED".to_string(), "1".to_string())], &o).unwrap();
        assert_eq!((c.seed, c.epoch_start, c.epoch_end), (9, 3, 5));
    }

    #[test]
    fn epoch_ranges() {
        assert_eq!(parse_epochs("0..3").unwrap(), (0, 3));
        assert_eq!(parse_epochs("7").unwrap(), (7, 8));
        assert!(parse_epochs("3..3").is_err());
        assert!(parse_epochs("a..2").is_err());
    }
}
