//! Settings resolution: built-in defaults, then the JSON config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graspkit::camera::Intrinsics;
use graspkit::fas::GripperConfig;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Keys accepted in a config file.
const KNOWN_KEYS: &[&str] = &[
    "intrinsics",
    "gripper",
    "seed",
    "threads",
    "stride",
    "views",
    "angles",
    "threshold",
    "top_k",
    "cell_size",
    "widths",
    "depth_offsets",
    "brute_force",
    "nms",
    "nms_trans",
    "nms_rot_deg",
    "frictions",
    "k_max",
    "normal_k",
    "objects",
    "density",
    "per_object",
    "reps",
    "avh_density",
];

#[derive(Debug, Clone, Serialize)]
pub struct Override {
    pub value: Value,
    pub source: &'static str,
}

/// A config file plus the record of every non-default setting used.
#[derive(Debug, Default)]
pub struct Resolver {
    file: Map<String, Value>,
    pub overrides: BTreeMap<String, Override>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(file) = value else {
            return Err(graspkit::Error::Format {
                offset: 0,
                message: "config must be a JSON object".into(),
            }
            .into());
        };
        if let Some(bad) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(graspkit::Error::Format {
                offset: 0,
                message: format!("unknown config key {bad:?}"),
            }
            .into());
        }
        Ok(Self {
            file,
            overrides: BTreeMap::new(),
        })
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T, source: &'static str) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.overrides
            .insert(key.to_string(), Override { value, source });
    }

    /// The flag if given, else the config entry, else `default`.
    pub fn get<T: Serialize + DeserializeOwned>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T> {
        Ok(self.get_opt(key, flag)?.unwrap_or(default))
    }

    pub fn get_opt<T: Serialize + DeserializeOwned>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>> {
        if let Some(v) = flag {
            self.record(key, &v, "flag");
            return Ok(Some(v));
        }
        match self.file.get(key) {
            Some(raw) => {
                let v: T = serde_json::from_value(raw.clone())
                    .with_context(|| format!("config key {key:?}"))?;
                self.record(key, &v, "config");
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    /// Intrinsics from `--intrinsics <json>`, or the config entry (an object
    /// or a path), or the built-in camera.
    pub fn intrinsics(&mut self, flag: Option<&Path>) -> Result<(Intrinsics, Option<PathBuf>)> {
        if let Some(p) = flag {
            let intr = load_intrinsics(p)?;
            self.record("intrinsics", &intr, "flag");
            return Ok((intr, Some(p.to_path_buf())));
        }
        match self.file.get("intrinsics").cloned() {
            Some(Value::String(p)) => {
                let intr = load_intrinsics(Path::new(&p))?;
                self.record("intrinsics", &intr, "config");
                Ok((intr, Some(PathBuf::from(p))))
            }
            Some(v) => {
                let intr: Intrinsics =
                    serde_json::from_value(v).context("config key \"intrinsics\"")?;
                intr.validate()?;
                self.record("intrinsics", &intr, "config");
                Ok((intr, None))
            }
            None => Ok((Intrinsics::default(), None)),
        }
    }

    /// Gripper from `--gripper h,l,w_max,t_f,b_d`, or the config entry (the
    /// same string or an object), or the default.
    pub fn gripper(&mut self, flag: Option<&str>) -> Result<GripperConfig> {
        if let Some(s) = flag {
            let g = GripperConfig::parse_csv(s)?;
            self.record("gripper", &g, "flag");
            return Ok(g);
        }
        match self.file.get("gripper").cloned() {
            Some(Value::String(s)) => {
                let g = GripperConfig::parse_csv(&s)?;
                self.record("gripper", &g, "config");
                Ok(g)
            }
            Some(v) => {
                let g: GripperConfig =
                    serde_json::from_value(v).context("config key \"gripper\"")?;
                g.validate()?;
                self.record("gripper", &g, "config");
                Ok(g)
            }
            None => Ok(GripperConfig::default()),
        }
    }
}

fn load_intrinsics(path: &Path) -> Result<Intrinsics> {
    Intrinsics::load_json(path).with_context(|| format!("reading intrinsics {}", path.display()))
}

/// Comma-separated floats.
pub fn parse_csv_f64(s: &str) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => bail!("expected comma-separated numbers, got {s:?}"),
    }
}
