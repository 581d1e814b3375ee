//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. Pairs and lists are
//! comma-separated; `start_points` separates points with `;`. Unknown and
//! repeated keys are errors, and every range is checked at parse time.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::bands::z_from_level;
use crate::density::{default_bandwidth, AnalyticModel};
use crate::error::{FilamentError, Result};
use crate::flow::{Bounds, FlowSpec};
use crate::mc::{ExperimentConfig, GaussFieldConfig, StartSpec};
use crate::ridge::Polyline;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Word(&'static [&'static str]),
    Path,
    Float,
    Count,
    Pair,
    Box4,
    Floats,
    Counts,
    Points,
}

const MODELS: &[&str] = &["elongated_gaussian", "ring"];
const STARTS: &[&str] = &["segment", "circle", "points"];

/// Every accepted key, in emission order.
const KEYS: &[(&str, Kind)] = &[
    ("model", Kind::Word(MODELS)),
    ("sigma1", Kind::Float),
    ("sigma2", Kind::Float),
    ("r0", Kind::Float),
    ("s", Kind::Float),
    ("n", Kind::Count),
    ("n_grid", Kind::Counts),
    ("h", Kind::Float),
    ("beta", Kind::Float),
    ("seed", Kind::Count),
    ("reps", Kind::Count),
    ("starts", Kind::Word(STARTS)),
    ("start_from", Kind::Pair),
    ("start_to", Kind::Pair),
    ("start_count", Kind::Count),
    ("start_center", Kind::Pair),
    ("start_radius", Kind::Float),
    ("start_points", Kind::Points),
    ("step_length", Kind::Float),
    ("horizon_length", Kind::Float),
    ("bounds", Kind::Box4),
    ("guard_delta", Kind::Float),
    ("merge_radius", Kind::Float),
    ("z", Kind::Float),
    ("level", Kind::Float),
    ("z_grid", Kind::Floats),
    ("x_star", Kind::Pair),
    ("h_grid", Kind::Floats),
    ("noise_spacing", Kind::Float),
    ("sample_spacing", Kind::Float),
    ("probes", Kind::Count),
    ("cell_budget", Kind::Count),
    ("filament_from", Kind::Pair),
    ("filament_to", Kind::Pair),
    ("output", Kind::Path),
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_from: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_to: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_center: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_points: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_length: Option<f64>,
    /// `xmin, ymin, xmax, ymax`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guard_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_star: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filament_from: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filament_to: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn invalid(msg: String) -> FilamentError {
    FilamentError::InvalidParameter(msg)
}

fn number(text: &str) -> std::result::Result<Value, String> {
    let v: f64 = text.parse().map_err(|_| format!("not a number: {text:?}"))?;
    Number::from_f64(v).map(Value::Number).ok_or_else(|| format!("not a finite number: {text:?}"))
}

fn count(text: &str) -> std::result::Result<Value, String> {
    text.parse::<u64>().map(Value::from).map_err(|_| format!("not a nonnegative integer: {text:?}"))
}

fn list(text: &str, item: fn(&str) -> std::result::Result<Value, String>) -> std::result::Result<Vec<Value>, String> {
    text.split(',').map(|t| item(t.trim())).collect()
}

fn fixed(text: &str, len: usize) -> std::result::Result<Value, String> {
    let items = list(text, number)?;
    if items.len() != len {
        return Err(format!("expected {len} comma-separated numbers, got {}", items.len()));
    }
    Ok(Value::Array(items))
}

fn value_of(kind: Kind, text: &str) -> std::result::Result<Value, String> {
    match kind {
        Kind::Word(allowed) => {
            if allowed.contains(&text) {
                Ok(Value::from(text))
            } else {
                Err(format!("expected one of {allowed:?}, got {text:?}"))
            }
        }
        Kind::Path => Ok(Value::from(text)),
        Kind::Float => number(text),
        Kind::Count => count(text),
        Kind::Pair => fixed(text, 2),
        Kind::Box4 => fixed(text, 4),
        Kind::Floats => list(text, number).map(Value::Array),
        Kind::Counts => list(text, count).map(Value::Array),
        Kind::Points => text.split(';').map(|p| fixed(p.trim(), 2)).collect::<std::result::Result<_, _>>().map(Value::Array),
    }
}

fn text_of(v: &Value) -> String {
    match v {
        Value::Array(items) => {
            let sep = if items.first().is_some_and(Value::is_array) { "; " } else { ", " };
            items.iter().map(text_of).collect::<Vec<_>>().join(sep)
        }
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Map::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, val) =
                body.split_once('=').ok_or_else(|| invalid(format!("line {line}: expected key = value")))?;
            let (key, val) = (key.trim(), val.trim());
            let kind = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, kind)| *kind)
                .ok_or_else(|| invalid(format!("line {line}: unknown key {key:?}")))?;
            if map.contains_key(key) {
                return Err(invalid(format!("line {line}: key {key:?} given twice")));
            }
            let v = value_of(kind, val).map_err(|m| invalid(format!("line {line}: {key}: {m}")))?;
            map.insert(key.to_string(), v);
        }
        let config: Self = serde_json::from_value(Value::Object(map)).map_err(|e| invalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// The `key = value` text that parses back to `self`.
    pub fn emit(&self) -> String {
        let Ok(Value::Object(map)) = serde_json::to_value(self) else { unreachable!("config serialises to an object") };
        let mut out = String::new();
        for (key, _) in KEYS {
            if let Some(v) = map.get(*key) {
                out.push_str(&format!("{key} = {}\n", text_of(v)));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("r0", self.r0),
            ("s", self.s),
            ("h", self.h),
            ("beta", self.beta),
            ("start_radius", self.start_radius),
            ("step_length", self.step_length),
            ("horizon_length", self.horizon_length),
            ("guard_delta", self.guard_delta),
            ("merge_radius", self.merge_radius),
            ("noise_spacing", self.noise_spacing),
            ("sample_spacing", self.sample_spacing),
        ];
        for (key, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(invalid(format!("{key} must be positive, got {v}")));
                }
            }
        }
        let at_least_one =
            [("reps", self.reps), ("start_count", self.start_count), ("probes", self.probes), ("cell_budget", self.cell_budget)];
        for (key, v) in at_least_one {
            if v == Some(0) {
                return Err(invalid(format!("{key} must be at least 1")));
            }
        }
        if let Some(n) = self.n {
            if n < 2 {
                return Err(invalid(format!("n must be at least 2, got {n}")));
            }
        }
        if self.h.is_some() && self.beta.is_some() {
            return Err(invalid("give h or beta, not both".into()));
        }
        if self.z.is_some() && self.level.is_some() {
            return Err(invalid("give z or level, not both".into()));
        }
        if self.level.is_some() {
            self.z_value()?;
        }
        if let Some(b) = self.bounds {
            Bounds::new([b[0], b[1]], [b[2], b[3]])?;
        }
        if self.step_length.is_some() || self.horizon_length.is_some() {
            self.flow(Bounds::square(1.0))?;
        }
        if self.model.is_some() {
            self.model()?;
        }
        if self.starts.is_some() {
            self.start_spec()?.points()?;
        }
        if let Some(grid) = &self.n_grid {
            if grid.is_empty() || grid[0] < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("n_grid must be increasing with entries >= 2".into()));
            }
        }
        if let Some(grid) = &self.z_grid {
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("z_grid must be increasing".into()));
            }
        }
        if let Some(grid) = &self.h_grid {
            if grid.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
                return Err(invalid("h_grid entries must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }

    fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
        v.ok_or_else(|| invalid(format!("config needs {key}")))
    }

    pub fn model(&self) -> Result<AnalyticModel> {
        match self.model.as_deref() {
            Some("elongated_gaussian") => {
                AnalyticModel::elongated_gaussian(Self::need(self.sigma1, "sigma1")?, Self::need(self.sigma2, "sigma2")?)
            }
            Some("ring") => AnalyticModel::ring(Self::need(self.r0, "r0")?, Self::need(self.s, "s")?),
            Some(other) => Err(invalid(format!("unknown model {other:?}"))),
            None => Err(invalid("config needs model".into())),
        }
    }

    /// Working rectangle used when `bounds` is not given.
    pub fn model_bounds(model: &AnalyticModel) -> Bounds {
        match *model {
            AnalyticModel::ElongatedGaussian { sigma1, .. } => Bounds::square(6.0 * sigma1),
            AnalyticModel::Ring { r0, s, .. } => Bounds::square(r0 + 6.0 * s),
        }
    }

    pub fn start_spec(&self) -> Result<StartSpec> {
        match self.starts.as_deref() {
            Some("segment") => Ok(StartSpec::Segment {
                from: Self::need(self.start_from, "start_from")?,
                to: Self::need(self.start_to, "start_to")?,
                count: Self::need(self.start_count, "start_count")?,
            }),
            Some("circle") => Ok(StartSpec::Circle {
                center: self.start_center.unwrap_or([0.0, 0.0]),
                radius: Self::need(self.start_radius, "start_radius")?,
                count: Self::need(self.start_count, "start_count")?,
            }),
            Some("points") => {
                Ok(StartSpec::Points { points: self.start_points.clone().ok_or_else(|| invalid("config needs start_points".into()))? })
            }
            Some(other) => Err(invalid(format!("unknown start kind {other:?}"))),
            None => Err(invalid("config needs starts".into())),
        }
    }

    pub fn flow(&self, default_bounds: Bounds) -> Result<FlowSpec> {
        let bounds = match self.bounds {
            Some(b) => Bounds::new([b[0], b[1]], [b[2], b[3]])?,
            None => default_bounds,
        };
        let spec = FlowSpec {
            step_length: Self::need(self.step_length, "step_length")?,
            horizon_length: Self::need(self.horizon_length, "horizon_length")?,
            bounds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn guard_delta(&self) -> f64 {
        self.guard_delta.unwrap_or(1e-8)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    /// `h` if fixed, else the `beta` rule (default 1) at `n`.
    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        match self.h {
            Some(h) => Ok(h),
            None => default_bandwidth(n, self.beta.unwrap_or(1.0)),
        }
    }

    /// `z`, else the one for confidence `level` (default 0.95).
    pub fn z_value(&self) -> Result<f64> {
        match self.z {
            Some(z) => Ok(z),
            None => z_from_level(1.0 - self.level.unwrap_or(0.95)),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        if self.h.is_some() {
            return Err(invalid("experiments set h through beta; drop h".into()));
        }
        let model = self.model()?;
        let n_grid = match (&self.n_grid, self.n) {
            (Some(g), None) => g.clone(),
            (None, Some(n)) => vec![n],
            (Some(_), Some(_)) => return Err(invalid("give n or n_grid, not both".into())),
            (None, None) => return Err(invalid("config needs n or n_grid".into())),
        };
        let config = ExperimentConfig {
            model,
            n_grid,
            beta: self.beta.unwrap_or(1.0),
            reps: Self::need(self.reps, "reps")?,
            z_grid: self.z_grid.clone().unwrap_or_else(|| vec![-1.0, 0.0, 1.0, 2.0, 3.0]),
            seed: self.seed(),
            starts: self.start_spec()?,
            flow: self.flow(Self::model_bounds(&model))?,
            guard_delta: self.guard_delta(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn gauss_field(&self) -> Result<GaussFieldConfig> {
        let from = Self::need(self.filament_from, "filament_from")?;
        let to = Self::need(self.filament_to, "filament_to")?;
        let line = Polyline { vertices: vec![from, to], closed: false };
        let h_grid = self.h_grid.clone().ok_or_else(|| invalid("config needs h_grid".into()))?;
        let mut config = GaussFieldConfig::new(line, h_grid, Self::need(self.reps, "reps")?, self.seed());
        if let Some(v) = self.noise_spacing {
            config.noise_spacing = v;
        }
        if let Some(v) = self.sample_spacing {
            config.sample_spacing = v;
        }
        if let Some(v) = &self.z_grid {
            config.z_grid = v.clone();
        }
        if let Some(v) = self.probes {
            config.probes = v;
        }
        if let Some(v) = self.cell_budget {
            config.cell_budget = v;
        }
        config.guard_delta = self.guard_delta();
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
# ring run
model = ring
r0 = 1
s = 0.1
n_grid = 1000, 4000
reps = 5
starts = circle
start_radius = 1.06   # inside the ridge band
start_count = 12
step_length = 0.005
horizon_length = 1
bounds = -3, -3, 3, 3
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.model.as_deref(), Some("ring"));
        assert_eq!(c.n_grid, Some(vec![1000, 4000]));
        assert_eq!(c.bounds, Some([-3.0, -3.0, 3.0, 3.0]));
        let e = c.experiment().unwrap();
        assert_eq!(e.starts.points().unwrap().len(), 12);
        assert_eq!(e.seed, 1);
    }

    #[test]
    fn emit_round_trips() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(RunConfig::parse(&c.emit()).unwrap(), c);
        let p = RunConfig::parse("starts = points\nstart_points = 0.1, 0.2; -1e-3, 5\n").unwrap();
        assert_eq!(RunConfig::parse(&p.emit()).unwrap(), p);
    }

    #[test]
    fn errors_name_the_line() {
        let msg = |t: &str| RunConfig::parse(t).unwrap_err().to_string();
        assert!(msg("n = 10\nbogus = 1\n").contains("line 2: unknown key"));
        assert!(msg("n = 10\nn = 11\n").contains("line 2"));
        assert!(msg("\nh = abc\n").contains("line 2"));
        assert!(msg("model\n").contains("line 1"));
        assert!(msg("model = torus\n").contains("line 1"));
    }

    #[test]
    fn ranges_checked_at_parse_time() {
        for bad in [
            "h = -1",
            "h = 0.3\nbeta = 1",
            "level = 1.5",
            "reps = 0",
            "n = 1",
            "bounds = 1, 0, 0, 1",
            "step_length = 1\nhorizon_length = 0.5",
            "model = elongated_gaussian\nsigma1 = 1\nsigma2 = 2",
            "n_grid = 4000, 1000",
            "h_grid = 0.5, 1.5",
            "z = 1\nlevel = 0.9",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn defaults() {
        let c = RunConfig::parse("").unwrap();
        assert!((crate::bands::limit_cdf(c.z_value().unwrap()) - 0.95).abs() < 1e-12);
        assert!((c.z_value().unwrap() - 3.663).abs() < 1e-3);
        assert_eq!(c.bandwidth(512).unwrap(), (1.0f64 / 512.0).powf(1.0 / 9.0));
        assert!(c.model().is_err());
    }

    proptest! {
        #[test]
        fn numeric_round_trip(h in 1e-6f64..10.0, b in proptest::collection::vec(-1e3f64..1e3, 2), seed in 0u64..u64::MAX) {
            let c = RunConfig { h: Some(h), x_star: Some([b[0], b[1]]), seed: Some(seed), ..Default::default() };
            prop_assert_eq!(RunConfig::parse(&c.emit()).unwrap(), c);
        }
    }
}
