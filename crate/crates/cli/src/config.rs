//! Experiment configuration.
//!
//! The text format is one `key = value` pair per line; `#` starts a comment
//! and blank lines are ignored. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `mu_x`, `mu_y`, `sigma_x`, `sigma_y`, `rho`, `r`, `c0`, `cA`, `cB`, `I` | model parameters | required |
//! | `x0`, `y0` | start state | required |
//! | `n_paths` | Monte Carlo paths | 3000 |
//! | `dt` | time step | 0.01 |
//! | `horizon` | simulation horizon | 100 |
//! | `seed` | 64-bit seed | 1 |
//! | `boundary` | `calibrate`, `fixed` or `auto` | `auto` |
//! | `gamma` | decay rate, required for `fixed` | — |
//! | `x_grid` | comma-separated calibration anchors | `2,6,10,20` |
//! | `mode` | `stochastic`, `deterministic`, `calibrate` or `value` | `stochastic` |
//!
//! A JSON object with the same keys is accepted too; `x_grid` may then be
//! an array. [`ExperimentConfig::to_text`] writes every key, and parsing
//! the result gives back an identical config.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use timing_game::{Params, Point};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryChoice {
    /// Fit the decay rate at the configured anchors before simulating.
    Calibrate,
    Fixed { gamma: f64 },
    /// Constant boundary at `y*` (or none when `y* <= 0`).
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Stochastic,
    Deterministic,
    Calibrate,
    Value,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Stochastic => "stochastic",
            Mode::Deterministic => "deterministic",
            Mode::Calibrate => "calibrate",
            Mode::Value => "value",
        }
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stochastic" => Ok(Mode::Stochastic),
            "deterministic" => Ok(Mode::Deterministic),
            "calibrate" => Ok(Mode::Calibrate),
            "value" => Ok(Mode::Value),
            _ => Err(ConfigError::new(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub params: Params,
    pub s0: Point,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub boundary: BoundaryChoice,
    pub x_grid: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl ConfigError {
    fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

const PARAM_KEYS: [&str; 10] = ["mu_x", "mu_y", "sigma_x", "sigma_y", "rho", "r", "c0", "cA", "cB", "I"];
const OTHER_KEYS: [&str; 10] = ["x0", "y0", "n_paths", "dt", "horizon", "seed", "boundary", "gamma", "x_grid", "mode"];

impl ExperimentConfig {
    /// Parses either format; input starting with `{` is taken as JSON.
    pub fn parse(input: &str) -> Result<Self, ConfigError> {
        if input.trim_start().starts_with('{') {
            Self::from_json(input)
        } else {
            Self::from_text(input)
        }
    }

    pub fn from_text(input: &str) -> Result<Self, ConfigError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(format!("line {}: expected 'key = value'", i + 1)))?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::new(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        Self::from_map(kv)
    }

    pub fn from_json(input: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value =
            serde_json::from_str(input).map_err(|e| ConfigError::new(format!("invalid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| ConfigError::new("JSON config must be an object"))?;
        let mut kv = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|x| match x {
                        serde_json::Value::Number(n) => Ok(n.to_string()),
                        _ => Err(ConfigError::new(format!("'{k}' must be an array of numbers"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                _ => return Err(ConfigError::new(format!("'{k}' must be a number, string or array"))),
            };
            kv.insert(k.clone(), s);
        }
        Self::from_map(kv)
    }

    fn from_map(mut kv: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(k) = kv.keys().find(|k| !PARAM_KEYS.contains(&k.as_str()) && !OTHER_KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(format!("unknown key '{k}'")));
        }
        let mut req = |k: &str| -> Result<f64, ConfigError> {
            let v = kv.remove(k).ok_or_else(|| ConfigError::new(format!("missing key '{k}'")))?;
            number(k, &v)
        };
        let params = Params {
            mu_x: req("mu_x")?,
            mu_y: req("mu_y")?,
            sigma_x: req("sigma_x")?,
            sigma_y: req("sigma_y")?,
            rho: req("rho")?,
            r: req("r")?,
            c0: req("c0")?,
            c_a: req("cA")?,
            c_b: req("cB")?,
            inv: req("I")?,
        };
        let s0 = Point::new(req("x0")?, req("y0")?);
        let opt = |kv: &mut BTreeMap<String, String>, k: &str| kv.remove(k);
        let n_paths = match opt(&mut kv, "n_paths") {
            Some(v) => v.parse().map_err(|_| ConfigError::new(format!("n_paths: '{v}' is not a count")))?,
            None => 3000,
        };
        let dt = opt(&mut kv, "dt").map(|v| number("dt", &v)).transpose()?.unwrap_or(0.01);
        let horizon = opt(&mut kv, "horizon").map(|v| number("horizon", &v)).transpose()?.unwrap_or(100.0);
        let seed = match opt(&mut kv, "seed") {
            Some(v) => v.parse().map_err(|_| ConfigError::new(format!("seed: '{v}' is not a 64-bit integer")))?,
            None => 1,
        };
        let gamma = opt(&mut kv, "gamma").map(|v| number("gamma", &v)).transpose()?;
        let boundary = match opt(&mut kv, "boundary").as_deref().unwrap_or("auto") {
            "calibrate" => BoundaryChoice::Calibrate,
            "auto" => BoundaryChoice::Auto,
            "fixed" => BoundaryChoice::Fixed {
                gamma: gamma.ok_or_else(|| ConfigError::new("boundary = fixed needs 'gamma'"))?,
            },
            other => return Err(ConfigError::new(format!("unknown boundary '{other}'"))),
        };
        if gamma.is_some() && !matches!(boundary, BoundaryChoice::Fixed { .. }) {
            return Err(ConfigError::new("'gamma' is only used with boundary = fixed"));
        }
        let x_grid = match opt(&mut kv, "x_grid") {
            Some(v) => v
                .split(',')
                .map(|s| number("x_grid", s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![2.0, 6.0, 10.0, 20.0],
        };
        let mode = opt(&mut kv, "mode").map(|v| v.parse()).transpose()?.unwrap_or(Mode::Stochastic);
        let cfg = Self { params, s0, n_paths, dt, horizon, seed, boundary, x_grid, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the harness invariants; model assumptions are checked by the
    /// engine.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_paths < 1 {
            return Err(ConfigError::new("n_paths must be at least 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(ConfigError::new(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > self.dt) || !self.horizon.is_finite() {
            return Err(ConfigError::new(format!("horizon must exceed dt, got {}", self.horizon)));
        }
        if self.x_grid.is_empty() {
            return Err(ConfigError::new("x_grid must not be empty"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        for (k, v) in PARAM_KEYS.iter().zip([p.mu_x, p.mu_y, p.sigma_x, p.sigma_y, p.rho, p.r, p.c0, p.c_a, p.c_b, p.inv]) {
            put(k, v.to_string());
        }
        put("x0", self.s0.x.to_string());
        put("y0", self.s0.y.to_string());
        put("n_paths", self.n_paths.to_string());
        put("dt", self.dt.to_string());
        put("horizon", self.horizon.to_string());
        put("seed", self.seed.to_string());
        match &self.boundary {
            BoundaryChoice::Calibrate => put("boundary", "calibrate".into()),
            BoundaryChoice::Auto => put("boundary", "auto".into()),
            BoundaryChoice::Fixed { gamma } => {
                put("boundary", "fixed".into());
                put("gamma", gamma.to_string());
            }
        }
        put("x_grid", self.x_grid.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","));
        put("mode", self.mode.as_str().into());
        out
    }
}

fn number(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| ConfigError::new(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(ConfigError::new(format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
# base case
mu_x = 0.04
mu_y = 0.04
sigma_x = 0.25
sigma_y = 0.25
rho = 0.4
r = 0.1
c0 = 3.5
cA = 4.5
cB = 5
I = 100
x0 = 6
y0 = 8   # start
boundary = fixed
gamma = 0.0984
";

    #[test]
    fn parses_text_with_defaults() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.params, Params::table1());
        assert_eq!(c.s0, Point::new(6.0, 8.0));
        assert_eq!(c.boundary, BoundaryChoice::Fixed { gamma: 0.0984 });
        assert_eq!((c.n_paths, c.dt, c.horizon, c.seed), (3000, 0.01, 100.0, 1));
        assert_eq!(c.x_grid, vec![2.0, 6.0, 10.0, 20.0]);
        assert_eq!(c.mode, Mode::Stochastic);
    }

    #[test]
    fn json_matches_text() {
        let json = r#"{"mu_x":0.04,"mu_y":0.04,"sigma_x":0.25,"sigma_y":0.25,"rho":0.4,"r":0.1,
            "c0":3.5,"cA":4.5,"cB":5,"I":100,"x0":6,"y0":8,"boundary":"fixed","gamma":0.0984}"#;
        assert_eq!(ExperimentConfig::parse(json).unwrap(), ExperimentConfig::parse(SAMPLE).unwrap());
        let arr = json.replace("\"gamma\":0.0984", "\"gamma\":0.0984,\"x_grid\":[1,2.5]");
        assert_eq!(ExperimentConfig::parse(&arr).unwrap().x_grid, vec![1.0, 2.5]);
    }

    #[test]
    fn rejects_bad_input() {
        let err = |s: &str| ExperimentConfig::parse(s).unwrap_err().0;
        assert!(err(&format!("{SAMPLE}n_paths = 0\n")).contains("n_paths"));
        assert!(err(&format!("{SAMPLE}dt = 0\n")).contains("dt"));
        assert!(err(&format!("{SAMPLE}horizon = 0.001\n")).contains("horizon"));
        assert!(err(&format!("{SAMPLE}colour = red\n")).contains("unknown key"));
        assert!(err(&format!("{SAMPLE}mu_x = 1\n")).contains("duplicate"));
        assert!(err(&SAMPLE.replace("I = 100\n", "")).contains("missing key 'I'"));
        assert!(err(&SAMPLE.replace("gamma = 0.0984\n", "")).contains("gamma"));
        assert!(err(&SAMPLE.replace("r = 0.1", "r = fast")).contains("not a number"));
        assert!(err("this is not a config").contains("key = value"));
    }

    fn config_strategy() -> impl Strategy<Value = ExperimentConfig> {
        let params = prop::array::uniform10(-1e3f64..1e3);
        let boundary = prop_oneof![
            Just(BoundaryChoice::Calibrate),
            Just(BoundaryChoice::Auto),
            (1e-6f64..10.0).prop_map(|gamma| BoundaryChoice::Fixed { gamma }),
        ];
        let mode = prop_oneof![Just(Mode::Stochastic), Just(Mode::Deterministic), Just(Mode::Calibrate), Just(Mode::Value)];
        (
            params,
            (0.0f64..100.0, 0.0f64..100.0),
            1usize..1_000_000,
            (1e-6f64..1.0, 1.0f64..1e4),
            any::<u64>(),
            boundary,
            prop::collection::vec(0.0f64..100.0, 1..6),
            mode,
        )
            .prop_map(|(v, (x0, y0), n_paths, (dt, horizon), seed, boundary, x_grid, mode)| ExperimentConfig {
                params: Params {
                    mu_x: v[0],
                    mu_y: v[1],
                    sigma_x: v[2],
                    sigma_y: v[3],
                    rho: v[4],
                    r: v[5],
                    c0: v[6],
                    c_a: v[7],
                    c_b: v[8],
                    inv: v[9],
                },
                s0: Point::new(x0, y0),
                n_paths,
                dt,
                horizon,
                seed,
                boundary,
                x_grid,
                mode,
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(c in config_strategy()) {
            let back = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.to_text(), c.to_text());
        }
    }
}
