//! Flat `key = value` run configuration. Every key is optional; unknown keys
//! are rejected with the closest known key as a hint.

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::metrics::DEFAULT_BOUNDARY_RADIUS;
use crate::segmentation::SegmentConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub segment: SegmentConfig,
    pub boundary_radius: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            segment: SegmentConfig::default(),
            boundary_radius: DEFAULT_BOUNDARY_RADIUS,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.loss.validate()?;
        self.segment.validate()?;
        if self.boundary_radius == 0 {
            return Err(Error::Config("boundary_radius must be at least 1".into()));
        }
        Ok(())
    }
}

pub const KEYS: &[&str] = &[
    "iterations",
    "seed",
    "lr_position",
    "lr_log_scale",
    "lr_rotation",
    "lr_opacity",
    "lr_color",
    "lr_feature",
    "beta1",
    "beta2",
    "eps",
    "densify_interval",
    "densify_grad_threshold",
    "prune_opacity_threshold",
    "densify_until",
    "percent_dense",
    "background",
    "lambda_dssim",
    "lambda_clustering",
    "temperature",
    "samples_per_view",
    "knn_k",
    "far_m",
    "lambda_near",
    "lambda_far",
    "t",
    "foreground_alpha",
    "min_component",
    "outlier_neighbors",
    "outlier_std",
    "recovery_factor",
    "boundary_radius",
];

fn closest_key(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|(d, k)| *d <= 3.max(k.len() / 3))
        .min()
        .map(|(_, k)| k)
}

/// Byte offset of the line defining `key`, for error messages.
fn key_offset(text: &str, key: &str) -> usize {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let lhs = line.split('=').next().unwrap_or("").trim().trim_matches('"');
        if lhs == key {
            return offset + line.len() - line.trim_start().len();
        }
        offset += line.len();
    }
    0
}

pub fn decode_config(text: &str) -> Result<Config> {
    const CONTEXT: &str = "config";
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let offset = e.span().map_or(0, |s| s.start);
        Error::parse(CONTEXT, offset, e.message().trim().to_string())
    })?;
    let mut cfg = Config::default();
    for (key, value) in &table {
        let at = key_offset(text, key);
        let bad = |expect: &str| Error::parse(CONTEXT, at, format!("`{key}` must be {expect}"));
        let float = || match value {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(bad("a number")),
        };
        let count = || match value {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(bad("a non-negative integer")),
        };
        let lr = &mut cfg.train.learning_rates;
        match key.as_str() {
            "iterations" => cfg.train.iterations = count()?,
            "seed" => cfg.train.seed = count()? as u64,
            "lr_position" => lr.position = float()?,
            "lr_log_scale" => lr.log_scale = float()?,
            "lr_rotation" => lr.rotation = float()?,
            "lr_opacity" => lr.opacity = float()?,
            "lr_color" => lr.color = float()?,
            "lr_feature" => lr.feature = float()?,
            "beta1" => cfg.train.beta1 = float()?,
            "beta2" => cfg.train.beta2 = float()?,
            "eps" => cfg.train.eps = float()?,
            "densify_interval" => cfg.train.densify_interval = count()?,
            "densify_grad_threshold" => cfg.train.densify_grad_threshold = float()?,
            "prune_opacity_threshold" => cfg.train.prune_opacity_threshold = float()?,
            "densify_until" => cfg.train.densify_until = float()?,
            "percent_dense" => cfg.train.percent_dense = float()?,
            "background" => {
                let rgb = value
                    .as_array()
                    .filter(|a| a.len() == 3)
                    .and_then(|a| {
                        a.iter()
                            .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                            .collect::<Option<Vec<f64>>>()
                    })
                    .ok_or_else(|| bad("an array of three numbers"))?;
                cfg.train.background = [rgb[0], rgb[1], rgb[2]];
            }
            "lambda_dssim" => cfg.loss.lambda_dssim = float()?,
            "lambda_clustering" => cfg.loss.lambda_clustering = float()?,
            "temperature" => cfg.loss.temperature = float()?,
            "samples_per_view" => cfg.loss.samples_per_view = count()?,
            "knn_k" => cfg.loss.knn_k = count()?,
            "far_m" => cfg.loss.far_m = count()?,
            "lambda_near" => cfg.loss.lambda_near = float()?,
            "lambda_far" => cfg.loss.lambda_far = float()?,
            "t" => cfg.segment.threshold = float()?,
            "foreground_alpha" => cfg.segment.foreground_alpha = float()?,
            "min_component" => cfg.segment.min_component = count()?,
            "outlier_neighbors" => cfg.segment.outlier_neighbors = count()?,
            "outlier_std" => cfg.segment.outlier_std = float()?,
            "recovery_factor" => cfg.segment.recovery_factor = float()?,
            "boundary_radius" => cfg.boundary_radius = count()?,
            _ => {
                let hint = closest_key(key).map_or(String::new(), |k| format!("; did you mean `{k}`?"));
                return Err(Error::parse(CONTEXT, at, format!("unknown key `{key}`{hint}")));
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every key with its current value, in [`KEYS`] order.
pub fn encode_config(cfg: &Config) -> String {
    let (t, l, s) = (&cfg.train, &cfg.loss, &cfg.segment);
    let lr = &t.learning_rates;
    let bg = t.background;
    let values: Vec<String> = vec![
        t.iterations.to_string(),
        t.seed.to_string(),
        format!("{:?}", lr.position),
        format!("{:?}", lr.log_scale),
        format!("{:?}", lr.rotation),
        format!("{:?}", lr.opacity),
        format!("{:?}", lr.color),
        format!("{:?}", lr.feature),
        format!("{:?}", t.beta1),
        format!("{:?}", t.beta2),
        format!("{:?}", t.eps),
        t.densify_interval.to_string(),
        format!("{:?}", t.densify_grad_threshold),
        format!("{:?}", t.prune_opacity_threshold),
        format!("{:?}", t.densify_until),
        format!("{:?}", t.percent_dense),
        format!("[{:?}, {:?}, {:?}]", bg[0], bg[1], bg[2]),
        format!("{:?}", l.lambda_dssim),
        format!("{:?}", l.lambda_clustering),
        format!("{:?}", l.temperature),
        l.samples_per_view.to_string(),
        l.knn_k.to_string(),
        l.far_m.to_string(),
        format!("{:?}", l.lambda_near),
        format!("{:?}", l.lambda_far),
        format!("{:?}", s.threshold),
        format!("{:?}", s.foreground_alpha),
        s.min_component.to_string(),
        s.outlier_neighbors.to_string(),
        format!("{:?}", s.outlier_std),
        format!("{:?}", s.recovery_factor),
        cfg.boundary_radius.to_string(),
    ];
    KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(decode_config("").unwrap(), Config::default());
        assert_eq!(decode_config("# nothing\n\n").unwrap(), Config::default());
    }

    #[test]
    fn threshold_and_friends() {
        let cfg = decode_config("t = 0.7\niterations = 10\nbackground = [1, 0.5, 0]\nlr_feature = 1e-2\n").unwrap();
        assert_eq!(cfg.segment.threshold, 0.7);
        assert_eq!(cfg.train.iterations, 10);
        assert_eq!(cfg.train.background, [1.0, 0.5, 0.0]);
        assert_eq!(cfg.train.learning_rates.feature, 1e-2);
    }

    #[test]
    fn typo_suggests_key() {
        let err = decode_config("iterations = 5\nlamda_clustering = 0.2\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown key `lamda_clustering`"), "{err}");
        assert!(err.contains("did you mean `lambda_clustering`"), "{err}");
        assert!(err.contains("at byte 15"), "{err}");
        let err = decode_config("zzzzzzzzzzzzzz = 1\n").unwrap_err().to_string();
        assert!(!err.contains("did you mean"), "{err}");
    }

    #[test]
    fn wrong_types_and_ranges() {
        assert!(decode_config("iterations = -1").is_err());
        assert!(decode_config("iterations = 1.5").is_err());
        assert!(decode_config("t = \"high\"").is_err());
        assert!(decode_config("t = 1.2").is_err());
        assert!(decode_config("background = [1, 2]").is_err());
        assert!(decode_config("[train]\niterations = 3").is_err());
        assert!(decode_config("boundary_radius = 0").is_err());
        assert!(decode_config("t = ")
            .unwrap_err()
            .to_string()
            .contains("parse error in config"));
    }

    #[test]
    fn encode_round_trip() {
        let mut cfg = Config::default();
        cfg.train.seed = 99;
        cfg.loss.temperature = 0.05;
        cfg.segment.threshold = 0.9;
        let text = encode_config(&cfg);
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(decode_config(&text).unwrap(), cfg);
    }

    proptest! {
        #[test]
        fn never_panics(text in "\\PC*") {
            let _ = decode_config(&text);
        }

        #[test]
        fn never_panics_on_key_value_lines(key in "[a-z_]{1,20}", value in "[-0-9.e\\[\\], \"a-z]{0,12}") {
            let _ = decode_config(&format!("{key} = {value}\n"));
        }
    }
}
