//! `key = value` run configuration files for training.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected so typos fail loudly.

use crate::error::{Error, Result};
use crate::model::DecoderMode;
use crate::train::TrainConfig;

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for key '{key}'"))),
    }
}

/// Parse a run configuration, starting from defaults.
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "steps" => cfg.steps = parse(key, value)?,
            "batch_size" => cfg.batch_size = parse(key, value)?,
            "lr" => cfg.lr = parse(key, value)?,
            "beta1" => cfg.beta1 = parse(key, value)?,
            "beta2" => cfg.beta2 = parse(key, value)?,
            "eps" => cfg.eps = parse(key, value)?,
            "seed" => cfg.seed = parse(key, value)?,
            "log_every" => cfg.log_every = parse(key, value)?,
            "alpha_mag" => cfg.weights.alpha_mag = parse(key, value)?,
            "alpha_phs" => cfg.weights.alpha_phs = parse(key, value)?,
            "alpha_rec" => cfg.weights.alpha_rec = parse(key, value)?,
            "d" => cfg.model.d = parse(key, value)?,
            "patch" => cfg.model.patch = parse(key, value)?,
            "view_embed" => cfg.model.view_embed = parse(key, value)?,
            "n_view_blocks" => cfg.model.n_view_blocks = parse(key, value)?,
            "image_size" => cfg.model.image_size = parse(key, value)?,
            "fft_size" => cfg.model.fft_size = parse(key, value)?,
            "hop" => cfg.model.hop = parse(key, value)?,
            "use_image" => cfg.model.use_image = parse_bool(key, value)?,
            "use_depth" => cfg.model.use_depth = parse_bool(key, value)?,
            "decoder_mode" => {
                cfg.model.decoder_mode = match value {
                    "triple" => DecoderMode::Triple,
                    "single" => DecoderMode::Single,
                    _ => {
                        return Err(Error::Config(format!(
                            "decoder_mode must be 'triple' or 'single', got '{value}'"
                        )))
                    }
                }
            }
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = parse_train_config("").unwrap();
        assert_eq!(cfg, TrainConfig::default());

        let text = "
            # a toy run
            steps = 20
            lr = 0.01      # fast
            fft_size = 64
            hop = 16
            decoder_mode = single
            use_depth = false
        ";
        let cfg = parse_train_config(text).unwrap();
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.model.fft_size, 64);
        assert_eq!(cfg.model.decoder_mode, DecoderMode::Single);
        assert!(!cfg.model.use_depth);
        assert!(cfg.model.use_image);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_train_config("bogus_key = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_train_config("steps"), Err(Error::Config(_))));
        assert!(matches!(parse_train_config("lr = fast"), Err(Error::Config(_))));
        assert!(matches!(parse_train_config("decoder_mode = both"), Err(Error::Config(_))));
        // validation still applies to parsed values
        assert!(matches!(parse_train_config("batch_size = 0"), Err(Error::Config(_))));
    }
}
