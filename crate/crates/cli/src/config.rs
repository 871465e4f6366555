//! Run configuration: a plain `key = value` file where every key has a
//! default. Unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use osscal::calibrate::{MapOptions, McmcOptions, Prior, PriorKind};
use osscal::simulator::SynthConfig;
use osscal::GpConfig;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    /// Field sites used for calibration.
    pub n_field: usize,
    /// Simulation runs per field site.
    pub n_sim: usize,
    /// Held-out runs per site for out-of-sample surrogate checks.
    pub n_holdout: usize,
    /// New field sites for prediction.
    pub n_new: usize,
    pub design_sweeps: usize,
    pub gp_multistarts: usize,
    pub gp_max_iters: usize,
    pub gp_grad_tol: f64,
    pub gp_seed: u64,
    pub prior: PriorKind,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub map_multistarts: usize,
    pub map_seed: u64,
    pub mcmc_samples: usize,
    pub mcmc_burn_in: usize,
    pub mcmc_seed: u64,
    pub mcmc_initial_sd: f64,
    /// Chain length of each per-output posterior in univariate-compare.
    pub univariate_samples: usize,
    /// Posterior draws mixed over in predict and loocv.
    pub predict_samples: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            n_field: 8,
            n_sim: 200,
            n_holdout: 20,
            n_new: 2,
            design_sweeps: 10,
            gp_multistarts: 3,
            gp_max_iters: 200,
            gp_grad_tol: 1e-6,
            gp_seed: 0,
            prior: PriorKind::Beta,
            prior_alpha: 2.0,
            prior_beta: 2.0,
            map_multistarts: 10,
            map_seed: 0,
            mcmc_samples: 20_000,
            mcmc_burn_in: 2_000,
            mcmc_seed: 0,
            mcmc_initial_sd: 0.05,
            univariate_samples: 2_000,
            predict_samples: 200,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: cannot read: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!("line {}: {key} given twice", n + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let s = &mut self.synth;
        match key {
            "p_x" => s.p_x = parse(key, value)?,
            "p_u" => s.p_u = parse(key, value)?,
            "j_count" => s.j_count = parse(key, value)?,
            "k_count" => s.k_count = parse(key, value)?,
            "u_star" => s.u_star = parse_list(key, value)?,
            "freq_corr" => s.freq_corr = parse(key, value)?,
            "noise_base" => s.noise_base = parse_list(key, value)?,
            "sim_noise" => s.sim_noise = parse_list(key, value)?,
            "bias_amp" => s.bias_amp = parse(key, value)?,
            "missing_rate" => s.missing_rate = parse(key, value)?,
            "loading_spread" => s.loading_spread = parse(key, value)?,
            "perturb_scale" => s.perturb_scale = parse(key, value)?,
            "seed" => s.seed = parse(key, value)?,
            "n_field" => self.n_field = parse(key, value)?,
            "n_sim" => self.n_sim = parse(key, value)?,
            "n_holdout" => self.n_holdout = parse(key, value)?,
            "n_new" => self.n_new = parse(key, value)?,
            "design_sweeps" => self.design_sweeps = parse(key, value)?,
            "gp_multistarts" => self.gp_multistarts = parse(key, value)?,
            "gp_max_iters" => self.gp_max_iters = parse(key, value)?,
            "gp_grad_tol" => self.gp_grad_tol = parse(key, value)?,
            "gp_seed" => self.gp_seed = parse(key, value)?,
            "prior" => {
                self.prior = match value {
                    "beta" => PriorKind::Beta,
                    "uniform" => PriorKind::Uniform,
                    _ => return Err(CliError::Config(format!("prior: expected beta or uniform, got {value:?}"))),
                }
            }
            "prior_alpha" => self.prior_alpha = parse(key, value)?,
            "prior_beta" => self.prior_beta = parse(key, value)?,
            "map_multistarts" => self.map_multistarts = parse(key, value)?,
            "map_seed" => self.map_seed = parse(key, value)?,
            "mcmc_samples" => self.mcmc_samples = parse(key, value)?,
            "mcmc_burn_in" => self.mcmc_burn_in = parse(key, value)?,
            "mcmc_seed" => self.mcmc_seed = parse(key, value)?,
            "mcmc_initial_sd" => self.mcmc_initial_sd = parse(key, value)?,
            "univariate_samples" => self.univariate_samples = parse(key, value)?,
            "predict_samples" => self.predict_samples = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.n_field < 3 {
            return bad(format!("n_field must be at least 3, got {}", self.n_field));
        }
        if self.n_sim < osscal::oss::MIN_CONVERGED_ROWS {
            return bad(format!("n_sim must be at least {}, got {}", osscal::oss::MIN_CONVERGED_ROWS, self.n_sim));
        }
        if self.n_holdout == 0 || self.n_new == 0 {
            return bad("n_holdout and n_new must be positive".into());
        }
        if self.gp_multistarts == 0 || self.gp_max_iters == 0 || !(self.gp_grad_tol > 0.0) {
            return bad("gp_multistarts, gp_max_iters and gp_grad_tol must be positive".into());
        }
        if !(self.prior_alpha > 0.0 && self.prior_beta > 0.0) {
            return bad("prior_alpha and prior_beta must be positive".into());
        }
        if self.map_multistarts == 0 || self.mcmc_samples == 0 || self.univariate_samples == 0 || self.predict_samples == 0 {
            return bad("map_multistarts, mcmc_samples, univariate_samples and predict_samples must be positive".into());
        }
        if !(self.mcmc_initial_sd > 0.0 && self.mcmc_initial_sd <= 1.0) {
            return bad(format!("mcmc_initial_sd must lie in (0, 1], got {}", self.mcmc_initial_sd));
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.synth;
        vec![
            ("p_x", s.p_x.to_string()),
            ("p_u", s.p_u.to_string()),
            ("j_count", s.j_count.to_string()),
            ("k_count", s.k_count.to_string()),
            ("u_star", list(&s.u_star)),
            ("freq_corr", s.freq_corr.to_string()),
            ("noise_base", list(&s.noise_base)),
            ("sim_noise", list(&s.sim_noise)),
            ("bias_amp", s.bias_amp.to_string()),
            ("missing_rate", s.missing_rate.to_string()),
            ("loading_spread", s.loading_spread.to_string()),
            ("perturb_scale", s.perturb_scale.to_string()),
            ("seed", s.seed.to_string()),
            ("n_field", self.n_field.to_string()),
            ("n_sim", self.n_sim.to_string()),
            ("n_holdout", self.n_holdout.to_string()),
            ("n_new", self.n_new.to_string()),
            ("design_sweeps", self.design_sweeps.to_string()),
            ("gp_multistarts", self.gp_multistarts.to_string()),
            ("gp_max_iters", self.gp_max_iters.to_string()),
            ("gp_grad_tol", self.gp_grad_tol.to_string()),
            ("gp_seed", self.gp_seed.to_string()),
            (
                "prior",
                match self.prior {
                    PriorKind::Beta => "beta",
                    PriorKind::Uniform => "uniform",
                }
                .to_string(),
            ),
            ("prior_alpha", self.prior_alpha.to_string()),
            ("prior_beta", self.prior_beta.to_string()),
            ("map_multistarts", self.map_multistarts.to_string()),
            ("map_seed", self.map_seed.to_string()),
            ("mcmc_samples", self.mcmc_samples.to_string()),
            ("mcmc_burn_in", self.mcmc_burn_in.to_string()),
            ("mcmc_seed", self.mcmc_seed.to_string()),
            ("mcmc_initial_sd", self.mcmc_initial_sd.to_string()),
            ("univariate_samples", self.univariate_samples.to_string()),
            ("predict_samples", self.predict_samples.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    /// Canonical file form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Text recorded as `config.txt` in the output directory: everything
    /// except `out_dir`, so a relocated run writes identical files.
    pub fn recorded_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries().into_iter().filter(|(k, _)| *k != "out_dir") {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of [`RunConfig::recorded_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.recorded_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn gp(&self) -> GpConfig {
        GpConfig {
            multistarts: self.gp_multistarts,
            max_iters: self.gp_max_iters,
            grad_tol: self.gp_grad_tol,
            seed: self.gp_seed,
            ..GpConfig::default()
        }
    }

    pub fn prior(&self) -> osscal::Result<Prior> {
        Ok(match self.prior {
            PriorKind::Beta => Prior::beta(self.synth.p_u, self.prior_alpha, self.prior_beta)?,
            PriorKind::Uniform => Prior::uniform(self.synth.p_u),
        })
    }

    pub fn map_options(&self) -> MapOptions {
        MapOptions {
            multistarts: self.map_multistarts,
            seed: self.map_seed,
            ..MapOptions::default()
        }
    }

    pub fn mcmc_options(&self, samples: usize) -> McmcOptions {
        McmcOptions {
            samples,
            burn_in: self.mcmc_burn_in,
            seed: self.mcmc_seed,
            initial_sd: self.mcmc_initial_sd,
            ..McmcOptions::default()
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("u_star", "0.1, 0.2,0.3,0.4").unwrap();
        cfg.set("prior", "uniform").unwrap();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_and_repeated_keys_fail() {
        let e = RunConfig::parse("mcmc_samples = 10\nmcmc_sample = 5\n").unwrap_err();
        assert!(e.to_string().contains("mcmc_sample"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(e.to_string().contains("twice"), "{e}");
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = RunConfig::parse("# header\n\nn_field = 5 # sites\n").unwrap();
        assert_eq!(cfg.n_field, 5);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["n_field = two", "prior = gamma", "n_field = 2", "freq_corr = 1.5", "x = 1"] {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.mcmc_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
