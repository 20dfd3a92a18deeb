//! Config format, presets and deterministic experiment runs.

mod config;
mod run;

pub use config::{
    parse_config, render, CoefficientConfig, ConfigError, ConfigErrors, EstimatorConfig, ExperimentConfig, Mode,
    SECTIONS,
};
pub use run::{
    compute, output_dir, publish, run_experiment, sha256_hex, simulate_panel, summarize, verify_checksums, Computed,
    MarginalBlock, PanelSummary, RunError, RunManifest, RunOutput, SeriesBlock, SpectralBands, SpectralBlock,
    TailReport, MANIFEST_FILE, OUT_DIR_ENV, REPORT_FILE,
};

/// Checked-in experiment configs, by name.
pub const PRESETS: [(&str, &str); 9] = [
    ("breiman-uniform", include_str!("../../presets/breiman-uniform.conf")),
    ("linear-tail-constant", include_str!("../../presets/linear-tail-constant.conf")),
    ("sre-tail-constant", include_str!("../../presets/sre-tail-constant.conf")),
    ("tail-index-0.8", include_str!("../../presets/tail-index-0.8.conf")),
    ("tail-index-1.5", include_str!("../../presets/tail-index-1.5.conf")),
    ("tail-index-2.5", include_str!("../../presets/tail-index-2.5.conf")),
    ("modulus-compound-poisson", include_str!("../../presets/modulus-compound-poisson.conf")),
    ("modulus-single-jump", include_str!("../../presets/modulus-single-jump.conf")),
    ("spectral-single-jump", include_str!("../../presets/spectral-single-jump.conf")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let text = preset_text(name).ok_or_else(|| {
        ConfigErrors(vec![ConfigError {
            line: None,
            message: format!("unknown preset `{name}`; available: {}", preset_names().join(", ")),
        }])
    })?;
    parse_config(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::MultiplierLaw;
    use crate::innovations::InnovationSpec;

    #[test]
    fn every_preset_parses_and_round_trips() {
        for name in preset_names() {
            let c = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(c.name, name);
            assert_eq!(parse_config(&c.render()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn preset_contents() {
        let b = preset("breiman-uniform").unwrap();
        assert_eq!(b.mode, Mode::Breiman);
        assert_eq!(b.n, 1_000_000);
        assert_eq!(
            b.coefficients,
            CoefficientConfig::Multiplier {
                law: MultiplierLaw::Uniform { lower: 0.0, upper: 2.0 }
            }
        );
        assert_eq!(b.innovation.tail_index(), Some(1.5));
        let s = preset("sre-tail-constant").unwrap();
        assert!(matches!(
            s.coefficients,
            CoefficientConfig::Sre { law: MultiplierLaw::Uniform { lower, upper }, .. } if lower == 0.0 && upper == 0.9
        ));
        assert!(matches!(s.innovation, InnovationSpec::ParetoScalar { tail } if tail.alpha == 1.5));
    }

    #[test]
    fn unknown_preset_lists_names() {
        let msg = preset("nope").unwrap_err().to_string();
        for name in preset_names() {
            assert!(msg.contains(name), "{msg}");
        }
    }
}
