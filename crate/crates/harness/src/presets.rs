//! Named experiment presets. Each is a TOML file under `presets/`, embedded
//! at build time so the shipped configs and the built-in presets agree.

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

const PRESETS: &[(&str, &str)] = &[
    ("smooth-scaling", include_str!("../presets/smooth-scaling.toml")),
    ("nonsmooth-scaling", include_str!("../presets/nonsmooth-scaling.toml")),
    ("gtc-vs-ctg", include_str!("../presets/gtc-vs-ctg.toml")),
    ("sgda-smooth", include_str!("../presets/sgda-smooth.toml")),
    ("mixing-check", include_str!("../presets/mixing-check.toml")),
    ("consensus-check", include_str!("../presets/consensus-check.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))?;
    ExperimentConfig::from_toml(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::resolve;
    use std::collections::BTreeSet;

    #[test]
    fn every_preset_resolves_within_budget() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
            resolve(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn fingerprints_are_distinct() {
        let mut seen = BTreeSet::new();
        let mut total = 0;
        for name in preset_names() {
            for cell in preset(name).unwrap().expand().unwrap() {
                seen.insert(cell.fingerprint());
                total += 1;
            }
        }
        assert_eq!(seen.len(), total);
    }

    #[test]
    fn gtc_preset_shares_seeds() {
        let cells = preset("gtc-vs-ctg").unwrap().expand().unwrap();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].master_seed, cells[1].master_seed);
        assert_ne!(cells[0].run.order, cells[1].run.order);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("nope"), Err(HarnessError::UnknownPreset(_))));
    }
}
