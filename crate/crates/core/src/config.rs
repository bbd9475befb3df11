//! TOML configuration files and `key=value` overrides.
//!
//! A tracker config mirrors [`TrackerConfig`]; every field is optional and
//! defaults to the values in the type's `Default`:
//!
//! ```toml
//! seed = 7
//! [qbst]
//! committee_size = 7
//! m = 130
//! tau_b = 15
//! delta_oracle = 11
//! delta = 0.38
//! query_mode = "active"          # or { random = 0.5 }, "oracle_only", "committee_only"
//! [search]
//! n = 1000
//! rel_dx = 0.5
//! rel_dy = 0.5
//! sigma_ds = 0.05
//! [bootstrap]
//! m_prime = 400
//! perturb_radius = 5.0
//! neg_ring = [0.5, 1.5]
//! [features]
//! patch_size = 32
//! cell_size = 8
//! orientation_bins = 9
//! color_bins = 8
//! [learner]
//! k = 5
//! committee_budget = 2000        # optional
//! oracle_budget = 50000          # optional
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::datasets::SynthConfig;
use crate::engine::TrackerConfig;
use crate::{Error, Result};

fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(toml::from_str(&fs::read_to_string(path)?)?)
}

pub fn load_tracker_config(path: &Path) -> Result<TrackerConfig> {
    let cfg: TrackerConfig = read(path)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    let cfg: SynthConfig = read(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses the right-hand side of an override as a TOML value, falling
/// back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `section.key=value` overrides and re-validates. Unknown keys
/// are rejected.
pub fn apply_overrides<T>(cfg: &T, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut root = toml::Value::try_from(cfg)
        .map_err(|e| Error::ConfigOutOfBounds(format!("cannot serialize config: {e}")))?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            Error::ConfigOutOfBounds(format!("override {item:?} is not key=value"))
        })?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one part");
        let mut table = root.as_table_mut().expect("config serializes to a table");
        for p in parents {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::ConfigOutOfBounds(format!("{key}: {p} is not a section")))?;
        }
        table.insert(last.to_string(), parse_value(raw.trim()));
    }
    Ok(root.try_into()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::QueryMode;

    #[test]
    fn full_schema_parses() {
        let text = r#"
            seed = 7
            [qbst]
            committee_size = 5
            delta = 0.5
            query_mode = { random = 0.25 }
            [search]
            n = 300
            [bootstrap]
            m_prime = 200
            [learner]
            k = 3
            oracle_budget = 1000
        "#;
        let cfg: TrackerConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.qbst.committee_size, 5);
        assert_eq!(cfg.qbst.query_mode, QueryMode::Random(0.25));
        assert_eq!(cfg.qbst.m, 130);
        assert_eq!(cfg.search.n, 300);
        assert_eq!(cfg.learner.oracle_budget, Some(1000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<TrackerConfig>("[qbst]\ncommitee_size = 3").is_err());
        let err = apply_overrides(&TrackerConfig::default(), &["qbst.nope=1".into()]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn overrides_replace_values() {
        let cfg = apply_overrides(
            &TrackerConfig::default(),
            &[
                "seed=42".into(),
                "qbst.delta=0.8".into(),
                "qbst.query_mode=committee_only".into(),
                "learner.committee_budget=500".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.qbst.delta, 0.8);
        assert_eq!(cfg.qbst.query_mode, QueryMode::CommitteeOnly);
        assert_eq!(cfg.learner.committee_budget, Some(500));
        let random = apply_overrides(&cfg, &["qbst.query_mode={ random = 0.5 }".into()]).unwrap();
        assert_eq!(random.qbst.query_mode, QueryMode::Random(0.5));
        assert!(apply_overrides(&cfg, &["seed".into()]).is_err());
    }

    #[test]
    fn files_load_and_validate() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("c.toml");
        fs::write(&p, "[qbst]\ndelta = 1.5\n").unwrap();
        assert!(matches!(
            load_tracker_config(&p),
            Err(Error::ConfigOutOfBounds(_))
        ));
        fs::write(&p, "[qbst]\ndelta = 0.2\n").unwrap();
        assert_eq!(load_tracker_config(&p).unwrap().qbst.delta, 0.2);
        let s = tmp.path().join("s.toml");
        fs::write(
            &s,
            "length = 4\ncanvas = [64, 64]\n[target]\nbox = [10, 10, 16, 16]\ntexture_seed = 1\n[[motion]]\nstart = 1\nvelocity = [1, 0]\n",
        )
        .unwrap();
        assert_eq!(load_synth_config(&s).unwrap().length, 4);
    }
}
