//! Scenario files shipped with the binary.

use crate::error::{CliError, Result};
use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub source: &'static str,
}

impl Preset {
    /// First comment line of the file.
    pub fn description(&self) -> &'static str {
        self.source.lines().next().and_then(|l| l.strip_prefix('#')).map(str::trim).unwrap_or("")
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_toml_str(self.source).map_err(|e| e.context(format!("preset `{}`", self.name)))
    }
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "fig1a", source: include_str!("../presets/fig1a.toml") },
    Preset { name: "fig1b", source: include_str!("../presets/fig1b.toml") },
    Preset { name: "fig1c", source: include_str!("../presets/fig1c.toml") },
    Preset { name: "fig3", source: include_str!("../presets/fig3.toml") },
    Preset { name: "fig3a", source: include_str!("../presets/fig3a.toml") },
    Preset { name: "fig3b", source: include_str!("../presets/fig3b.toml") },
    Preset { name: "fig3c", source: include_str!("../presets/fig3c.toml") },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        CliError::config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_compiles() {
        for p in PRESETS {
            let s = p.scenario().unwrap();
            assert_eq!(s.name, p.name);
            s.compile(None).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert!(!p.description().is_empty());
        }
    }

    #[test]
    fn presets_round_trip() {
        for p in PRESETS {
            let s = p.scenario().unwrap();
            assert_eq!(Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap(), s, "{}", p.name);
        }
    }

    #[test]
    fn unknown_preset() {
        assert_eq!(find("fig9").unwrap_err().exit_code(), 2);
    }
}
