//! The five built-in hierarchy configurations. They range from a minimal
//! setup without an L2 TLB up to the shapes of well-known cores, and swap
//! the instruction/data TLB sizes between the two largest.

use std::fmt;
use std::str::FromStr;

use tlbsim_core::stats::reach;
use tlbsim_core::{LatencyModel, MmuConfig, PageSize, ReplacementPolicy, TlbGeometry};

/// Named configuration presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    I,
    II,
    III,
    IV,
    V,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::I, Preset::II, Preset::III, Preset::IV, Preset::V];

    pub fn name(self) -> &'static str {
        match self {
            Preset::I => "I",
            Preset::II => "II",
            Preset::III => "III",
            Preset::IV => "IV",
            Preset::V => "V",
        }
    }

    /// Resolves the preset. All structures use pseudo-LRU; random
    /// replacement stays available through explicit configuration.
    pub fn resolve(self) -> MmuConfig {
        let fa32 = TlbGeometry::fully_associative(32, ReplacementPolicy::PseudoLru)
            .expect("32 entries is a valid fully-associative shape");
        let plru = |sets: u64, ways: u64| {
            TlbGeometry::new(sets, ways, ReplacementPolicy::PseudoLru)
                .expect("preset geometry is a power of two")
        };
        let (itlb, dtlb, l2) = match self {
            Preset::I => (fa32, fa32, None),
            Preset::II => (fa32, fa32, Some(plru(32, 4))),
            Preset::III => (fa32, fa32, Some(plru(128, 4))),
            Preset::IV => (plru(16, 8), plru(8, 8), Some(plru(128, 8))),
            Preset::V => (plru(8, 8), plru(16, 8), Some(plru(128, 8))),
        };
        MmuConfig {
            itlb,
            dtlb,
            l2,
            superpage_entries: 4,
            latencies: LatencyModel::default(),
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Preset::I),
            "II" | "2" => Ok(Preset::II),
            "III" | "3" => Ok(Preset::III),
            "IV" | "4" => Ok(Preset::IV),
            "V" | "5" => Ok(Preset::V),
            other => Err(format!("unknown preset {other:?} (expected I..V)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Exact power-of-two byte formatting: 131072 -> "128KB".
pub fn format_reach(bytes: u64) -> String {
    const MB: u64 = 1024 * 1024;
    const KB: u64 = 1024;
    if bytes >= MB && bytes % MB == 0 {
        format!("{}MB", bytes / MB)
    } else if bytes >= KB && bytes % KB == 0 {
        format!("{}KB", bytes / KB)
    } else {
        format!("{bytes}B")
    }
}

fn describe(geometry: &TlbGeometry) -> String {
    if geometry.sets == 1 {
        format!("fully-assoc, {} entries", geometry.entries())
    } else if geometry.ways == 1 {
        format!("direct-mapped, {} entries", geometry.entries())
    } else {
        format!("{}-way, {} entries", geometry.ways, geometry.entries())
    }
}

/// One row of the preset table as printed by the `presets` subcommand.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PresetRow {
    pub name: &'static str,
    pub dtlb: String,
    pub itlb: String,
    pub l2: String,
    pub dtlb_reach: String,
    pub itlb_reach: String,
    pub l2_reach: String,
}

pub fn preset_rows() -> Vec<PresetRow> {
    Preset::ALL
        .iter()
        .map(|preset| {
            let config = preset.resolve();
            let reach_of = |g: &TlbGeometry| format_reach(reach(g.entries(), PageSize::Base4K));
            PresetRow {
                name: preset.name(),
                dtlb: describe(&config.dtlb),
                itlb: describe(&config.itlb),
                l2: config.l2.as_ref().map_or_else(|| "-".into(), |g| describe(g)),
                dtlb_reach: reach_of(&config.dtlb),
                itlb_reach: reach_of(&config.itlb),
                l2_reach: config.l2.as_ref().map_or_else(|| "-".into(), reach_of),
            }
        })
        .collect()
}

/// Plain-text preset table.
pub fn render_presets_table() -> String {
    let rows = preset_rows();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<5} {:<26} {:<26} {:<26} {:<11} {:<11} {:<9}\n",
        "Conf", "DTLB", "ITLB", "L2 TLB", "DTLB reach", "ITLB reach", "L2 reach"
    ));
    for row in &rows {
        out.push_str(&format!(
            "{:<5} {:<26} {:<26} {:<26} {:<11} {:<11} {:<9}\n",
            row.name, row.dtlb, row.itlb, row.l2, row.dtlb_reach, row.itlb_reach, row.l2_reach
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_rows_match_published_shapes() {
        let expect: [(&str, u64, u64, u64, u64, Option<(u64, u64)>); 5] = [
            // (name, itlb sets, itlb ways, dtlb sets, dtlb ways, l2 (sets, ways))
            ("I", 1, 32, 1, 32, None),
            ("II", 1, 32, 1, 32, Some((32, 4))),
            ("III", 1, 32, 1, 32, Some((128, 4))),
            ("IV", 16, 8, 8, 8, Some((128, 8))),
            ("V", 8, 8, 16, 8, Some((128, 8))),
        ];
        for (preset, (name, i_sets, i_ways, d_sets, d_ways, l2)) in
            Preset::ALL.iter().zip(expect)
        {
            assert_eq!(preset.name(), name);
            let config = preset.resolve();
            assert_eq!((config.itlb.sets, config.itlb.ways), (i_sets, i_ways), "preset {name} itlb");
            assert_eq!((config.dtlb.sets, config.dtlb.ways), (d_sets, d_ways), "preset {name} dtlb");
            assert_eq!(config.l2.map(|g| (g.sets, g.ways)), l2, "preset {name} l2");
        }
    }

    #[test]
    fn derived_entry_counts() {
        // Entries = sets * ways must reproduce the published sizes.
        assert_eq!(Preset::IV.resolve().dtlb.entries(), 64);
        assert_eq!(Preset::IV.resolve().itlb.entries(), 128);
        assert_eq!(Preset::V.resolve().dtlb.entries(), 128);
        assert_eq!(Preset::V.resolve().itlb.entries(), 64);
        assert_eq!(Preset::IV.resolve().l2.unwrap().entries(), 1024);
    }

    #[test]
    fn reach_strings() {
        let rows = preset_rows();
        assert_eq!(rows[0].dtlb_reach, "128KB");
        assert_eq!(rows[0].l2_reach, "-");
        assert_eq!(rows[1].l2_reach, "512KB");
        assert_eq!(rows[2].l2_reach, "2MB");
        assert_eq!(rows[3].dtlb_reach, "256KB");
        assert_eq!(rows[3].itlb_reach, "512KB");
        assert_eq!(rows[3].l2_reach, "4MB");
        assert_eq!(rows[4].dtlb_reach, "512KB");
        assert_eq!(rows[4].itlb_reach, "256KB");
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("iv".parse::<Preset>().unwrap(), Preset::IV);
        assert_eq!("3".parse::<Preset>().unwrap(), Preset::III);
        assert!("VI".parse::<Preset>().is_err());
    }
}
