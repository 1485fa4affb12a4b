//! Event counters and derived metrics: MPKI, hit rates, TLB reach, and
//! stall-cycle totals, with JSON and CSV report emission. Counter
//! conservation is re-checked every time a report is emitted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sv39::PageSize;
use crate::tlb::TlbCounters;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    /// A per-thousand-instructions metric with a zero instruction count.
    #[error("metric undefined: instruction count is zero")]
    UndefinedMetric,
    /// Counters violate a conservation invariant; the report is refused.
    #[error("internally inconsistent counters: {0}")]
    Inconsistent(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Per-structure counters as they appear in a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureCounters {
    pub lookups: u64,
    pub hits: u64,
    pub misses: u64,
    pub refills: u64,
    pub evictions: u64,
    pub flushed_entries: u64,
}

impl From<TlbCounters> for StructureCounters {
    fn from(c: TlbCounters) -> Self {
        StructureCounters {
            lookups: c.lookups,
            hits: c.hits,
            misses: c.misses,
            refills: c.refills,
            evictions: c.evictions,
            flushed_entries: c.flushed_entries,
        }
    }
}

/// Derived metrics. MPKI values are rounded to three decimal places; the CPI
/// is the latency-model CPI, a cost metric of this simulator's cycle model,
/// not a hardware IPC claim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedMetrics {
    pub itlb_mpki: f64,
    pub dtlb_mpki: f64,
    pub l1_combined_mpki: f64,
    pub l2_mpki: f64,
    pub latency_model_cpi: f64,
}

/// Misses per thousand instructions, to three decimal places.
pub fn mpki(misses: u64, instructions: u64) -> Result<f64, StatsError> {
    if instructions == 0 {
        return Err(StatsError::UndefinedMetric);
    }
    Ok(round3(misses as f64 * 1000.0 / instructions as f64))
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// TLB reach in bytes: entries × page size.
pub fn reach(entries: u64, page: PageSize) -> u64 {
    entries * page.byte_size()
}

/// Full per-run report. Field order is the stable JSON key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsReport {
    pub instructions: u64,
    pub total_cycles: u64,
    pub walks: u64,
    pub walk_memory_accesses: u64,
    pub l2_present: bool,
    pub itlb: StructureCounters,
    pub dtlb: StructureCounters,
    pub superpage: StructureCounters,
    pub l2: StructureCounters,
    pub derived: DerivedMetrics,
}

impl StatsReport {
    /// Checks every conservation invariant. Called by `emit` so inconsistent
    /// counters can never be written out.
    pub fn validate(&self) -> Result<(), StatsError> {
        for (name, c) in [
            ("itlb", &self.itlb),
            ("dtlb", &self.dtlb),
            ("superpage", &self.superpage),
            ("l2", &self.l2),
        ] {
            if c.hits + c.misses != c.lookups {
                return Err(StatsError::Inconsistent(format!(
                    "{name}: hits {} + misses {} != lookups {}",
                    c.hits, c.misses, c.lookups
                )));
            }
        }
        let base_misses = self.itlb.misses + self.dtlb.misses;
        if self.l2_present {
            if self.l2.lookups != base_misses {
                return Err(StatsError::Inconsistent(format!(
                    "l2.lookups {} != L1 base-page misses {base_misses}",
                    self.l2.lookups
                )));
            }
            if self.l2.misses != self.walks {
                return Err(StatsError::Inconsistent(format!(
                    "l2.misses {} != walks {}",
                    self.l2.misses, self.walks
                )));
            }
        } else {
            if self.l2 != StructureCounters::default() {
                return Err(StatsError::Inconsistent(
                    "l2 counters nonzero without an L2 TLB".into(),
                ));
            }
            if self.walks != base_misses {
                return Err(StatsError::Inconsistent(format!(
                    "walks {} != L1 base-page misses {base_misses} with no L2",
                    self.walks
                )));
            }
        }
        if self.instructions == 0 {
            return Err(StatsError::Inconsistent(
                "derived metrics undefined: instruction count is zero".into(),
            ));
        }
        let expect = DerivedMetrics {
            itlb_mpki: mpki(self.itlb.misses, self.instructions)?,
            dtlb_mpki: mpki(self.dtlb.misses, self.instructions)?,
            l1_combined_mpki: mpki(base_misses, self.instructions)?,
            l2_mpki: mpki(self.l2.misses, self.instructions)?,
            latency_model_cpi: self.total_cycles as f64 / self.instructions as f64,
        };
        if self.derived != expect {
            return Err(StatsError::Inconsistent(format!(
                "derived metrics do not match counters: {:?} vs {expect:?}",
                self.derived
            )));
        }
        Ok(())
    }

    /// Recomputes the derived block from the raw counters.
    pub fn compute_derived(&mut self) -> Result<(), StatsError> {
        self.derived = DerivedMetrics {
            itlb_mpki: mpki(self.itlb.misses, self.instructions)?,
            dtlb_mpki: mpki(self.dtlb.misses, self.instructions)?,
            l1_combined_mpki: mpki(self.itlb.misses + self.dtlb.misses, self.instructions)?,
            l2_mpki: mpki(self.l2.misses, self.instructions)?,
            latency_model_cpi: self.total_cycles as f64 / self.instructions as f64,
        };
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, StatsError> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| StatsError::Serialize(e.to_string()))
    }

    /// One header row plus one data row with dotted flattened keys.
    pub fn to_csv(&self) -> Result<String, StatsError> {
        self.validate()?;
        let (header, row): (Vec<String>, Vec<String>) = self.flatten().into_iter().unzip();
        Ok(format!("{}\n{}\n", header.join(","), row.join(",")))
    }

    pub fn emit(&self, format: ReportFormat) -> Result<String, StatsError> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn flatten(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("instructions".into(), self.instructions.to_string()),
            ("total_cycles".into(), self.total_cycles.to_string()),
            ("walks".into(), self.walks.to_string()),
            ("walk_memory_accesses".into(), self.walk_memory_accesses.to_string()),
            ("l2_present".into(), self.l2_present.to_string()),
        ];
        for (name, c) in [
            ("itlb", &self.itlb),
            ("dtlb", &self.dtlb),
            ("superpage", &self.superpage),
            ("l2", &self.l2),
        ] {
            out.push((format!("{name}.lookups"), c.lookups.to_string()));
            out.push((format!("{name}.hits"), c.hits.to_string()));
            out.push((format!("{name}.misses"), c.misses.to_string()));
            out.push((format!("{name}.refills"), c.refills.to_string()));
            out.push((format!("{name}.evictions"), c.evictions.to_string()));
            out.push((format!("{name}.flushed_entries"), c.flushed_entries.to_string()));
        }
        out.push(("derived.itlb_mpki".into(), format_f64(self.derived.itlb_mpki)));
        out.push(("derived.dtlb_mpki".into(), format_f64(self.derived.dtlb_mpki)));
        out.push(("derived.l1_combined_mpki".into(), format_f64(self.derived.l1_combined_mpki)));
        out.push(("derived.l2_mpki".into(), format_f64(self.derived.l2_mpki)));
        out.push(("derived.latency_model_cpi".into(), format_f64(self.derived.latency_model_cpi)));
        out
    }
}

fn format_f64(x: f64) -> String {
    let mut buf = format!("{x}");
    if !buf.contains('.') && !buf.contains('e') {
        buf.push_str(".0");
    }
    buf
}

/// Output encoding for a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(lookups: u64, hits: u64) -> StructureCounters {
        StructureCounters {
            lookups,
            hits,
            misses: lookups - hits,
            refills: lookups - hits,
            evictions: 0,
            flushed_entries: 0,
        }
    }

    fn sample_report() -> StatsReport {
        let mut report = StatsReport {
            instructions: 100_000,
            total_cycles: 250_000,
            walks: 30,
            walk_memory_accesses: 90,
            l2_present: true,
            itlb: counters(100_000, 99_900),
            dtlb: counters(80_000, 79_600),
            superpage: counters(180_000, 0),
            l2: counters(500, 470),
            derived: DerivedMetrics {
                itlb_mpki: 0.0,
                dtlb_mpki: 0.0,
                l1_combined_mpki: 0.0,
                l2_mpki: 0.0,
                latency_model_cpi: 0.0,
            },
        };
        report.compute_derived().unwrap();
        report
    }

    #[test]
    fn mpki_definition() {
        assert_eq!(mpki(0, 1_000_000).unwrap(), 0.0);
        assert_eq!(mpki(500, 100_000).unwrap(), 5.0);
        assert_eq!(mpki(1, 3).unwrap(), 333.333);
        assert_eq!(mpki(7, 0), Err(StatsError::UndefinedMetric));
    }

    #[test]
    fn mpki_scales_linearly_in_misses() {
        let instructions = 1_000_000;
        let base = mpki(40_200, instructions).unwrap();
        assert_eq!(mpki(40_200 * 3, instructions).unwrap(), round3(base * 3.0));
    }

    #[test]
    fn reach_values() {
        assert_eq!(reach(32, PageSize::Base4K), 128 * 1024);
        assert_eq!(reach(1024, PageSize::Base4K), 4 * 1024 * 1024);
        assert_eq!(reach(0, PageSize::Base4K), 0);
    }

    #[test]
    fn json_round_trips() {
        let report = sample_report();
        let json = report.to_json().unwrap();
        let back: StatsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_column_count_matches_flattened_fields() {
        let report = sample_report();
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        let row = lines.next().unwrap();
        let fields = report.flatten().len();
        assert_eq!(header.split(',').count(), fields);
        assert_eq!(row.split(',').count(), fields);
    }

    #[test]
    fn zero_instruction_report_is_refused() {
        let mut report = sample_report();
        report.instructions = 0;
        report.total_cycles = 0;
        report.itlb = StructureCounters::default();
        report.dtlb = StructureCounters::default();
        report.superpage = StructureCounters::default();
        report.l2 = StructureCounters::default();
        report.walks = 0;
        report.walk_memory_accesses = 0;
        assert!(matches!(report.to_json(), Err(StatsError::Inconsistent(_))));
        assert_eq!(mpki(0, 0), Err(StatsError::UndefinedMetric));
    }

    #[test]
    fn broken_conservation_is_refused() {
        let mut report = sample_report();
        report.l2.lookups += 1;
        assert!(matches!(report.to_json(), Err(StatsError::Inconsistent(_))));

        let mut report = sample_report();
        report.walks += 1;
        assert!(matches!(report.to_json(), Err(StatsError::Inconsistent(_))));

        let mut report = sample_report();
        report.l2_present = false;
        assert!(matches!(report.to_json(), Err(StatsError::Inconsistent(_))));
    }

    #[test]
    fn emission_is_deterministic() {
        let report = sample_report();
        assert_eq!(report.to_json().unwrap(), sample_report().to_json().unwrap());
        assert_eq!(report.to_csv().unwrap(), sample_report().to_csv().unwrap());
    }
}
