//! Executes single runs and multi-variant sweeps.

use std::fs;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    ConfigError, MappingRegion, OutputSpec, RunConfig, SweepConfig, SweepVariant, TraceSource,
};
use tlbsim_core::stats::ReportFormat;
use tlbsim_core::trace::{generate, read_trace_file};
use tlbsim_core::{
    AccessRecord, Mmu, MmuConfig, PageTableError, StatsError, StatsReport, TraceError,
};
use tlbsim_core::sv39::split_vpn;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] PageTableError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("cannot write report to {path}: {message}")]
    Output { path: String, message: String },
}

/// Loads or generates the access sequence for a trace source.
pub fn load_trace(source: &TraceSource) -> Result<Vec<AccessRecord>, RunError> {
    match source {
        TraceSource::Path(path) => Ok(read_trace_file(path)?),
        TraceSource::Spec(spec) => Ok(generate(spec)),
    }
}

/// Builds the hierarchy and preloads the declared superpage regions.
pub fn build_mmu(
    config: &MmuConfig,
    mappings: &[MappingRegion],
    demand_map: bool,
) -> Result<Mmu, RunError> {
    let mut mmu = Mmu::new(config);
    mmu.set_demand_map(demand_map);
    for region in mappings {
        for i in 0..region.count {
            let va = tlbsim_core::VirtAddr::new(region.base.value() + i * region.size.byte_size())
                .expect("aligned region stays canonical");
            mmu.page_table_mut().map_page(split_vpn(va), region.size)?;
        }
    }
    Ok(mmu)
}

/// Drives every record through a fresh hierarchy and returns the validated
/// report.
pub fn simulate(
    config: &MmuConfig,
    mappings: &[MappingRegion],
    demand_map: bool,
    records: &[AccessRecord],
) -> Result<StatsReport, RunError> {
    let mut mmu = build_mmu(config, mappings, demand_map)?;
    for record in records {
        mmu.step(record)?;
    }
    Ok(mmu.report()?)
}

fn write_output(output: &OutputSpec, text: &str) -> Result<(), RunError> {
    fs::write(&output.path, text).map_err(|e| RunError::Output {
        path: output.path.display().to_string(),
        message: e.to_string(),
    })
}

/// Runs one configuration over its trace. The report is written to the
/// configured output (if any) and returned.
pub fn run(config: &RunConfig) -> Result<StatsReport, RunError> {
    let records = load_trace(&config.trace)?;
    let report = simulate(&config.mmu, &config.mappings, config.demand_map, &records)?;
    if let Some(output) = &config.output {
        write_output(output, &report.emit(output.format)?)?;
    }
    Ok(report)
}

/// One sweep result row. The reduction column compares L2 misses against
/// the first variant, mirroring a fixed-size associativity comparison.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub l2_miss_reduction_pct: f64,
    pub report: StatsReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String, RunError> {
        for row in &self.rows {
            row.report.validate().map_err(RunError::Stats)?;
        }
        serde_json::to_string_pretty(self)
            .map_err(|e| RunError::Stats(StatsError::Serialize(e.to_string())))
    }

    /// Header plus one row per variant; report columns use dotted keys.
    pub fn to_csv(&self) -> Result<String, RunError> {
        let mut out = String::new();
        for (idx, row) in self.rows.iter().enumerate() {
            row.report.validate().map_err(RunError::Stats)?;
            let fields = row.report.flatten();
            if idx == 0 {
                out.push_str("name,l2_miss_reduction_pct");
                for (key, _) in &fields {
                    out.push(',');
                    out.push_str(key);
                }
                out.push('\n');
            }
            out.push_str(&format!("{},{}", row.name, row.l2_miss_reduction_pct));
            for (_, value) in &fields {
                out.push(',');
                out.push_str(value);
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn emit(&self, format: ReportFormat) -> Result<String, RunError> {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }
}

/// Runs every variant over the identical trace instance and seed. Variants
/// execute in parallel; each owns its MMU, page table, and counters, and
/// rows come back in variant order.
pub fn sweep(config: &SweepConfig) -> Result<SweepReport, RunError> {
    if config.variants.len() < 2 {
        return Err(ConfigError::Invalid {
            key: "variants".into(),
            reason: format!("a sweep needs at least 2 variants, found {}", config.variants.len()),
        }
        .into());
    }
    let records = load_trace(&config.trace)?;
    let reports: Vec<StatsReport> = config
        .variants
        .par_iter()
        .map(|variant: &SweepVariant| {
            simulate(&variant.mmu, &config.mappings, config.demand_map, &records)
        })
        .collect::<Result<_, _>>()?;

    let baseline = reports[0].l2.misses;
    let rows = config
        .variants
        .iter()
        .zip(reports)
        .map(|(variant, report)| {
            let reduction = if baseline == 0 {
                0.0
            } else {
                let raw = (baseline - report.l2.misses.min(baseline)) as f64 * 100.0 / baseline as f64;
                (raw * 1000.0).round() / 1000.0
            };
            SweepRow { name: variant.name.clone(), l2_miss_reduction_pct: reduction, report }
        })
        .collect();
    let report = SweepReport { rows };
    if let Some(output) = &config.output {
        write_output(output, &report.emit(output.format)?)?;
    }
    Ok(report)
}
