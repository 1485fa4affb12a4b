//! JSON run/sweep configuration files and their validation.
//!
//! A run config names either a preset or a full MMU shape, exactly one trace
//! source, and optional superpage preload regions:
//!
//! ```json
//! {
//!   "preset": "IV",
//!   "trace": { "spec": { "uniform_random": { "working_set_pages": 4096, "length": 100000, "seed": 7 } } },
//!   "mappings": [ { "base_va": "0x40000000", "size": "1G", "count": 1 } ],
//!   "seed": 1,
//!   "output": { "path": "report.json", "format": "json" }
//! }
//! ```
//!
//! Unknown keys are rejected. Geometry uses `{"sets": N, "ways": N,
//! "policy": "pseudo_lru" | "random", "seed": N}` where `policy` defaults to
//! pseudo-LRU and a `random` policy without an explicit seed derives one
//! from the run seed and the structure's role.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::presets::Preset;
use tlbsim_core::stats::ReportFormat;
use tlbsim_core::{
    LatencyModel, MmuConfig, PageSize, ReplacementPolicy, TlbGeometry, TraceSpec, VirtAddr,
    XorShift64Star,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid config JSON: {0}")]
    Json(String),
    #[error("invalid config: {key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.into() }
}

/// Accepts a JSON number or a hex/decimal string like "0x40000000".
fn de_u64_flexible<'de, D: Deserializer<'de>>(deserializer: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(u64),
        Text(String),
    }
    match Raw::deserialize(deserializer)? {
        Raw::Number(n) => Ok(n),
        Raw::Text(s) => {
            let cleaned = s.replace('_', "");
            if let Some(hex) = cleaned.strip_prefix("0x").or_else(|| cleaned.strip_prefix("0X")) {
                u64::from_str_radix(hex, 16).map_err(D::Error::custom)
            } else {
                cleaned.parse().map_err(D::Error::custom)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyName {
    PseudoLru,
    Random,
}

/// Geometry as written in a config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub sets: u64,
    pub ways: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    policy: Option<PolicyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl GeometrySpec {
    fn resolve(&self, key: &str, role_salt: u64, run_seed: u64) -> Result<TlbGeometry, ConfigError> {
        let policy = match self.policy.unwrap_or(PolicyName::PseudoLru) {
            PolicyName::PseudoLru => {
                if self.seed.is_some() {
                    return Err(invalid(
                        format!("{key}.seed"),
                        "seed is only meaningful with the random policy",
                    ));
                }
                ReplacementPolicy::PseudoLru
            }
            PolicyName::Random => {
                let seed = self
                    .seed
                    .unwrap_or_else(|| XorShift64Star::new(run_seed ^ role_salt).next_u64());
                ReplacementPolicy::Random { seed }
            }
        };
        TlbGeometry::new(self.sets, self.ways, policy)
            .map_err(|e| invalid(key, e.to_string()))
    }
}

fn default_superpage_entries() -> u64 {
    4
}

/// MMU shape as written in a config file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MmuSpec {
    pub itlb: GeometrySpec,
    pub dtlb: GeometrySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<GeometrySpec>,
    #[serde(default = "default_superpage_entries")]
    pub superpage_entries: u64,
    #[serde(default)]
    pub latencies: LatencyModel,
}

impl MmuSpec {
    pub fn resolve(&self, key_prefix: &str, run_seed: u64) -> Result<MmuConfig, ConfigError> {
        let config = MmuConfig {
            itlb: self.itlb.resolve(&format!("{key_prefix}.itlb"), 0x4954_4c42, run_seed)?,
            dtlb: self.dtlb.resolve(&format!("{key_prefix}.dtlb"), 0x4454_4c42, run_seed)?,
            l2: self
                .l2
                .as_ref()
                .map(|g| g.resolve(&format!("{key_prefix}.l2"), 0x4c32_544c, run_seed))
                .transpose()?,
            superpage_entries: self.superpage_entries,
            latencies: self.latencies,
        };
        config.validate().map_err(|e| invalid(key_prefix, e.to_string()))?;
        Ok(config)
    }
}

/// Where the trace comes from: a file (optionally gzip-compressed) or a
/// generator spec expanded at run time.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Path(PathBuf),
    Spec(TraceSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
enum RegionSize {
    #[serde(rename = "4K")]
    Base4K,
    #[serde(rename = "2M")]
    Mega2M,
    #[serde(rename = "1G")]
    Giga1G,
}

impl From<RegionSize> for PageSize {
    fn from(size: RegionSize) -> PageSize {
        match size {
            RegionSize::Base4K => PageSize::Base4K,
            RegionSize::Mega2M => PageSize::Mega2M,
            RegionSize::Giga1G => PageSize::Giga1G,
        }
    }
}

fn default_count() -> u64 {
    1
}

/// A preloaded mapping region: `count` consecutive pages of `size` starting
/// at `base_va`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(deserialize_with = "de_u64_flexible")]
    pub base_va: u64,
    size: RegionSize,
    #[serde(default = "default_count")]
    pub count: u64,
}

/// Validated preload region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappingRegion {
    pub base: VirtAddr,
    pub size: PageSize,
    pub count: u64,
}

impl RegionSpec {
    fn resolve(&self, key: &str) -> Result<MappingRegion, ConfigError> {
        let size: PageSize = self.size.into();
        let base = VirtAddr::new(self.base_va).map_err(|e| invalid(key, e.to_string()))?;
        if self.base_va % size.byte_size() != 0 {
            return Err(invalid(key, format!("base {:#x} is not {}-aligned", self.base_va, size.byte_size())));
        }
        if self.count == 0 {
            return Err(invalid(key, "count must be at least 1"));
        }
        Ok(MappingRegion { base, size, count: self.count })
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: ReportFormat,
}

fn default_format() -> ReportFormat {
    ReportFormat::Json
}

/// A run config file before resolution; the CLI layers flag overrides on top.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub mmu: Option<MmuSpec>,
    #[serde(default)]
    pub trace: Option<TraceSource>,
    #[serde(default)]
    pub mappings: Option<Vec<RegionSpec>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub demand_map: Option<bool>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_owned(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let seed = self.seed.unwrap_or(0);
        let mmu = match (&self.preset, &self.mmu) {
            (Some(name), None) => {
                let preset: Preset = name.parse().map_err(|e| invalid("preset", e))?;
                preset.resolve()
            }
            (None, Some(spec)) => spec.resolve("mmu", seed)?,
            (Some(_), Some(_)) => {
                return Err(invalid("preset", "give either a preset or an mmu block, not both"))
            }
            (None, None) => return Err(invalid("mmu", "either a preset or an mmu block is required")),
        };
        let trace = self
            .trace
            .clone()
            .ok_or_else(|| invalid("trace", "a trace path or generator spec is required"))?;
        let mappings = self
            .mappings
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .map(|(i, spec)| spec.resolve(&format!("mappings[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunConfig {
            mmu,
            trace,
            mappings,
            seed,
            demand_map: self.demand_map.unwrap_or(true),
            output: self.output.clone(),
        })
    }
}

/// Fully validated single-run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mmu: MmuConfig,
    pub trace: TraceSource,
    pub mappings: Vec<MappingRegion>,
    pub seed: u64,
    pub demand_map: bool,
    pub output: Option<OutputSpec>,
}

/// Loads and fully resolves a run config file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    RunFile::load(path)?.resolve()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariantFile {
    name: String,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    mmu: Option<MmuSpec>,
}

/// A sweep config file: one trace shared by every named MMU variant.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    trace: TraceSource,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    mappings: Option<Vec<RegionSpec>>,
    #[serde(default)]
    demand_map: Option<bool>,
    variants: Vec<VariantFile>,
    #[serde(default)]
    output: Option<OutputSpec>,
}

#[derive(Debug, Clone)]
pub struct SweepVariant {
    pub name: String,
    pub mmu: MmuConfig,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub trace: TraceSource,
    pub seed: u64,
    pub mappings: Vec<MappingRegion>,
    pub demand_map: bool,
    pub variants: Vec<SweepVariant>,
    pub output: Option<OutputSpec>,
}

impl SweepFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_owned(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    pub fn resolve(&self) -> Result<SweepConfig, ConfigError> {
        let seed = self.seed.unwrap_or(0);
        let mappings = self
            .mappings
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .enumerate()
            .map(|(i, spec)| spec.resolve(&format!("mappings[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let variants = self
            .variants
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let key = format!("variants[{i}]");
                let mmu = match (&v.preset, &v.mmu) {
                    (Some(name), None) => {
                        let preset: Preset =
                            name.parse().map_err(|e| invalid(format!("{key}.preset"), e))?;
                        preset.resolve()
                    }
                    (None, Some(spec)) => spec.resolve(&format!("{key}.mmu"), seed)?,
                    _ => {
                        return Err(invalid(key, "each variant needs exactly one of preset or mmu"))
                    }
                };
                Ok(SweepVariant { name: v.name.clone(), mmu })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(SweepConfig {
            trace: self.trace.clone(),
            seed,
            mappings,
            demand_map: self.demand_map.unwrap_or(true),
            variants,
            output: self.output.clone(),
        })
    }
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    SweepFile::load(path)?.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_run(json: &str) -> Result<RunConfig, ConfigError> {
        let file: RunFile = serde_json::from_str(json).map_err(|e| ConfigError::Json(e.to_string()))?;
        file.resolve()
    }

    #[test]
    fn preset_reference_resolves_to_table_row() {
        let config = parse_run(
            r#"{"preset": "IV", "trace": {"spec": {"sequential": {"pages": 4}}}}"#,
        )
        .unwrap();
        assert_eq!(config.mmu, Preset::IV.resolve());
        assert!(config.demand_map);
        assert_eq!(config.seed, 0);
    }

    #[test]
    fn non_power_of_two_geometry_is_rejected() {
        let err = parse_run(
            r#"{
                "mmu": {
                    "itlb": {"sets": 1, "ways": 32},
                    "dtlb": {"sets": 1, "ways": 32},
                    "l2": {"sets": 3, "ways": 4}
                },
                "trace": {"spec": {"sequential": {"pages": 1}}}
            }"#,
        )
        .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("l2"), "error names the key: {message}");
        assert!(message.contains("power of two"), "error names the reason: {message}");
    }

    #[test]
    fn omitted_latencies_use_defaults() {
        let config = parse_run(
            r#"{
                "mmu": {"itlb": {"sets": 1, "ways": 4}, "dtlb": {"sets": 1, "ways": 4}},
                "trace": {"spec": {"sequential": {"pages": 1}}}
            }"#,
        )
        .unwrap();
        assert_eq!(config.mmu.latencies.l1_hit_cycles, 1);
        assert_eq!(config.mmu.latencies.l2_extra_cycles, 2);
        assert_eq!(config.mmu.latencies.mem_access_cycles, 20);
        assert_eq!(config.mmu.superpage_entries, 4);
        assert_eq!(config.mmu.l2, None);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_run(
            r#"{"preset": "I", "trace": {"spec": {"sequential": {"pages": 1}}}, "typo": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("typo"));
    }

    #[test]
    fn preset_and_mmu_are_mutually_exclusive() {
        let err = parse_run(
            r#"{
                "preset": "I",
                "mmu": {"itlb": {"sets": 1, "ways": 4}, "dtlb": {"sets": 1, "ways": 4}},
                "trace": {"spec": {"sequential": {"pages": 1}}}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not both"));
    }

    #[test]
    fn random_policy_seed_derivation() {
        let json = r#"{
            "mmu": {
                "itlb": {"sets": 1, "ways": 4, "policy": "random"},
                "dtlb": {"sets": 1, "ways": 4, "policy": "random", "seed": 7}
            },
            "trace": {"spec": {"sequential": {"pages": 1}}},
            "seed": 99
        }"#;
        let config = parse_run(json).unwrap();
        assert_eq!(config.mmu.dtlb.policy, ReplacementPolicy::Random { seed: 7 });
        match config.mmu.itlb.policy {
            ReplacementPolicy::Random { seed } => assert_ne!(seed, 99, "derived, not the raw run seed"),
            other => panic!("expected random policy, got {other:?}"),
        }
        // Same run seed, same derivation.
        assert_eq!(parse_run(json).unwrap().mmu.itlb.policy, config.mmu.itlb.policy);
    }

    #[test]
    fn seed_with_plru_is_rejected() {
        let err = parse_run(
            r#"{
                "mmu": {"itlb": {"sets": 1, "ways": 4, "seed": 3}, "dtlb": {"sets": 1, "ways": 4}},
                "trace": {"spec": {"sequential": {"pages": 1}}}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("random policy"));
    }

    #[test]
    fn mapping_regions_validated() {
        let config = parse_run(
            r#"{
                "preset": "I",
                "trace": {"spec": {"sequential": {"pages": 1}}},
                "mappings": [{"base_va": "0x4000_0000", "size": "1G", "count": 2}]
            }"#,
        )
        .unwrap();
        assert_eq!(config.mappings.len(), 1);
        assert_eq!(config.mappings[0].size, PageSize::Giga1G);
        assert_eq!(config.mappings[0].count, 2);

        let err = parse_run(
            r#"{
                "preset": "I",
                "trace": {"spec": {"sequential": {"pages": 1}}},
                "mappings": [{"base_va": "0x1000", "size": "2M"}]
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("aligned"));
    }

    #[test]
    fn sweep_variants_resolve() {
        let file: SweepFile = serde_json::from_str(
            r#"{
                "trace": {"spec": {"conflict": {"l2_sets": 64, "distinct_tags": 4, "repetitions": 10}}},
                "variants": [
                    {"name": "base", "preset": "II"},
                    {"name": "big", "mmu": {"itlb": {"sets": 1, "ways": 32}, "dtlb": {"sets": 1, "ways": 32}, "l2": {"sets": 128, "ways": 8}}}
                ]
            }"#,
        )
        .unwrap();
        let sweep = file.resolve().unwrap();
        assert_eq!(sweep.variants.len(), 2);
        assert_eq!(sweep.variants[0].name, "base");
        assert_eq!(sweep.variants[1].mmu.l2.unwrap().ways, 8);
    }
}
