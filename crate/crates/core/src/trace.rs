//! Trace ingestion and synthetic trace generation.
//!
//! Trace files are UTF-8, one access per line, `#`-prefixed comment lines
//! allowed:
//!
//! ```text
//! PC_HEX [ (L|S) VA_HEX ]
//! ```
//!
//! Hex values may carry a `0x` prefix and `_` group separators. Files ending
//! in `.gz` are read through a gzip decoder transparently. The generators
//! stand in for benchmark execution at desk scale: the conflict generator
//! reproduces set-conflict thrashing and the pointer chase defeats spatial
//! locality the way a graph traversal does.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mmu::AccessKind;
use crate::rng::XorShift64Star;
use crate::sv39::{Sv39Error, VirtAddr, Vpn};

/// Fixed code page for generators that keep the fetch stream trivial.
const CODE_PAGE_VA: u64 = 0x1000;
/// Base of the generated data region.
const DATA_BASE_VA: u64 = 0x8000_0000;
/// Base of the sequential code region (distinct pages per record).
const CODE_BASE_VA: u64 = 0x1000_0000;
/// Base of the pointer-chase heap.
const HEAP_BASE_VA: u64 = 0x2_0000_0000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    NonCanonical { line: usize, source: Sv39Error },
    #[error("io error reading trace: {0}")]
    Io(String),
}

/// The data half of a record, when the instruction touches memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataAccess {
    pub kind: AccessKind,
    pub va: VirtAddr,
}

/// One executed instruction: its fetch address and an optional load/store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRecord {
    pub pc: VirtAddr,
    pub data: Option<DataAccess>,
}

impl AccessRecord {
    pub fn fetch(pc: VirtAddr) -> Self {
        AccessRecord { pc, data: None }
    }

    pub fn load(pc: VirtAddr, va: VirtAddr) -> Self {
        AccessRecord { pc, data: Some(DataAccess { kind: AccessKind::Load, va }) }
    }

    pub fn store(pc: VirtAddr, va: VirtAddr) -> Self {
        AccessRecord { pc, data: Some(DataAccess { kind: AccessKind::Store, va }) }
    }

    /// The inverse of `parse_trace_line`.
    pub fn render(&self) -> String {
        match self.data {
            None => format!("{:#x}", self.pc.value()),
            Some(DataAccess { kind, va }) => {
                let tag = match kind {
                    AccessKind::Load => "L",
                    AccessKind::Store => "S",
                    AccessKind::Fetch => unreachable!("data access cannot be a fetch"),
                };
                format!("{:#x} {tag} {:#x}", self.pc.value(), va.value())
            }
        }
    }
}

fn parse_hex(token: &str, line: usize) -> Result<u64, TraceError> {
    let cleaned = token.replace('_', "");
    let digits = cleaned
        .strip_prefix("0x")
        .or_else(|| cleaned.strip_prefix("0X"))
        .unwrap_or(&cleaned);
    u64::from_str_radix(digits, 16).map_err(|_| TraceError::Parse {
        line,
        reason: format!("bad hex value {token:?}"),
    })
}

fn parse_va(token: &str, line: usize) -> Result<VirtAddr, TraceError> {
    VirtAddr::new(parse_hex(token, line)?).map_err(|source| TraceError::NonCanonical { line, source })
}

/// Parses one trace line. `line` is used only for error reporting.
pub fn parse_trace_line(text: &str, line: usize) -> Result<AccessRecord, TraceError> {
    let mut tokens = text.split_whitespace();
    let pc = parse_va(
        tokens.next().ok_or_else(|| TraceError::Parse { line, reason: "empty record".into() })?,
        line,
    )?;
    let data = match tokens.next() {
        None => None,
        Some(op) => {
            let kind = match op {
                "L" => AccessKind::Load,
                "S" => AccessKind::Store,
                other => {
                    return Err(TraceError::Parse {
                        line,
                        reason: format!("expected L or S, found {other:?}"),
                    })
                }
            };
            let va = parse_va(
                tokens.next().ok_or_else(|| TraceError::Parse {
                    line,
                    reason: "missing data address".into(),
                })?,
                line,
            )?;
            Some(DataAccess { kind, va })
        }
    };
    if let Some(extra) = tokens.next() {
        return Err(TraceError::Parse { line, reason: format!("trailing token {extra:?}") });
    }
    Ok(AccessRecord { pc, data })
}

/// Parses a whole trace from a reader, skipping blank and comment lines.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<AccessRecord>, TraceError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        records.push(parse_trace_line(trimmed, idx + 1)?);
    }
    Ok(records)
}

/// Reads a trace file; `.gz` paths are decompressed on the fly.
pub fn read_trace_file(path: &Path) -> Result<Vec<AccessRecord>, TraceError> {
    let file = File::open(path).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        parse_trace(BufReader::new(GzDecoder::new(file)))
    } else {
        parse_trace(BufReader::new(file))
    }
}

/// Renders records to the trace text format, one per line.
pub fn render_trace(records: &[AccessRecord]) -> String {
    let mut out = String::new();
    for record in records {
        out.push_str(&record.render());
        out.push('\n');
    }
    out
}

/// Synthetic workload shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSpec {
    /// One record per page: the fetch walks distinct code pages while the
    /// data side loads the matching data page, so both L1 TLBs see exactly
    /// one compulsory miss per page.
    Sequential { pages: u64 },
    /// Loads separated by a fixed page stride from a fixed code page.
    Strided { stride_pages: u64, count: u64 },
    /// Uniformly random loads over a page working set.
    UniformRandom { working_set_pages: u64, length: u64, seed: u64 },
    /// `repetitions` rounds over `distinct_tags` data pages whose VPNs all
    /// share one L2 index: vpn = k * l2_sets for k in 0..distinct_tags.
    Conflict { l2_sets: u64, distinct_tags: u64, repetitions: u64 },
    /// Loads chasing a shuffled cyclic permutation of fixed-size nodes.
    PointerChase { nodes: u64, node_bytes: u64, length: u64, seed: u64 },
}

fn page_va(base: u64, page: u64) -> VirtAddr {
    VirtAddr::new(base + page * 4096).expect("generated address is canonical")
}

/// Deterministically expands a spec into its access sequence.
pub fn generate(spec: &TraceSpec) -> Vec<AccessRecord> {
    let code_page = VirtAddr::new(CODE_PAGE_VA).expect("fixed code page is canonical");
    match *spec {
        TraceSpec::Sequential { pages } => (0..pages)
            .map(|i| AccessRecord::load(page_va(CODE_BASE_VA, i), page_va(DATA_BASE_VA, i)))
            .collect(),
        TraceSpec::Strided { stride_pages, count } => (0..count)
            .map(|i| AccessRecord::load(code_page, page_va(DATA_BASE_VA, i * stride_pages)))
            .collect(),
        TraceSpec::UniformRandom { working_set_pages, length, seed } => {
            let mut rng = XorShift64Star::new(seed);
            (0..length)
                .map(|_| {
                    let draw = rng.next_u64();
                    let page = (draw >> 32) % working_set_pages;
                    // Low bits pick an 8-byte-aligned offset within the page.
                    let offset = draw & 0xff8;
                    let va = VirtAddr::new(DATA_BASE_VA + page * 4096 + offset)
                        .expect("generated address is canonical");
                    AccessRecord::load(code_page, va)
                })
                .collect()
        }
        TraceSpec::Conflict { l2_sets, distinct_tags, repetitions } => {
            let mut records = Vec::with_capacity((distinct_tags * repetitions) as usize);
            for _ in 0..repetitions {
                for k in 0..distinct_tags {
                    let vpn = Vpn::from_value(k * l2_sets);
                    records.push(AccessRecord::load(code_page, vpn.to_va(0)));
                }
            }
            records
        }
        TraceSpec::PointerChase { nodes, node_bytes, length, seed } => {
            let mut order: Vec<u64> = (0..nodes).collect();
            let mut rng = XorShift64Star::new(seed);
            rng.shuffle(&mut order);
            (0..length)
                .map(|i| {
                    let node = order[(i % nodes) as usize];
                    let va = VirtAddr::new(HEAP_BASE_VA + node * node_bytes)
                        .expect("generated address is canonical");
                    AccessRecord::load(code_page, va)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn va(value: u64) -> VirtAddr {
        VirtAddr::new(value).unwrap()
    }

    #[test]
    fn parse_fetch_only() {
        let record = parse_trace_line("0x1000", 1).unwrap();
        assert_eq!(record, AccessRecord::fetch(va(0x1000)));
    }

    #[test]
    fn parse_load_with_separators() {
        let record = parse_trace_line("0x1000 L 0x8000_0000", 1).unwrap();
        assert_eq!(record, AccessRecord::load(va(0x1000), va(0x8000_0000)));
    }

    #[test]
    fn parse_store_without_prefix() {
        let record = parse_trace_line("1000 S 2000", 1).unwrap();
        assert_eq!(record, AccessRecord::store(va(0x1000), va(0x2000)));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(parse_trace_line("xyz", 3), Err(TraceError::Parse { line: 3, .. })));
        assert!(parse_trace_line("0x1000 Q 0x2000", 1).is_err());
        assert!(parse_trace_line("0x1000 L", 1).is_err());
        assert!(parse_trace_line("0x1000 L 0x2000 extra", 1).is_err());
    }

    #[test]
    fn parse_rejects_non_canonical() {
        // Bit 38 set without sign extension.
        assert!(matches!(
            parse_trace_line("0x7fff_ffff_f000", 2),
            Err(TraceError::NonCanonical { line: 2, .. })
        ));
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let text = "# header\n\n0x1000\n  # indented comment\n0x2000 L 0x3000\n";
        let records = parse_trace(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
    }

    #[test]
    fn sequential_touches_each_page_once() {
        let records = generate(&TraceSpec::Sequential { pages: 3 });
        assert_eq!(records.len(), 3);
        let data_pages: Vec<u64> = records
            .iter()
            .map(|r| r.data.unwrap().va.value() >> 12)
            .collect();
        assert_eq!(data_pages, vec![0x80000, 0x80001, 0x80002]);
        let code_pages: Vec<u64> = records.iter().map(|r| r.pc.value() >> 12).collect();
        assert_eq!(code_pages, vec![0x10000, 0x10001, 0x10002]);
    }

    #[test]
    fn conflict_vpns_share_one_l2_index() {
        let spec = TraceSpec::Conflict { l2_sets: 512, distinct_tags: 5, repetitions: 3 };
        let records = generate(&spec);
        assert_eq!(records.len(), 15);
        for record in &records {
            let vpn = record.data.unwrap().va.value() >> 12;
            assert_eq!(vpn % 512, 0);
        }
        let tags: std::collections::HashSet<u64> = records
            .iter()
            .map(|r| (r.data.unwrap().va.value() >> 12) / 512)
            .collect();
        assert_eq!(tags.len(), 5);
    }

    // Brute-force single-slot model: the direct-mapped set every conflict
    // vpn maps to.
    #[test]
    fn conflict_thrashes_direct_mapped_but_fits_wider_ways() {
        let spec = TraceSpec::Conflict { l2_sets: 512, distinct_tags: 5, repetitions: 40 };
        let vpns: Vec<u64> = generate(&spec)
            .iter()
            .map(|r| r.data.unwrap().va.value() >> 12)
            .collect();

        let mut slot: Option<u64> = None;
        let mut dm_misses = 0;
        for &vpn in &vpns {
            if slot != Some(vpn) {
                dm_misses += 1;
                slot = Some(vpn);
            }
        }
        assert_eq!(dm_misses as usize, vpns.len(), "five tags thrash one slot");

        // Eight ways with LRU: only the five compulsory misses.
        let mut ways: Vec<u64> = Vec::new();
        let mut eight_way_misses = 0;
        for &vpn in &vpns {
            if let Some(pos) = ways.iter().position(|&w| w == vpn) {
                let hit = ways.remove(pos);
                ways.push(hit);
            } else {
                eight_way_misses += 1;
                if ways.len() == 8 {
                    ways.remove(0);
                }
                ways.push(vpn);
            }
        }
        assert_eq!(eight_way_misses, 5);
    }

    #[test]
    fn pointer_chase_covers_all_nodes() {
        let spec = TraceSpec::PointerChase { nodes: 16, node_bytes: 64, length: 16, seed: 3 };
        let records = generate(&spec);
        let mut offsets: Vec<u64> = records
            .iter()
            .map(|r| (r.data.unwrap().va.value() - HEAP_BASE_VA) / 64)
            .collect();
        offsets.sort_unstable();
        assert_eq!(offsets, (0..16).collect::<Vec<u64>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TraceSpec::UniformRandom { working_set_pages: 64, length: 500, seed: 11 };
        assert_eq!(render_trace(&generate(&spec)), render_trace(&generate(&spec)));
    }

    #[test]
    fn gz_round_trip() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        use std::io::Write;

        let spec = TraceSpec::Strided { stride_pages: 2, count: 10 };
        let records = generate(&spec);
        let dir = std::env::temp_dir();
        let path = dir.join(format!("tlbsim-trace-{}.trace.gz", std::process::id()));
        {
            let file = File::create(&path).unwrap();
            let mut enc = GzEncoder::new(file, Compression::default());
            enc.write_all(render_trace(&records).as_bytes()).unwrap();
            enc.finish().unwrap();
        }
        let back = read_trace_file(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back, records);
    }

    fn record_strategy() -> impl Strategy<Value = AccessRecord> {
        let addr = (0u64..(1 << 38)).prop_map(|v| VirtAddr::new(v & !0x7).unwrap());
        (addr.clone(), proptest::option::of((any::<bool>(), addr)))
            .prop_map(|(pc, data)| AccessRecord {
                pc,
                data: data.map(|(is_store, va)| DataAccess {
                    kind: if is_store { AccessKind::Store } else { AccessKind::Load },
                    va,
                }),
            })
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(record in record_strategy()) {
            let parsed = parse_trace_line(&record.render(), 1).unwrap();
            prop_assert_eq!(parsed, record);
        }
    }
}
