//! Trace-driven simulator of a configurable RISC-V Sv39 TLB hierarchy.
//!
//! The simulator models a Rocket-style MMU: set-associative L1 instruction
//! and data TLBs, an optional fully-associative superpage TLB, an optional
//! shared set-associative L2 TLB, and an Sv39 page-table walker behind a
//! round-robin arbiter. Any geometry from direct-mapped to fully-associative
//! is supported, with pseudo-LRU or seeded random replacement.

pub mod mmu;
pub mod pagetable;
pub mod rng;
pub mod sv39;
pub mod tlb;
pub mod trace;
pub mod stats;

mod superpage;

pub use mmu::{AccessKind, Arbiter, LatencyModel, Mmu, MmuConfig, Requester, StepOutcome, TranslationResult, TranslationSource};
pub use pagetable::{PageTable, PageTableError, WalkResult};
pub use rng::XorShift64Star;
pub use sv39::{PageSize, PhysAddr, Pte, PteFlags, Sv39Error, VirtAddr, Vpn};
pub use superpage::SuperpageTlb;
pub use tlb::{ReplacementPolicy, RefillOutcome, SetAssocTlb, TlbCounters, TlbEntry, TlbGeometry};
pub use trace::{AccessRecord, DataAccess, TraceError, TraceSpec};
pub use stats::{StatsReport, StatsError, StructureCounters};
