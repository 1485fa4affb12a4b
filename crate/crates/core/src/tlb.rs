//! The configurable set-associative TLB template.
//!
//! One structure covers every organization from direct-mapped (`ways == 1`)
//! to fully-associative (`sets == 1`). Lookups split the VPN into an index
//! and a tag, search the indexed set associatively, and refills take the
//! first free slot before consulting the replacement policy. Valid bits are
//! held apart from the entry payloads and can be cleared per entry or per
//! whole set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::XorShift64Star;
use crate::sv39::{PageSize, PteFlags, Vpn};

/// Replacement policy for a set-associative TLB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementPolicy {
    /// Tree pseudo-LRU, one bit per internal node.
    PseudoLru,
    /// Seeded xorshift64* random victim selection.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("{field}: {value} is not a positive power of two")]
    NotPowerOfTwo { field: &'static str, value: u64 },
}

/// Sets × ways shape of a TLB plus its replacement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlbGeometry {
    pub sets: u64,
    pub ways: u64,
    pub policy: ReplacementPolicy,
}

impl TlbGeometry {
    pub fn new(sets: u64, ways: u64, policy: ReplacementPolicy) -> Result<Self, GeometryError> {
        let geometry = TlbGeometry { sets, ways, policy };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.sets == 0 || !self.sets.is_power_of_two() {
            return Err(GeometryError::NotPowerOfTwo { field: "sets", value: self.sets });
        }
        if self.ways == 0 || !self.ways.is_power_of_two() {
            return Err(GeometryError::NotPowerOfTwo { field: "ways", value: self.ways });
        }
        Ok(())
    }

    /// Fully-associative organization with `entries` ways in a single set.
    pub fn fully_associative(entries: u64, policy: ReplacementPolicy) -> Result<Self, GeometryError> {
        Self::new(1, entries, policy)
    }

    pub fn entries(&self) -> u64 {
        self.sets * self.ways
    }

    /// Low log2(sets) bits of the VPN.
    pub fn set_index(&self, vpn: Vpn) -> usize {
        (vpn.value() & (self.sets - 1)) as usize
    }

    /// VPN with the index bits stripped.
    pub fn tag(&self, vpn: Vpn) -> u64 {
        vpn.value() >> self.sets.trailing_zeros()
    }
}

/// One cached translation: tag within its set, target PPN, and the PTE flags
/// it was installed with. Entries in a set-associative structure are always
/// 4KB; superpages live in their own fully-associative structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TlbEntry {
    pub tag: u64,
    pub ppn: u64,
    pub perms: PteFlags,
    pub size: PageSize,
}

impl Default for TlbEntry {
    fn default() -> Self {
        TlbEntry { tag: 0, ppn: 0, perms: PteFlags::default(), size: PageSize::Base4K }
    }
}

/// Result of a refill: the way the entry landed in and what it displaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefillOutcome {
    pub placed_way: usize,
    pub evicted: Option<TlbEntry>,
}

/// Tree pseudo-LRU state for one set: `ways - 1` node bits, root at index 0,
/// children of node `i` at `2i+1` and `2i+2`. A zero node bit steers the
/// victim search toward the lower-numbered subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlruState {
    bits: Vec<bool>,
    ways: usize,
}

impl PlruState {
    pub fn new(ways: usize) -> Self {
        debug_assert!(ways.is_power_of_two());
        // Direct-mapped sets need no replacement state at all.
        let nodes = ways.saturating_sub(1);
        PlruState { bits: vec![false; nodes], ways }
    }

    /// Flips every node on the root-to-leaf path to point away from `way`.
    pub fn touch(&mut self, way: usize) {
        debug_assert!(way < self.ways);
        let mut node = 0;
        let mut lo = 0;
        let mut hi = self.ways;
        while node < self.bits.len() {
            let mid = (lo + hi) / 2;
            if way < mid {
                self.bits[node] = true; // victim search goes right, away from `way`
                node = 2 * node + 1;
                hi = mid;
            } else {
                self.bits[node] = false;
                node = 2 * node + 2;
                lo = mid;
            }
        }
    }

    /// Follows the node bits from the root to the pseudo-LRU way.
    pub fn victim(&self) -> usize {
        let mut node = 0;
        while node < self.bits.len() {
            node = 2 * node + 1 + self.bits[node] as usize;
        }
        node - self.bits.len()
    }
}

/// Per-structure event counters, zeroed at construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TlbCounters {
    pub lookups: u64,
    pub hits: u64,
    pub misses: u64,
    pub refills: u64,
    pub evictions: u64,
    pub flushed_entries: u64,
}

/// A sets × ways TLB with per-set replacement state.
///
/// The valid bits live outside the entry array and are the only thing a
/// flush touches; replacement and RNG state survive flushes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetAssocTlb {
    geometry: TlbGeometry,
    slots: Vec<TlbEntry>,
    valid: Vec<bool>,
    plru: Vec<PlruState>,
    rng: Option<XorShift64Star>,
    counters: TlbCounters,
}

impl SetAssocTlb {
    pub fn new(geometry: TlbGeometry) -> Self {
        geometry.validate().expect("invalid TLB geometry");
        let entries = geometry.entries() as usize;
        let plru = match geometry.policy {
            ReplacementPolicy::PseudoLru => {
                (0..geometry.sets).map(|_| PlruState::new(geometry.ways as usize)).collect()
            }
            ReplacementPolicy::Random { .. } => Vec::new(),
        };
        let rng = match geometry.policy {
            ReplacementPolicy::Random { seed } => Some(XorShift64Star::new(seed)),
            ReplacementPolicy::PseudoLru => None,
        };
        SetAssocTlb {
            geometry,
            slots: vec![TlbEntry::default(); entries],
            valid: vec![false; entries],
            plru,
            rng,
            counters: TlbCounters::default(),
        }
    }

    pub fn geometry(&self) -> &TlbGeometry {
        &self.geometry
    }

    pub fn counters(&self) -> TlbCounters {
        self.counters
    }

    /// Valid-entry count across all sets.
    pub fn occupancy(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    fn slot(&self, set: usize, way: usize) -> usize {
        set * self.geometry.ways as usize + way
    }

    /// Searches the indexed set for the tag. A hit touches the PLRU path of
    /// the hit way; a miss changes no state beyond the counters.
    pub fn lookup(&mut self, vpn: Vpn) -> Option<TlbEntry> {
        self.counters.lookups += 1;
        let set = self.geometry.set_index(vpn);
        let tag = self.geometry.tag(vpn);
        for way in 0..self.geometry.ways as usize {
            let slot = self.slot(set, way);
            if self.valid[slot] && self.slots[slot].tag == tag {
                self.counters.hits += 1;
                self.touch(set, way);
                return Some(self.slots[slot]);
            }
        }
        self.counters.misses += 1;
        None
    }

    /// Installs a 4KB translation for `vpn`.
    ///
    /// Placement order: an already-valid duplicate tag is overwritten in
    /// place, otherwise the lowest-numbered free way is used, otherwise the
    /// policy picks the victim.
    pub fn refill(&mut self, vpn: Vpn, ppn: u64, perms: PteFlags) -> RefillOutcome {
        let set = self.geometry.set_index(vpn);
        let tag = self.geometry.tag(vpn);
        let ways = self.geometry.ways as usize;
        let entry = TlbEntry { tag, ppn, perms, size: PageSize::Base4K };

        let mut target = None;
        for way in 0..ways {
            let slot = self.slot(set, way);
            if self.valid[slot] && self.slots[slot].tag == tag {
                target = Some(way);
                break;
            }
        }
        let way = match target {
            Some(way) => way,
            None => match (0..ways).find(|&w| !self.valid[self.slot(set, w)]) {
                Some(free) => free,
                None => self.victim(set),
            },
        };

        let slot = self.slot(set, way);
        let evicted = if self.valid[slot] { Some(self.slots[slot]) } else { None };
        self.slots[slot] = entry;
        self.valid[slot] = true;
        self.touch(set, way);
        self.counters.refills += 1;
        if evicted.is_some() {
            self.counters.evictions += 1;
        }
        RefillOutcome { placed_way: way, evicted }
    }

    fn touch(&mut self, set: usize, way: usize) {
        if let ReplacementPolicy::PseudoLru = self.geometry.policy {
            if self.geometry.ways > 1 {
                self.plru[set].touch(way);
            }
        }
        // Random policy keeps no access history.
    }

    /// Victim way for a full set. Advances the RNG exactly once under the
    /// random policy.
    fn victim(&mut self, set: usize) -> usize {
        match self.geometry.policy {
            ReplacementPolicy::PseudoLru => {
                if self.geometry.ways == 1 {
                    0
                } else {
                    self.plru[set].victim()
                }
            }
            ReplacementPolicy::Random { .. } => {
                let ways = self.geometry.ways;
                self.rng.as_mut().expect("random policy has rng").next_below(ways) as usize
            }
        }
    }

    /// Clears the valid bit of the one entry matching `vpn`, if present.
    pub fn flush_entry(&mut self, vpn: Vpn) -> bool {
        let set = self.geometry.set_index(vpn);
        let tag = self.geometry.tag(vpn);
        for way in 0..self.geometry.ways as usize {
            let slot = self.slot(set, way);
            if self.valid[slot] && self.slots[slot].tag == tag {
                self.valid[slot] = false;
                self.counters.flushed_entries += 1;
                return true;
            }
        }
        false
    }

    /// Clears every valid bit in the set `vpn` indexes; returns how many
    /// entries were valid.
    pub fn flush_set(&mut self, vpn: Vpn) -> u64 {
        let set = self.geometry.set_index(vpn);
        let mut flushed = 0;
        for way in 0..self.geometry.ways as usize {
            let slot = self.slot(set, way);
            if self.valid[slot] {
                self.valid[slot] = false;
                flushed += 1;
            }
        }
        self.counters.flushed_entries += flushed;
        flushed
    }

    /// Clears all valid bits. Replacement and RNG state are preserved.
    pub fn flush_all(&mut self) {
        let mut flushed = 0;
        for v in &mut self.valid {
            if *v {
                flushed += 1;
            }
            *v = false;
        }
        self.counters.flushed_entries += flushed;
    }

    /// Snapshot of all valid entries as (set, way, entry).
    pub fn valid_entries(&self) -> Vec<(usize, usize, TlbEntry)> {
        let mut out = Vec::new();
        for set in 0..self.geometry.sets as usize {
            for way in 0..self.geometry.ways as usize {
                let slot = self.slot(set, way);
                if self.valid[slot] {
                    out.push((set, way, self.slots[slot]));
                }
            }
        }
        out
    }
}
