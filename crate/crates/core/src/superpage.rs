//! Fully-associative TLB for 2MB/1GB superpage translations, kept separate
//! from the set-associative base-page structures because a set index cannot
//! be derived from a VPN whose page size is not yet known.

use crate::sv39::{page_offset, split_vpn, PageSize, PhysAddr, PteFlags, VirtAddr};
use crate::tlb::{PlruState, TlbCounters};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuperpageEntry {
    /// VPN of the region base, low bits cleared to the region granularity.
    pub vpn: u64,
    pub ppn: u64,
    pub perms: PteFlags,
    pub size: PageSize,
}

impl SuperpageEntry {
    fn covers(&self, vpn: u64) -> bool {
        let shift = 9 * self.size.level() as u32;
        vpn >> shift == self.vpn >> shift
    }
}

/// Fully-associative superpage TLB with tree pseudo-LRU replacement.
/// `entries == 0` disables the structure entirely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpageTlb {
    slots: Vec<SuperpageEntry>,
    valid: Vec<bool>,
    plru: PlruState,
    counters: TlbCounters,
}

impl SuperpageTlb {
    pub fn new(entries: usize) -> Self {
        debug_assert!(entries.is_power_of_two());
        SuperpageTlb {
            slots: vec![
                SuperpageEntry { vpn: 0, ppn: 0, perms: PteFlags::default(), size: PageSize::Mega2M };
                entries
            ],
            valid: vec![false; entries],
            plru: PlruState::new(entries),
            counters: TlbCounters::default(),
        }
    }

    pub fn counters(&self) -> TlbCounters {
        self.counters
    }

    pub fn occupancy(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Match by containment: a hit is any valid entry whose region covers
    /// the address.
    pub fn lookup(&mut self, va: VirtAddr) -> Option<(SuperpageEntry, PhysAddr)> {
        self.counters.lookups += 1;
        let vpn = split_vpn(va).value();
        for way in 0..self.slots.len() {
            if self.valid[way] && self.slots[way].covers(vpn) {
                self.counters.hits += 1;
                self.plru.touch(way);
                let entry = self.slots[way];
                let pa = PhysAddr::new((entry.ppn << 12) | page_offset(va, entry.size))
                    .expect("cached superpage ppn is in range");
                return Some((entry, pa));
            }
        }
        self.counters.misses += 1;
        None
    }

    pub fn refill(&mut self, va: VirtAddr, ppn: u64, perms: PteFlags, size: PageSize) {
        debug_assert_ne!(size, PageSize::Base4K);
        let shift = 9 * size.level() as u32;
        let vpn = split_vpn(va).value() >> shift << shift;
        let entry = SuperpageEntry { vpn, ppn, perms, size };

        let way = match self.slots.iter().enumerate().position(|(w, e)| self.valid[w] && e.covers(vpn)) {
            Some(way) => way,
            None => match self.valid.iter().position(|v| !v) {
                Some(free) => free,
                None => self.plru.victim(),
            },
        };
        if self.valid[way] {
            self.counters.evictions += 1;
        }
        self.slots[way] = entry;
        self.valid[way] = true;
        self.plru.touch(way);
        self.counters.refills += 1;
    }

    /// Invalidates every entry whose mapped range contains `va`.
    pub fn flush_matching(&mut self, va: VirtAddr) -> u64 {
        let vpn = split_vpn(va).value();
        let mut flushed = 0;
        for way in 0..self.slots.len() {
            if self.valid[way] && self.slots[way].covers(vpn) {
                self.valid[way] = false;
                flushed += 1;
            }
        }
        self.counters.flushed_entries += flushed;
        flushed
    }

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
}
