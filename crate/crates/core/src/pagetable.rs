//! In-simulator model of the OS-managed Sv39 radix page table.
//!
//! Tables are 512-entry arrays of encoded PTEs keyed by their frame number,
//! with the root frame playing the role of the SATP PPN. `walk` is the
//! authoritative translation and doubles as the oracle the TLB hierarchy is
//! checked against.

use std::collections::HashMap;

use thiserror::Error;

use crate::sv39::{self, compose_pa, split_vpn, PageSize, PhysAddr, Pte, PteFlags, Sv39Error, VirtAddr, Vpn};

/// Default first frame handed out for data pages. Table frames are allocated
/// below this base so the two ranges can never collide.
pub const DEFAULT_DATA_FRAME_BASE: u64 = 0x1000;

const ENTRIES_PER_TABLE: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PageTableError {
    /// An invalid PTE was reached at the given walk level.
    #[error("page fault at {va} (level {level})")]
    PageFault { va: u64, level: u8 },
    /// The region overlaps an existing mapping of a different size.
    #[error("mapping conflict at vpn {vpn:#x}: {existing:?} already mapped, {requested:?} requested")]
    MappingConflict { vpn: u64, existing: PageSize, requested: PageSize },
    #[error(transparent)]
    Sv39(#[from] Sv39Error),
}

/// Outcome of a successful walk: the leaf, the level it sat at, and how many
/// page-table loads the walk performed (one per traversed level).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkResult {
    pub pte: Pte,
    pub level: u8,
    pub memory_accesses: u64,
    pub size: PageSize,
}

/// Sv39 radix page table with demand frame allocation.
#[derive(Debug, Clone)]
pub struct PageTable {
    root_ppn: u64,
    tables: HashMap<u64, Box<[u64; ENTRIES_PER_TABLE]>>,
    next_table_frame: u64,
    next_data_frame: u64,
    data_frame_base: u64,
}

impl PageTable {
    pub fn new() -> Self {
        Self::with_data_frame_base(DEFAULT_DATA_FRAME_BASE)
    }

    pub fn with_data_frame_base(data_frame_base: u64) -> Self {
        let mut tables = HashMap::new();
        let root_ppn = 1;
        tables.insert(root_ppn, Box::new([0u64; ENTRIES_PER_TABLE]));
        PageTable {
            root_ppn,
            tables,
            next_table_frame: root_ppn + 1,
            next_data_frame: data_frame_base,
            data_frame_base,
        }
    }

    pub fn root_ppn(&self) -> u64 {
        self.root_ppn
    }

    fn alloc_table(&mut self) -> u64 {
        let frame = self.next_table_frame;
        assert!(
            frame < self.data_frame_base,
            "page-table frames exhausted the reserved range below {:#x}",
            self.data_frame_base
        );
        self.next_table_frame += 1;
        self.tables.insert(frame, Box::new([0u64; ENTRIES_PER_TABLE]));
        frame
    }

    /// Allocates a run of frames aligned for `size`, never reusing any.
    fn alloc_data_frames(&mut self, size: PageSize) -> u64 {
        let frames = size.frames();
        let aligned = self.next_data_frame.next_multiple_of(frames);
        self.next_data_frame = aligned + frames;
        aligned
    }

    fn load(&self, table_ppn: u64, index: u64) -> Pte {
        let table = self.tables.get(&table_ppn).expect("pointer PTE refers to allocated table");
        Pte::from_bits(table[index as usize])
    }

    fn store(&mut self, table_ppn: u64, index: u64, pte: Pte) {
        let table = self.tables.get_mut(&table_ppn).expect("pointer PTE refers to allocated table");
        table[index as usize] = pte.to_bits();
    }

    /// Installs a leaf for the page containing `vpn` at the level implied by
    /// `size`, demand-allocating intermediate tables. Low VPN bits inside the
    /// region are ignored. Re-mapping the same region at the same size is
    /// idempotent and returns the original frame.
    pub fn map_page(&mut self, vpn: Vpn, size: PageSize) -> Result<u64, PageTableError> {
        let leaf_level = size.level();
        let mut table_ppn = self.root_ppn;
        for level in (leaf_level + 1..sv39::LEVELS).rev() {
            let index = vpn.index_at(level);
            let pte = self.load(table_ppn, index);
            if pte.is_leaf() {
                return Err(PageTableError::MappingConflict {
                    vpn: vpn.value(),
                    existing: PageSize::from_level(level),
                    requested: size,
                });
            }
            table_ppn = if pte.is_pointer() {
                pte.ppn
            } else {
                let frame = self.alloc_table();
                self.store(table_ppn, index, Pte::pointer(frame));
                frame
            };
        }

        let index = vpn.index_at(leaf_level);
        let existing = self.load(table_ppn, index);
        if existing.is_leaf() {
            return Ok(existing.ppn);
        }
        if existing.is_pointer() {
            // Finer-grained mappings already live below this slot.
            return Err(PageTableError::MappingConflict {
                vpn: vpn.value(),
                existing: PageSize::Base4K,
                requested: size,
            });
        }
        let frame = self.alloc_data_frames(size);
        self.store(table_ppn, index, Pte::leaf(frame, PteFlags::rwx()));
        Ok(frame)
    }

    /// Walks from the root to the first leaf. Sets the leaf's A/D bits in
    /// place (without extra memory traffic) and returns the updated PTE, so
    /// repeated walks of an unchanged table return identical results.
    pub fn walk(&mut self, va: VirtAddr) -> Result<WalkResult, PageTableError> {
        let vpn = split_vpn(va);
        let mut table_ppn = self.root_ppn;
        let mut memory_accesses = 0;
        for level in (0..sv39::LEVELS).rev() {
            let index = vpn.index_at(level);
            let mut pte = self.load(table_ppn, index);
            memory_accesses += 1;
            if !pte.is_valid() {
                return Err(PageTableError::PageFault { va: va.value(), level });
            }
            if pte.is_leaf() {
                if !pte.aligned_at(level) {
                    return Err(Sv39Error::MisalignedSuperpage { ppn: pte.ppn, level }.into());
                }
                if !pte.flags.a || !pte.flags.d {
                    pte.flags.a = true;
                    pte.flags.d = true;
                    self.store(table_ppn, index, pte);
                }
                return Ok(WalkResult {
                    pte,
                    level,
                    memory_accesses,
                    size: PageSize::from_level(level),
                });
            }
            table_ppn = pte.ppn;
        }
        // A pointer at level 0 cannot be followed further.
        Err(PageTableError::PageFault { va: va.value(), level: 0 })
    }

    /// TLB-bypassing reference translation.
    pub fn translate_oracle(&mut self, va: VirtAddr) -> Result<PhysAddr, PageTableError> {
        let result = self.walk(va)?;
        Ok(compose_pa(result.pte, va, result.level)?)
    }
}

impl Default for PageTable {
    fn default() -> Self {
        Self::new()
    }
}
