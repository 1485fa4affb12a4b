//! Sv39 address arithmetic: virtual-address decomposition, physical-address
//! composition, PTE encoding, and page-size geometry.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of page-table levels in Sv39.
pub const LEVELS: u8 = 3;
/// Bits of a virtual address that are significant (the rest is sign extension).
pub const VA_BITS: u32 = 39;
/// Bits of a physical address.
pub const PA_BITS: u32 = 56;
/// Bits of a virtual page number.
pub const VPN_BITS: u32 = 27;
/// Bits of a physical page number.
pub const PPN_BITS: u32 = 44;
/// Bits of the in-page offset for a 4KB base page.
pub const PAGE_OFFSET_BITS: u32 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Sv39Error {
    /// Bits 63..39 of the address do not all equal bit 38.
    #[error("non-canonical Sv39 virtual address {0:#x}")]
    NonCanonical(u64),
    /// A superpage leaf whose low PPN bits are not zero at its level.
    #[error("misaligned superpage leaf: ppn {ppn:#x} at level {level}")]
    MisalignedSuperpage { ppn: u64, level: u8 },
    /// Physical address would exceed the 56-bit Sv39 space.
    #[error("physical address {0:#x} exceeds 56 bits")]
    PhysAddrRange(u64),
}

/// A canonical Sv39 virtual address.
///
/// Construction rejects non-canonical values, so every `VirtAddr` in the
/// simulator is well-formed by the time it reaches a TLB or the walker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VirtAddr(u64);

impl VirtAddr {
    pub fn new(value: u64) -> Result<Self, Sv39Error> {
        // Canonical: bits 63..39 all equal bit 38.
        let shifted = (value as i64) >> (VA_BITS - 1);
        if shifted == 0 || shifted == -1 {
            Ok(VirtAddr(value))
        } else {
            Err(Sv39Error::NonCanonical(value))
        }
    }

    /// Sign-extends the low 39 bits into a canonical address.
    pub fn from_sv39_bits(bits: u64) -> Self {
        let shift = 64 - VA_BITS;
        VirtAddr((((bits << shift) as i64) >> shift) as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for VirtAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// A 27-bit Sv39 virtual page number (for 4KB granularity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vpn(u64);

impl Vpn {
    /// Wraps a raw page number, masking to 27 bits.
    pub fn from_value(value: u64) -> Self {
        Vpn(value & ((1 << VPN_BITS) - 1))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Level-2 (root) index, bits 26..18 of the VPN.
    pub fn vpn2(self) -> u64 {
        (self.0 >> 18) & 0x1ff
    }

    /// Level-1 index, bits 17..9.
    pub fn vpn1(self) -> u64 {
        (self.0 >> 9) & 0x1ff
    }

    /// Level-0 index, bits 8..0.
    pub fn vpn0(self) -> u64 {
        self.0 & 0x1ff
    }

    /// Index into the page table at `level` (2 = root).
    pub fn index_at(self, level: u8) -> u64 {
        debug_assert!(level < LEVELS);
        (self.0 >> (9 * level)) & 0x1ff
    }

    /// Rebuilds the canonical virtual address for this page plus an offset.
    pub fn to_va(self, offset: u64) -> VirtAddr {
        debug_assert!(offset < PageSize::Base4K.byte_size());
        VirtAddr::from_sv39_bits((self.0 << PAGE_OFFSET_BITS) | offset)
    }
}

/// Splits a canonical virtual address into its 27-bit virtual page number.
pub fn split_vpn(va: VirtAddr) -> Vpn {
    Vpn::from_value((va.value() >> PAGE_OFFSET_BITS) & ((1 << VPN_BITS) - 1))
}

/// A 56-bit Sv39 physical address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhysAddr(u64);

impl PhysAddr {
    pub fn new(value: u64) -> Result<Self, Sv39Error> {
        if value < (1 << PA_BITS) {
            Ok(PhysAddr(value))
        } else {
            Err(Sv39Error::PhysAddrRange(value))
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn ppn(self) -> u64 {
        self.0 >> PAGE_OFFSET_BITS
    }
}

impl fmt::Display for PhysAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// The three Sv39 page sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageSize {
    /// 4KB base page (leaf at level 0).
    Base4K,
    /// 2MB superpage (leaf at level 1).
    Mega2M,
    /// 1GB superpage (leaf at level 2).
    Giga1G,
}

impl PageSize {
    pub fn byte_size(self) -> u64 {
        1 << self.offset_bits()
    }

    pub fn offset_bits(self) -> u32 {
        match self {
            PageSize::Base4K => 12,
            PageSize::Mega2M => 21,
            PageSize::Giga1G => 30,
        }
    }

    /// The walk level at which a leaf of this size sits.
    pub fn level(self) -> u8 {
        match self {
            PageSize::Base4K => 0,
            PageSize::Mega2M => 1,
            PageSize::Giga1G => 2,
        }
    }

    pub fn from_level(level: u8) -> Self {
        match level {
            0 => PageSize::Base4K,
            1 => PageSize::Mega2M,
            2 => PageSize::Giga1G,
            _ => panic!("invalid Sv39 walk level {level}"),
        }
    }

    /// Number of 4KB frames covered by one page of this size.
    pub fn frames(self) -> u64 {
        self.byte_size() >> PAGE_OFFSET_BITS
    }
}

/// Low bits of the address that lie inside a page of the given size.
pub fn page_offset(va: VirtAddr, size: PageSize) -> u64 {
    va.value() & (size.byte_size() - 1)
}

/// PTE permission and status flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct PteFlags {
    pub v: bool,
    pub r: bool,
    pub w: bool,
    pub x: bool,
    pub u: bool,
    pub g: bool,
    pub a: bool,
    pub d: bool,
}

impl PteFlags {
    /// Valid + read/write/execute, the shape installed for mapped pages.
    pub fn rwx() -> Self {
        PteFlags { v: true, r: true, w: true, x: true, ..Default::default() }
    }

    /// Valid pointer to the next level (R = W = X = 0).
    pub fn pointer() -> Self {
        PteFlags { v: true, ..Default::default() }
    }

    pub fn to_bits(self) -> u64 {
        (self.v as u64)
            | (self.r as u64) << 1
            | (self.w as u64) << 2
            | (self.x as u64) << 3
            | (self.u as u64) << 4
            | (self.g as u64) << 5
            | (self.a as u64) << 6
            | (self.d as u64) << 7
    }

    pub fn from_bits(bits: u64) -> Self {
        PteFlags {
            v: bits & 1 != 0,
            r: bits & 2 != 0,
            w: bits & 4 != 0,
            x: bits & 8 != 0,
            u: bits & 16 != 0,
            g: bits & 32 != 0,
            a: bits & 64 != 0,
            d: bits & 128 != 0,
        }
    }
}

/// A decoded Sv39 page-table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pte {
    /// 44-bit physical page number.
    pub ppn: u64,
    pub flags: PteFlags,
}

impl Pte {
    pub fn leaf(ppn: u64, flags: PteFlags) -> Self {
        Pte { ppn, flags }
    }

    pub fn pointer(ppn: u64) -> Self {
        Pte { ppn, flags: PteFlags::pointer() }
    }

    /// Leaf iff any of R/W/X is set.
    pub fn is_leaf(self) -> bool {
        self.flags.r || self.flags.w || self.flags.x
    }

    /// Pointer to the next level iff valid with R = W = X = 0.
    pub fn is_pointer(self) -> bool {
        self.flags.v && !self.is_leaf()
    }

    pub fn is_valid(self) -> bool {
        self.flags.v
    }

    /// Encodes to the in-memory Sv39 format: flags in bits 7..0, PPN in 53..10.
    pub fn to_bits(self) -> u64 {
        self.flags.to_bits() | (self.ppn & ((1 << PPN_BITS) - 1)) << 10
    }

    pub fn from_bits(bits: u64) -> Self {
        Pte {
            ppn: (bits >> 10) & ((1 << PPN_BITS) - 1),
            flags: PteFlags::from_bits(bits),
        }
    }

    /// True when the low PPN bits required to be zero at `level` are zero.
    pub fn aligned_at(self, level: u8) -> bool {
        let low_bits = 9 * level as u32;
        self.ppn & ((1u64 << low_bits) - 1) == 0
    }
}

/// Composes the physical address for a leaf found at `level`.
///
/// At superpage levels the low PPN bits are replaced by the corresponding
/// virtual-address bits, which for an aligned leaf is a plain concatenation
/// of the PPN with the size-wide page offset.
pub fn compose_pa(pte: Pte, va: VirtAddr, level: u8) -> Result<PhysAddr, Sv39Error> {
    debug_assert!(level < LEVELS);
    if !pte.aligned_at(level) {
        return Err(Sv39Error::MisalignedSuperpage { ppn: pte.ppn, level });
    }
    let size = PageSize::from_level(level);
    PhysAddr::new((pte.ppn << PAGE_OFFSET_BITS) | page_offset(va, size))
}
