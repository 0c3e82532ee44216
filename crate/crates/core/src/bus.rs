//! Software bus with address decoding and device models.
//!
//! The bus follows classic single-master read/write semantics: a transfer to
//! an address no device decodes, or one the device refuses, terminates with a
//! bus error. Devices occupy naturally aligned power-of-two windows so
//! decoding is a mask compare.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::regmap::{Access, RegisterMap};

/// A device refused the access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceFault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum BusFault {
    #[error("no device decodes address {0:#010x}")]
    Unmapped(u32),
    #[error("device terminated access to {0:#010x} with error")]
    Device(u32),
    #[error("unaligned address {0:#010x}")]
    Unaligned(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AttachError {
    #[error("window [{base:#x}, +{span:#x}) overlaps an existing mapping")]
    OverlappingMapping { base: u32, span: u64 },
    #[error("window [{base:#x}, +{span:#x}) is not a power-of-two span aligned to its size")]
    BadAlignment { base: u32, span: u64 },
}

/// Behaviour of a bus slave. Offsets are relative to the device's base and
/// always word aligned and inside its span.
pub trait DeviceModel {
    fn read(&mut self, offset: u32) -> Result<u32, DeviceFault>;
    fn write(&mut self, offset: u32, data: u32) -> Result<(), DeviceFault>;
    fn on_time(&mut self, _delta_ns: u64) {}
}

impl<D: DeviceModel + ?Sized> DeviceModel for Box<D> {
    fn read(&mut self, offset: u32) -> Result<u32, DeviceFault> {
        (**self).read(offset)
    }

    fn write(&mut self, offset: u32, data: u32) -> Result<(), DeviceFault> {
        (**self).write(offset, data)
    }

    fn on_time(&mut self, delta_ns: u64) {
        (**self).on_time(delta_ns)
    }
}

struct Mapping {
    base: u32,
    span: u64,
    device: Box<dyn DeviceModel>,
}

impl Mapping {
    fn decodes(&self, addr: u32) -> bool {
        u64::from(addr) & !(self.span - 1) == u64::from(self.base)
    }
}

#[derive(Default)]
pub struct Bus {
    mappings: Vec<Mapping>,
    sim_time_ns: u64,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Maps `device` onto `[base, base + span)`.
    pub fn attach(
        &mut self,
        base: u32,
        span: u64,
        device: Box<dyn DeviceModel>,
    ) -> Result<(), AttachError> {
        let aligned = span.is_power_of_two()
            && span >= 4
            && span <= 1 << 32
            && u64::from(base) % span == 0;
        if !aligned {
            return Err(AttachError::BadAlignment { base, span });
        }
        let start = u64::from(base);
        let overlaps = self.mappings.iter().any(|m| {
            let m_start = u64::from(m.base);
            start < m_start + m.span && m_start < start + span
        });
        if overlaps {
            return Err(AttachError::OverlappingMapping { base, span });
        }
        self.mappings.push(Mapping { base, span, device });
        Ok(())
    }

    fn decode(&mut self, addr: u32) -> Result<(&mut Mapping, u32), BusFault> {
        if addr % 4 != 0 {
            return Err(BusFault::Unaligned(addr));
        }
        let mapping = self
            .mappings
            .iter_mut()
            .find(|m| m.decodes(addr))
            .ok_or(BusFault::Unmapped(addr))?;
        let offset = addr - mapping.base;
        Ok((mapping, offset))
    }

    pub fn read(&mut self, addr: u32) -> Result<u32, BusFault> {
        let (m, offset) = self.decode(addr)?;
        m.device.read(offset).map_err(|_| BusFault::Device(addr))
    }

    pub fn write(&mut self, addr: u32, data: u32) -> Result<(), BusFault> {
        let (m, offset) = self.decode(addr)?;
        m.device.write(offset, data).map_err(|_| BusFault::Device(addr))
    }

    /// Reads `count` consecutive words. Fails as a whole on the first fault.
    pub fn read_block(&mut self, addr: u32, count: u32) -> Result<Vec<u32>, BusFault> {
        (0..count)
            .map(|i| self.read(addr.wrapping_add(4 * i)))
            .collect()
    }

    /// Writes consecutive words, stopping at the first fault. Words before the
    /// faulting one have already been written.
    pub fn write_block(&mut self, addr: u32, data: &[u32]) -> Result<(), BusFault> {
        data.iter()
            .zip(0u32..)
            .try_for_each(|(&word, i)| self.write(addr.wrapping_add(4 * i), word))
    }

    /// Advances simulated time and notifies devices in attach order.
    pub fn advance(&mut self, delta_ns: u64) {
        self.sim_time_ns = self.sim_time_ns.saturating_add(delta_ns);
        for m in &mut self.mappings {
            m.device.on_time(delta_ns);
        }
    }

    pub fn sim_time_ns(&self) -> u64 {
        self.sim_time_ns
    }

    /// `(base, span)` of every mapping in attach order.
    pub fn windows(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.mappings.iter().map(|m| (m.base, m.span))
    }
}

/// Span of the adder's register window.
pub const ADDER_SPAN: u64 = 0x10;

/// Two operand registers and their wrapping sum.
///
/// | offset | register | access |
/// |--------|----------|--------|
/// | 0x0    | a        | rw     |
/// | 0x4    | b        | rw     |
/// | 0x8    | sum      | ro     |
#[derive(Debug, Default, Clone)]
pub struct AdderDevice {
    a: u32,
    b: u32,
}

impl AdderDevice {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sum(&self) -> u32 {
        self.a.wrapping_add(self.b)
    }
}

pub fn adder_device() -> Box<dyn DeviceModel> {
    Box::new(AdderDevice::new())
}

impl DeviceModel for AdderDevice {
    fn read(&mut self, offset: u32) -> Result<u32, DeviceFault> {
        match offset {
            0x0 => Ok(self.a),
            0x4 => Ok(self.b),
            0x8 => Ok(self.sum()),
            _ => Err(DeviceFault),
        }
    }

    fn write(&mut self, offset: u32, data: u32) -> Result<(), DeviceFault> {
        match offset {
            0x0 => self.a = data,
            0x4 => self.b = data,
            _ => return Err(DeviceFault),
        }
        Ok(())
    }
}

/// Plain word-addressed RAM.
#[derive(Debug, Clone)]
pub struct MemoryDevice {
    words: Vec<u32>,
}

impl MemoryDevice {
    pub fn new(words: usize) -> Self {
        Self {
            words: vec![0; words],
        }
    }

    pub fn span(&self) -> u64 {
        4 * self.words.len() as u64
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }
}

impl DeviceModel for MemoryDevice {
    fn read(&mut self, offset: u32) -> Result<u32, DeviceFault> {
        self.words.get((offset / 4) as usize).copied().ok_or(DeviceFault)
    }

    fn write(&mut self, offset: u32, data: u32) -> Result<(), DeviceFault> {
        let slot = self.words.get_mut((offset / 4) as usize).ok_or(DeviceFault)?;
        *slot = data;
        Ok(())
    }
}

/// Storage backing every register of an allocated [`RegisterMap`].
///
/// Read-only registers hold their reset value of zero and reject writes;
/// write-only registers reject reads. Words inside the map's span that are
/// not registers fault.
#[derive(Debug, Clone)]
pub struct RegisterFileDevice {
    base: u32,
    span: u64,
    cells: BTreeMap<u32, (Access, u32)>,
}

impl RegisterFileDevice {
    pub fn new(map: &RegisterMap) -> Self {
        let cells = map
            .elements()
            .into_iter()
            .map(|e| (e.address - map.root.base, (e.access, 0)))
            .collect();
        Self {
            base: map.root.base,
            span: map.span(),
            cells,
        }
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn span(&self) -> u64 {
        self.span
    }
}

impl DeviceModel for RegisterFileDevice {
    fn read(&mut self, offset: u32) -> Result<u32, DeviceFault> {
        match self.cells.get(&offset) {
            Some((access, value)) if access.readable() => Ok(*value),
            _ => Err(DeviceFault),
        }
    }

    fn write(&mut self, offset: u32, data: u32) -> Result<(), DeviceFault> {
        match self.cells.get_mut(&offset) {
            Some((access, value)) if access.writable() => {
                *value = data;
                Ok(())
            }
            _ => Err(DeviceFault),
        }
    }
}
