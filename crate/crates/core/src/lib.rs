//! Transaction-level core of a bus-based hardware/software co-simulation
//! framework.
//!
//! A test program talks to simulated firmware only through bus transfers.
//! This crate holds the pieces that do not need an operating system:
//!
//! * [`protocol`]: the line-oriented command/response wire format,
//! * [`link`]: the byte-transport abstraction both endpoints speak through,
//! * [`client`]: the software-side session API with transaction statistics,
//! * [`regmap`]: register description parsing and address allocation,
//! * [`bus`]: an address-decoded software bus with pluggable device models,
//! * [`serve`]: the firmware-side loop that executes commands against a bus.
//!
//! Named pipes, process orchestration and the command line tools live in the
//! `cosim` crate.

#![no_std]

extern crate alloc;

pub mod bus;
pub mod client;
pub mod link;
pub mod protocol;
pub mod regmap;
pub mod serve;

pub use bus::{AdderDevice, Bus, BusFault, DeviceModel, MemoryDevice, RegisterFileDevice};
pub use client::{AccessModel, ClientError, Session, Stats};
pub use link::{LineLink, LinkError};
pub use protocol::{Command, ErrorCode, ProtocolError, Response};
pub use regmap::{Access, BlockDesc, RegDesc, RegisterMap, RegmapError};
pub use serve::{serve, InProcessLink, ServeReport, Server};
