//! Register descriptions and address allocation.
//!
//! Description files are line oriented:
//!
//! ```text
//! # comment
//! block adder
//!   reg a rw
//!   reg b rw
//!   reg sum ro
//! end
//! block top
//!   instance adder adder
//!   reg buf rw 4
//! end
//! ```
//!
//! A block may instantiate any block defined before it. The last block in the
//! file is the root.
//!
//! Allocation places a block's own registers first, in declaration order, one
//! 32-bit word per array element. Sub-blocks follow in declaration order, each
//! aligned to its own span. A block's span is the smallest power of two that
//! covers the bytes it uses, so every block can be decoded with a mask.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    Rw,
    Ro,
    Wo,
}

impl Access {
    pub fn readable(self) -> bool {
        matches!(self, Access::Rw | Access::Ro)
    }

    pub fn writable(self) -> bool {
        matches!(self, Access::Rw | Access::Wo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Access::Rw => "rw",
            Access::Ro => "ro",
            Access::Wo => "wo",
        }
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Access {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "rw" => Ok(Access::Rw),
            "ro" => Ok(Access::Ro),
            "wo" => Ok(Access::Wo),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegDesc {
    pub name: String,
    pub access: Access,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockDesc {
    pub name: String,
    pub registers: Vec<RegDesc>,
    /// `(instance name, block)` pairs.
    pub subblocks: Vec<(String, BlockDesc)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegmapError {
    #[error("line {line}: {message}")]
    SyntaxError { line: usize, message: String },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("block `{0}` declares no registers or instances")]
    EmptyBlock(String),
    #[error("address space exhausted: span of `{0}` exceeds 2^32 bytes")]
    AddressOverflow(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("index {index} out of range for `{path}` (count {count})")]
    IndexOutOfRange { path: String, index: u64, count: u32 },
}

/// Returns true for identifiers of the form `[a-z][a-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut bytes = name.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
}

struct OpenBlock {
    desc: BlockDesc,
    names: Vec<String>,
}

/// Parses a register description and returns its root block.
pub fn parse_description(text: &str) -> Result<BlockDesc, RegmapError> {
    let mut defined: BTreeMap<String, BlockDesc> = BTreeMap::new();
    let mut last: Option<String> = None;
    let mut open: Option<OpenBlock> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let syntax = |message: &str| RegmapError::SyntaxError {
            line: line_no,
            message: message.to_owned(),
        };
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some((&keyword, args)) = fields.split_first() else {
            continue;
        };

        match keyword {
            "block" => {
                if open.is_some() {
                    return Err(syntax("`block` inside an unterminated block"));
                }
                let [name] = args else {
                    return Err(syntax("expected `block <name>`"));
                };
                check_ident(name, line_no)?;
                if defined.contains_key(*name) {
                    return Err(RegmapError::DuplicateName((*name).to_owned()));
                }
                open = Some(OpenBlock {
                    desc: BlockDesc {
                        name: (*name).to_owned(),
                        registers: Vec::new(),
                        subblocks: Vec::new(),
                    },
                    names: Vec::new(),
                });
            }
            "reg" => {
                let block = open.as_mut().ok_or_else(|| syntax("`reg` outside a block"))?;
                let (name, access, count) = match args {
                    [name, access] => (*name, *access, 1),
                    [name, access, count] => {
                        let count = count
                            .parse::<u32>()
                            .map_err(|_| syntax("register count is not a number"))?;
                        (*name, *access, count)
                    }
                    _ => return Err(syntax("expected `reg <name> <rw|ro|wo> [count]`")),
                };
                check_ident(name, line_no)?;
                let access = access
                    .parse::<Access>()
                    .map_err(|()| syntax("access must be rw, ro or wo"))?;
                if count == 0 {
                    return Err(syntax("register count must be at least 1"));
                }
                block.claim(name)?;
                block.desc.registers.push(RegDesc {
                    name: name.to_owned(),
                    access,
                    count,
                });
            }
            "instance" => {
                let block = open
                    .as_mut()
                    .ok_or_else(|| syntax("`instance` outside a block"))?;
                let [name, kind] = args else {
                    return Err(syntax("expected `instance <name> <block>`"));
                };
                check_ident(name, line_no)?;
                let sub = defined
                    .get(*kind)
                    .ok_or_else(|| syntax(&format!("unknown block `{kind}`")))?;
                block.claim(name)?;
                block.desc.subblocks.push(((*name).to_owned(), sub.clone()));
            }
            "end" => {
                if !args.is_empty() {
                    return Err(syntax("unexpected tokens after `end`"));
                }
                let block = open.take().ok_or_else(|| syntax("`end` without `block`"))?;
                let desc = block.desc;
                if desc.registers.is_empty() && desc.subblocks.is_empty() {
                    return Err(RegmapError::EmptyBlock(desc.name));
                }
                last = Some(desc.name.clone());
                defined.insert(desc.name.clone(), desc);
            }
            other => return Err(syntax(&format!("unknown keyword `{other}`"))),
        }
    }

    if let Some(block) = open {
        return Err(RegmapError::SyntaxError {
            line: text.lines().count(),
            message: format!("block `{}` is missing `end`", block.desc.name),
        });
    }
    let root = last.ok_or(RegmapError::SyntaxError {
        line: 0,
        message: "no blocks defined".to_owned(),
    })?;
    Ok(defined.remove(&root).expect("root was defined"))
}

fn check_ident(name: &str, line: usize) -> Result<(), RegmapError> {
    if is_identifier(name) {
        Ok(())
    } else {
        Err(RegmapError::SyntaxError {
            line,
            message: format!("invalid identifier `{name}`"),
        })
    }
}

impl OpenBlock {
    fn claim(&mut self, name: &str) -> Result<(), RegmapError> {
        if self.names.iter().any(|n| n == name) {
            return Err(RegmapError::DuplicateName(format!("{}.{name}", self.desc.name)));
        }
        self.names.push(name.to_owned());
        Ok(())
    }
}

impl BlockDesc {
    /// Checks identifier, uniqueness and non-emptiness rules recursively.
    /// Descriptions built by [`parse_description`] always pass.
    pub fn validate(&self) -> Result<(), RegmapError> {
        if !is_identifier(&self.name) {
            return Err(RegmapError::SyntaxError {
                line: 0,
                message: format!("invalid identifier `{}`", self.name),
            });
        }
        if self.registers.is_empty() && self.subblocks.is_empty() {
            return Err(RegmapError::EmptyBlock(self.name.clone()));
        }
        let mut names: Vec<&str> = Vec::new();
        let locals = self.registers.iter().map(|r| r.name.as_str());
        let instances = self.subblocks.iter().map(|(n, _)| n.as_str());
        for name in locals.chain(instances) {
            if !is_identifier(name) {
                return Err(RegmapError::SyntaxError {
                    line: 0,
                    message: format!("invalid identifier `{name}`"),
                });
            }
            if names.contains(&name) {
                return Err(RegmapError::DuplicateName(format!("{}.{name}", self.name)));
            }
            names.push(name);
        }
        if let Some(reg) = self.registers.iter().find(|r| r.count == 0) {
            return Err(RegmapError::SyntaxError {
                line: 0,
                message: format!("register `{}` has count 0", reg.name),
            });
        }
        self.subblocks.iter().try_for_each(|(_, b)| b.validate())
    }
}

/// An allocated register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterEntry {
    pub name: String,
    pub access: Access,
    pub count: u32,
    /// Byte address of element 0.
    pub address: u32,
}

/// An allocated block instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMap {
    /// Instance name; the root uses its block name.
    pub name: String,
    pub base: u32,
    /// Power of two, at most 2^32.
    pub span: u64,
    pub registers: Vec<RegisterEntry>,
    pub children: Vec<BlockMap>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterMap {
    pub root: BlockMap,
}

/// Resolved register attributes returned by [`RegisterMap::lookup`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterInfo {
    pub address: u32,
    pub access: Access,
    pub count: u32,
}

/// One word of the flattened map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapElement {
    pub address: u32,
    pub access: Access,
    pub path: String,
}

const ADDRESS_SPACE: u64 = 1 << 32;

fn block_span(desc: &BlockDesc) -> Result<u64, RegmapError> {
    let overflow = || RegmapError::AddressOverflow(desc.name.clone());
    let mut used: u64 = desc.registers.iter().map(|r| 4 * u64::from(r.count)).sum();
    for (_, sub) in &desc.subblocks {
        let span = block_span(sub)?;
        used = used.next_multiple_of(span) + span;
        if used > ADDRESS_SPACE {
            return Err(overflow());
        }
    }
    let span = used.max(4).next_power_of_two();
    if span > ADDRESS_SPACE {
        return Err(overflow());
    }
    Ok(span)
}

fn place(name: &str, desc: &BlockDesc, base: u64) -> Result<BlockMap, RegmapError> {
    let span = block_span(desc)?;
    let mut offset = 0u64;
    let registers = desc
        .registers
        .iter()
        .map(|r| {
            let entry = RegisterEntry {
                name: r.name.clone(),
                access: r.access,
                count: r.count,
                address: (base + offset) as u32,
            };
            offset += 4 * u64::from(r.count);
            entry
        })
        .collect();
    let mut children = Vec::with_capacity(desc.subblocks.len());
    for (inst, sub) in &desc.subblocks {
        let sub_span = block_span(sub)?;
        offset = offset.next_multiple_of(sub_span);
        children.push(place(inst, sub, base + offset)?);
        offset += sub_span;
    }
    Ok(BlockMap {
        name: name.to_owned(),
        base: base as u32,
        span,
        registers,
        children,
    })
}

/// Assigns absolute addresses to every register, with the root at 0.
pub fn allocate(root: &BlockDesc) -> Result<RegisterMap, RegmapError> {
    root.validate()?;
    Ok(RegisterMap {
        root: place(&root.name, root, 0)?,
    })
}

impl RegisterMap {
    pub fn parse(text: &str) -> Result<Self, RegmapError> {
        allocate(&parse_description(text)?)
    }

    pub fn span(&self) -> u64 {
        self.root.span
    }

    /// Resolves `a.b.reg` or `a.b.reg[i]`. The first segment names the root.
    pub fn lookup(&self, path: &str) -> Result<RegisterInfo, RegmapError> {
        let unknown = || RegmapError::UnknownRegister(path.to_owned());
        let (path_body, index) = split_index(path).ok_or_else(unknown)?;
        let mut segments = path_body.split('.');
        if segments.next() != Some(self.root.name.as_str()) {
            return Err(unknown());
        }
        let segments: Vec<&str> = segments.collect();
        let (reg_name, blocks) = segments.split_last().ok_or_else(unknown)?;
        let mut block = &self.root;
        for seg in blocks {
            block = block
                .children
                .iter()
                .find(|c| c.name == *seg)
                .ok_or_else(unknown)?;
        }
        let reg = block
            .registers
            .iter()
            .find(|r| r.name == *reg_name)
            .ok_or_else(unknown)?;
        let index = index.unwrap_or(0);
        if index >= u64::from(reg.count) {
            return Err(RegmapError::IndexOutOfRange {
                path: path.to_owned(),
                index,
                count: reg.count,
            });
        }
        Ok(RegisterInfo {
            address: reg.address + 4 * index as u32,
            access: reg.access,
            count: reg.count,
        })
    }

    /// Every register word with its full path, sorted by address.
    pub fn elements(&self) -> Vec<MapElement> {
        let mut out = Vec::new();
        collect(&self.root, "", &mut out);
        out.sort_by_key(|e| e.address);
        out
    }

    /// Flat listing, one `<address> <access> <path>` line per register word.
    pub fn emit(&self) -> String {
        let mut text = String::new();
        for e in self.elements() {
            let _ = writeln!(text, "{:08X} {} {}", e.address, e.access, e.path);
        }
        text
    }

    pub fn blocks(&self) -> Vec<&BlockMap> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![&self.root];
        while let Some(b) = stack.pop() {
            out.push(b);
            stack.extend(b.children.iter().rev());
        }
        out
    }
}

pub fn emit_map(map: &RegisterMap) -> String {
    map.emit()
}

fn collect(block: &BlockMap, prefix: &str, out: &mut Vec<MapElement>) {
    let path = if prefix.is_empty() {
        block.name.clone()
    } else {
        format!("{prefix}.{}", block.name)
    };
    for reg in &block.registers {
        for i in 0..reg.count {
            let elem_path = if reg.count == 1 {
                format!("{path}.{}", reg.name)
            } else {
                format!("{path}.{}[{i}]", reg.name)
            };
            out.push(MapElement {
                address: reg.address + 4 * i,
                access: reg.access,
                path: elem_path,
            });
        }
    }
    for child in &block.children {
        collect(child, &path, out);
    }
}

/// Splits a trailing `[n]` index off a path. `None` means the suffix is
/// malformed.
fn split_index(path: &str) -> Option<(&str, Option<u64>)> {
    match path.strip_suffix(']') {
        None => Some((path, None)),
        Some(rest) => {
            let (body, idx) = rest.rsplit_once('[')?;
            if idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            Some((body, Some(idx.parse().ok()?)))
        }
    }
}
