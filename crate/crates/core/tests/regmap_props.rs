//! Allocation safety over randomized register trees, checked by brute-force
//! enumeration of every allocated word.

use std::collections::HashMap;

use cosim_core::regmap::{allocate, Access, BlockDesc, BlockMap, RegDesc, RegisterMap};
use proptest::prelude::*;

fn arb_access() -> impl Strategy<Value = Access> {
    prop_oneof![Just(Access::Rw), Just(Access::Ro), Just(Access::Wo)]
}

fn leaf_regs() -> impl Strategy<Value = Vec<RegDesc>> {
    prop::collection::vec((arb_access(), 1u32..6), 0..6).prop_map(|regs| {
        regs.into_iter()
            .enumerate()
            .map(|(i, (access, count))| RegDesc {
                name: format!("r{i}"),
                access,
                count,
            })
            .collect()
    })
}

fn arb_block() -> impl Strategy<Value = BlockDesc> {
    let leaf = leaf_regs().prop_map(|mut registers| {
        if registers.is_empty() {
            registers.push(RegDesc {
                name: "only".into(),
                access: Access::Rw,
                count: 1,
            });
        }
        BlockDesc {
            name: "leaf".into(),
            registers,
            subblocks: vec![],
        }
    });
    // Depth at most 4: the root plus three levels of nesting.
    leaf.prop_recursive(3, 64, 4, |inner| {
        (leaf_regs(), prop::collection::vec(inner, 1..4)).prop_map(|(registers, subs)| {
            BlockDesc {
                name: "node".into(),
                registers,
                subblocks: subs
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| (format!("i{i}"), b))
                    .collect(),
            }
        })
    })
}

fn register_count(b: &BlockDesc) -> u64 {
    b.registers.iter().map(|r| u64::from(r.count)).sum::<u64>()
        + b.subblocks.iter().map(|(_, s)| register_count(s)).sum::<u64>()
}

fn check_block(block: &BlockMap, words: &mut HashMap<u64, String>) -> Result<(), String> {
    let base = u64::from(block.base);
    if !block.span.is_power_of_two() {
        return Err(format!("{} span {:#x} not a power of two", block.name, block.span));
    }
    if base % block.span != 0 {
        return Err(format!("{} base {base:#x} not aligned to span", block.name));
    }
    for reg in &block.registers {
        for i in 0..u64::from(reg.count) {
            let addr = u64::from(reg.address) + 4 * i;
            if addr % 4 != 0 || addr < base || addr >= base + block.span {
                return Err(format!("{}.{} word {addr:#x} outside block", block.name, reg.name));
            }
            if let Some(prev) = words.insert(addr, format!("{}.{}[{i}]", block.name, reg.name)) {
                return Err(format!("{addr:#x} allocated twice ({prev})"));
            }
        }
    }
    for child in &block.children {
        let c_base = u64::from(child.base);
        if c_base < base || c_base + child.span > base + block.span {
            return Err(format!("{} not contained in {}", child.name, block.name));
        }
        check_block(child, words)?;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn allocation_is_safe(root in arb_block().prop_filter("≤ 200 registers", |b| register_count(b) <= 200)) {
        let map = allocate(&root).unwrap();
        let mut words = HashMap::new();
        check_block(&map.root, &mut words).map_err(TestCaseError::fail)?;
        prop_assert_eq!(words.len() as u64, register_count(&root));
        prop_assert_eq!(map.root.base, 0);

        let again = allocate(&root).unwrap();
        prop_assert_eq!(&map, &again);
        prop_assert_eq!(map.emit(), again.emit());
    }

    #[test]
    fn lookup_agrees_with_listing(root in arb_block()) {
        let map: RegisterMap = allocate(&root).unwrap();
        let listing = map.emit();
        let mut last = None;
        for line in listing.lines() {
            let mut parts = line.split(' ');
            let addr = u32::from_str_radix(parts.next().unwrap(), 16).unwrap();
            let access = parts.next().unwrap();
            let path = parts.next().unwrap();
            let info = map.lookup(path).unwrap();
            prop_assert_eq!(info.address, addr, "{}", path);
            prop_assert_eq!(info.access.as_str(), access);
            prop_assert!(last.is_none_or(|prev| prev < addr));
            last = Some(addr);
        }
    }
}
