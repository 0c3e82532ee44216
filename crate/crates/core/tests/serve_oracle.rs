//! Serve loop versus a flat-array reference model.

use cosim_core::bus::{Bus, MemoryDevice};
use cosim_core::link::{LineLink, LinkError};
use cosim_core::protocol::{encode_command, Command};
use cosim_core::serve::{serve, Server};
use proptest::prelude::*;
use std::collections::VecDeque;

const WORDS: usize = 64;

#[derive(Debug, Clone)]
enum Step {
    Cmd(Command),
    Garbage(String),
}

/// Addresses cover the mapped window and the same amount of unmapped space.
fn addr() -> impl Strategy<Value = u32> {
    (0u32..2 * WORDS as u32).prop_map(|w| w * 4)
}

fn arb_step() -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (addr(), any::<u32>()).prop_map(|(addr, data)| Step::Cmd(Command::Write { addr, data })),
        4 => addr().prop_map(|addr| Step::Cmd(Command::Read { addr })),
        2 => (addr(), prop::collection::vec(any::<u32>(), 1..12))
            .prop_map(|(addr, data)| Step::Cmd(Command::BlockWrite { addr, data })),
        2 => (addr(), 1u32..12).prop_map(|(addr, count)| Step::Cmd(Command::BlockRead { addr, count })),
        1 => (0u64..1_000_000).prop_map(|delta_ns| Step::Cmd(Command::AdvanceTime { delta_ns })),
        1 => "[a-z ]{0,12}|W 00000002 00000000|BR 00000000 00000000".prop_map(Step::Garbage),
    ]
}

/// Reference semantics written directly against a word array.
struct Oracle {
    mem: [u32; WORDS],
    time: u64,
}

impl Oracle {
    fn slot(addr: u32) -> Option<usize> {
        let w = (addr / 4) as usize;
        (w < WORDS).then_some(w)
    }

    fn step(&mut self, step: &Step) -> String {
        let Step::Cmd(cmd) = step else {
            return "ERR 00000002\n".into();
        };
        match cmd {
            Command::Write { addr, data } => match Self::slot(*addr) {
                Some(w) => {
                    self.mem[w] = *data;
                    "OK\n".into()
                }
                None => "ERR 00000001\n".into(),
            },
            Command::Read { addr } => match Self::slot(*addr) {
                Some(w) => format!("D {:08X}\n", self.mem[w]),
                None => "ERR 00000001\n".into(),
            },
            Command::BlockWrite { addr, data } => {
                for (i, d) in data.iter().enumerate() {
                    match Self::slot(addr + 4 * i as u32) {
                        Some(w) => self.mem[w] = *d,
                        None => return "ERR 00000001\n".into(),
                    }
                }
                "OK\n".into()
            }
            Command::BlockRead { addr, count } => {
                let mut line = String::from("D");
                for i in 0..*count {
                    match Self::slot(addr + 4 * i) {
                        Some(w) => line += &format!(" {:08X}", self.mem[w]),
                        None => return "ERR 00000001\n".into(),
                    }
                }
                line + "\n"
            }
            Command::AdvanceTime { delta_ns } => {
                self.time += delta_ns;
                "OK\n".into()
            }
            Command::Quit => "BYE\n".into(),
        }
    }
}

struct Scripted {
    input: VecDeque<String>,
    output: Vec<String>,
}

impl LineLink for Scripted {
    fn send_line(&mut self, line: &str) -> Result<(), LinkError> {
        self.output.push(line.to_owned());
        Ok(())
    }
    fn recv_line(&mut self) -> Result<String, LinkError> {
        self.input.pop_front().ok_or(LinkError::PeerClosed)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serve_matches_flat_array(script in prop::collection::vec(arb_step(), 0..50)) {
        let mut oracle = Oracle { mem: [0; WORDS], time: 0 };
        let mut expected: Vec<String> = script.iter().map(|s| oracle.step(s)).collect();
        expected.push("BYE\n".into());

        let mut input: VecDeque<String> = script
            .iter()
            .map(|s| match s {
                Step::Cmd(c) => encode_command(c),
                Step::Garbage(g) => format!("{g}\n"),
            })
            .collect();
        input.push_back("Q\n".into());
        let mut link = Scripted { input, output: vec![] };

        let mut bus = Bus::new();
        bus.attach(0, 4 * WORDS as u64, Box::new(MemoryDevice::new(WORDS))).unwrap();
        let mut server = Server::new(bus);
        let report = serve(&mut link, &mut server, |_| {}).unwrap();

        prop_assert_eq!(link.output, expected);
        prop_assert_eq!(report.sim_time_ns, oracle.time);
        prop_assert_eq!(report.commands, script.len() as u64 + 1);
    }

    #[test]
    fn block_read_equals_single_reads(
        writes in prop::collection::vec((0u32..WORDS as u32, any::<u32>()), 0..40),
        start in 0u32..WORDS as u32,
        count in 1u32..16,
    ) {
        let mut bus = Bus::new();
        bus.attach(0, 4 * WORDS as u64, Box::new(MemoryDevice::new(WORDS))).unwrap();
        for (w, d) in writes {
            bus.write(w * 4, d).unwrap();
        }
        let block = bus.read_block(start * 4, count);
        let singles: Result<Vec<u32>, _> = (0..count).map(|i| bus.read(start * 4 + 4 * i)).collect();
        prop_assert_eq!(block.is_ok(), singles.is_ok());
        if let (Ok(b), Ok(s)) = (block, singles) {
            prop_assert_eq!(b, s);
        }
    }
}
