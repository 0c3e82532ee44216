//! Randomized round-trip and grammar properties of the wire protocol.

use cosim_core::protocol::{
    encode_command, encode_response, parse_command, parse_response, Command, ErrorCode, Response,
    MAX_BLOCK_WORDS,
};
use proptest::prelude::*;

fn aligned_addr(count: u32) -> impl Strategy<Value = u32> {
    let top = u32::MAX - 4 * (count - 1);
    (0..=top).prop_map(|a| a & !3)
}

fn arb_command() -> impl Strategy<Value = Command> {
    prop_oneof![
        (aligned_addr(1), any::<u32>()).prop_map(|(addr, data)| Command::Write { addr, data }),
        aligned_addr(1).prop_map(|addr| Command::Read { addr }),
        prop::collection::vec(any::<u32>(), 1..40).prop_flat_map(|data| {
            aligned_addr(data.len() as u32).prop_map(move |addr| Command::BlockWrite {
                addr,
                data: data.clone(),
            })
        }),
        (1..=MAX_BLOCK_WORDS)
            .prop_flat_map(|count| (aligned_addr(count), Just(count)))
            .prop_map(|(addr, count)| Command::BlockRead { addr, count }),
        any::<u64>().prop_map(|delta_ns| Command::AdvanceTime { delta_ns }),
        Just(Command::Quit),
    ]
}

fn arb_response() -> impl Strategy<Value = Response> {
    prop_oneof![
        Just(Response::Ok),
        Just(Response::Bye),
        prop::collection::vec(any::<u32>(), 1..40).prop_map(Response::Data),
        prop_oneof![
            Just(ErrorCode::BusError),
            Just(ErrorCode::MalformedCommand),
            Just(ErrorCode::UnsupportedCommand)
        ]
        .prop_map(Response::Err),
    ]
}

fn well_formed(line: &str) -> bool {
    let Some(body) = line.strip_suffix('\n') else {
        return false;
    };
    let mut fields = body.split(' ');
    let opcode = fields.next().unwrap_or("");
    !opcode.is_empty()
        && opcode.bytes().all(|b| b.is_ascii_uppercase())
        && fields.all(|f| {
            (f.len() == 8 || f.len() == 16)
                && f.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn command_round_trip(cmd in arb_command()) {
        let line = encode_command(&cmd);
        prop_assert!(well_formed(&line), "{line:?}");
        prop_assert_eq!(parse_command(&line), Ok(cmd));
    }

    #[test]
    fn response_round_trip(resp in arb_response()) {
        let line = encode_response(&resp);
        prop_assert!(well_formed(&line), "{line:?}");
        prop_assert_eq!(parse_response(&line), Ok(resp));
    }

    #[test]
    fn accepted_commands_are_valid(
        line in "(W|R|BW|BR|T|Q|X)( {1,2}[0-9A-Fa-f]{0,17}){0,5}\n?"
    ) {
        if let Ok(cmd) = parse_command(&line) {
            prop_assert!(cmd.validate().is_ok());
            prop_assert_eq!(parse_command(&encode_command(&cmd)), Ok(cmd));
        }
    }

    #[test]
    fn parsing_arbitrary_text_never_panics(line in ".{0,64}") {
        let _ = parse_command(&line);
        let _ = parse_response(&line);
    }
}
