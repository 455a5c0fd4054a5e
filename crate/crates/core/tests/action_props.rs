mod support {
    pub mod arb;
}

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use support::arb::{arb_action, arb_command, check_defined, PIECES};
use webnav_core::action::{parse_action, Action, DiagnosticKind};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn canonical_string_round_trips(action in arb_action()) {
        let rendered = action.to_command_string();
        prop_assert!(!rendered.contains('\n'));
        prop_assert_eq!(parse_action(&rendered), Ok(action.clone()));
        let json = serde_json::to_string(&action).unwrap();
        prop_assert_eq!(serde_json::from_str::<Action>(&json).unwrap(), action);
    }
}

proptest! {
    #[test]
    fn prose_around_the_command_is_ignored(action in arb_action(), before in "[A-Za-z .,:]{0,40}") {
        let reply = format!("{before}\n{}\n", action.to_command_string());
        prop_assert_eq!(parse_action(&reply), Ok(action));
    }

    #[test]
    fn two_commands_are_rejected(a in arb_command(), b in arb_command()) {
        let reply = format!("{a}\n{b}");
        let err = parse_action(&reply).unwrap_err();
        prop_assert_eq!(err.kind, DiagnosticKind::MultipleCommands);
    }
}

#[test]
fn arbitrary_bytes_never_panic() {
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..100_000 {
        let len = rng.random_range(0..64);
        let bytes: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        check_defined(&String::from_utf8_lossy(&bytes));
    }
}

#[test]
fn token_soup_never_panics() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..50_000 {
        let n = rng.random_range(0..16);
        let soup: String = (0..n).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect();
        check_defined(&soup);
    }
}
