use pathsense::protocol::{
    parse_client_message, ClientMessage, EventKind, ProtocolError, ServerMessage, StartParams, StartRequest,
};
use pathsense::{ControllerKind, DisplayMode};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX)]
}

fn client() -> impl Strategy<Value = ClientMessage> {
    prop_oneof![
        (-1i64..=1, finite(), finite()).prop_map(|(forward, dyaw, dpitch)| ClientMessage::Input { forward, dyaw, dpitch }),
        (prop::array::uniform3(finite()), prop::array::uniform4(finite()))
            .prop_map(|(pos, quat)| ClientMessage::Pose { pos, quat }),
        Just(ClientMessage::Abort),
        (
            prop_oneof![Just("path1"), Just("path2")],
            prop_oneof![Just(DisplayMode::Tdu), Just(DisplayMode::Vdu)],
            prop_oneof![
                Just(ControllerKind::Manual),
                Just(ControllerKind::External),
                Just(ControllerKind::Ideal),
                Just(ControllerKind::Noisy)
            ],
            proptest::option::of(0.1f64..5.0),
            proptest::option::of(any::<u64>()),
        )
            .prop_map(|(id, display, controller, speed, seed)| ClientMessage::Start(StartRequest {
                path_id: Some(id.into()),
                path: None,
                display,
                controller,
                params: StartParams { speed, seed, ..StartParams::default() },
            })),
    ]
}

fn server() -> impl Strategy<Value = ServerMessage> {
    prop_oneof![
        (
            prop_oneof![Just(EventKind::Started), Just(EventKind::TargetReached), Just(EventKind::Aborted)],
            any::<u64>()
        )
            .prop_map(|(kind, t_ms)| ServerMessage::Event { kind, t_ms }),
        (any::<u64>(), prop::collection::vec(0.0f64..=1.0, 144), any::<bool>()).prop_map(|(t_ms, grid, tdu)| {
            let volts = tdu.then(|| grid.iter().map(|i| if *i < 0.05 { 0.0 } else { 1.0 + 9.0 * i }).collect());
            ServerMessage::Frame { t_ms, grid, volts }
        }),
        ".{0,40}".prop_map(ServerMessage::error),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn client_lines_round_trip(msg in client()) {
        let line = msg.to_line();
        prop_assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        prop_assert_eq!(parse_client_message(line.trim_end()).unwrap(), msg);
    }

    #[test]
    fn server_lines_round_trip(msg in server()) {
        let line = msg.to_line();
        prop_assert!(line.ends_with('\n') && !line[..line.len() - 1].contains('\n'));
        let back: ServerMessage = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back, msg);
    }
}

#[test]
fn wire_shapes() {
    assert_eq!(
        parse_client_message(r#"{"type":"input","forward":1,"dyaw":2.5,"dpitch":0}"#).unwrap(),
        ClientMessage::Input { forward: 1, dyaw: 2.5, dpitch: 0.0 }
    );
    assert_eq!(parse_client_message(r#"{"type":"abort"}"#).unwrap(), ClientMessage::Abort);
    assert_eq!(
        ServerMessage::Event { kind: EventKind::TargetReached, t_ms: 7250 }.to_line(),
        "{\"type\":\"event\",\"kind\":\"target_reached\",\"t_ms\":7250}\n"
    );
    assert_eq!(
        parse_client_message(r#"{"type":"teleport"}"#).unwrap_err(),
        ProtocolError::UnknownType("teleport".into())
    );
    assert!(matches!(parse_client_message("not json"), Err(ProtocolError::Malformed(_))));
    assert!(matches!(parse_client_message(r#"{"forward":1}"#), Err(ProtocolError::Malformed(_))));
    assert!(matches!(
        parse_client_message(r#"{"type":"start","path_id":"path1","display":"vdu","controller":"ideal","params":{"bogus":1}}"#),
        Err(ProtocolError::Malformed(_))
    ));
}
