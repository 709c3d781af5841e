mod common;

use std::fs;
use std::path::PathBuf;

use pathsense::protocol::{run_script, ClientMessage, ClockMode, Connection, ConnectionOptions, ServerMessage};
use pathsense::record::Outcome;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the frozen transcript. `PATHSENSE_BLESS=1` rewrites it.
fn check(name: &str, actual: &str) {
    let file = golden(name);
    if std::env::var_os("PATHSENSE_BLESS").is_some() {
        fs::write(&file, actual).unwrap();
    }
    let expected = fs::read_to_string(&file).unwrap();
    assert!(expected == actual, "{name} differs from the golden transcript");
}

fn transcript(inbound: &[ClientMessage], clock: ClockMode) -> String {
    let mut conn = Connection::new(ConnectionOptions::default());
    run_script(&mut conn, inbound, clock).iter().map(ServerMessage::to_line).collect()
}

fn scenario(name: &str) -> Vec<ClientMessage> {
    common::parse_lines(&fs::read_to_string(golden(name)).unwrap())
}

#[test]
fn fast_ideal_transcript_is_frozen() {
    let inbound = scenario("fast_ideal.in.ndjson");
    let out = transcript(&inbound, ClockMode::Fast);
    check("fast_ideal.out.ndjson", &out);

    // independent expectation: a 1.5 cm straight drop at 2 cm/s stops once
    // within 0.5 cm of the target, i.e. after 1.0 cm = 0.5 s = 100 ticks
    let msgs: Vec<ServerMessage> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let terminal: Vec<_> = msgs.iter().filter(|m| m.is_terminal_event()).collect();
    assert_eq!(terminal.len(), 1);
    assert!(matches!(terminal[0], ServerMessage::Event { t_ms: 500, .. }));
    let frames: Vec<u64> = msgs
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Frame { t_ms, .. } => Some(*t_ms),
            _ => None,
        })
        .collect();
    assert_eq!(frames, (0..=500).step_by(20).collect::<Vec<_>>());
    match msgs.last().unwrap() {
        ServerMessage::Metrics(m) => {
            assert_eq!(m.outcome, Outcome::Completed);
            assert_eq!(m.n_samples, 101);
            assert_eq!(m.transit_time_s, Some(0.5));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn lockstep_pose_transcript_is_frozen() {
    let inbound = scenario("lockstep_pose.in.ndjson");
    check("lockstep_pose.out.ndjson", &transcript(&inbound, ClockMode::Lockstep));
}

#[test]
fn errors_transcript_is_frozen() {
    let text = fs::read_to_string(golden("errors.in.ndjson")).unwrap();
    let mut conn = Connection::new(ConnectionOptions::default());
    let out: String = text.lines().flat_map(|l| conn.handle_line(l)).map(|m| m.to_line()).collect();
    check("errors.out.ndjson", &out);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn socket_matches_in_process_transcript() {
    for (input, output, clock) in [
        ("fast_ideal.in.ndjson", "fast_ideal.out.ndjson", ClockMode::Fast),
        ("lockstep_pose.in.ndjson", "lockstep_pose.out.ndjson", ClockMode::Lockstep),
    ] {
        let addr = common::spawn_server(clock, None).await;
        let lines = common::exchange(addr, &scenario(input), None).await;
        let expected = fs::read_to_string(golden(output)).unwrap();
        assert_eq!(lines.concat(), expected, "{input} over a socket");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn realtime_session_is_paced_and_ends_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let addr = common::spawn_server(ClockMode::Realtime, Some(dir.path())).await;
    let inbound = scenario("fast_ideal.in.ndjson");
    let started = std::time::Instant::now();
    let lines = common::exchange(addr, &inbound, None).await;
    // 100 ticks of 5 ms cannot finish in less than half a second of wall time
    assert!(started.elapsed() >= std::time::Duration::from_millis(490));
    let msgs: Vec<ServerMessage> = lines.iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    let end = msgs.iter().position(ServerMessage::is_terminal_event).unwrap();
    assert!(matches!(msgs[end], ServerMessage::Event { t_ms: 500, .. }));
    assert!(msgs[end + 1..].iter().all(|m| !matches!(m, ServerMessage::Frame { .. })));
    // the record lands in the data directory
    for _ in 0..50 {
        if fs::read_dir(dir.path()).unwrap().count() == 1 {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let name = files[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("drop-vdu-ideal-") && name.ends_with(".jsonl"), "{name}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn disconnect_mid_session_saves_aborted_record() {
    let dir = tempfile::tempdir().unwrap();
    let addr = common::spawn_server(ClockMode::Realtime, Some(dir.path())).await;
    let start = common::parse_lines(r#"{"type":"start","path_id":"path1","display":"tdu","controller":"manual"}"#);
    let lines = common::exchange(addr, &start, Some(3)).await;
    assert!(lines[0].contains("\"started\""));
    let mut saved = Vec::new();
    for _ in 0..100 {
        saved = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        if !saved.is_empty() {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    assert_eq!(saved.len(), 1);
    let rec = pathsense_cli::commands::read_record(&saved[0]).unwrap();
    assert_eq!(rec.header.outcome, Some(Outcome::Aborted));
    assert!(rec.has_exact_cadence());
}
