mod common;

use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use msd_core::data::{generate, Enumeration, FactorKind, Generator, Shapes2D16};
use msd_core::judges::{spawn_server, Judge, OracleJudge, RemoteJudge, ServerInfo, TrainedJudge};
use msd_core::Error;

#[test]
fn remote_oracle_matches_in_process() {
    let r = common::judging::remote_parity(500);
    assert_eq!(r.agreed, r.total);
    assert!(r.p99_ms < 50.0, "p99 {} ms", r.p99_ms);
}

#[test]
fn silent_server_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    // Accept and hold the connection without answering.
    let hold = std::thread::spawn(move || {
        let conn = listener.accept();
        std::thread::sleep(Duration::from_millis(1500));
        drop(conn);
    });
    let gen = Shapes2D16::new();
    let judge = RemoteJudge::with_limits(
        &format!("http://{addr}"),
        gen.factors().to_vec(),
        gen.seq_len(),
        gen.frame_shape(),
        200,
        0,
    );
    let x = vec![0.0; gen.seq_len() * 3 * 16 * 16];
    let t = Instant::now();
    let err = judge.judge(&x, 0).unwrap_err();
    assert!(matches!(err, Error::Timeout(200)), "{err:?}");
    assert!(t.elapsed() < Duration::from_millis(1200));
    hold.join().unwrap();
}

#[test]
fn server_rejects_malformed_requests() {
    let gen = Shapes2D16::new();
    let enumeration = Arc::new(Enumeration::new(&gen));
    let info = ServerInfo {
        name: "shapes2d16".into(),
        factors: gen.factors().to_vec(),
        seq_len: gen.seq_len(),
        frame_shape: gen.frame_shape(),
    };
    let server = spawn_server(Arc::new(OracleJudge::new(enumeration)), info, "127.0.0.1:0", 2).unwrap();
    // A client that believes sequences are one step shorter sends a bad shape.
    let wrong = RemoteJudge::new(&server.url(), gen.factors().to_vec(), gen.seq_len() - 1, gen.frame_shape());
    let x = vec![0.0; (gen.seq_len() - 1) * 3 * 16 * 16];
    match wrong.judge(&x, 0) {
        Err(Error::Protocol(msg)) => assert!(msg.contains("400"), "{msg}"),
        other => panic!("expected a 400, got {other:?}"),
    }
    // Frame requests for a dynamic factor are refused too.
    let client = RemoteJudge::new(&server.url(), gen.factors().to_vec(), gen.seq_len(), gen.frame_shape());
    assert!(client.judge_frame(&vec![0.0; 3 * 16 * 16], 3).is_err());
}

#[test]
fn trained_judge_is_accurate_on_held_out_samples() {
    let ds = generate(&Shapes2D16::new(), 4, [0.7, 0.15, 0.15]).unwrap();
    let judge = TrainedJudge::fit(&ds, 4).unwrap();
    let test = ds.split("test").unwrap();
    for f in 0..ds.factors().len() {
        let hits = test
            .iter()
            .filter(|&&i| judge.judge(ds.sequence(i), f).unwrap() == ds.labels(i)[f])
            .count();
        let acc = hits as f64 / test.len() as f64;
        // Motion direction on a torus is hard to read from raw pixels with
        // axis-aligned trees, so dynamic factors get a lower bar.
        let bar = if ds.factors()[f].kind == FactorKind::Static { 0.95 } else { 0.75 };
        assert!(acc >= bar, "factor {} accuracy {acc}", ds.factors()[f].name);
    }
}

#[test]
fn oracle_survives_noise_below_half_the_minimum_distance() {
    let r = common::judging::oracle_robustness(2);
    assert!(r.min_distance > 0.0);
    assert_eq!(r.changed, 0, "{} of {} perturbed renders changed label", r.changed, r.trials);
}
