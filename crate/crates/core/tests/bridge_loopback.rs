use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use refprint::bridge::{echo, BridgeClient, BridgeEndpoint};
use refprint::verify::delta_sweep;
use refprint::{DistanceMetric, Generator, Metric, Modality, RegenMode, Sample, SeedSpec, VectorSample};

fn echo_endpoint() -> BridgeEndpoint {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || echo::serve_tcp(listener));
    BridgeEndpoint::tcp(addr).with_timeout(5_000)
}

#[test]
fn thousand_sequential_calls_keep_ids_in_order() {
    let client = BridgeClient::new(echo_endpoint());
    let mut raw = client.raw_session().unwrap();
    for id in 1..=1000u64 {
        let x = Sample::Vector(VectorSample::new(vec![id as f64, -0.5]).unwrap());
        let line = format!(r#"{{"v":1,"id":{id},"op":"regenerate","seed":{id},"sample":{}}}"#, x.to_json());
        let resp = raw.round_trip(&line).unwrap();
        assert_eq!(resp.id, Some(id));
        assert!(resp.ok);
        assert_eq!(resp.sample, Some(x));
    }
}

#[test]
fn client_round_trips_through_echo() {
    let client = BridgeClient::new(echo_endpoint());
    let x = Sample::Vector(VectorSample::new(vec![1.0, 2.0, 3.0]).unwrap());
    for seed in 0..200 {
        assert_eq!(client.regenerate(&x, seed).unwrap(), x);
    }
    client.ping(None).unwrap();
}

#[test]
fn echo_models_never_verify() {
    // An identity back-end moves nothing, so every ratio is 0/0 → 1.
    let client = Arc::new(BridgeClient::new(echo_endpoint()));
    let a = Generator::bridged("echo-a", client.clone(), Modality::Vector, false);
    let c = Generator::bridged("echo-c", client, Modality::Vector, false);
    let corpus: Vec<Sample> = (0..20)
        .map(|i| Sample::Vector(VectorSample::new(vec![i as f64, 1.0]).unwrap()))
        .collect();
    let metric = Metric::builtin(DistanceMetric::Euclidean).unwrap();
    let evals = delta_sweep(&corpus, &corpus, &a, &c, &metric, &[0.05], 1, &RegenMode::Full, &SeedSpec::new(1)).unwrap();
    assert_eq!((evals[0].tp, evals[0].fp), (0, 0));
    assert_eq!(evals[0].recall, 0.0);
}
