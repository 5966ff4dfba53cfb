//! Protocol conformance checks run by `refprint bridge-check`.

use serde::Serialize;

use super::client::{BridgeClient, BridgeEndpoint};
use super::{BridgeRequest, Op};
use crate::error::Error;
use crate::sample::{ImageSample, Modality, PixelMask, Sample, TextSample, VectorSample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ConformanceOptions {
    /// Modalities the back-end claims to serve.
    pub modalities: Vec<Modality>,
    /// Whether `regenerate_masked` is expected to work.
    pub masked: bool,
    /// Metric name sent with `distance`.
    pub metric: String,
    /// Client timeout used for the timeout-path check.
    pub short_timeout_ms: u64,
    pub sequential_calls: usize,
}

impl Default for ConformanceOptions {
    fn default() -> Self {
        ConformanceOptions {
            modalities: vec![Modality::Text, Modality::Image, Modality::Vector],
            masked: true,
            metric: "default".into(),
            short_timeout_ms: 300,
            sequential_calls: 100,
        }
    }
}

fn probe_sample(modality: Modality) -> Sample {
    match modality {
        Modality::Text => TextSample::from_text("the quick brown fox").into(),
        Modality::Vector => VectorSample::new(vec![0.5, -1.0, 2.0]).unwrap().into(),
        Modality::Image => {
            let pixels = (0..16u8).map(|v| v * 15).collect();
            ImageSample::new(4, 4, 1, pixels).unwrap().into()
        }
    }
}

struct Recorder(Vec<CheckResult>);

impl Recorder {
    fn check(&mut self, name: impl Into<String>, outcome: Result<(), String>) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.0.push(CheckResult {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Runs every check against `endpoint`, each over its own connection where
/// a failure could poison later checks.
pub fn run_conformance(endpoint: &BridgeEndpoint, opts: &ConformanceOptions) -> Vec<CheckResult> {
    let mut rec = Recorder(Vec::new());
    let client = BridgeClient::new(endpoint.clone());

    rec.check("ping", client.ping(None).map_err(|e| e.to_string()));

    for &m in &opts.modalities {
        rec.check(
            format!("generate_initial/{m}"),
            client
                .generate_initial("a short prompt", m, 7)
                .map_err(|e| e.to_string())
                .and_then(|s| {
                    if s.modality() == m {
                        Ok(())
                    } else {
                        Err(format!("returned a {} sample", s.modality()))
                    }
                }),
        );
        let x = probe_sample(m);
        rec.check(
            format!("regenerate/{m}"),
            client
                .regenerate(&x, 11)
                .map_err(|e| e.to_string())
                .and_then(|y| {
                    if y.same_shape(&x) {
                        Ok(())
                    } else {
                        Err("output modality or shape differs from input".into())
                    }
                }),
        );
        rec.check(
            format!("distance/{m}"),
            client
                .distance(&opts.metric, &x, &x)
                .map_err(|e| e.to_string())
                .and_then(|d| {
                    if d.is_finite() && d >= 0.0 {
                        Ok(())
                    } else {
                        Err(format!("distance {d} is not a finite non-negative number"))
                    }
                }),
        );
    }

    if opts.masked && opts.modalities.contains(&Modality::Image) {
        let x = probe_sample(Modality::Image);
        let img = x.as_image().unwrap().clone();
        rec.check(
            "regenerate_masked/empty-mask",
            client
                .regenerate_masked(&x, &PixelMask::empty(4, 4), 3)
                .map_err(|e| e.to_string())
                .and_then(|y| if y == x { Ok(()) } else { Err("empty mask changed the image".into()) }),
        );
        let mask = PixelMask::new(4, 4, vec![(0, 0), (2, 3)]).unwrap();
        rec.check(
            "regenerate_masked/unmasked-preserved",
            client
                .regenerate_masked(&x, &mask, 3)
                .map_err(|e| e.to_string())
                .and_then(|y| {
                    let y = y.as_image().map_err(|e| e.to_string())?;
                    for r in 0..4 {
                        for c in 0..4 {
                            if !mask.contains(r, c) && y.get(r, c, 0) != img.get(r, c, 0) {
                                return Err(format!("unmasked pixel ({r}, {c}) changed"));
                            }
                        }
                    }
                    Ok(())
                }),
        );
    }

    rec.check("framing/malformed-line", raw_error_check(&client, "{not json", None));
    rec.check(
        "framing/unknown-op",
        raw_error_check(&client, r#"{"v":1,"id":77,"op":"teleport"}"#, Some(77)),
    );
    rec.check(
        "framing/bad-version",
        raw_error_check(&client, r#"{"v":99,"id":78,"op":"ping"}"#, Some(78)),
    );

    rec.check("sequential-ids", sequential_ids(&client, opts.sequential_calls));
    rec.check("timeout", timeout_path(endpoint, opts.short_timeout_ms));

    rec.0
}

/// Sends one bad line followed by a ping on the same connection; expects an
/// error response with `expected_id`, then a healthy ping.
fn raw_error_check(client: &BridgeClient, line: &str, expected_id: Option<u64>) -> Result<(), String> {
    let mut session = client.raw_session().map_err(|e| e.to_string())?;
    let resp = session.round_trip(line).map_err(|e| e.to_string())?;
    if resp.ok {
        return Err("back-end accepted an invalid request".into());
    }
    if resp.id != expected_id {
        return Err(format!("error response id {:?}, expected {expected_id:?}", resp.id));
    }
    if resp.error.as_deref().unwrap_or("").is_empty() {
        return Err("error response without a message".into());
    }
    let ping = r#"{"v":1,"id":500,"op":"ping"}"#;
    let after = session.round_trip(ping).map_err(|e| e.to_string())?;
    if !after.ok || after.id != Some(500) {
        return Err("connection unusable after an error response".into());
    }
    Ok(())
}

fn sequential_ids(client: &BridgeClient, n: usize) -> Result<(), String> {
    let mut session = client.raw_session().map_err(|e| e.to_string())?;
    for id in 1..=n as u64 {
        let mut req = BridgeRequest::new(Op::Ping);
        req.id = id;
        let line = serde_json::to_string(&req).map_err(|e| e.to_string())?;
        let resp = session.round_trip(&line).map_err(|e| e.to_string())?;
        if resp.id != Some(id) || !resp.ok {
            return Err(format!("call {id} answered with id {:?}", resp.id));
        }
    }
    Ok(())
}

/// A slow reply must surface as a timeout, and the next call must succeed on
/// a fresh connection.
fn timeout_path(endpoint: &BridgeEndpoint, short_timeout_ms: u64) -> Result<(), String> {
    let client = BridgeClient::new(endpoint.clone().with_timeout(short_timeout_ms));
    client.ping(None).map_err(|e| format!("warm-up ping failed: {e}"))?;
    match client.ping(Some(short_timeout_ms * 4)) {
        Err(Error::Timeout(_)) => {}
        Ok(()) => return Err("delayed ping returned before the timeout".into()),
        Err(e) => return Err(format!("expected a timeout, got: {e}")),
    }
    client
        .ping(None)
        .map_err(|e| format!("no recovery after timeout: {e}"))
}
