//! Reference back-end that returns its input.
//!
//! `regenerate` and `regenerate_masked` echo the sample, `distance` is 0 for
//! equal samples and 1 otherwise, and `generate_initial` derives a sample
//! from the prompt bytes. Used for loopback tests and protocol conformance.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{BridgeRequest, BridgeResponse, Op, PROTOCOL_VERSION};
use crate::sample::{ImageSample, Modality, Sample, TextSample, VectorSample};
use crate::seed::prompt_hash;

/// Answers requests from `reader` until end of stream.
pub fn serve<R: BufRead, W: Write>(reader: R, mut writer: W) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(&line);
        let mut out = serde_json::to_string(&resp).map_err(io::Error::other)?;
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves every accepted connection on its own thread. Never returns unless
/// accepting fails.
pub fn serve_tcp(listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        stream.set_nodelay(true).ok();
        thread::spawn(move || {
            let writer = match stream.try_clone() {
                Ok(w) => w,
                Err(_) => return,
            };
            let _ = serve(BufReader::new(stream), writer);
        });
    }
    Ok(())
}

fn handle_line(line: &str) -> BridgeResponse {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return BridgeResponse::error(None, format!("malformed JSON: {e}")),
    };
    let id = value.get("id").and_then(Value::as_u64);
    match value.get("v").and_then(Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        other => {
            return BridgeResponse::error(id, format!("unsupported protocol version {other:?}"))
        }
    }
    let op = value.get("op").and_then(Value::as_str).unwrap_or("");
    let req: BridgeRequest = match serde_json::from_value(value.clone()) {
        Ok(r) => r,
        Err(e) => {
            let known = ["regenerate", "regenerate_masked", "generate_initial", "distance", "ping"];
            let msg = if known.contains(&op) {
                format!("invalid request: {e}")
            } else {
                format!("unknown op `{op}`")
            };
            return BridgeResponse::error(id, msg);
        }
    };
    match respond(&req) {
        Ok(resp) => resp,
        Err(msg) => BridgeResponse::error(Some(req.id), msg),
    }
}

fn respond(req: &BridgeRequest) -> Result<BridgeResponse, String> {
    let mut resp = BridgeResponse::ok(req.id);
    match req.op {
        Op::Ping => {
            if let Some(ms) = req.delay_ms {
                thread::sleep(Duration::from_millis(ms));
            }
        }
        Op::Regenerate => {
            resp.sample = Some(req.sample.clone().ok_or("missing `sample`")?);
        }
        Op::RegenerateMasked => {
            let sample = req.sample.clone().ok_or("missing `sample`")?;
            let mask = req.mask.as_ref().ok_or("missing `mask`")?;
            let image = sample.as_image().map_err(|e| e.to_string())?;
            mask.check_fits(image).map_err(|e| e.to_string())?;
            resp.sample = Some(sample);
        }
        Op::GenerateInitial => {
            let prompt = req.prompt.as_deref().ok_or("missing `prompt`")?;
            let modality = req.modality.unwrap_or(Modality::Text);
            resp.sample = Some(initial_sample(prompt, modality)?);
        }
        Op::Distance => {
            let a = req.sample.as_ref().ok_or("missing `sample`")?;
            let b = req.reference.as_ref().ok_or("missing `reference`")?;
            resp.distance = Some(if a == b { 0.0 } else { 1.0 });
        }
    }
    Ok(resp)
}

fn initial_sample(prompt: &str, modality: Modality) -> Result<Sample, String> {
    if prompt.trim().is_empty() {
        return Err("empty prompt".into());
    }
    Ok(match modality {
        Modality::Text => TextSample::from_text(prompt).into(),
        Modality::Vector => {
            let values = prompt.bytes().map(f64::from).collect();
            VectorSample::new(values).map_err(|e| e.to_string())?.into()
        }
        Modality::Image => {
            let shade = (prompt_hash(prompt) % 256) as u8;
            ImageSample::filled(8, 8, 1, shade)
                .map_err(|e| e.to_string())?
                .into()
        }
    })
}
