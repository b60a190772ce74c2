//! Backend over a byte stream, normally a child process's stdio.
//!
//! Each message is one JSON header line followed by the raw payload: the
//! tensors listed in `shapes`, concatenated as little-endian `f32`. Latents
//! travel as `[C, H, W]`, images as `[H, W, 3]` on the 0–255 scale.
//!
//! ```text
//! {"version":1,"op":"denoise","request_id":3,"shapes":[[4,64,64]],"dtypes":["f32"],
//!  "meta":{"step_from":9,"step_to":0,"total_steps":30,"timesteps":[...],"cond":"c0"}}
//! <65536 bytes>
//! ```
//!
//! Responses echo `op` and `request_id` and carry `"ok": true`, or
//! `"ok": false` with `meta.error`. Every request gets exactly one response.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::BackendError;
use crate::field::{ImageField, LatentField};
use crate::pipeline::backend::{Backend, Capabilities, ConditioningHandle};
use crate::pipeline::schedule::DenoiseSchedule;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest tensor a peer may announce, in elements.
const MAX_ELEMENTS: usize = 1 << 28;

/// Shaped payloads in message order.
pub type Tensors = Vec<(Vec<usize>, Vec<f32>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub op: String,
    pub request_id: u64,
    #[serde(default)]
    pub shapes: Vec<Vec<usize>>,
    #[serde(default)]
    pub dtypes: Vec<String>,
    #[serde(default)]
    pub meta: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub header: Header,
    pub tensors: Vec<Vec<f32>>,
}

impl Message {
    pub fn request(op: &str, request_id: u64, tensors: Tensors, meta: Value) -> Self {
        let (shapes, tensors): (Vec<_>, Vec<_>) = tensors.into_iter().unzip();
        Self {
            header: Header {
                version: PROTOCOL_VERSION,
                op: op.to_string(),
                request_id,
                dtypes: vec!["f32".into(); shapes.len()],
                shapes,
                meta,
                ok: None,
            },
            tensors,
        }
    }
}

fn protocol(msg: impl Into<String>) -> BackendError {
    BackendError::Protocol(msg.into())
}

fn element_count(shape: &[usize]) -> Result<usize, BackendError> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| protocol(format!("tensor shape {shape:?} is too large")))
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), BackendError> {
    if msg.header.shapes.len() != msg.tensors.len() {
        return Err(protocol("shape list does not match tensor count"));
    }
    let line = serde_json::to_string(&msg.header).map_err(|e| protocol(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for (shape, t) in msg.header.shapes.iter().zip(&msg.tensors) {
        if element_count(shape)? != t.len() {
            return Err(protocol(format!(
                "tensor of {} values under shape {shape:?}",
                t.len()
            )));
        }
        let mut bytes = Vec::with_capacity(t.len() * 4);
        for v in t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of reading one message off the stream.
#[derive(Debug)]
pub enum Incoming {
    Message(Message),
    /// The header line was unreadable; no payload was consumed.
    Malformed {
        request_id: u64,
        reason: String,
    },
    Eof,
}

pub fn read_message<R: BufRead>(r: &mut R) -> Result<Incoming, BackendError> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        return Ok(Incoming::Eof);
    }
    let raw: Value = match serde_json::from_str(line.trim_end()) {
        Ok(v) => v,
        Err(e) => {
            return Ok(Incoming::Malformed {
                request_id: 0,
                reason: format!("header is not JSON: {e}"),
            })
        }
    };
    let request_id = raw.get("request_id").and_then(Value::as_u64).unwrap_or(0);
    let header: Header = match serde_json::from_value(raw) {
        Ok(h) => h,
        Err(e) => {
            return Ok(Incoming::Malformed {
                request_id,
                reason: format!("bad header: {e}"),
            })
        }
    };
    let mut sizes = Vec::with_capacity(header.shapes.len());
    for s in &header.shapes {
        match element_count(s) {
            Ok(n) => sizes.push(n),
            Err(e) => {
                return Ok(Incoming::Malformed {
                    request_id,
                    reason: e.to_string(),
                })
            }
        }
    }
    let mut tensors = Vec::with_capacity(sizes.len());
    for n in sizes {
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        tensors.push(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        );
    }
    let msg = Message { header, tensors };
    if msg.header.version != PROTOCOL_VERSION {
        return Ok(Incoming::Malformed {
            request_id,
            reason: format!("unsupported protocol version {}", msg.header.version),
        });
    }
    if msg.header.dtypes.len() != msg.tensors.len() || msg.header.dtypes.iter().any(|d| d != "f32")
    {
        return Ok(Incoming::Malformed {
            request_id,
            reason: "every tensor must be declared as f32".into(),
        });
    }
    Ok(Incoming::Message(msg))
}

fn latent_tensor(x: &LatentField) -> (Vec<usize>, Vec<f32>) {
    (x.shape().to_vec(), x.data().to_vec())
}

fn image_tensor(x: &ImageField) -> (Vec<usize>, Vec<f32>) {
    (x.shape().to_vec(), x.data().to_vec())
}

fn latent_from(shape: &[usize], data: Vec<f32>) -> Result<LatentField, BackendError> {
    match shape {
        [c, h, w] => LatentField::new(*c, *h, *w, data).map_err(|e| protocol(e.to_string())),
        _ => Err(protocol(format!(
            "expected a [C, H, W] latent, got {shape:?}"
        ))),
    }
}

fn image_from(shape: &[usize], data: Vec<f32>) -> Result<ImageField, BackendError> {
    match shape {
        [h, w, 3] => ImageField::new(*h, *w, data).map_err(|e| protocol(e.to_string())),
        _ => Err(protocol(format!(
            "expected an [H, W, 3] image, got {shape:?}"
        ))),
    }
}

/// Client side of the protocol.
pub struct BridgeBackend<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
    child: Option<Child>,
}

impl<R: BufRead, W: Write> BridgeBackend<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader,
            writer,
            next_id: 1,
            child: None,
        }
    }

    /// Send one request and wait for its response.
    pub fn call(
        &mut self,
        op: &str,
        tensors: Tensors,
        meta: Value,
    ) -> Result<Message, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        write_message(&mut self.writer, &Message::request(op, id, tensors, meta))?;
        let reply = match read_message(&mut self.reader)? {
            Incoming::Message(m) => m,
            Incoming::Malformed { reason, .. } => return Err(protocol(reason)),
            Incoming::Eof => return Err(protocol("bridge closed the stream")),
        };
        if reply.header.request_id != id {
            return Err(protocol(format!(
                "response id {} does not match request {id}",
                reply.header.request_id
            )));
        }
        if reply.header.ok != Some(true) {
            let why = reply
                .header
                .meta
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("unspecified");
            return Err(BackendError::Remote(why.to_string()));
        }
        Ok(reply)
    }

    fn single(mut reply: Message) -> Result<(Vec<usize>, Vec<f32>), BackendError> {
        match (reply.header.shapes.pop(), reply.tensors.pop()) {
            (Some(s), Some(t)) if reply.tensors.is_empty() => Ok((s, t)),
            _ => Err(protocol("expected exactly one tensor in the response")),
        }
    }
}

impl BridgeBackend<BufReader<ChildStdout>, ChildStdin> {
    /// Launch `cmd` (split on whitespace) and talk to it over its stdio.
    pub fn spawn(cmd: &str) -> Result<Self, BackendError> {
        let mut parts = cmd.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| protocol("empty bridge command"))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| protocol("no stdin"))?;
        let stdout = child.stdout.take().ok_or_else(|| protocol("no stdout"))?;
        let mut bridge = Self::new(BufReader::new(stdout), stdin);
        bridge.child = Some(child);
        Ok(bridge)
    }
}

impl<R, W> Drop for BridgeBackend<R, W> {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl<R: BufRead, W: Write> Backend for BridgeBackend<R, W> {
    fn capabilities(&mut self) -> Result<Capabilities, BackendError> {
        let reply = self.call("capabilities", vec![], json!({}))?;
        serde_json::from_value(reply.header.meta).map_err(|e| protocol(e.to_string()))
    }

    fn encode(&mut self, image: &ImageField) -> Result<LatentField, BackendError> {
        let reply = self.call("encode", vec![image_tensor(image)], json!({}))?;
        let (s, t) = Self::single(reply)?;
        latent_from(&s, t)
    }

    fn decode(&mut self, latent: &LatentField) -> Result<ImageField, BackendError> {
        let reply = self.call("decode", vec![latent_tensor(latent)], json!({}))?;
        let (s, t) = Self::single(reply)?;
        image_from(&s, t)
    }

    fn add_noise(
        &mut self,
        clean: &LatentField,
        noise: &LatentField,
        level: usize,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        let meta = json!({
            "level": level,
            "total_steps": schedule.total_steps(),
            "timestep": schedule.timestep(level),
        });
        let reply = self.call(
            "add_noise",
            vec![latent_tensor(clean), latent_tensor(noise)],
            meta,
        )?;
        let (s, t) = Self::single(reply)?;
        latent_from(&s, t)
    }

    fn denoise(
        &mut self,
        latent: &LatentField,
        from_level: usize,
        to_level: usize,
        cond: &ConditioningHandle,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        if from_level == to_level {
            return Ok(latent.clone());
        }
        let timesteps: Vec<_> = (to_level + 1..=from_level)
            .rev()
            .filter_map(|l| schedule.timestep(l))
            .collect();
        let meta = json!({
            "step_from": from_level,
            "step_to": to_level,
            "total_steps": schedule.total_steps(),
            "timesteps": timesteps,
            "cond": cond.0,
        });
        let reply = self.call("denoise", vec![latent_tensor(latent)], meta)?;
        let (s, t) = Self::single(reply)?;
        latent_from(&s, t)
    }

    fn prepare_conditioning(
        &mut self,
        prompt: &str,
        segmap: Option<&ImageField>,
    ) -> Result<ConditioningHandle, BackendError> {
        let tensors = segmap.map(image_tensor).into_iter().collect();
        let reply = self.call("prepare_conditioning", tensors, json!({ "prompt": prompt }))?;
        reply
            .header
            .meta
            .get("handle")
            .and_then(Value::as_str)
            .map(|h| ConditioningHandle(h.to_string()))
            .ok_or_else(|| protocol("response carries no handle"))
    }
}

fn meta_usize(meta: &Value, key: &str) -> Result<usize, BackendError> {
    meta.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| protocol(format!("meta.{key} missing or not an integer")))
}

fn schedule_from(meta: &Value) -> Result<DenoiseSchedule, BackendError> {
    DenoiseSchedule::new(meta_usize(meta, "total_steps")?, 0.0).map_err(|e| protocol(e.to_string()))
}

fn dispatch<B: Backend>(backend: &mut B, msg: Message) -> Result<(Tensors, Value), BackendError> {
    let Message { header, tensors } = msg;
    let mut args = header.shapes.into_iter().zip(tensors);
    let mut next = |what: &str| {
        args.next()
            .ok_or_else(|| protocol(format!("missing {what} tensor")))
    };
    let meta = header.meta;
    match header.op.as_str() {
        "capabilities" => {
            let caps = backend.capabilities()?;
            Ok((
                vec![],
                serde_json::to_value(caps).map_err(|e| protocol(e.to_string()))?,
            ))
        }
        "encode" => {
            let (s, t) = next("image")?;
            Ok((
                vec![latent_tensor(&backend.encode(&image_from(&s, t)?)?)],
                json!({}),
            ))
        }
        "decode" => {
            let (s, t) = next("latent")?;
            Ok((
                vec![image_tensor(&backend.decode(&latent_from(&s, t)?)?)],
                json!({}),
            ))
        }
        "add_noise" => {
            let (s, t) = next("latent")?;
            let clean = latent_from(&s, t)?;
            let (s, t) = next("noise")?;
            let noise = latent_from(&s, t)?;
            let level = meta_usize(&meta, "level")?;
            let out = backend.add_noise(&clean, &noise, level, &schedule_from(&meta)?)?;
            Ok((vec![latent_tensor(&out)], json!({})))
        }
        "denoise" => {
            let (s, t) = next("latent")?;
            let x = latent_from(&s, t)?;
            let cond = meta
                .get("cond")
                .and_then(Value::as_str)
                .ok_or_else(|| protocol("meta.cond missing"))?;
            let out = backend.denoise(
                &x,
                meta_usize(&meta, "step_from")?,
                meta_usize(&meta, "step_to")?,
                &ConditioningHandle(cond.to_string()),
                &schedule_from(&meta)?,
            )?;
            Ok((vec![latent_tensor(&out)], json!({})))
        }
        "prepare_conditioning" => {
            let prompt = meta
                .get("prompt")
                .and_then(Value::as_str)
                .ok_or_else(|| protocol("meta.prompt missing"))?;
            let seg = args.next().map(|(s, t)| image_from(&s, t)).transpose()?;
            let handle = backend.prepare_conditioning(prompt, seg.as_ref())?;
            Ok((vec![], json!({ "handle": handle.0 })))
        }
        other => Err(protocol(format!("unknown op {other:?}"))),
    }
}

fn error_reply(op: &str, request_id: u64, reason: &str) -> Message {
    let mut m = Message::request(op, request_id, vec![], json!({ "error": reason }));
    m.header.ok = Some(false);
    m
}

/// Serve `backend` until the input stream ends. Bad requests get an error
/// response; only transport failures stop the loop.
pub fn serve<B: Backend, R: BufRead, W: Write>(
    backend: &mut B,
    mut reader: R,
    mut writer: W,
) -> Result<(), BackendError> {
    loop {
        let reply = match read_message(&mut reader)? {
            Incoming::Eof => return Ok(()),
            Incoming::Malformed { request_id, reason } => error_reply("error", request_id, &reason),
            Incoming::Message(msg) => {
                let (op, id) = (msg.header.op.clone(), msg.header.request_id);
                match dispatch(backend, msg) {
                    Ok((tensors, meta)) => {
                        let mut m = Message::request(&op, id, tensors, meta);
                        m.header.ok = Some(true);
                        m
                    }
                    Err(e) => error_reply(&op, id, &e.to_string()),
                }
            }
        };
        write_message(&mut writer, &reply)?;
    }
}
