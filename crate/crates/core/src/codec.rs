//! Binary state frames.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "SDE\x01"
//! kind       u8       builtin tag, or 0xFF followed by u16 length + UTF-8 plugin name
//! params     u32 length + canonical JSON (keys sorted)
//! seeds      u16 count + count * u64
//! items_seen u64
//! payload    u32 length + kind-specific bytes
//! ```
//!
//! Payload encodings are documented next to each synopsis. Maps are written in
//! key order so equal states always produce equal frames.

use crate::error::{Result, SdeError};
use crate::model::{Params, SynopsisKind};
use crate::synopses::{Payload, PluginRegistry, SketchState};

pub const MAGIC: &[u8; 4] = b"SDE\x01";
const PLUGIN_TAG: u8 = 0xFF;

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn len(&mut self, n: usize) {
        self.u32(n as u32);
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                SdeError::Codec(format!("truncated frame: need {n} bytes at {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Length prefix, sanity-checked against the bytes that remain.
    pub fn len(&mut self, min_elem: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem.max(1)) > self.remaining() && min_elem > 0 {
            return Err(SdeError::Codec(format!("length {n} exceeds frame")));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn str(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| SdeError::Codec("invalid UTF-8".into()))
    }

    pub fn take_rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(SdeError::Codec(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}

pub fn check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(SdeError::Codec(what.to_string()))
    }
}

fn kind_tag(kind: &SynopsisKind) -> u8 {
    match kind {
        SynopsisKind::CountMin => 1,
        SynopsisKind::BloomFilter => 2,
        SynopsisKind::FmSketch => 3,
        SynopsisKind::HyperLogLog => 4,
        SynopsisKind::AmsSketch => 5,
        SynopsisKind::Dft => 6,
        SynopsisKind::Rhp => 7,
        SynopsisKind::LossyCounting => 8,
        SynopsisKind::StickySampling => 9,
        SynopsisKind::ChainSampler => 10,
        SynopsisKind::GkQuantiles => 11,
        SynopsisKind::CoreSetTree => 12,
        SynopsisKind::Plugin(_) => PLUGIN_TAG,
    }
}

fn kind_from_tag(tag: u8) -> Result<SynopsisKind> {
    SynopsisKind::BUILTIN
        .iter()
        .find(|k| kind_tag(k) == tag)
        .cloned()
        .ok_or_else(|| SdeError::Codec(format!("unknown kind tag {tag}")))
}

pub fn encode_state(state: &SketchState) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u8(kind_tag(&state.kind));
    if let SynopsisKind::Plugin(name) = &state.kind {
        w.u16(name.len() as u16);
        w.buf.extend_from_slice(name.as_bytes());
    }
    w.str(&state.params.canonical_json());
    w.u16(state.seeds.len() as u16);
    for s in &state.seeds {
        w.u64(*s);
    }
    w.u64(state.items_seen);
    let mut p = Writer::new();
    state.payload.encode(&mut p);
    w.bytes(&p.buf);
    w.finish()
}

pub fn decode_state(bytes: &[u8], plugins: &PluginRegistry) -> Result<SketchState> {
    let mut r = Reader::new(bytes);
    check(r.take(4)? == MAGIC, "bad magic")?;
    let tag = r.u8()?;
    let kind = if tag == PLUGIN_TAG {
        let n = r.u16()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| SdeError::Codec("invalid plugin name".into()))?;
        SynopsisKind::Plugin(name)
    } else {
        kind_from_tag(tag)?
    };
    let params_json = r.str()?;
    let params: Params = serde_json::from_str(&params_json)
        .map_err(|e| SdeError::Codec(format!("params: {e}")))?;
    let n_seeds = r.u16()? as usize;
    let seeds = (0..n_seeds).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let items_seen = r.u64()?;
    let payload_bytes = r.bytes()?;
    r.expect_end()?;
    let template = SketchState::with_plugins(kind.clone(), params.clone(), plugins)
        .map_err(|e| SdeError::Codec(format!("params do not describe a valid state: {e}")))?;
    check(template.seeds == seeds, "seeds do not match params")?;
    let mut pr = Reader::new(payload_bytes);
    let payload = Payload::decode(&template.payload, &mut pr, &params, plugins)?;
    pr.expect_end()?;
    Ok(SketchState {
        kind,
        params,
        seeds,
        items_seen,
        payload,
    })
}
