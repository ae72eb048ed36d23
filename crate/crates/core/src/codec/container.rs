use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::codec::pack::PackedFactorization;
use crate::error::{Error, Result};
use crate::factorizer::LayerSlice;
use crate::planner::MaskMode;

pub const MAGIC: &[u8; 8] = b"COSPADI1";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u32 = 1 << 20;

/// `.cospadi` layout: magic, u32 LE header length, UTF-8 `key=value` lines,
/// then dict / mask / values payloads as little-endian u16 words.
pub fn serialize(p: &PackedFactorization) -> Result<Vec<u8>> {
    let header = header_text(p)?;
    let payload_bytes = 2 * (p.dict_payload.len() + p.mask.len() + p.value_payload.len());
    let mut out = Vec::with_capacity(12 + header.len() + payload_bytes);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for w in p.dict_payload.iter().chain(&p.mask).chain(&p.value_payload) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

fn header_text(p: &PackedFactorization) -> Result<String> {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        s.push('=');
        s.push_str(&v);
        s.push('\n');
    };
    line("version", FORMAT_VERSION.to_string());
    line("d1", p.d1.to_string());
    line("d2", p.d2.to_string());
    line("k", p.k.to_string());
    line("s", p.s.to_string());
    line("mask_mode", p.mask_mode.as_str().to_string());
    line("truncated_bits", p.truncated_bits.to_string());
    line("dict_words", p.dict_payload.len().to_string());
    line("mask_words", p.mask.len().to_string());
    line("value_words", p.value_payload.len().to_string());
    line("layers", p.layers.len().to_string());
    for (i, layer) in p.layers.iter().enumerate() {
        if layer.name.contains(['\n', '\r']) {
            return Err(Error::InvalidConfig(format!(
                "layer name {:?} contains a line break",
                layer.name
            )));
        }
        line(&format!("layer.{i}.name"), layer.name.clone());
        line(&format!("layer.{i}.cols"), layer.cols.to_string());
    }
    let mut meta: Vec<&(String, String)> = p.meta.iter().collect();
    meta.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(pair) = meta.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidConfig(format!("metadata key {:?} repeats", pair[0].0)));
    }
    for (key, value) in meta {
        if key.is_empty() || key.contains(['=', '\n', '\r']) || value.contains(['\n', '\r']) {
            return Err(Error::InvalidConfig(format!("metadata entry {key:?} cannot be stored")));
        }
        line(&format!("meta.{key}"), value.clone());
    }
    Ok(s)
}

pub fn deserialize(bytes: &[u8]) -> Result<PackedFactorization> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::NotACospadiFile);
    }
    if bytes.len() < 12 {
        return Err(Error::CorruptPayload {
            offset: bytes.len(),
            reason: "missing header length".into(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if header_len > MAX_HEADER_BYTES || 12 + header_len as usize > bytes.len() {
        return Err(Error::CorruptPayload {
            offset: 8,
            reason: format!("header length {header_len} exceeds file"),
        });
    }
    let header_end = 12 + header_len as usize;
    let text = std::str::from_utf8(&bytes[12..header_end]).map_err(|e| Error::CorruptPayload {
        offset: 12 + e.valid_up_to(),
        reason: "header is not UTF-8".into(),
    })?;
    let fields = parse_header(text)?;
    let header = Header { fields: &fields };

    let version = header.raw("version")?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::UnsupportedVersion(version.to_string()));
    }
    let d1 = header.num("d1")?;
    let d2 = header.num("d2")?;
    let k = header.num("k")?;
    let s = header.num("s")?;
    let mask_mode: MaskMode = header.raw("mask_mode")?.parse().map_err(|_| header.bad("mask_mode"))?;
    let truncated_bits = header.num("truncated_bits")? as u32;
    if truncated_bits > 7 {
        return Err(header.bad("truncated_bits"));
    }
    let dict_words = header.num("dict_words")?;
    let mask_words = header.num("mask_words")?;
    let value_words = header.num("value_words")?;
    let layer_count = header.num("layers")?;
    let mut layers = Vec::with_capacity(layer_count.min(1 << 16));
    for i in 0..layer_count {
        layers.push(LayerSlice {
            name: header.raw(&format!("layer.{i}.name"))?.to_string(),
            cols: header.num(&format!("layer.{i}.cols"))?,
        });
    }

    let meta = fields
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix("meta.")?.to_string(), v.to_string())))
        .collect();

    let payload = &bytes[header_end..];
    let expected = dict_words
        .checked_add(mask_words)
        .and_then(|t| t.checked_add(value_words))
        .and_then(|t| t.checked_mul(2))
        .ok_or_else(|| header.bad("word counts"))?;
    if payload.len() != expected {
        return Err(Error::CorruptPayload {
            offset: header_end + payload.len().min(expected),
            reason: format!("payload holds {} bytes, header declares {expected}", payload.len()),
        });
    }
    let mut words = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]));
    let dict_payload = words.by_ref().take(dict_words).collect();
    let mask = words.by_ref().take(mask_words).collect();
    let value_payload = words.collect();
    Ok(PackedFactorization {
        d1,
        d2,
        k,
        s,
        mask_mode,
        truncated_bits,
        layers,
        meta,
        dict_payload,
        mask,
        value_payload,
    })
}

fn parse_header(text: &str) -> Result<BTreeMap<&str, &str>> {
    let mut fields = BTreeMap::new();
    let mut offset = 12;
    for line in text.split_terminator('\n') {
        let (key, value) = line.split_once('=').ok_or_else(|| Error::CorruptPayload {
            offset,
            reason: format!("header line {line:?} has no '='"),
        })?;
        if fields.insert(key, value).is_some() {
            return Err(Error::CorruptPayload {
                offset,
                reason: format!("duplicate header key {key:?}"),
            });
        }
        offset += line.len() + 1;
    }
    Ok(fields)
}

struct Header<'a> {
    fields: &'a BTreeMap<&'a str, &'a str>,
}

impl Header<'_> {
    fn raw(&self, key: &str) -> Result<&str> {
        self.fields.get(key).copied().ok_or_else(|| Error::CorruptPayload {
            offset: 12,
            reason: format!("header key {key:?} missing"),
        })
    }

    fn num(&self, key: &str) -> Result<usize> {
        self.raw(key)?.parse().map_err(|_| self.bad(key))
    }

    fn bad(&self, key: &str) -> Error {
        Error::CorruptPayload {
            offset: 12,
            reason: format!("header field {key:?} is malformed"),
        }
    }
}

pub fn write_container<W: Write>(mut w: W, p: &PackedFactorization) -> Result<()> {
    w.write_all(&serialize(p)?)?;
    Ok(())
}

pub fn read_container<R: Read>(mut r: R) -> Result<PackedFactorization> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    deserialize(&bytes)
}

/// Byte offset where payloads begin.
pub fn payload_offset(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::NotACospadiFile);
    }
    Ok(12 + u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize)
}
