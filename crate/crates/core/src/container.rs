//! Bit-exact binary container shared by model packages, delta packages and
//! exchanged datasets.
//!
//! ```text
//! "LCMP"                      magic, 4 bytes
//! format_version              u16 LE
//! header_len                  u32 LE
//! header                      UTF-8, one `key=value` per line
//! per matrix:
//!   name_len u16 LE, name UTF-8, rows u32 LE, cols u32 LE, is_complex u8,
//!   data: f64 LE row-major, complex as interleaved (re, im)
//! checksum                    SHA-256 of every byte after the magic
//! ```
//!
//! The header always starts with `kind=`; model kinds use their snake-case
//! name, delta packages use `DELTA` and datasets `DSET`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::kpi::InputDescriptor;
use crate::linalg::CMat;
use crate::models::{ModelDescriptor, ModelKind, ModelPackage, Param, ParamValue};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCMP";
pub const FORMAT_VERSION: u16 = 1;
pub const KIND_DELTA: &str = "DELTA";
pub const KIND_DATASET: &str = "DSET";

/// Decoded but uninterpreted container.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub params: Vec<Param>,
}

impl Container {
    pub fn new(kind: &str) -> Self {
        Container { header: vec![("kind".into(), kind.into())], params: Vec::new() }
    }

    pub fn kind(&self) -> &str {
        self.get("kind").unwrap_or("")
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Format(format!("header lacks {key:?}")))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::Format(format!("header {key:?}: cannot parse {raw:?}")))
    }

    pub fn param(&self, name: &str) -> Result<&ParamValue> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Format(format!("container lacks matrix {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut header = String::new();
        for (k, v) in &self.header {
            header.push_str(k);
            header.push('=');
            header.push_str(v);
            header.push('\n');
        }
        let mut body = Vec::new();
        body.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        body.extend_from_slice(&(header.len() as u32).to_le_bytes());
        body.extend_from_slice(header.as_bytes());
        write_params(&mut body, &self.params);
        let digest = Sha256::digest(&body);

        let mut out = Vec::with_capacity(4 + body.len() + 32);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&body);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 2 + 4 + 32 {
            return Err(Error::Integrity("container truncated".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Integrity("bad magic".into()));
        }
        let (body, trailer) = bytes[4..].split_at(bytes.len() - 4 - 32);
        let digest: [u8; 32] = Sha256::digest(body).into();
        if digest.as_slice() != trailer {
            return Err(Error::Integrity("container checksum mismatch".into()));
        }

        let mut r = Reader { buf: body, pos: 0 };
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header_text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let mut header = Vec::new();
        for line in header_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header line {line:?}")))?;
            if header.iter().any(|(key, _): &(String, String)| key == k) {
                return Err(Error::Format(format!("duplicate header key {k:?}")));
            }
            header.push((k.to_string(), v.to_string()));
        }
        let mut params = Vec::new();
        while r.pos < r.buf.len() {
            params.push(r.param()?);
        }
        Ok(Container { header, params })
    }
}

pub(crate) fn write_params(out: &mut Vec<u8>, params: &[Param]) {
    for p in params {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let (rows, cols) = p.value.shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        match &p.value {
            ParamValue::Real(m) => {
                out.push(0);
                for i in 0..rows {
                    for j in 0..cols {
                        out.extend_from_slice(&m[(i, j)].to_le_bytes());
                    }
                }
            }
            ParamValue::Complex(m) => {
                out.push(1);
                for i in 0..rows {
                    for j in 0..cols {
                        out.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                        out.extend_from_slice(&m[(i, j)].im.to_le_bytes());
                    }
                }
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn param(&mut self) -> Result<Param> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::Format("matrix name is not UTF-8".into()))?
            .to_string();
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let is_complex = self.take(1)?[0];
        let count = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix too large".into()))?;
        let width = if is_complex == 1 { 16 } else { 8 };
        if count.checked_mul(width).map_or(true, |b| b > self.buf.len() - self.pos) {
            return Err(Error::Format(format!("matrix {name:?} overruns container")));
        }
        let value = match is_complex {
            0 => {
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    data.push(self.f64()?);
                }
                ParamValue::Real(DMatrix::from_row_slice(rows, cols, &data))
            }
            1 => {
                let mut data = Vec::with_capacity(count);
                for _ in 0..count {
                    let re = self.f64()?;
                    let im = self.f64()?;
                    data.push(Complex64::new(re, im));
                }
                ParamValue::Complex(CMat::from_row_slice(rows, cols, &data))
            }
            other => return Err(Error::Format(format!("bad is_complex flag {other}"))),
        };
        Ok(Param { name, value })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex32(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::Format("checksum must be 64 hex digits".into()));
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| Error::Format("bad checksum hex".into()))?;
    }
    Ok(out)
}

pub(crate) fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.starts_with('.') || s.contains(|c: char| c.is_whitespace() || matches!(c, ',' | '=' | '/' | '\\')) {
        return Err(Error::invalid(format!("{what} {s:?} must be non-empty, not start with '.', and avoid whitespace, ',', '=', '/' and '\\'")));
    }
    Ok(())
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn split_f64(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse().map_err(|_| Error::Format(format!("bad float {x:?}"))))
        .collect()
}

fn write_descriptor(c: &mut Container, kind: &str, d: &ModelDescriptor) {
    debug_assert_eq!(c.kind(), kind);
    c.push("model_id", &d.model_id);
    c.push("model_version", d.model_version);
    c.push("functionality_tag", &d.functionality_tag);
    if let Some(a) = &d.associated_id {
        c.push("associated_id", a);
    }
    if !d.source_ids.is_empty() {
        c.push("source_ids", d.source_ids.join(","));
    }
    if let Some(inp) = &d.input_descriptor {
        c.push("input.mean_beam_power", join_f64(&inp.mean_beam_power));
        c.push("input.doppler_estimate", format!("{:?}", inp.doppler_estimate));
        c.push("input.mean_snr_db", format!("{:?}", inp.mean_snr_db));
        c.push("input.window_len", inp.window_len);
    }
    c.push("payload_checksum", hex(&d.payload_checksum));
    c.push("flops_per_inference", d.flops_per_inference);
    c.push("storage_bytes", d.storage_bytes);
}

fn read_descriptor(c: &Container) -> Result<ModelDescriptor> {
    let input_descriptor = match c.get("input.mean_beam_power") {
        None => None,
        Some(p) => Some(InputDescriptor {
            mean_beam_power: split_f64(p)?,
            doppler_estimate: c.parse("input.doppler_estimate")?,
            mean_snr_db: c.parse("input.mean_snr_db")?,
            window_len: c.parse("input.window_len")?,
        }),
    };
    Ok(ModelDescriptor {
        model_id: c.require("model_id")?.to_string(),
        model_version: c.parse("model_version")?,
        functionality_tag: c.require("functionality_tag")?.to_string(),
        associated_id: c.get("associated_id").map(str::to_string),
        source_ids: c
            .get("source_ids")
            .map(|s| s.split(',').map(str::to_string).collect())
            .unwrap_or_default(),
        input_descriptor,
        payload_checksum: unhex32(c.require("payload_checksum")?)?,
        flops_per_inference: c.parse("flops_per_inference")?,
        storage_bytes: c.parse("storage_bytes")?,
    })
}

pub fn encode_model(p: &ModelPackage) -> Vec<u8> {
    let mut c = Container::new(p.kind.as_str());
    write_descriptor(&mut c, p.kind.as_str(), &p.descriptor);
    c.params = p.params.clone();
    c.encode()
}

/// Decodes a model package, verifying both the container checksum and the
/// descriptor's payload checksum.
pub fn decode_model(bytes: &[u8]) -> Result<ModelPackage> {
    let c = Container::decode(bytes)?;
    let kind: ModelKind = c.kind().parse()?;
    let descriptor = read_descriptor(&c)?;
    let pkg = ModelPackage { descriptor, kind, params: c.params };
    pkg.verify()?;
    Ok(pkg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelIdentity, Param};

    fn sample() -> ModelPackage {
        let mut d = ModelDescriptor::new(ModelIdentity::new("m", 3, "CsiPred-4ms"));
        d.associated_id = Some("aid-1".into());
        d.input_descriptor = Some(InputDescriptor {
            mean_beam_power: vec![0.25, 0.75],
            doppler_estimate: 0.1,
            mean_snr_db: f64::INFINITY,
            window_len: 7,
        });
        ModelPackage::sealed(
            d,
            ModelKind::CsiPredictor,
            vec![
                Param::complex("tap.0", CMat::from_fn(2, 3, |i, j| Complex64::new(i as f64, -(j as f64) / 3.0))),
                Param::real("meta.config", DMatrix::from_row_slice(1, 2, &[1.0, 4.0])),
            ],
        )
    }

    #[test]
    fn layout_is_bit_exact() {
        let p = sample();
        let b = p.to_bytes();
        assert_eq!(&b[..4], b"LCMP");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        let hlen = u32::from_le_bytes(b[6..10].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&b[10..10 + hlen]).unwrap();
        assert!(header.starts_with("kind=csi_predictor\nmodel_id=m\n"));
        let m = &b[10 + hlen..];
        assert_eq!(u16::from_le_bytes([m[0], m[1]]), 5);
        assert_eq!(&m[2..7], b"tap.0");
        assert_eq!(u32::from_le_bytes(m[7..11].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(m[11..15].try_into().unwrap()), 3);
        assert_eq!(m[15], 1);
        // element (0, 1) = 0 - j/3, after element (0, 0)
        assert_eq!(f64::from_le_bytes(m[32..40].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(m[40..48].try_into().unwrap()), -1.0 / 3.0);
        let digest = Sha256::digest(&b[4..b.len() - 32]);
        assert_eq!(&b[b.len() - 32..], digest.as_slice());
    }

    #[test]
    fn round_trip() {
        let p = sample();
        assert_eq!(decode_model(&p.to_bytes()).unwrap(), p);
    }

    #[test]
    fn corruption_detected() {
        let b = sample().to_bytes();
        for i in [0, 5, 20, b.len() / 2, b.len() - 1] {
            let mut c = b.clone();
            c[i] ^= 0x40;
            assert!(matches!(decode_model(&c), Err(Error::Integrity(_))), "byte {i}");
        }
        assert!(decode_model(&b[..20]).is_err());
    }

    #[test]
    fn tampered_payload_with_rehashed_container_fails_payload_check() {
        let p = sample();
        let mut c = Container::decode(&p.to_bytes()).unwrap();
        if let ParamValue::Complex(m) = &mut c.params[0].value {
            m[(0, 0)] += Complex64::new(1.0, 0.0);
        }
        assert!(matches!(decode_model(&c.encode()), Err(Error::Integrity(_))));
    }
}
