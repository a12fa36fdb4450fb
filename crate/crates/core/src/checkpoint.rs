//! Binary parameter archives.
//!
//! Layout (integers little-endian `u32`):
//!
//! ```text
//! "S2SM" | version | json_len | json bytes | record_count |
//!   { name_len | name | ndims | dims... | f32 data... } * record_count
//! ```
//!
//! Records are written in ascending name order. Model checkpoints carry the
//! [`ModelConfig`] as the JSON block; trainer state uses the same container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{IoContext, Result, S2sError};
use crate::model::{ModelConfig, TwoStreamModel};
use crate::nn::Real;

pub const MAGIC: &[u8; 4] = b"S2SM";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

fn put_u32<W: Write>(out: &mut W, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "value exceeds u32"))?;
    out.write_all(&v.to_le_bytes())
}

pub fn write_archive<W: Write>(mut out: W, json: &str, records: &[Record]) -> std::io::Result<()> {
    let mut order: Vec<&Record> = records.iter().collect();
    order.sort_by(|a, b| a.name.cmp(&b.name));
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    put_u32(&mut out, json.len())?;
    out.write_all(json.as_bytes())?;
    put_u32(&mut out, order.len())?;
    for r in order {
        put_u32(&mut out, r.name.len())?;
        out.write_all(r.name.as_bytes())?;
        put_u32(&mut out, r.dims.len())?;
        for &d in &r.dims {
            put_u32(&mut out, d)?;
        }
        for v in &r.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| S2sError::Format(format!("truncated archive reading {what}: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        String::from_utf8(self.bytes(n, what)?)
            .map_err(|_| S2sError::Format(format!("{what} is not UTF-8")))
    }
}

pub fn read_archive<R: Read>(input: R) -> Result<(String, Vec<Record>)> {
    let mut cur = Cursor { inner: input };
    if cur.bytes(4, "magic")? != MAGIC {
        return Err(S2sError::Format("not an S2SM archive".into()));
    }
    let version = cur.u32("version")?;
    if version != VERSION as usize {
        return Err(S2sError::Format(format!(
            "unsupported archive version {version}"
        )));
    }
    let json = cur.string("config block")?;
    let count = cur.u32("record count")?;
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = cur.string("record name")?;
        let ndims = cur.u32("rank")?;
        let dims = (0..ndims)
            .map(|_| cur.u32("dimension"))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = cur.bytes(n * 4, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push(Record { name, dims, data });
    }
    let mut rest = [0u8; 1];
    if cur.inner.read(&mut rest).unwrap_or(0) != 0 {
        return Err(S2sError::Format("trailing bytes after archive".into()));
    }
    Ok((json, records))
}

pub fn model_records<T: Real>(model: &TwoStreamModel<T>) -> Vec<Record> {
    model
        .params()
        .params()
        .iter()
        .map(|p| Record {
            name: p.name.clone(),
            dims: p.dims.clone(),
            data: p.data.iter().map(|v| v.f64() as f32).collect(),
        })
        .collect()
}

pub fn write_model<T: Real, W: Write>(model: &TwoStreamModel<T>, out: W) -> Result<()> {
    let json = serde_json::to_string(model.config())?;
    write_archive(out, &json, &model_records(model)).map_err(|e| S2sError::io("<checkpoint>", e))
}

pub fn read_model<R: Read>(input: R) -> Result<TwoStreamModel<f32>> {
    let (json, records) = read_archive(input)?;
    let config: ModelConfig = serde_json::from_str(&json)?;
    let mut model = TwoStreamModel::<f32>::new(config)?;
    load_records(&mut model, records)?;
    Ok(model)
}

/// Overwrite every parameter from `records`, which must match by name and
/// shape exactly.
pub fn load_records(model: &mut TwoStreamModel<f32>, records: Vec<Record>) -> Result<()> {
    let expected = model.params().len();
    if records.len() != expected {
        return Err(S2sError::Consistency(format!(
            "checkpoint has {} tensors, model has {expected}",
            records.len()
        )));
    }
    let store = model.params_mut();
    for r in records {
        let id = store
            .find(&r.name)
            .ok_or_else(|| S2sError::Consistency(format!("unexpected tensor `{}`", r.name)))?;
        let param = &mut store.params_mut()[id.0];
        if param.dims != r.dims {
            return Err(S2sError::Dimension(format!(
                "tensor `{}` is {:?}, model wants {:?}",
                r.name, r.dims, param.dims
            )));
        }
        param.data = r.data;
    }
    Ok(())
}

pub fn save_model<T: Real>(model: &TwoStreamModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).at(path)?;
    write_model(model, BufWriter::new(file))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TwoStreamModel<f32>> {
    let path = path.as_ref();
    read_model(BufReader::new(File::open(path).at(path)?))
}
