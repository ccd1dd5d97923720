//! Binary checkpoint: `"PGAN"`, u32 version, u32 tensor count, then per
//! tensor u16 name length, UTF-8 name, u8 dtype, u8 rank, u32 dims and
//! little-endian data.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::config::TrainConfig;
use super::step::TrainState;
use crate::error::{Error, Result};
use crate::nets::{ParamStore, UNetConfig};
use crate::tensor::{DType, Element, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PGAN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One raw tensor record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl Record {
    fn from_tensor<T: Element>(name: String, t: &Tensor<T>) -> Self {
        let mut data = Vec::with_capacity(t.len() * T::BYTES);
        for &v in t.data() {
            v.write_le(&mut data);
        }
        Record { name, dtype: T::DTYPE, shape: t.shape().to_vec(), data }
    }

    fn to_tensor<T: Element>(&self) -> Result<Tensor<T>> {
        if self.dtype != T::DTYPE {
            return Err(Error::Checkpoint(format!("tensor {} has dtype {:?}, expected {:?}", self.name, self.dtype, T::DTYPE)));
        }
        let data = self.data.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok(Tensor::new(self.shape.clone(), data)?)
    }

    /// A u64 stored exactly as two f64 halves.
    fn from_u64(name: &str, v: u64) -> Self {
        let t = Tensor::new(vec![2], vec![(v >> 32) as f64, (v & 0xffff_ffff) as f64]).expect("two values");
        Record::from_tensor(name.into(), &t)
    }

    fn to_u64(&self) -> Result<u64> {
        let t = self.to_tensor::<f64>()?;
        match t.data() {
            &[hi, lo]
                if hi.fract() == 0.0 && lo.fract() == 0.0 && (0.0..4294967296.0).contains(&hi) && (0.0..4294967296.0).contains(&lo) =>
            {
                Ok(((hi as u64) << 32) | lo as u64)
            }
            _ => Err(Error::Checkpoint(format!("tensor {} is not an encoded integer", self.name))),
        }
    }
}

fn store_records<T: Element>(out: &mut Vec<Record>, prefix: &str, store: &ParamStore<T>) {
    for (_, name, t) in store.iter() {
        out.push(Record::from_tensor(format!("{prefix}/{name}"), t));
    }
}

fn opt_records<T: Element>(out: &mut Vec<Record>, prefix: &str, store: &ParamStore<T>, state: &AdamState<T>) {
    out.push(Record::from_u64(&format!("opt/{prefix}/step"), state.step));
    for ((_, name, _), (m, v)) in store.iter().zip(state.m.iter().zip(&state.v)) {
        out.push(Record::from_tensor(format!("opt/{prefix}/m/{name}"), m));
        out.push(Record::from_tensor(format!("opt/{prefix}/v/{name}"), v));
    }
}

pub fn state_records<T: Element>(state: &TrainState<T>) -> Result<Vec<Record>> {
    let json = serde_json::to_vec(&state.config)?;
    let config = Tensor::new(vec![json.len().max(1)], json.iter().map(|&b| b as f32).collect())?;
    let mut out = vec![
        Record::from_tensor("meta/config".into(), &config),
        Record::from_u64("meta/step", state.step),
        Record::from_u64("meta/psi_seed", state.psi.seed()),
    ];
    store_records(&mut out, "gen", state.gens.params());
    store_records(&mut out, "d1", state.d1.params());
    store_records(&mut out, "d2", state.d2.params());
    opt_records(&mut out, "gen", state.gens.params(), &state.opt_gen);
    opt_records(&mut out, "d1", state.d1.params(), &state.opt_d1);
    opt_records(&mut out, "d2", state.d2.params(), &state.opt_d2);
    Ok(out)
}

pub fn encode_records(records: &[Record]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("name too long: {}", r.name)))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(r.dtype.code());
        out.push(r.shape.len() as u8);
        for &d in &r.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&r.data);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated file at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic (not a PGAN checkpoint)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let code = r.u8()?;
        let dtype = DType::from_code(code).ok_or_else(|| Error::Checkpoint(format!("tensor {name}: unknown dtype code {code}")))?;
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let width = match dtype {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        let n = shape.iter().try_fold(width, |a: usize, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::Checkpoint(format!("tensor {name}: size overflow")))?;
        let data = r.take(n)?.to_vec();
        out.push(Record { name, dtype, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn checkpoint_bytes<T: Element>(state: &TrainState<T>) -> Result<Vec<u8>> {
    encode_records(&state_records(state)?)
}

pub fn save_checkpoint<T: Element>(state: &TrainState<T>, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(state)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<TrainState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, None)
}

/// Loads into networks built from `net` instead of the stored config.
pub fn load_checkpoint_with_net<T: Element>(path: &Path, net: &UNetConfig) -> Result<TrainState<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, Some(net))
}

fn find<'r>(records: &'r [Record], name: &str) -> Result<&'r Record> {
    records.iter().find(|r| r.name == name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
}

pub fn checkpoint_from_bytes<T: Element>(bytes: &[u8], net: Option<&UNetConfig>) -> Result<TrainState<T>> {
    let records = decode_records(bytes)?;
    let config_bytes: Vec<u8> = find(&records, "meta/config")?.to_tensor::<f32>()?.data().iter().map(|&b| b as u8).collect();
    let mut config: TrainConfig = serde_json::from_slice(&config_bytes)?;
    if let Some(net) = net {
        config.net = net.clone();
    }
    let mut state = TrainState::<T>::new(&config)?;
    state.step = find(&records, "meta/step")?.to_u64()?;
    let psi_seed = find(&records, "meta/psi_seed")?.to_u64()?;
    if psi_seed != state.psi.seed() {
        return Err(Error::Checkpoint(format!("meta/psi_seed {psi_seed} disagrees with config psi_seed {}", state.psi.seed())));
    }
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !seen.insert(r.name.as_str()) {
            return Err(Error::Checkpoint(format!("duplicate tensor {}", r.name)));
        }
        if r.name.starts_with("meta/") {
            continue;
        }
        assign(&mut state, r)?;
    }
    for expected in state_records(&state)? {
        if !seen.contains(expected.name.as_str()) {
            return Err(Error::Checkpoint(format!("missing tensor {}", expected.name)));
        }
    }
    state.gens.assert_shared()?;
    Ok(state)
}

fn assign<T: Element>(state: &mut TrainState<T>, r: &Record) -> Result<()> {
    let unknown = || Error::Checkpoint(format!("unknown tensor {}", r.name));
    let (head, rest) = r.name.split_once('/').ok_or_else(unknown)?;
    let (net, opt, rest) = if head == "opt" {
        let (net, rest) = rest.split_once('/').ok_or_else(unknown)?;
        (net, true, rest)
    } else {
        (head, false, rest)
    };
    let (store, adam) = match net {
        "gen" => (state.gens.params_mut(), &mut state.opt_gen),
        "d1" => (state.d1.params_mut(), &mut state.opt_d1),
        "d2" => (state.d2.params_mut(), &mut state.opt_d2),
        _ => return Err(unknown()),
    };
    if opt && rest == "step" {
        adam.step = r.to_u64()?;
        return Ok(());
    }
    let (slot, pname) = if opt {
        let (kind, pname) = rest.split_once('/').ok_or_else(unknown)?;
        (Some(kind), pname)
    } else {
        (None, rest)
    };
    let id = store.find(pname).ok_or_else(unknown)?;
    let expected = store.get(id).shape().to_vec();
    if r.shape != expected {
        return Err(Error::Checkpoint(format!("tensor {} has shape {:?}, network expects {:?}", r.name, r.shape, expected)));
    }
    let t = r.to_tensor::<T>()?;
    match slot {
        None => store.set(id, t)?,
        Some("m") => adam.m[id.index()] = t,
        Some("v") => adam.v[id.index()] = t,
        Some(_) => return Err(unknown()),
    }
    Ok(())
}
