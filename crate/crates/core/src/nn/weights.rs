//! Named parameter storage, Glorot initialisation and the LFWT weight file.
//!
//! LFWT layout (all integers little-endian):
//!
//! ```text
//! "LFWT" | u32 version = 1 | u32 entry count
//! per entry: u16 name length | UTF-8 name | u8 rank | rank x u32 dims | f32 data
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::NetworkSpec;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const LFWT_MAGIC: &[u8; 4] = b"LFWT";
pub const LFWT_VERSION: u32 = 1;

/// Parameter tensors keyed by `"{layer}.weight"` / `"{layer}.bias"`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore<T = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name).ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> WeightStore<U> {
        WeightStore { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Checks that every parameter of `spec` is present with the right shape.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        for entry in spec.parameter_layout()? {
            let t = self.require(&entry.name)?;
            if t.shape() != entry.shape {
                return Err(Error::ShapeMismatchWithSpec(format!(
                    "{}: stored {:?}, spec wants {:?}",
                    entry.name,
                    t.shape(),
                    entry.shape
                )));
            }
        }
        Ok(())
    }
}

/// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero. Entries
/// are drawn in layer order from a ChaCha8 stream seeded with `seed`.
pub fn init_weights(spec: &NetworkSpec, seed: u64) -> Result<WeightStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws = WeightStore::new();
    for entry in spec.parameter_layout()? {
        let t = if entry.name.ends_with(".bias") {
            Tensor::zeros(&entry.shape)
        } else {
            let limit = (6.0 / (entry.fan_in + entry.fan_out) as f64).sqrt();
            Tensor::from_fn(&entry.shape, |_| rng.random_range(-limit..limit) as f32)
        };
        ws.insert(entry.name, t);
    }
    Ok(ws)
}

pub fn save_weights(ws: &WeightStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + ws.param_count() * 4);
    out.extend_from_slice(LFWT_MAGIC);
    out.extend_from_slice(&LFWT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ws.len() as u32).to_le_bytes());
    for (name, t) in ws.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated)?;
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

/// Parses an LFWT file without reference to any network.
pub fn parse_weights(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || &bytes[..4] != LFWT_MAGIC {
        return Err(Error::BadMagic);
    }
    r.pos = 4;
    let version = r.u32()?;
    if version != LFWT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut ws = WeightStore::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::MalformedFile("weight name is not UTF-8".into()))?
            .to_string();
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or(Error::Truncated)?;
        let raw = r.take(numel.checked_mul(4).ok_or(Error::Truncated)?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(dims, data).map_err(|e| Error::MalformedFile(format!("{name}: {e}")))?;
        ws.insert(name, t);
    }
    Ok(ws)
}

/// Parses an LFWT file and validates it against `spec`.
pub fn load_weights(bytes: &[u8], spec: &NetworkSpec) -> Result<WeightStore> {
    let ws = parse_weights(bytes)?;
    let layout = spec.parameter_layout()?;
    for (name, t) in ws.iter() {
        match layout.iter().find(|e| &e.name == name) {
            Some(e) if e.shape == t.shape() => {}
            Some(e) => {
                return Err(Error::ShapeMismatchWithSpec(format!(
                    "{name}: file has {:?}, spec wants {:?}",
                    t.shape(),
                    e.shape
                )))
            }
            None => return Err(Error::ShapeMismatchWithSpec(format!("{name} is not a parameter of {}", spec.name))),
        }
    }
    ws.check_against(spec)?;
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::cost::count_costs;
    use crate::nn::spec::{build_architecture, cnn_lbp};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = cnn_lbp(3, 16, 5);
        let mut ws = init_weights(&spec, 9).unwrap();
        ws.get_mut("000_conv2d.bias").unwrap().data_mut()[0] = f32::from_bits(0x3f80_0001);
        let bytes = save_weights(&ws);
        let back = load_weights(&bytes, &spec).unwrap();
        for ((ka, a), (kb, b)) in ws.iter().zip(back.iter()) {
            assert_eq!(ka, kb);
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn header_layout() {
        let mut ws = WeightStore::new();
        ws.insert("a", Tensor::new(vec![2], vec![1.0f32, -2.0]).unwrap());
        let b = save_weights(&ws);
        assert_eq!(&b[..4], b"LFWT");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[12..15], &[1, 0, b'a']);
        assert_eq!(b[15], 1);
        assert_eq!(&b[16..20], &[2, 0, 0, 0]);
        assert_eq!(&b[20..24], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn load_errors() {
        let spec = cnn_lbp(3, 16, 5);
        let ws = init_weights(&spec, 1).unwrap();
        let mut bytes = save_weights(&ws);
        assert!(matches!(load_weights(b"LFWX\x01\0\0\0\0\0\0\0", &spec), Err(Error::BadMagic)));
        assert!(matches!(load_weights(&bytes[..bytes.len() - 1], &spec), Err(Error::Truncated)));
        bytes[4] = 2;
        assert!(matches!(load_weights(&bytes, &spec), Err(Error::UnsupportedVersion(2))));

        let other = cnn_lbp(4, 16, 5);
        let bytes = save_weights(&ws);
        assert!(matches!(load_weights(&bytes, &other), Err(Error::ShapeMismatchWithSpec(_))));

        let mut partial = ws.clone();
        partial.remove("008_dense.bias");
        assert!(matches!(load_weights(&save_weights(&partial), &spec), Err(Error::MissingWeight(_))));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = cnn_lbp(3, 16, 5);
        let a = init_weights(&spec, 3).unwrap();
        assert_eq!(a, init_weights(&spec, 3).unwrap());
        assert_ne!(a, init_weights(&spec, 4).unwrap());
        for e in spec.parameter_layout().unwrap() {
            let t = a.get(&e.name).unwrap();
            if e.name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            } else {
                let limit = (6.0 / (e.fan_in + e.fan_out) as f64).sqrt() as f32;
                assert!(t.data().iter().all(|v| v.abs() <= limit));
            }
        }
    }

    #[test]
    fn cost_params_equal_store_size() {
        for name in ["cnn_lbp", "mobilenet"] {
            let spec = build_architecture(name, 10).unwrap();
            let ws = init_weights(&spec, 0).unwrap();
            assert_eq!(count_costs(&spec).unwrap().total_params(), ws.param_count() as u64, "{name}");
        }
    }
}
