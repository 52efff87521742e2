//! Named weight tensors and their binary container.
//!
//! Container layout (little-endian): magic `CDPW`, u32 format version (1),
//! u32 tensor count, then per tensor a u16 name length, the UTF-8 name, a u8
//! mode count, that many u32 extents, and the row-major f32 data; a trailing
//! u32 CRC-32 (IEEE) covers every byte between the magic and the checksum.
//! Tensor bytes round-trip bit-exactly. Tensors belonging to a layer are
//! named `layer<i>/<role>` with 1-based indices.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::layers::{LayerSpec, LayerWeights, WeightRole};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"CDPW";
pub const FORMAT_VERSION: u32 = 1;

const fn crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u32;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

static CRC_TABLE: [u32; 256] = crc_table();

pub(crate) fn crc32(data: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in data {
        crc = (crc >> 8) ^ CRC_TABLE[((crc ^ b as u32) & 0xFF) as usize];
    }
    !crc
}

/// Deterministic per-layer weight initialization: the stream is derived from
/// the store seed and the 1-based layer index.
pub fn seeded_layer_weights(spec: &LayerSpec, seed: u64, layer: usize) -> Result<LayerWeights> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    LayerWeights::random(spec, &mut rng)
}

/// A named map of weight tensors plus in-memory manifest metadata. Only the
/// tensors and the format version persist in the binary container.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    pub arch_name: Option<String>,
    pub seed: Option<u64>,
    tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty store carrying over this store's manifest metadata.
    pub fn clone_metadata(&self) -> Self {
        WeightStore {
            arch_name: self.arch_name.clone(),
            seed: self.seed,
            tensors: BTreeMap::new(),
        }
    }

    pub fn tensor_name(layer: usize, role: WeightRole) -> String {
        format!("layer{layer}/{role}")
    }

    pub fn insert(&mut self, name: String, tensor: Tensor) -> Result<()> {
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate tensor name {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn insert_layer(&mut self, layer: usize, weights: &LayerWeights) -> Result<()> {
        for (role, tensor) in weights.iter() {
            self.insert(Self::tensor_name(layer, *role), tensor.clone())?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Tensors belonging to one layer, in role order.
    pub fn layer_tensors(&self, layer: usize) -> Vec<(WeightRole, &Tensor)> {
        let prefix = format!("layer{layer}/");
        self.tensors
            .iter()
            .filter_map(|(name, t)| {
                let role = name.strip_prefix(&prefix)?;
                Some((WeightRole::parse(role)?, t))
            })
            .collect()
    }

    pub fn layer_tensor(&self, layer: usize, role: WeightRole) -> Result<&Tensor> {
        let name = Self::tensor_name(layer, role);
        self.tensors
            .get(&name)
            .ok_or_else(|| Error::shape(format!("missing tensor {name}")))
    }

    /// Fresh seeded weights for every layer of an architecture.
    pub fn generate(arch: &ArchSpec, seed: u64) -> Result<WeightStore> {
        arch.validate()?;
        let mut store = WeightStore {
            arch_name: Some(arch.name.clone()),
            seed: Some(seed),
            tensors: BTreeMap::new(),
        };
        for (i, spec) in arch.layers.iter().enumerate() {
            let w = seeded_layer_weights(spec, seed, i + 1)?;
            store.insert_layer(i + 1, &w)?;
        }
        Ok(store)
    }

    /// Builds a store from per-layer weights in network order.
    pub fn from_layer_weights(arch: &ArchSpec, weights: &[LayerWeights]) -> Result<WeightStore> {
        if weights.len() != arch.layers.len() {
            return Err(Error::invalid(format!(
                "{} weight sets for {} layers",
                weights.len(),
                arch.layers.len()
            )));
        }
        let mut store = WeightStore {
            arch_name: Some(arch.name.clone()),
            seed: None,
            tensors: BTreeMap::new(),
        };
        for (i, w) in weights.iter().enumerate() {
            store.insert_layer(i + 1, w)?;
        }
        Ok(store)
    }

    /// Checks that this store holds exactly the tensors the architecture
    /// declares, with matching dims. Errors name the offending tensor.
    pub fn check_matches(&self, arch: &ArchSpec) -> Result<()> {
        let mut expected = BTreeMap::new();
        for (i, spec) in arch.layers.iter().enumerate() {
            for (role, dims) in LayerWeights::expected_shapes(spec) {
                expected.insert(Self::tensor_name(i + 1, role), dims);
            }
        }
        for (name, dims) in &expected {
            match self.tensors.get(name) {
                Some(t) if t.dims() == dims.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(format!(
                        "tensor {name} has dims {:?}, architecture declares {dims:?}",
                        t.dims()
                    )))
                }
                None => return Err(Error::shape(format!("missing tensor {name}"))),
            }
        }
        for name in self.tensors.keys() {
            if !expected.contains_key(name) {
                return Err(Error::shape(format!(
                    "tensor {name} does not belong to architecture {}",
                    arch.name
                )));
            }
        }
        Ok(())
    }

    /// Per-layer weights in network order, validated against the specs.
    pub fn collect_layer_weights(&self, arch: &ArchSpec) -> Result<Vec<LayerWeights>> {
        self.check_matches(arch)?;
        arch.layers
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let pairs = self
                    .layer_tensors(i + 1)
                    .into_iter()
                    .map(|(role, t)| (role, t.clone()))
                    .collect();
                LayerWeights::from_pairs(spec, pairs).map_err(|e| e.at_layer(i + 1))
            })
            .collect()
    }

    /// Serializes to the binary container format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        body.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            body.extend_from_slice(&(name.len() as u16).to_le_bytes());
            body.extend_from_slice(name.as_bytes());
            body.push(tensor.rank() as u8);
            for &d in tensor.dims() {
                body.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(4 + body.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32(&body).to_le_bytes());
        out
    }

    /// Parses the binary container format, validating the checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<WeightStore> {
        let corrupt = |msg: &str| Error::Corrupt(msg.to_string());
        if bytes.len() < 12 {
            return Err(corrupt("container shorter than any valid file"));
        }
        if &bytes[..4] != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let body = &bytes[4..bytes.len() - 4];
        let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32(body) != stored_crc {
            return Err(corrupt("checksum mismatch"));
        }

        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            let end = pos
                .checked_add(n)
                .ok_or_else(|| corrupt("length overflow"))?;
            if end > body.len() {
                return Err(corrupt("truncated container"));
            }
            let s = &body[*pos..end];
            *pos = end;
            Ok(s)
        };

        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!(
                "unsupported format version {version}"
            )));
        }
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());

        let mut store = WeightStore::new();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut pos, name_len)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let ndim = take(&mut pos, 1)?[0] as usize;
            if !(1..=4).contains(&ndim) {
                return Err(Error::Corrupt(format!("tensor {name} has {ndim} modes")));
            }
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
            }
            let total: usize = dims.iter().product();
            let raw = take(&mut pos, total * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(dims, data)
                .map_err(|e| Error::Corrupt(format!("tensor {name}: {e}")))?;
            store.insert(name, tensor)?;
        }
        if pos != body.len() {
            return Err(corrupt("trailing bytes after last tensor"));
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::l2net;
    use crate::cost::{model_cost, CostPolicy};

    #[test]
    fn crc32_known_answer() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let store = WeightStore::generate(&l2net(), 7).unwrap();
        let bytes = store.to_bytes();
        let back = WeightStore::from_bytes(&bytes).unwrap();
        assert_eq!(back.len(), store.len());
        for (name, tensor) in store.iter() {
            let other = back.get(name).unwrap();
            assert_eq!(other.dims(), tensor.dims());
            for (a, b) in tensor.data().iter().zip(other.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let store = WeightStore::generate(&l2net(), 7).unwrap();
        let mut bytes = store.to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            WeightStore::from_bytes(&bytes),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let store = WeightStore::generate(&l2net(), 7).unwrap();
        let bytes = store.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            WeightStore::from_bytes(&bad),
            Err(Error::Corrupt(_))
        ));

        assert!(matches!(
            WeightStore::from_bytes(&bytes[..bytes.len() - 9]),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = WeightStore::new();
        let t = Tensor::zeros(vec![2, 2]).unwrap();
        store.insert("a".into(), t.clone()).unwrap();
        assert!(store.insert("a".into(), t).is_err());
    }

    #[test]
    fn generated_store_matches_arch_and_cost() {
        let arch = l2net();
        let store = WeightStore::generate(&arch, 3).unwrap();
        store.check_matches(&arch).unwrap();
        let weights = store.collect_layer_weights(&arch).unwrap();
        let report = model_cost(&arch, None, CostPolicy::default()).unwrap();
        let total: u64 = weights.iter().map(|w| w.element_count()).sum();
        assert_eq!(total, report.total_params);
    }

    #[test]
    fn check_matches_names_offender() {
        let arch = l2net();
        let mut store = WeightStore::generate(&arch, 3).unwrap();
        store.tensors.remove("layer3/kernel");
        let err = store.check_matches(&arch).unwrap_err();
        assert!(err.to_string().contains("layer3/kernel"));
    }

    #[test]
    fn generate_is_deterministic() {
        let a = WeightStore::generate(&l2net(), 11).unwrap();
        let b = WeightStore::generate(&l2net(), 11).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = WeightStore::generate(&l2net(), 12).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }
}
