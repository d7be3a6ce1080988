//! Checkpoint and mask storage.
//!
//! A [`Checkpoint`] is an ordered map of named tensors plus free-form string
//! metadata, persisted in a single-file container (see [`container`]). Masks
//! ride in the same container as `U8` tensors whose elements are 0 or 1; a
//! [`MaskSet`] treats tensors absent from the file as all-ones, so a mask
//! file only needs to mention tensors that pruning is allowed to touch.

pub mod container;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub use container::TensorMeta;

// ---------------------------------------------------------------------------
// Tensors
// ---------------------------------------------------------------------------

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "F32" => Some(Dtype::F32),
            "U8" => Some(Dtype::U8),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "F32",
            Dtype::U8 => "U8",
        }
    }

    /// Size of one element in bytes.
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Flat row-major element storage.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A shaped tensor. The data vector length always equals the product of the
/// shape dimensions; construction enforces this.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {shape:?} does not match {} values",
            values.len()
        );
        Tensor { shape, data: TensorData::F32(values) }
    }

    pub fn u8(shape: Vec<usize>, values: Vec<u8>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape {shape:?} does not match {} values",
            values.len()
        );
        Tensor { shape, data: TensorData::U8(values) }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: TensorData) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::U8(_) => Dtype::U8,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn element_count(&self) -> usize {
        self.data.len()
    }

    /// Borrow the elements as `f32` if that is the dtype.
    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_f32_mut(&mut self) -> Option<&mut [f32]> {
        match &mut self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn as_u8_mut(&mut self) -> Option<&mut [u8]> {
        match &mut self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Metadata key set on checkpoints produced by masking/pruning, so that
/// operations requiring dense inputs can refuse them.
pub const META_MASKED: &str = "masked";
/// Metadata key naming what kind of artifact a container holds.
pub const META_KIND: &str = "kind";
/// Metadata key tying masks and derived checkpoints to the layout fingerprint
/// of the checkpoint they came from.
pub const META_PARENT_FINGERPRINT: &str = "parent_fingerprint";

/// A named collection of tensors with string metadata. Iteration order is
/// always ascending by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingTensor { name: name.to_string() })
    }

    /// Fetch a tensor's elements as `f32`, failing on absence or wrong dtype.
    pub fn f32_values(&self, name: &str) -> Result<&[f32]> {
        self.get(name)?.as_f32().ok_or_else(|| Error::NotF32 { name: name.to_string() })
    }

    /// Total number of elements across all tensors.
    pub fn element_count(&self) -> usize {
        self.tensors.values().map(Tensor::element_count).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        container::serialize(&self.tensors, &self.metadata)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parsed = container::deserialize(bytes)?;
        Ok(Checkpoint { tensors: parsed.tensors, metadata: parsed.metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Layout fingerprint: FNV-1a 64 over `"name:d0,d1,...;"` for each tensor
    /// in ascending name order. Values do not participate, so a checkpoint
    /// and any same-shaped edit of it share a fingerprint. The empty
    /// checkpoint hashes to the FNV offset basis.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut hash = OFFSET_BASIS;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(PRIME);
            }
        };
        for (name, tensor) in &self.tensors {
            eat(name.as_bytes());
            eat(b":");
            for (i, dim) in tensor.shape().iter().enumerate() {
                if i > 0 {
                    eat(b",");
                }
                eat(dim.to_string().as_bytes());
            }
            eat(b";");
        }
        hash
    }

    /// True if every tensor in `self` is present in `other` with the same
    /// shape and vice versa.
    pub fn same_layout(&self, other: &Checkpoint) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((an, at), (bn, bt))| {
                an == bn && at.shape() == bt.shape() && at.dtype() == bt.dtype()
            })
    }

    /// Return the names of F32 tensors, ascending.
    pub fn f32_tensor_names(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|(_, t)| t.dtype() == Dtype::F32)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

/// What produced a mask file (stored under the `kind` metadata key).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Survivors of magnitude pruning.
    Pruning,
    /// Coordinates selected by a localization strategy.
    Localization,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::Pruning => "pruning_mask",
            MaskKind::Localization => "localization_mask",
        }
    }
}

/// A set of binary masks keyed by tensor name. Tensors not present are
/// implicitly all-ones: a mask file produced by pruning stores entries only
/// for the tensors pruning was allowed to touch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaskSet {
    pub masks: BTreeMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl MaskSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a mask tensor, validating that every element is 0 or 1.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        let values = tensor.as_u8().ok_or(Error::InvalidTensorMeta {
            name: name.clone(),
            position: 0,
            reason: format!("masks must be U8, got {}", tensor.dtype()),
        })?;
        if let Some(index) = values.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMaskValue { name, index, value: values[index] });
        }
        self.masks.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.masks.get(name)
    }

    /// Number of ones in the mask for `name` within a checkpoint of the
    /// given layout; tensors without an entry count as fully unmasked.
    pub fn ones_for(&self, name: &str, element_count: usize) -> usize {
        match self.masks.get(name) {
            Some(mask) => mask.as_u8().map_or(0, |v| v.iter().filter(|&&b| b == 1).count()),
            None => element_count,
        }
    }

    /// Total ones across a checkpoint layout (absent tensors all-ones).
    pub fn total_ones(&self, checkpoint: &Checkpoint) -> usize {
        checkpoint
            .tensors
            .iter()
            .map(|(name, t)| self.ones_for(name, t.element_count()))
            .sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint { tensors: self.masks.clone(), metadata: self.metadata.clone() }
    }

    /// Interpret a loaded container as a mask set, validating shape dtype and
    /// element range.
    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        let mut set = MaskSet { masks: BTreeMap::new(), metadata: cp.metadata };
        for (name, tensor) in cp.tensors {
            set.insert(name, tensor)?;
        }
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    /// Check this mask's shapes against the checkpoint it will be applied to.
    /// Every mask entry must name a tensor in `cp` and match its shape.
    pub fn check_layout(&self, cp: &Checkpoint) -> Result<()> {
        for (name, mask) in &self.masks {
            let tensor = cp.get(name)?;
            if tensor.shape() != mask.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: tensor.shape().to_vec(),
                    actual: mask.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// If the mask records its parent's layout fingerprint, enforce it.
    pub fn check_parent(&self, cp: &Checkpoint) -> Result<()> {
        if let Some(recorded) = self.metadata.get(META_PARENT_FINGERPRINT) {
            let expected =
                u64::from_str_radix(recorded, 16).map_err(|_| Error::LayoutMismatch {
                    reason: format!("unparseable {META_PARENT_FINGERPRINT} metadata '{recorded}'"),
                })?;
            let actual = cp.fingerprint();
            if expected != actual {
                return Err(Error::FingerprintMismatch { expected, actual });
            }
        }
        Ok(())
    }

    pub fn stamp(&mut self, kind: MaskKind, parent: &Checkpoint) {
        self.metadata.insert(META_KIND.to_string(), kind.as_str().to_string());
        self.metadata
            .insert(META_PARENT_FINGERPRINT.to_string(), format!("{:016x}", parent.fingerprint()));
    }
}

/// Elementwise product of a checkpoint with a mask set. Coordinates whose
/// mask bit is 0 become literal `0.0` (no `-0.0` leaks through); absent
/// tensors pass through untouched. The result is stamped `masked=true` so
/// dense-only operations can reject it.
pub fn apply_mask(cp: &Checkpoint, masks: &MaskSet) -> Result<Checkpoint> {
    masks.check_layout(cp)?;
    masks.check_parent(cp)?;
    let mut out = cp.clone();
    for (name, mask) in &masks.masks {
        let bits = mask.as_u8().expect("MaskSet entries are validated U8");
        let values = out
            .tensors
            .get_mut(name)
            .expect("check_layout verified presence")
            .as_f32_mut()
            .ok_or_else(|| Error::NotF32 { name: name.clone() })?;
        for (v, &b) in values.iter_mut().zip(bits) {
            if b == 0 {
                *v = 0.0;
            }
        }
    }
    out.metadata.insert(META_MASKED.to_string(), "true".to_string());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut cp = Checkpoint::new();
        cp.insert("b", Tensor::f32(vec![3], vec![1.0, -2.5, 0.0]));
        cp.insert("a.weight", Tensor::f32(vec![2, 2], vec![0.5, 1.5, -0.25, 4.0]));
        cp.metadata.insert("note".into(), "hello".into());
        cp
    }

    #[test]
    fn round_trip_preserves_everything() {
        let cp = sample();
        let back = Checkpoint::from_bytes(&cp.to_bytes()).unwrap();
        assert_eq!(cp, back);
    }

    #[test]
    fn serialization_is_canonical() {
        // Insertion order must not matter: BTreeMap keys sort, and the writer
        // packs data contiguously in that order.
        let mut a = Checkpoint::new();
        a.insert("x", Tensor::f32(vec![1], vec![1.0]));
        a.insert("y", Tensor::f32(vec![1], vec![2.0]));
        let mut b = Checkpoint::new();
        b.insert("y", Tensor::f32(vec![1], vec![2.0]));
        b.insert("x", Tensor::f32(vec![1], vec![1.0]));
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn known_bytes_for_single_tensor() {
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![2], vec![1.0, 2.0]));
        let bytes = cp.to_bytes();
        let header = br#"{"w":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#;
        assert_eq!(&bytes[..8], &(header.len() as u64).to_le_bytes());
        assert_eq!(&bytes[8..8 + header.len()], header);
        assert_eq!(&bytes[8 + header.len()..8 + header.len() + 4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[8 + header.len() + 4..], &2.0f32.to_le_bytes());
    }

    #[test]
    fn metadata_serializes_first() {
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![1], vec![0.0]));
        cp.metadata.insert("kind".into(), "test".into());
        let bytes = cp.to_bytes();
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[8..8 + header_len]).unwrap();
        assert!(header.starts_with(r#"{"__metadata__":{"kind":"test"},"#), "got {header}");
    }

    #[test]
    fn rejects_truncated_file() {
        let err = Checkpoint::from_bytes(&[1, 2, 3]).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }), "{err}");
    }

    #[test]
    fn rejects_header_length_past_eof() {
        let mut bytes = 1000u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"{}");
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }), "{err}");
    }

    #[test]
    fn rejects_unsupported_dtype() {
        let header = br#"{"w":{"dtype":"F64","shape":[1],"data_offsets":[0,8]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        match err {
            Error::UnsupportedDtype { name, dtype } => {
                assert_eq!(name, "w");
                assert_eq!(dtype, "F64");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn rejects_overlapping_regions() {
        let header = br#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[1],"data_offsets":[2,6]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 6]);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::OffsetOverlap { .. }), "{err}");
    }

    #[test]
    fn rejects_gap_between_regions() {
        let header = br#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"b":{"dtype":"F32","shape":[1],"data_offsets":[8,12]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 12]);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::InvalidTensorMeta { .. }), "{err}");
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![1], vec![3.0]));
        let mut bytes = cp.to_bytes();
        bytes.push(0xFF);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }), "{err}");
    }

    #[test]
    fn rejects_region_past_data_end() {
        let header = br#"{"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]); // only half the data
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::TruncatedData { ref name, .. } if name == "w"), "{err}");
    }

    #[test]
    fn rejects_shape_offsets_disagreement() {
        let header = br#"{"w":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#;
        let mut bytes = (header.len() as u64).to_le_bytes().to_vec();
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 8]);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::InvalidTensorMeta { .. }), "{err}");
    }

    #[test]
    fn fingerprint_of_empty_checkpoint_is_offset_basis() {
        assert_eq!(Checkpoint::new().fingerprint(), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn fingerprint_ignores_values_but_not_layout() {
        let mut a = Checkpoint::new();
        a.insert("w", Tensor::f32(vec![2, 3], vec![0.0; 6]));
        let mut b = Checkpoint::new();
        b.insert("w", Tensor::f32(vec![2, 3], vec![9.0; 6]));
        assert_eq!(a.fingerprint(), b.fingerprint());

        let mut c = Checkpoint::new();
        c.insert("w", Tensor::f32(vec![3, 2], vec![0.0; 6]));
        assert_ne!(a.fingerprint(), c.fingerprint());

        let mut d = Checkpoint::new();
        d.insert("w2", Tensor::f32(vec![2, 3], vec![0.0; 6]));
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn fingerprint_matches_reference_fnv() {
        // Independent reference: FNV-1a over the canonical layout string.
        fn fnv1a(bytes: &[u8]) -> u64 {
            let mut h = 0xcbf2_9ce4_8422_2325u64;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h
        }
        let mut cp = Checkpoint::new();
        cp.insert("a", Tensor::f32(vec![2], vec![0.0; 2]));
        cp.insert("b.w", Tensor::f32(vec![4, 1], vec![0.0; 4]));
        assert_eq!(cp.fingerprint(), fnv1a(b"a:2;b.w:4,1;"));
    }

    #[test]
    fn fingerprints_distinct_across_random_layouts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000 {
            let mut cp = Checkpoint::new();
            let n = rng.gen_range(1..4usize);
            for j in 0..n {
                let dims: Vec<usize> =
                    (0..rng.gen_range(1..3usize)).map(|_| rng.gen_range(1..50)).collect();
                let count = dims.iter().product();
                cp.insert(format!("t{i}_{j}"), Tensor::f32(dims, vec![0.0; count]));
            }
            assert!(seen.insert(cp.fingerprint()), "collision at layout {i}");
        }
    }

    #[test]
    fn mask_set_rejects_values_above_one() {
        let mut masks = MaskSet::new();
        let err = masks.insert("w", Tensor::u8(vec![3], vec![0, 1, 2])).unwrap_err();
        match err {
            Error::InvalidMaskValue { name, index, value } => {
                assert_eq!((name.as_str(), index, value), ("w", 2, 2));
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn apply_mask_zeroes_and_stamps() {
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![4], vec![1.0, -2.0, 3.0, -4.0]));
        cp.insert("untouched", Tensor::f32(vec![2], vec![5.0, 6.0]));
        let mut masks = MaskSet::new();
        masks.insert("w", Tensor::u8(vec![4], vec![1, 0, 0, 1])).unwrap();

        let masked = apply_mask(&cp, &masks).unwrap();
        assert_eq!(masked.get("w").unwrap().as_f32().unwrap(), &[1.0, 0.0, 0.0, -4.0]);
        assert_eq!(masked.get("untouched").unwrap().as_f32().unwrap(), &[5.0, 6.0]);
        assert_eq!(masked.metadata.get(META_MASKED).map(String::as_str), Some("true"));

        // Zeroed coordinates are positive zero bit-for-bit.
        let w = masked.get("w").unwrap().as_f32().unwrap();
        assert_eq!(w[1].to_bits(), 0.0f32.to_bits());
    }

    #[test]
    fn apply_mask_checks_shapes() {
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![4], vec![0.0; 4]));
        let mut masks = MaskSet::new();
        masks.insert("w", Tensor::u8(vec![2, 2], vec![1; 4])).unwrap();
        let err = apply_mask(&cp, &masks).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{err}");
    }

    #[test]
    fn apply_mask_rejects_unknown_tensor() {
        let cp = Checkpoint::new();
        let mut masks = MaskSet::new();
        masks.insert("ghost", Tensor::u8(vec![1], vec![1])).unwrap();
        let err = apply_mask(&cp, &masks).unwrap_err();
        assert!(matches!(err, Error::MissingTensor { .. }), "{err}");
    }

    #[test]
    fn apply_mask_enforces_parent_fingerprint() {
        let mut parent = Checkpoint::new();
        parent.insert("w", Tensor::f32(vec![2], vec![1.0, 2.0]));
        let mut masks = MaskSet::new();
        masks.insert("w", Tensor::u8(vec![2], vec![1, 1])).unwrap();
        masks.stamp(MaskKind::Pruning, &parent);
        assert!(apply_mask(&parent, &masks).is_ok());

        let mut other = Checkpoint::new();
        other.insert("w", Tensor::f32(vec![2], vec![1.0, 2.0]));
        other.insert("extra", Tensor::f32(vec![1], vec![0.0]));
        let err = apply_mask(&other, &masks).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }), "{err}");
    }

    #[test]
    fn mask_round_trip_through_container() {
        let mut parent = Checkpoint::new();
        parent.insert("w", Tensor::f32(vec![3], vec![1.0, 2.0, 3.0]));
        let mut masks = MaskSet::new();
        masks.insert("w", Tensor::u8(vec![3], vec![1, 0, 1])).unwrap();
        masks.stamp(MaskKind::Localization, &parent);

        let back = MaskSet::from_checkpoint(
            Checkpoint::from_bytes(&masks.to_checkpoint().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(masks, back);
        assert_eq!(back.metadata.get(META_KIND).map(String::as_str), Some("localization_mask"));
    }

    #[test]
    fn total_ones_counts_absent_tensors_as_dense() {
        let mut cp = Checkpoint::new();
        cp.insert("a", Tensor::f32(vec![4], vec![0.0; 4]));
        cp.insert("b", Tensor::f32(vec![3], vec![0.0; 3]));
        let mut masks = MaskSet::new();
        masks.insert("a", Tensor::u8(vec![4], vec![1, 0, 0, 1])).unwrap();
        assert_eq!(masks.total_ones(&cp), 2 + 3);
    }
}
