//! Property tests for the tensor container and mask application.

use std::collections::BTreeMap;

use contrastive_edit::store::{apply_mask, Checkpoint, MaskSet, Tensor};
use proptest::prelude::*;

fn arb_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.]{0,12}"
}

fn arb_tensor() -> impl Strategy<Value = Tensor> {
    prop_oneof![
        (proptest::collection::vec(1usize..5, 1..3)).prop_flat_map(|shape| {
            let count = shape.iter().product::<usize>();
            proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), count)
                .prop_map(move |values| Tensor::f32(shape.clone(), values))
        }),
        (proptest::collection::vec(1usize..5, 1..3)).prop_flat_map(|shape| {
            let count = shape.iter().product::<usize>();
            proptest::collection::vec(any::<u8>(), count)
                .prop_map(move |values| Tensor::u8(shape.clone(), values))
        }),
    ]
}

fn arb_checkpoint() -> impl Strategy<Value = Checkpoint> {
    (
        proptest::collection::btree_map(arb_name(), arb_tensor(), 0..6),
        proptest::collection::btree_map("[a-z]{1,8}", "[ -~]{0,16}", 0..3),
    )
        .prop_map(|(tensors, metadata)| Checkpoint { tensors, metadata })
}

proptest! {
    #[test]
    fn container_round_trips(cp in arb_checkpoint()) {
        let bytes = cp.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&cp, &back);
        // Canonical form: re-serializing the parse yields identical bytes.
        prop_assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn fingerprint_is_layout_only(cp in arb_checkpoint()) {
        let mut zeroed = cp.clone();
        for tensor in zeroed.tensors.values_mut() {
            if let Some(values) = tensor.as_f32_mut() {
                values.fill(0.0);
            }
        }
        prop_assert_eq!(cp.fingerprint(), zeroed.fingerprint());
    }

    #[test]
    fn apply_mask_is_idempotent(
        values in proptest::collection::vec(-100.0f32..100.0, 1..64),
        bits_seed in any::<u64>(),
    ) {
        let n = values.len();
        let bits: Vec<u8> = (0..n).map(|i| ((bits_seed >> (i % 64)) & 1) as u8).collect();
        let mut cp = Checkpoint::new();
        cp.insert("w", Tensor::f32(vec![n], values));
        let mut masks = MaskSet { masks: BTreeMap::new(), metadata: BTreeMap::new() };
        masks.insert("w", Tensor::u8(vec![n], bits.clone())).unwrap();

        let once = apply_mask(&cp, &masks).unwrap();
        let twice = apply_mask(&once, &masks).unwrap();
        prop_assert_eq!(&once, &twice);

        let w = once.get("w").unwrap().as_f32().unwrap();
        for (i, (&v, &b)) in w.iter().zip(&bits).enumerate() {
            if b == 0 {
                prop_assert_eq!(v.to_bits(), 0.0f32.to_bits(), "index {}", i);
            }
        }
    }
}
