//! Property tests: codec roundtrips, downsampling idempotence, and
//! augmentation shape preservation.

use gevbev_core::augment::{geometric_augment, voxel_downsample, GeomAugConfig};
use gevbev_core::coop::{decode_cpm, encode_cpm, CpmCell, CpmPayload};
use gevbev_core::evmap::MapLayer;
use gevbev_core::scene_sim::{MeasurePoint, PointCloud, PointLabel};
use proptest::prelude::*;

fn arb_layer() -> impl Strategy<Value = MapLayer> {
    prop_oneof![Just(MapLayer::Road), Just(MapLayer::Object)]
}

fn arb_payload() -> impl Strategy<Value = CpmPayload> {
    let dims = (1u16..64, 1u16..64);
    (dims, any::<u32>(), any::<u32>(), arb_layer(), 0usize..40).prop_flat_map(
        |((width, height), agent_id, frame_id, layer, n_cells)| {
            let cell = (0..width, 0..height, 0.0f32..100.0, 0.0f32..100.0).prop_map(
                |(col, row, e_fg, e_bg)| CpmCell {
                    col,
                    row,
                    e_fg,
                    e_bg,
                },
            );
            proptest::collection::vec(cell, n_cells).prop_map(move |mut cells| {
                // The wire format forbids duplicate coordinates.
                cells.sort_by_key(|c| (c.row, c.col));
                cells.dedup_by_key(|c| (c.row, c.col));
                CpmPayload {
                    agent_id,
                    frame_id,
                    layer,
                    origin_x: -12.5,
                    origin_y: 3.25,
                    cell_size: 0.4,
                    width,
                    height,
                    cells,
                }
            })
        },
    )
}

fn arb_point() -> impl Strategy<Value = MeasurePoint> {
    (
        -20.0f64..20.0,
        -20.0f64..20.0,
        -2.0f64..2.0,
        prop_oneof![
            Just((0.7, PointLabel::Road)),
            Just((0.3, PointLabel::Vehicle)),
            Just((-1.0, PointLabel::Other)),
        ],
    )
        .prop_map(|(x, y, z, (intensity, label))| MeasurePoint::from_xyz(x, y, z, intensity, label))
}

proptest! {
    #[test]
    fn cpm_roundtrip_is_identity(payload in arb_payload()) {
        let bytes = encode_cpm(&payload);
        prop_assert_eq!(bytes.len(), payload.encoded_len());
        let decoded = decode_cpm(&bytes).unwrap();
        prop_assert_eq!(&decoded, &payload);
        // Re-encoding reproduces the byte stream exactly.
        prop_assert_eq!(encode_cpm(&decoded), bytes);
    }

    #[test]
    fn truncated_payloads_never_decode(payload in arb_payload(), cut in 1usize..16) {
        let bytes = encode_cpm(&payload);
        if cut < bytes.len() {
            prop_assert!(decode_cpm(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn voxel_downsample_idempotent(points in proptest::collection::vec(arb_point(), 1..200),
                                   size in 0.05f64..1.0) {
        let cloud = PointCloud::new(points);
        let once = voxel_downsample(&cloud, size);
        let twice = voxel_downsample(&once, size);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn augment_preserves_count_and_fields(points in proptest::collection::vec(arb_point(), 1..100),
                                          seed in any::<u64>()) {
        let cloud = PointCloud::new(points);
        let out = geometric_augment(&cloud, &GeomAugConfig::default(), seed);
        prop_assert_eq!(out.len(), cloud.len());
        for p in &out.points {
            let d = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            prop_assert!((p.d - d).abs() <= 1e-9);
        }
    }
}
