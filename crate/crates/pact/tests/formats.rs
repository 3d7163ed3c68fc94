use pact::format::*;
use pact::FormatError;
use pact_core::geometry::{ImageGrid, Point, RingGeometry};
use pact_core::inr::{Field, HashEncodingConfig, InrModel, MlpConfig, ModelConfig};
use pact_core::{Image, Sinogram};
use proptest::prelude::*;

fn image() -> Image {
    let grid = ImageGrid::with_center(6, 4, 1e-4, Point::new(1e-3, -2e-3)).unwrap();
    Image::new(grid, (0..24).map(|k| k as f32 * 0.25 - 2.0).collect()).unwrap()
}

fn small_model() -> InrModel<f32> {
    let cfg = ModelConfig {
        hash: HashEncodingConfig { n_levels: 3, table_size_log2: 6, finest_resolution: 32, ..Default::default() },
        mlp: MlpConfig { hidden_width: 8, output_bias: -1.5, ..Default::default() },
    };
    InrModel::new(&cfg, ImageGrid::square(16, 1e-4).unwrap(), 7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sinogram_round_trip(
        data in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 8 * 16),
        t0 in -1e-5f64..1e-5,
    ) {
        let s = Sinogram::new(RingGeometry::uniform(0.04, 8).unwrap(), 16, 20e6, 1500.0, t0, data).unwrap();
        let bytes = encode_sinogram(&s).unwrap();
        let back = decode_sinogram(&bytes).unwrap();
        prop_assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            s.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(encode_sinogram(&back).unwrap(), bytes);
    }
}

#[test]
fn image_round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.img");
    let img = image();
    save_image(&path, &img).unwrap();
    let back = load_image(&path).unwrap();
    assert_eq!(back, img);
    assert_eq!(encode_image(&back).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn inr_round_trip() {
    let model = small_model();
    let bytes = encode_inr(&model).unwrap();
    assert_eq!(&bytes[..8], b"PACTINR1");
    let back = decode_inr(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(back.params(), model.params());
    assert_eq!(encode_inr(&back).unwrap(), bytes);
}

#[test]
fn wrong_magic() {
    let mut bytes = encode_image(&image()).unwrap();
    bytes[0] = b'X';
    assert!(matches!(decode_image(&bytes), Err(FormatError::BadMagic { .. })));
    // A sinogram is not an image.
    let s = Sinogram::zeros(RingGeometry::uniform(0.04, 4).unwrap(), 3, 20e6, 1500.0).unwrap();
    assert!(matches!(decode_image(&encode_sinogram(&s).unwrap()), Err(FormatError::BadMagic { .. })));
}

#[test]
fn flipped_payload_byte() {
    let mut bytes = encode_image(&image()).unwrap();
    // 8 magic + 2·4 dims + 3·8 metadata, then the payload.
    bytes[41] ^= 0x10;
    assert!(matches!(decode_image(&bytes), Err(FormatError::Checksum { .. })));
}

#[test]
fn truncated_and_trailing() {
    let bytes = encode_image(&image()).unwrap();
    for cut in [3, 20, bytes.len() - 10, bytes.len() - 1] {
        assert!(matches!(decode_image(&bytes[..cut]), Err(FormatError::Truncated { .. })), "cut at {cut}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(decode_image(&long), Err(FormatError::TrailingBytes(1))));
}

#[test]
fn oversized_dimensions() {
    let mut bytes = SINOGRAM_MAGIC.to_vec();
    bytes.extend_from_slice(&(1u32 << 20).to_le_bytes());
    bytes.extend_from_slice(&(1u32 << 20).to_le_bytes());
    bytes.extend_from_slice(&[0; 64]);
    assert!(matches!(decode_sinogram(&bytes), Err(FormatError::DimensionOverflow(_))));
}

#[test]
fn checkpoint_parameter_count_must_match() {
    let mut bytes = encode_inr(&small_model()).unwrap();
    // Bump hidden_width (after magic and five hash fields and hidden_layers).
    let at = 8 + 5 * 4 + 4;
    bytes[at] += 1;
    let n = bytes.len();
    let crc = crc32fast::hash(&bytes[..n - 4]);
    bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
    assert!(matches!(decode_inr(&bytes), Err(FormatError::Inconsistent(_))));
}

#[test]
fn missing_file_names_the_path() {
    let err = load_image(std::path::Path::new("/nonexistent/a.img")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/a.img"));
}
