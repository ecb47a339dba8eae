use accs::io::{decode_pgm, pgm_bytes, read_kspace, write_kspace, CsvTable, KspaceData};
use accs_core::transforms::{GridShape, SamplingPattern};
use accs_core::Complex64;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sample(with_basis: bool) -> KspaceData {
    let shape = GridShape::new(4, 3).unwrap();
    let pattern = SamplingPattern::new(vec![0, 5, 7, 11], 12).unwrap();
    let y = DMatrix::from_fn(4, 2, |i, j| Complex64::new(i as f64 - 1.5, 0.25 * j as f64 + 1e-300));
    let basis = with_basis.then(|| DMatrix::from_fn(12, 2, |i, j| Complex64::new((i * j) as f64, -(i as f64))));
    KspaceData { shape, k: 2, pattern, y, basis }
}

#[test]
fn kspace_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for with_basis in [false, true] {
        let data = sample(with_basis);
        let path = dir.path().join(format!("y{with_basis}.acsk"));
        write_kspace(&path, &data).unwrap();
        let back = read_kspace(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(back.encode().unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn kspace_header_layout() {
    let bytes = sample(false).encode().unwrap();
    assert_eq!(&bytes[..4], b"ACSK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let fields: Vec<u32> = (0..5)
        .map(|i| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()))
        .collect();
    assert_eq!(fields, vec![4, 3, 4, 2, 2]);
    assert_eq!(bytes[28], 0);
    assert_eq!(bytes.len(), 29 + 4 * 4 + 16 * 8);
}

#[test]
fn truncated_file_names_the_section() {
    let bytes = sample(true).encode().unwrap();
    let cases = [(3, "magic"), (10, "header"), (31, "Omega"), (29 + 16 + 20, "Y"), (bytes.len() - 1, "B")];
    for (cut, section) in cases {
        let err = KspaceData::decode(&bytes[..cut]).unwrap_err().to_string();
        assert!(err.contains("truncated") && err.contains(section), "cut {cut}: {err}");
        assert!(err.contains("offset"), "{err}");
    }
}

#[test]
fn corrupt_magic_and_trailing_bytes_are_rejected() {
    let mut bytes = sample(false).encode().unwrap();
    bytes[0] = b'X';
    assert!(KspaceData::decode(&bytes).unwrap_err().to_string().contains("magic"));

    let mut bytes = sample(false).encode().unwrap();
    bytes.push(0);
    assert!(KspaceData::decode(&bytes).unwrap_err().to_string().contains("trailing"));

    let mut bytes = sample(false).encode().unwrap();
    bytes[28] = 0x80;
    assert!(KspaceData::decode(&bytes).unwrap_err().to_string().contains("flag"));
}

#[test]
fn out_of_range_omega_is_rejected() {
    let mut bytes = sample(false).encode().unwrap();
    bytes[29..33].copy_from_slice(&99u32.to_le_bytes());
    let err = KspaceData::decode(&bytes).unwrap_err().to_string();
    assert!(err.contains("Omega"), "{err}");
}

#[test]
fn read_missing_file_is_io_error() {
    let err = read_kspace(std::path::Path::new("/nonexistent/y.acsk")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn pgm_ramp_bytes() {
    // 2 rows x 3 columns; grid index is row + col * rows.
    let shape = GridShape::new(2, 3).unwrap();
    let values = [0.0, 3.0, 1.0, 4.0, 2.0, 5.0];
    let bytes = pgm_bytes(shape, &values).unwrap();
    let mut expected = b"P5\n3 2\n65535\n".to_vec();
    for v in [0u16, 13107, 26214, 39321, 52428, 65535] {
        expected.extend_from_slice(&v.to_be_bytes());
    }
    assert_eq!(bytes, expected);

    let (back_shape, back) = decode_pgm(&bytes).unwrap();
    assert_eq!(back_shape, shape);
    assert_eq!(back, vec![0.0, 39321.0, 13107.0, 52428.0, 26214.0, 65535.0]);
}

#[test]
fn pgm_zero_image_and_bad_values() {
    let shape = GridShape::new(1, 2).unwrap();
    assert_eq!(&pgm_bytes(shape, &[0.0, 0.0]).unwrap()[13..], &[0, 0, 0, 0]);
    assert!(pgm_bytes(shape, &[f64::NAN, 1.0]).is_err());
    assert!(pgm_bytes(shape, &[1.0]).is_err());
}

#[test]
fn ascii_and_8bit_pgm_decode() {
    let (shape, v) = decode_pgm(b"P2\n# comment\n2 2\n255\n1 2\n3 4\n").unwrap();
    assert_eq!((shape.n1(), shape.n2()), (2, 2));
    assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
    let (_, v) = decode_pgm(b"P5 2 1 255\n\x07\x09").unwrap();
    assert_eq!(v, vec![7.0, 9.0]);
    assert!(decode_pgm(b"P6\n1 1\n255\n\0").is_err());
    assert!(decode_pgm(b"P5\n2 2\n255\n\0").unwrap_err().to_string().contains("truncated"));
}

#[test]
fn csv_render() {
    let mut t = CsvTable::new(&["a", "b"]);
    t.push(vec!["1".into(), "NA".into()]);
    assert_eq!(t.render(), "a,b\n1,NA\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kspace_round_trip_any_values(
        n1 in 1usize..6, n2 in 1usize..6, c in 1usize..4, k in 1usize..3,
        seed in any::<u64>(), with_basis in any::<bool>(),
    ) {
        let shape = GridShape::new(n1, n2).unwrap();
        let n = shape.len();
        let l = 1 + (seed as usize) % n;
        let idx: Vec<usize> = (0..l).map(|i| (i * 7 + seed as usize) % n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        let l = idx.len();
        let pattern = SamplingPattern::new(idx, n).unwrap();
        let val = |i: usize| f64::from_bits(seed.rotate_left(i as u32) & 0x7fef_ffff_ffff_ffff);
        let y = DMatrix::from_fn(l, c, |i, j| Complex64::new(val(i + 3 * j), -val(i * j + 1)));
        let basis = with_basis.then(|| DMatrix::from_fn(n, k, |i, j| Complex64::new(val(i + j), val(i))));
        let data = KspaceData { shape, k, pattern, y, basis };
        let bytes = data.encode().unwrap();
        let back = KspaceData::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }
}
