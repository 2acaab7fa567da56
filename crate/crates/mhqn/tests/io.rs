use std::io::Cursor;

use mhqn::io::*;
use mhqn_core::rng::rng_from_seed;
use mhqn_core::timetag::TimestampStream;
use mhqn_core::tomography::{simulate_dataset, DensityMatrix4};

#[test]
fn dataset_csv_round_trip() {
    let mut ds = simulate_dataset(&DensityMatrix4::werner(0.8), 100.0, 2.0, &mut rng_from_seed(3));
    ds.entries[4].efficiency = 0.9;
    let mut buf = Vec::new();
    write_dataset_csv(&mut buf, &ds).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("setting_a,setting_b,counts,duration_s"));
    assert_eq!(text.lines().count(), 37);
    assert_eq!(read_dataset_csv(Cursor::new(buf)).unwrap(), ds);
}

#[test]
fn dataset_csv_rejects_bad_rows() {
    let bad_label = "setting_a,setting_b,counts,duration_s\nH,Q,3,1.0\n";
    assert!(read_dataset_csv(Cursor::new(bad_label)).is_err());
    let dup = "setting_a,setting_b,counts,duration_s\nH,V,3,1.0\nH,V,4,1.0\n";
    assert!(read_dataset_csv(Cursor::new(dup)).is_err());
    let zero = "setting_a,setting_b,counts,duration_s\nH,V,3,0\n";
    assert!(read_dataset_csv(Cursor::new(zero)).is_err());
}

#[test]
fn binary_stream_round_trip() {
    let s = TimestampStream::new(vec![0, 5, 5, 1 << 40, u64::MAX], 4).unwrap();
    let mut buf = Vec::new();
    write_stream(&mut buf, &s).unwrap();
    assert_eq!(buf.len(), 16 + 8 * 5);
    assert_eq!(&buf[..8], b"MHQNTT01");
    assert_eq!(read_stream(Cursor::new(&buf)).unwrap(), s);

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_stream(Cursor::new(&bad)).is_err());
    assert!(read_stream(Cursor::new(&buf[..buf.len() - 3])).is_err());
}

#[test]
fn unsorted_dump_is_rejected() {
    let mut buf = Vec::from(STREAM_MAGIC);
    buf.extend(1u64.to_le_bytes());
    buf.extend(9u64.to_le_bytes());
    buf.extend(2u64.to_le_bytes());
    assert!(read_stream(Cursor::new(buf)).is_err());
}

#[test]
fn csv_stream_round_trip() {
    let s = TimestampStream::new(vec![1, 2, 30], 1).unwrap();
    let mut buf = Vec::new();
    write_stream_csv(&mut buf, &s).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# resolution_ps=1\ntick\n1\n2\n30\n");
    assert_eq!(read_stream_csv(Cursor::new(buf)).unwrap(), s);
    assert!(read_stream_csv(Cursor::new("tick\n1\n")).is_err());
}

#[test]
fn json_lines_round_trip() {
    let items = vec![serde_json::json!({"a": 1}), serde_json::json!({"b": [1, 2]})];
    let mut buf = Vec::new();
    write_json_lines(&mut buf, &items).unwrap();
    assert_eq!(buf.iter().filter(|&&c| c == b'\n').count(), 2);
    assert_eq!(read_json_lines(Cursor::new(buf)).unwrap(), items);
}

#[test]
fn hashes_are_stable() {
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.json");
    write_json(&p, &serde_json::json!({"k": [1, 2]})).unwrap();
    let back: serde_json::Value = read_json(&p).unwrap();
    assert_eq!(back["k"][1], 2);
    assert_eq!(sha256_file(&p).unwrap(), sha256_hex(&std::fs::read(&p).unwrap()));
}

#[test]
fn efficiency_column_is_optional_on_read() {
    let text = "setting_a,setting_b,counts,duration_s\nH,V,3,1.5\n";
    let ds = read_dataset_csv(Cursor::new(text)).unwrap();
    assert_eq!(ds.entries[0].efficiency, 1.0);
    assert_eq!(ds.entries[0].counts, 3);
}
