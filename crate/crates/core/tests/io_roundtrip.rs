use std::fs;

use vapc::io::{
    decode_embeddings, encode_embeddings, format_meta, load_dataset, parse_meta, read_embeddings,
    write_embeddings, write_meta,
};
use vapc::synth::{generate, SynthConfig};
use vapc::{EmbeddingSet, Error};

fn sample() -> vapc::synth::SynthDataset {
    generate(&SynthConfig {
        identities: 4,
        test_identities: 2,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn binary_round_trip_is_bit_exact() {
    let data = sample();
    let bytes = encode_embeddings(&data.embeddings);
    let decoded = decode_embeddings(&bytes).unwrap();
    assert_eq!(encode_embeddings(&decoded), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.bin");
    write_embeddings(&path, &decoded).unwrap();
    assert_eq!(fs::read(&path).unwrap(), bytes);
    let again = read_embeddings(&path).unwrap();
    assert_eq!(again, decoded);
}

#[test]
fn header_larger_than_payload_is_truncation() {
    let set = EmbeddingSet::new(3, vec![0.5; 12]).unwrap();
    let mut bytes = encode_embeddings(&set);
    bytes[5..9].copy_from_slice(&5u32.to_le_bytes());
    match decode_embeddings(&bytes) {
        Err(Error::Truncated { expected, actual }) => {
            assert_eq!(expected, 13 + 5 * 3 * 4);
            assert_eq!(actual, 13 + 4 * 3 * 4);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn metadata_round_trip_and_errors() {
    let data = sample();
    let text = format_meta(&data.meta);
    assert_eq!(parse_meta(&text).unwrap(), data.meta);

    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[2] = lines[2].replace(
        &format!("\"{}\"", data.meta[2].viewpoint.unwrap().as_str()),
        "\"top\"",
    );
    match parse_meta(&lines.join("\n")) {
        Err(e @ Error::UnknownViewpoint { line: 3, .. }) => {
            assert_eq!(e.category(), "format");
            assert!(e.to_string().contains("line 3"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn load_checks_counts_and_validates() {
    let data = sample();
    let dir = tempfile::tempdir().unwrap();
    let emb = dir.path().join("e.bin");
    let meta = dir.path().join("m.jsonl");
    write_embeddings(&emb, &data.embeddings).unwrap();
    write_meta(&meta, &data.meta).unwrap();
    let ds = load_dataset(&emb, &meta).unwrap();
    assert_eq!(ds.len(), data.meta.len());

    write_meta(&meta, &data.meta[1..]).unwrap();
    assert!(matches!(
        load_dataset(&emb, &meta),
        Err(Error::CountMismatch { .. })
    ));

    let missing = dir.path().join("absent.bin");
    let err = load_dataset(&missing, &meta).unwrap_err();
    assert_eq!(err.category(), "io");
}
