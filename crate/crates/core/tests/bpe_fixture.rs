use std::fs;
use std::path::PathBuf;

use bitextmine::bpe::{self, BpeModel, UNK_ID};

fn fixture_lines() -> Vec<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bpe_1000.txt");
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn fixture_reaches_requested_size_and_round_trips() {
    let lines = fixture_lines();
    assert_eq!(lines.len(), 1000);
    for size in [bpe::base_vocab_size(&lines) + 1, 300, 1000] {
        let model = bpe::train(&lines, size).unwrap();
        assert_eq!(model.vocab_size(), size);
        assert!(model.reached_requested_size());
        for line in &lines {
            let ids = model.encode(line);
            assert!(!ids.contains(&UNK_ID), "unknown symbol in training line {line:?}");
            assert_eq!(&model.decode(&ids).unwrap(), line);
        }
    }
}

#[test]
fn model_file_round_trip_and_determinism() {
    let lines = fixture_lines();
    let model = bpe::train(&lines, 600).unwrap();
    assert_eq!(model, bpe::train(&lines, 600).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kl.model");
    model.save(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("bpe v1 600\n"));
    let loaded = BpeModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    for line in lines.iter().take(50) {
        assert_eq!(loaded.encode(line), model.encode(line));
    }
}

#[test]
fn subwords_shrink_agglutinative_words() {
    let lines = fixture_lines();
    let model = bpe::train(&lines, 1000).unwrap();
    let chars: usize = lines.iter().map(|l| l.chars().count()).sum();
    let tokens: usize = lines.iter().map(|l| model.encode(l).len()).sum();
    assert!(tokens * 2 < chars, "{tokens} tokens for {chars} characters");
}
