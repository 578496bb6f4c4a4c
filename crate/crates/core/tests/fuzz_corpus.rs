//! Replays the fuzz corpus and random mutations of it through the same
//! checks the fuzz targets make, so parser regressions surface on stable.

use std::path::PathBuf;

use memxbar::checkpoint::{decode, encode_mapped_layer, encode_network, Checkpoint};
use memxbar::harness::report::{parse_eval_csv, parse_sweep_csv};
use memxbar::harness::ExperimentConfig;
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds in {}", dir.display());
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    match ckpt {
        Checkpoint::MappedLayer(layer) => encode_mapped_layer(layer),
        Checkpoint::Network { net, quant } => encode_network(net, quant.as_ref()),
    }
}

fn checkpoint_body(data: &[u8]) -> bool {
    let Ok(ckpt) = decode(data) else { return false };
    let bytes = encode(&ckpt);
    let again = decode(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(encode(&again), bytes);
    true
}

fn config_body(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(cfg) = ExperimentConfig::from_toml_str(text) else { return false };
    let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).expect("round trip");
    assert_eq!(cfg, again);
    true
}

fn eval_body(data: &[u8]) -> bool {
    std::str::from_utf8(data).is_ok_and(|t| parse_eval_csv(3, t).is_ok())
}

fn sweep_body(data: &[u8]) -> bool {
    std::str::from_utf8(data).is_ok_and(|t| parse_sweep_csv(t).is_ok())
}

const TARGETS: [(&str, fn(&[u8]) -> bool); 4] = [
    ("checkpoint_decode", checkpoint_body),
    ("config_parse", config_body),
    ("eval_csv", eval_body),
    ("sweep_csv", sweep_body),
];

#[test]
fn every_seed_is_accepted() {
    for (target, body) in TARGETS {
        for (i, s) in seeds(target).iter().enumerate() {
            assert!(body(s), "{target} seed {i} rejected");
        }
    }
}

#[derive(Debug, Clone)]
enum Mutation {
    Flip(usize, u8),
    Truncate(usize),
    Insert(usize, u8),
}

fn apply(mut data: Vec<u8>, muts: &[Mutation]) -> Vec<u8> {
    for m in muts {
        let len = data.len().max(1);
        match *m {
            Mutation::Flip(i, x) if !data.is_empty() => data[i % len] ^= x,
            Mutation::Truncate(i) => data.truncate(i % len),
            Mutation::Insert(i, b) => data.insert(i % (data.len() + 1), b),
            _ => {}
        }
    }
    data
}

fn mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), 1..=255u8).prop_map(|(i, x)| Mutation::Flip(i, x)),
        any::<usize>().prop_map(Mutation::Truncate),
        (any::<usize>(), any::<u8>()).prop_map(|(i, b)| Mutation::Insert(i, b)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(target in 0..TARGETS.len(), pick in any::<usize>(), muts in prop::collection::vec(mutation(), 1..6)) {
        let (name, body) = TARGETS[target];
        let all = seeds(name);
        let data = apply(all[pick % all.len()].clone(), &muts);
        body(&data);
    }

    #[test]
    fn arbitrary_bytes_never_panic(target in 0..TARGETS.len(), data in prop::collection::vec(any::<u8>(), 0..256)) {
        TARGETS[target].1(&data);
    }
}
