#![no_main]

use libfuzzer_sys::fuzz_target;
use memxbar::checkpoint::{decode, encode_mapped_layer, encode_network, Checkpoint};

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    match ckpt {
        Checkpoint::MappedLayer(layer) => encode_mapped_layer(layer),
        Checkpoint::Network { net, quant } => encode_network(net, quant.as_ref()),
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(ckpt) = decode(data) else { return };
    let bytes = encode(&ckpt);
    let again = decode(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(encode(&again), bytes);
});
