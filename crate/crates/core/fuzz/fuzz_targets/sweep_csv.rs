#![no_main]

use libfuzzer_sys::fuzz_target;
use memxbar::harness::report::parse_sweep_csv;

fuzz_target!(|data: &str| {
    let _ = parse_sweep_csv(data);
});
