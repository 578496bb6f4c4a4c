#![no_main]

use libfuzzer_sys::fuzz_target;
use memxbar::harness::report::parse_eval_csv;

fuzz_target!(|data: &str| {
    let _ = parse_eval_csv(3, data);
});
