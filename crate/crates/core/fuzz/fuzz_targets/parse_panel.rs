#![no_main]

use libfuzzer_sys::fuzz_target;
use replen::datagen::{parse_demand, parse_skus};
use replen::DemandPanel;

// Input is skus.csv, a NUL byte, then demand.csv.
fuzz_target!(|data: &[u8]| {
    let (skus, demand) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[][..]),
    };
    let Ok(records) = parse_skus(skus) else { return };
    if let Ok(series) = parse_demand(demand, &records) {
        let _ = DemandPanel::new(records, series);
    }
});
