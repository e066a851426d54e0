#![no_main]

use libfuzzer_sys::fuzz_target;
use replen::eval::{parse_report_csv, write_report_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_report_csv(data) {
        for r in &rows {
            assert_eq!(r.total_cost, r.holding_cost + r.stockout_cost);
        }
        let mut out = Vec::new();
        write_report_csv(&rows, &mut out).unwrap();
    }
});
