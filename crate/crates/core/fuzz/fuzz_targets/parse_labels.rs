#![no_main]

use libfuzzer_sys::fuzz_target;
use replen::select::LabelSet;
use replen::CandidateGrid;

fuzz_target!(|data: &[u8]| {
    let grid = CandidateGrid::new(1, 21).unwrap();
    if let Ok(set) = LabelSet::parse_csv(data, &grid) {
        let mut out = Vec::new();
        set.write_csv(&mut out).unwrap();
        let back = LabelSet::parse_csv(out.as_slice(), &grid).expect("written labels parse");
        assert_eq!(back.rows.len(), set.rows.len());
    }
});
