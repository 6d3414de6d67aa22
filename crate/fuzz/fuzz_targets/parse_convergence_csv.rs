#![no_main]

use elmpde::metrics::ConvergenceTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = ConvergenceTable::read_csv(data) {
        let mut buf = Vec::new();
        table.write_csv(&mut buf).expect("table writes");
        let again = ConvergenceTable::read_csv(buf.as_slice()).expect("written table parses");
        assert_eq!(again.cells.len(), table.cells.len());
    }
});
